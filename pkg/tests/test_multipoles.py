import csv
import io
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from polmult.angular import Spin, spin_matrices
from polmult.multipoles import (
    MultipoleTable,
    a_su2_max,
    block_multipoles,
    cumulative_a,
    decompose,
    degree_fock_closed_form,
    degree_p,
    degree_p1_closed_form,
    degree_quadrature_closed_form,
    measure_report,
    p2_fock_closed_form,
    p2_minimizing_m,
    p2_minimum_closed_form,
    p2_quadrature_closed_form,
    recompose,
    tensor_operator,
    w_coherent_closed_form,
    w_fock_closed_form,
    w_spectrum,
)
from polmult.states import (
    DensityBlock,
    PolarizationSector,
    fock_state,
    maximally_mixed,
    noon_state,
    quadrature_coherent,
    random_block,
    su2_coherent,
    tmsv_state,
)


def test_monopole_and_dipole_operators():
    for two_s in (1, 2, 5):
        sp = Spin(two_s)
        t00 = tensor_operator(sp, 0, 0).matrix
        np.testing.assert_allclose(t00, np.eye(two_s + 1) / math.sqrt(two_s + 1), atol=1e-15)
        s = two_s / 2
        t10 = tensor_operator(sp, 1, 0).matrix
        np.testing.assert_allclose(t10, math.sqrt(3 / (s * (s + 1) * (2 * s + 1))) * spin_matrices(sp)[2], atol=1e-14)
    with pytest.raises(ValueError):
        tensor_operator(Spin(2), 3, 0)


def test_tensor_operators_are_orthonormal():
    sp = Spin(3)
    ops = [tensor_operator(sp, k, q).matrix for k in range(4) for q in range(-k, k + 1)]
    gram = np.array([[np.trace(a @ b.conj().T) for b in ops] for a in ops])
    np.testing.assert_allclose(gram, np.eye(len(ops)), atol=1e-13)
    for k in range(4):
        for q in range(-k, k + 1):
            a = tensor_operator(sp, k, q).matrix
            b = tensor_operator(sp, k, -q).matrix
            np.testing.assert_allclose(a.conj().T, (-1) ** q * b, atol=1e-14)


@pytest.mark.parametrize("two_s", [1, 2, 3, 6])
def test_decompose_matches_dense_trace(two_s, rng):
    sp = Spin(two_s)
    blk = random_block(sp, rng)
    ours = block_multipoles(blk.matrix, sp)
    for k in range(two_s + 1):
        for q in range(-k, k + 1):
            ref = np.trace(blk.matrix @ tensor_operator(sp, k, q).matrix.conj().T)
            assert ours[k, q + two_s] == pytest.approx(ref, abs=1e-13)


def test_recompose_round_trip(rng):
    blocks = {k: random_block(Spin(k), rng) for k in (0, 2, 5)}
    sector = PolarizationSector({0: 0.1, 2: 0.6, 5: 0.3}, blocks)
    table = decompose(sector)
    assert table.hermiticity_defect() < 1e-14
    assert recompose(table).allclose(sector, atol=1e-12)


def test_recompose_rejects_non_hermitian_table():
    coeffs = np.zeros((2, 3), dtype=complex)
    coeffs[0, 1] = 1 / math.sqrt(2)
    coeffs[1, 0] = 0.3
    table = MultipoleTable({1: coeffs}, {1: 1.0})
    with pytest.raises(ValueError, match="Hermitian"):
        recompose(table)


def test_monopole_only_table_is_maximally_mixed():
    coeffs = np.zeros((5, 9), dtype=complex)
    coeffs[0, 4] = 1 / math.sqrt(5)
    sector = recompose(MultipoleTable({4: coeffs}, {4: 1.0}))
    np.testing.assert_allclose(sector.blocks[4].matrix, np.eye(5) / 5, atol=1e-15)


def test_table_shape_validation():
    with pytest.raises(ValueError):
        MultipoleTable({2: np.zeros((2, 3))}, {2: 1.0})
    with pytest.raises(ValueError):
        MultipoleTable({1: np.zeros((2, 3))}, {2: 1.0})


def test_w_spectrum_examples():
    # |1/2, 1/2>: W = (1/2, 1/2); |1, 0>: W = (1/3, 0, 2/3); |1, 1>: W = (1/3, 1/2, 1/6)
    np.testing.assert_allclose(w_spectrum(decompose(fock_state(1, 0))).per_block[1], [0.5, 0.5], atol=1e-15)
    np.testing.assert_allclose(w_spectrum(decompose(fock_state(1, 1))).per_block[2], [1 / 3, 0, 2 / 3], atol=1e-15)
    np.testing.assert_allclose(w_spectrum(decompose(fock_state(2, 0))).per_block[2], [1 / 3, 1 / 2, 1 / 6], atol=1e-15)


def test_w_closed_forms_small():
    for two_s in range(1, 9):
        for m2 in Spin(two_s).m2_values():
            nh, nv = (two_s + m2) // 2, (two_s - m2) // 2
            w = w_spectrum(decompose(fock_state(nh, nv))).per_block[two_s]
            ref = [w_fock_closed_form(Spin(two_s), m2 / 2, k) for k in range(two_s + 1)]
            np.testing.assert_allclose(w, ref, atol=1e-13)
    w = w_spectrum(decompose(su2_coherent(Spin(5), 0.7, 2.0))).per_block[5]
    np.testing.assert_allclose(w, [w_coherent_closed_form(Spin(5), k) for k in range(6)], atol=1e-13)


def test_cumulative_a_excludes_monopole():
    table = decompose(fock_state(2, 0))
    assert cumulative_a(table, 1)[2] == pytest.approx(0.5)
    assert cumulative_a(table, 2)[2] == pytest.approx(2 / 3)
    assert cumulative_a(table, 5)[2] == pytest.approx(2 / 3)
    with pytest.raises(ValueError):
        cumulative_a(table, 0)


def test_a_su2_max_values():
    assert a_su2_max(Spin(1), 1) == pytest.approx(0.5)
    assert a_su2_max(Spin(2), 1) == pytest.approx(0.5)
    assert a_su2_max(Spin(2), 2) == pytest.approx(2 / 3)
    for two_s in (3, 10, 40, 200):
        assert a_su2_max(Spin(two_s), two_s) == pytest.approx(two_s / (two_s + 1), abs=1e-15)
    with pytest.raises(ValueError):
        a_su2_max(Spin(2), 3)
    with pytest.raises(ValueError):
        a_su2_max(Spin(2), 0)


def test_a_su2_max_against_gamma_form():
    for two_s in (4, 9, 30):
        for k in range(1, two_s):
            ref = two_s / (two_s + 1) - math.exp(
                2 * math.lgamma(two_s + 1) - math.lgamma(two_s - k) - math.lgamma(two_s + k + 2)
            )
            assert a_su2_max(Spin(two_s), k) == pytest.approx(ref, abs=1e-13)


def test_degree_examples():
    assert degree_p(decompose(fock_state(2, 0)), 1) == pytest.approx(1.0)
    assert degree_p(decompose(fock_state(1, 1)), 1) == pytest.approx(0.0, abs=1e-15)
    assert degree_p(decompose(maximally_mixed(Spin(4))), 3) == pytest.approx(0.0, abs=1e-15)
    # NOON states carry no polarization below order N but are maximal at N
    table = decompose(noon_state(4))
    assert degree_p(table, 1) == pytest.approx(0.0, abs=1e-14)
    assert degree_p(table, 4) == pytest.approx(1.0, abs=1e-13)
    # vacuum contributes nothing
    assert degree_p(decompose(tmsv_state(0.0)), 1) == 0.0


def test_degree_p1_matches_mean_stokes_vector(rng):
    blocks = {k: random_block(Spin(k), rng) for k in (1, 2, 4)}
    sector = PolarizationSector({1: 0.3, 2: 0.3, 4: 0.4}, blocks)
    assert degree_p(decompose(sector), 1) == pytest.approx(degree_p1_closed_form(sector), abs=1e-13)


def test_p2_fock_closed_form_is_square_of_degree():
    for two_s in range(2, 13):
        for m2 in Spin(two_s).m2_values():
            nh, nv = (two_s + m2) // 2, (two_s - m2) // 2
            p2 = degree_p(decompose(fock_state(nh, nv)), 2)
            assert p2**2 == pytest.approx(p2_fock_closed_form(Spin(two_s), m2 / 2), abs=1e-12)
            assert p2 == pytest.approx(degree_fock_closed_form(Spin(two_s), m2 / 2, 2), abs=1e-12)


def test_p2_fock_edges_and_minimum():
    for two_s in range(2, 20):
        sp = Spin(two_s)
        assert p2_fock_closed_form(sp, sp.s) == pytest.approx(1.0)
        m_opt = p2_minimizing_m(sp)
        assert p2_fock_closed_form(sp, m_opt) == pytest.approx(p2_minimum_closed_form(sp))
        assert min(p2_fock_closed_form(sp, m2 / 2) for m2 in sp.m2_values()) >= p2_minimum_closed_form(sp) - 1e-12
    assert p2_minimum_closed_form(Spin(200)) == pytest.approx(0.1, abs=2e-2)
    with pytest.raises(ValueError):
        p2_fock_closed_form(Spin(1), 0.5)


@pytest.mark.parametrize("nbar", [1.0, 5.0, 10.0])
def test_quadrature_degree_is_poisson_tail(nbar):
    sector = quadrature_coherent(math.sqrt(nbar), 0, tail_tol=1e-14)
    table = decompose(sector)
    for k in (1, 2, 3, 7):
        assert degree_p(table, k) == pytest.approx(degree_quadrature_closed_form(nbar, k), abs=1e-12)
    assert degree_p(table, 2) == pytest.approx(p2_quadrature_closed_form(nbar), abs=1e-12)


def test_quadrature_p2_example():
    assert p2_quadrature_closed_form(5.0) == pytest.approx(0.95957, abs=1e-5)


@pytest.mark.parametrize("r", [0.2, 0.6, 1.0])
def test_tmsv_degree_is_weighted_twin_fock(r):
    sector = tmsv_state(r)
    table = decompose(sector)
    for k in (2, 4):
        ref = sum(
            w * degree_fock_closed_form(Spin(two_s), 0, k) for two_s, w in sector.weights.items() if two_s >= k
        )
        assert degree_p(table, k) == pytest.approx(ref, abs=1e-12)
    assert degree_p(table, 1) == pytest.approx(0.0, abs=1e-13)


def test_tmsv_degree_grows_with_squeezing():
    vals = [degree_p(decompose(tmsv_state(r)), 2) for r in (0.1, 0.3, 0.5, 0.8, 1.0)]
    assert all(a < b for a, b in zip(vals, vals[1:]))


def test_measure_report_formats():
    report = measure_report(decompose(su2_coherent(Spin(4), 0.3, 0.1)), 3)
    rows = list(csv.DictReader(io.StringIO(report.to_csv())))
    agg = [r for r in rows if r["S"] == "all"]
    assert [float(r["P_contribution"]) for r in agg[1:]] == pytest.approx([1.0, 1.0, 1.0], abs=1e-12)
    block = [r for r in rows if r["S"] == "2"]
    assert len(block) == 4
    data = json.loads(report.to_json())
    assert data["k_max"] == 3 and len(data["aggregate"]) == 4


def test_measure_report_clamps():
    with pytest.warns(UserWarning, match="clamped"):
        report = measure_report(decompose(fock_state(1, 1)), 6)
    assert report.k_max == 2
    with pytest.raises(ValueError):
        measure_report(decompose(fock_state(1, 1)), 0)


def test_measure_report_mixed_blocks_leave_small_spins_out():
    report = measure_report(decompose(quadrature_coherent(1.0, 0.5)), 3)
    small = [row for row in report.rows if row[0] == 1 and row[1] == 3]
    assert small and small[0][4] is None and small[0][5] == 0.0


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 8), st.integers(0, 2**32 - 1), st.integers(1, 9))
def test_purity_identity_property(two_s, seed, rank):
    blk = random_block(Spin(two_s), np.random.default_rng(seed), rank=min(rank, two_s + 1))
    w = w_spectrum(decompose(PolarizationSector({two_s: 1.0}, {two_s: blk}))).per_block[two_s]
    assert w.sum() == pytest.approx(blk.purity(), abs=1e-12)


def test_fock_poisson_reference_consistency():
    # partial Poisson sums agree with scipy's survival function
    assert degree_quadrature_closed_form(3.0, 2) == pytest.approx(1 - stats.poisson.cdf(1, 3.0))


def test_density_block_from_multipoles_is_valid(rng):
    blk = random_block(Spin(4), rng, pure=True)
    table = decompose(PolarizationSector({4: 1.0}, {4: blk}))
    back = recompose(table).blocks[4]
    assert isinstance(back, DensityBlock)
    assert back.purity() == pytest.approx(1.0)
