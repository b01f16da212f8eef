import math

import numpy as np
import pytest
from scipy import linalg

from polmult.angular import SphericalDirection, Spin, spin_matrices
from polmult.multipoles import decompose
from polmult.states import PolarizationSector, coherent_axis, fock_state, maximally_mixed, random_block, su2_coherent
from polmult.tomography import (
    CountRecord,
    DirectionSet,
    InversionError,
    MomentRecord,
    canonical_directions,
    estimate_moments,
    f_coeff,
    f_coeff_exact,
    gram_matrix,
    invert_dipole,
    invert_order,
    moment_direct,
    moment_from_multipoles,
    outcome_probabilities,
    reconstruct_exact,
    reconstruct_from_counts,
    reconstruct_sampled,
    simulate_counts,
    simulate_plan,
    stokes_matrices,
)


def test_stokes_invariants():
    for two_s in (1, 3, 6):
        st = stokes_matrices(Spin(two_s))
        s = two_s / 2
        total = st.s1 @ st.s1 + st.s2 @ st.s2 + st.s3 @ st.s3
        np.testing.assert_allclose(total, st.s0 @ (st.s0 + np.eye(two_s + 1)), atol=1e-12)
        d = SphericalDirection(0.7, 1.9)
        eig = np.linalg.eigvalsh(st.along(d))
        np.testing.assert_allclose(eig, np.arange(-s, s + 1), atol=1e-12)


def test_f_coefficients():
    assert f_coeff(Spin(1), 1, 2) == pytest.approx(0.0, abs=1e-15)
    assert f_coeff(Spin(2), 0, 2) == pytest.approx(2.0)  # C^{Sm}_{Sm,00} = 1
    assert f_coeff(Spin(2), 2, 2) == pytest.approx(2 / math.sqrt(10))
    assert f_coeff(Spin(2), 1, 1) == pytest.approx(math.sqrt(2))
    with pytest.raises(ValueError):
        f_coeff(Spin(2), 3, 3)
    with pytest.raises(ValueError):
        f_coeff(Spin(4), 3, 2)


def test_f_parity_zeros():
    for two_s in range(1, 9):
        for ell in range(6):
            for k in range(min(ell, two_s) + 1):
                if (ell - k) % 2:
                    assert f_coeff_exact(Spin(two_s), k, ell).square == 0


@pytest.mark.parametrize("two_s", range(1, 7))
def test_two_moment_routes_agree(two_s, rng):
    sp = Spin(two_s)
    sector = PolarizationSector({two_s: 1.0}, {two_s: random_block(sp, rng)})
    table = decompose(sector)
    for ell in range(5):
        for d in (SphericalDirection(0.4, 2.1), SphericalDirection(2.5, 5.0)):
            direct = moment_direct(sector, d, ell).per_block[two_s]
            assert moment_from_multipoles(table, sp, d, ell) == pytest.approx(direct, abs=1e-12)


def test_canonical_directions_shapes():
    axes = canonical_directions(1)
    np.testing.assert_allclose(np.abs(axes.vectors @ axes.vectors.T), np.eye(3), atol=1e-15)
    ico = canonical_directions(2)
    assert len(ico) == 5
    assert math.degrees(ico.min_line_angle()) == pytest.approx(63.4349, abs=1e-3)
    for order in (3, 4, 5):
        dirs = canonical_directions(order)
        assert len(dirs) == 2 * order + 1
        assert np.linalg.cond(gram_matrix(order, dirs)) < 1e4
    assert canonical_directions(3) is canonical_directions(3)
    with pytest.raises(ValueError):
        canonical_directions(0)


def test_direction_set_rejects_repeated_lines():
    with pytest.raises(ValueError, match="same line"):
        DirectionSet.from_vectors([[0, 0, 1], [0, 0, -1]])
    dirs = DirectionSet.from_vectors(np.eye(3), "axes")
    assert DirectionSet.from_dict(dirs.to_dict()).vectors == pytest.approx(dirs.vectors)


def test_invert_dipole_for_spin_one():
    table = decompose(fock_state(2, 0))
    mu = [moment_direct(fock_state(2, 0), d, 1).aggregate for d in canonical_directions(1)]
    np.testing.assert_allclose(invert_dipole(mu, Spin(2)), table.order(Spin(2), 1), atol=1e-14)
    with pytest.raises(ValueError):
        invert_dipole([0, 0, 0], Spin(0))


def test_invert_order_errors():
    sp = Spin(2)
    lower = {0: np.array([1 / math.sqrt(3)])}
    with pytest.raises(ValueError, match="one moment"):
        invert_order(1, canonical_directions(1), [0.0, 0.0], lower, sp)
    with pytest.raises(ValueError):
        invert_order(3, canonical_directions(3), [0.0] * 7, lower, sp)
    coplanar = DirectionSet.from_vectors([[1, 0, 0], [0, 1, 0], [1, 1, 0]])
    with pytest.raises(InversionError) as err:
        invert_order(1, coplanar, [0.0, 0.0, 0.0], lower, sp)
    assert len(err.value.directions) == 3
    too_few = DirectionSet.from_vectors(np.eye(3)[:2])
    with pytest.raises(ValueError, match="at least"):
        invert_order(1, too_few, [0.0, 0.0], lower, sp)


def test_outcome_probabilities_match_spectral_oracle(rng):
    for two_s in (1, 3, 5):
        sp = Spin(two_s)
        blk = random_block(sp, rng)
        d = SphericalDirection(1.3, 4.4)
        s1, s2, s3 = spin_matrices(sp)
        n = d.vector
        vals, vecs = np.linalg.eigh(n[0] * s1 + n[1] * s2 + n[2] * s3)
        ref = np.real(np.einsum("im,ij,jm->m", vecs.conj(), blk.matrix, vecs))[::-1]  # descending m
        np.testing.assert_allclose(outcome_probabilities(blk.matrix, sp, d), ref, atol=1e-12)
        # rotation by expm gives the same distribution
        rot = linalg.expm(1j * d.theta * s2) @ linalg.expm(1j * d.phi * s3)
        np.testing.assert_allclose(np.real(np.diag(rot @ blk.matrix @ rot.conj().T)), ref, atol=1e-12)


def test_coherent_state_measured_along_its_axis():
    theta, phi = 0.9, 3.3
    sector = su2_coherent(Spin(4), theta, phi)
    recs = simulate_counts(sector, coherent_axis(theta, phi), 1000, seed=3)
    assert recs[0].counts[4] == 1000


def test_simulation_is_seeded():
    sector = fock_state(3, 1)
    d = SphericalDirection(1.0, 0.5)
    a = simulate_counts(sector, d, 5000, 42)
    b = simulate_counts(sector, d, 5000, 42)
    assert a[0].counts == b[0].counts
    assert a[0].total == 5000
    with pytest.raises(ValueError):
        simulate_counts(sector, d, -1, 0)


def test_count_record_validation():
    d = SphericalDirection(0.0, 0.0)
    with pytest.raises(ValueError):
        CountRecord(d, 2, {3: 10})
    with pytest.raises(ValueError):
        CountRecord(d, 2, {2: -1})
    with pytest.raises(ValueError):
        MomentRecord(d, 1, 0.0, -1.0)


def test_estimate_moments():
    d = SphericalDirection(0.0, 0.0)
    rec = estimate_moments([CountRecord(d, 2, {2: 30, 0: 50, -2: 20})], 1)
    assert rec.value == pytest.approx(0.1)
    assert rec.stderr == pytest.approx(math.sqrt((0.5 - 0.01) / 100))
    assert rec.shots == 100
    assert estimate_moments([CountRecord(d, 2, {2: 1})], 0).value == 1.0
    with pytest.raises(ValueError, match="different directions"):
        estimate_moments([CountRecord(d, 2, {2: 1}), CountRecord(SphericalDirection(1.0, 0.0), 2, {2: 1})], 1)
    with pytest.raises(ValueError):
        estimate_moments([], 1)


def test_stokes_uncertainty_for_coherent_states():
    # sum of variances equals S for coherent states
    for two_s in (1, 4, 9):
        sector = su2_coherent(Spin(two_s), 1.2, 0.3)
        total = 0.0
        for d in canonical_directions(1):
            m1 = moment_direct(sector, d, 1).aggregate
            m2 = moment_direct(sector, d, 2).aggregate
            total += m2 - m1**2
        assert total == pytest.approx(two_s / 2, abs=1e-12)


@pytest.mark.parametrize("two_s", [1, 2, 3, 4, 6])
def test_exact_reconstruction(two_s, rng):
    sector = PolarizationSector({two_s: 1.0}, {two_s: random_block(Spin(two_s), rng)})
    rec = reconstruct_exact(sector, two_s)
    assert rec.table.allclose(decompose(sector), atol=1e-10)
    assert all(d.condition < 1e4 for d in rec.diagnostics)


def test_exact_reconstruction_mixed_blocks(rng):
    blocks = {k: random_block(Spin(k), rng) for k in (0, 1, 3)}
    sector = PolarizationSector({0: 0.2, 1: 0.3, 3: 0.5}, blocks)
    rec = reconstruct_exact(sector, 3)
    assert rec.l_max == {0: 0, 1: 1, 3: 3}
    assert rec.table.allclose(decompose(sector), atol=1e-10)


def test_least_squares_with_extra_directions(rng):
    sector = PolarizationSector({4: 1.0}, {4: random_block(Spin(4), rng)})
    extra = DirectionSet.from_vectors(rng.normal(size=(9, 3)))
    rec = reconstruct_exact(sector, 4, directions={2: extra})
    assert rec.table.allclose(decompose(sector), atol=1e-10)
    assert any(d.order == 2 and d.n_directions == 9 for d in rec.diagnostics)


def test_sampled_reconstruction_converges():
    sector = fock_state(1, 2)
    truth = decompose(sector)
    errs = []
    for shots in (10_000, 1_000_000):
        rec = reconstruct_sampled(sector, 3, shots, seed=11)
        diff = rec.table.coeffs[3] - truth.coeffs[3]
        errs.append(np.abs(diff).max())
    assert errs[1] < errs[0] / 3
    se = rec.stderr[3]
    assert np.all(np.abs(diff.real) <= 5 * se.real + 1e-12)
    assert np.all(np.abs(diff.imag) <= 5 * se.imag + 1e-12)


def test_standard_errors_scale_with_shots():
    sector = su2_coherent(Spin(2), 1.0, 0.4)
    a = reconstruct_sampled(sector, 2, 10_000, seed=5).stderr[2]
    b = reconstruct_sampled(sector, 2, 1_000_000, seed=5).stderr[2]
    ratio = np.abs(a[2, 2]) / np.abs(b[2, 2])
    assert ratio == pytest.approx(10, rel=0.1)


def test_sampled_errors_cover_truth():
    sector = maximally_mixed(Spin(2))
    truth = decompose(sector).coeffs[2]
    hits = 0
    trials = 20
    for seed in range(trials):
        rec = reconstruct_sampled(sector, 2, 20_000, seed=seed)
        diff = rec.table.coeffs[2] - truth
        se = rec.stderr[2]
        ok = np.all(np.abs(diff.real) <= 3 * se.real + 1e-12) and np.all(np.abs(diff.imag) <= 3 * se.imag + 1e-12)
        hits += bool(ok)
    assert hits >= 16


def test_counts_with_antipodal_directions_are_flipped():
    sector = fock_state(2, 0)
    plan = simulate_plan(sector, 1, 2000, seed=1)
    flipped = [
        CountRecord(SphericalDirection.from_vector(-r.direction.vector), r.two_s, {-m: c for m, c in r.counts.items()})
        for r in plan
    ]
    a = reconstruct_from_counts(plan, 1)
    b = reconstruct_from_counts(flipped, 1)
    np.testing.assert_allclose(a.table.coeffs[2], b.table.coeffs[2], atol=1e-14)


def test_missing_events_stop_the_recursion():
    sector = fock_state(2, 0)
    plan = [r for r in simulate_plan(sector, 2, 1000, seed=1)]
    only_axes = plan[:3]
    with pytest.warns(UserWarning, match="stopped"):
        rec = reconstruct_from_counts(only_axes, 2)
    assert rec.l_max[2] == 1
    with pytest.raises(ValueError):
        reconstruct_from_counts([], 1)
