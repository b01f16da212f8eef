"""SU(2) polarization multipoles of two-mode quantum light.

Build polarization sectors, expand each photon-number block in state
multipoles, grade polarization order by order with ``W_K``, ``A_K`` and
``P_K``, reconstruct multipoles from simulated or recorded Stokes
measurements, and evaluate quasiprobabilities on the sphere.
"""

from .angular import (
    MultipoleIndex,
    SphericalDirection,
    Spin,
    clebsch_gordan,
    clebsch_gordan_exact,
    spherical_harmonic,
    spin_matrices,
    wigner_D_matrix,
    wigner_small_d_matrix,
)
from .multipoles import (
    MeasureReport,
    MultipoleTable,
    a_su2_max,
    cumulative_a,
    decompose,
    degree_p,
    degree_p1_closed_form,
    measure_report,
    recompose,
    tensor_operator,
    w_spectrum,
)
from .quasi import localization_identity, localization_sigma, quasi_grid, quasi_value, sphere_grid
from .states import (
    DensityBlock,
    PolarizationSector,
    StateSpec,
    coherent_axis,
    fock_state,
    maximally_mixed,
    noon_state,
    project_polarization_sector,
    quadrature_coherent,
    random_block,
    su2_coherent,
    tmsv_state,
)
from .tomography import (
    DirectionSet,
    InversionError,
    canonical_directions,
    f_coeff,
    invert_dipole,
    invert_order,
    moment_direct,
    moment_from_multipoles,
    reconstruct_exact,
    reconstruct_from_counts,
    reconstruct_sampled,
    simulate_counts,
    stokes_matrices,
)

__version__ = "0.1.0"
