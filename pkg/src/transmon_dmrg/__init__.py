"""Tensor-network eigenstate engine for coupled-transmon lattices.

Finds ground and targeted excited states of circuit-QED device Hamiltonians
with two-site sweep algorithms (DMRG, orthogonalized DMRG, MTDMRG, DMRG-X,
MTDMRG-X), backed by an exact-diagonalization oracle on desk-scale devices,
plus analysis workflows for localization, exchange coupling g, and ZZ
coupling zeta.
"""

from .mps import (
    BareState,
    MatrixProductOperator,
    MatrixProductState,
    MultiTargetMPS,
    amplitude,
    expectation,
    extract_target,
    from_bare_state,
    load_state,
    move_oc,
    mtmps_from_bare_states,
    overlap,
    save_state,
    variance,
)
from .model import (
    CouplingSpec,
    DeviceSpec,
    ModeSpec,
    SnakeOrder,
    build_mpo,
    coupler_off_frequency,
    coupling_g,
    charge_coupling_g,
    kerr_levels,
    load_device,
    save_device,
    snake_order,
    transmon_params,
)
from .solver import (
    SweepConfig,
    SweepReport,
    TargetSet,
    build_environments,
    discover_support_set,
    lanczos_lowest,
    lanczos_x,
    run_sweeps,
    two_site_update,
)
from .oracle import DenseSpectrum, best_match, dense_hamiltonian, diagonalize, low_spectrum
from .analysis import (
    CouplingScan,
    LocalizationProfile,
    ZZReport,
    extract_g,
    extract_zeta,
    localization_profile,
    state_dependence_experiment,
)

__version__ = "0.1.0"
