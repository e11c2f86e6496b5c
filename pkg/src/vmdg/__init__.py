"""Hermite-DG kinetic plasma solver with conservation-aware time integrators."""

from .state import (
    ConfigError,
    MeshSpec,
    NewtonKrylovConfig,
    PhysicsConstants,
    SimConfig,
    SpeciesSpec,
    StateLayout,
    StateVector,
    index_of,
    load_config,
    state_linear_comb,
)
from .basis import (
    HermiteBasis,
    LegendreBasis,
    VelocityCoupling,
    build_velocity_coupling,
    hermite_aw_eval,
    hermite_dual_eval,
    legendre_cell_eval,
    project_shifted_maxwellian,
)
from .maxwell import (
    FluxMatrices,
    MaxwellWorkspace,
    build_flux_matrices,
    current_density_dg,
    divergence_residuals,
    maxwell_rhs,
)
from .vlasov import (
    VlasovWorkspace,
    collision_rhs,
    vlasov_lorentz_rhs,
    vlasov_rhs,
    vlasov_streaming_rhs,
)
from .integrators import (
    ButcherTableau,
    EnergyFunctionals,
    GammaDegenerate,
    StepFailure,
    StepReport,
    TABLEAUX,
    compute_gamma,
    gl_step,
    gmres_solve,
    jfnk_solve,
    make_stepper,
    modified_rk_step,
    rk_step,
)
from .diagnostics import (
    DiagnosticsRecord,
    SpectrumGrid,
    em_energy,
    energy_balance_residual,
    fit_growth_rate,
    fourier_mode,
    jump_dissipation,
    kinetic_energy,
    make_energy_functionals,
    particle_number,
    spectrum_2d,
    total_energy,
)
from .driver import (
    OutputSinks,
    RunResult,
    build_initial_state,
    build_scenario,
    init_orszag_tang,
    init_whistler,
    init_xmode,
    make_rhs,
    orszag_tang_config,
    run_simulation,
    whistler_config,
    write_field_snapshot,
    write_timeseries,
    xmode_config,
)

__version__ = "0.1.0"
