"""Benchmark scenario initializers, the fixed-step run loop, and file output."""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass, asdict

import numpy as np

from .basis import mode_mass, project_to_dg
from .diagnostics import (
    DiagnosticsRecord,
    em_energy,
    kinetic_energy,
    make_energy_functionals,
    particle_number,
)
from .integrators import StepReport, make_stepper
from .maxwell import MaxwellWorkspace, current_density_dg, divergence_residuals, maxwell_rhs
from .state import (
    MeshSpec,
    PhysicsConstants,
    SimConfig,
    SpeciesSpec,
    StateVector,
    NewtonKrylovConfig,
)
from .vlasov import VlasovWorkspace, vlasov_rhs


SCENARIOS = ("whistler", "xmode", "orszag-tang")


def preset_path(name: str) -> str:
    """Filesystem path of a bundled scenario preset TOML."""
    fname = {"whistler": "whistler.toml", "xmode": "xmode.toml",
             "orszag-tang": "orszag_tang.toml"}.get(name)
    if fname is None:
        raise ValueError(f"unknown preset {name!r}; expected one of {SCENARIOS}")
    return os.path.join(os.path.dirname(__file__), "presets", fname)


# --------------------------------------------------------------------------
# Right-hand side assembly
# --------------------------------------------------------------------------

def make_rhs(config: SimConfig):
    """Returns (rhs, vlasov_workspace, maxwell_workspace) for one configuration."""
    vws = VlasovWorkspace(config)
    mws = MaxwellWorkspace(config)
    layout = config.layout

    def rhs(state: StateVector) -> StateVector:
        out = np.zeros(layout.total_len)
        if layout.species:
            vlasov_rhs(state, vws, out)
        maxwell_rhs(state, mws, out)
        return StateVector(layout, out)

    return rhs, vws, mws


# --------------------------------------------------------------------------
# Scenario presets
# --------------------------------------------------------------------------

def _apply_overrides(config: SimConfig, overrides: dict | None) -> SimConfig:
    if not overrides:
        return config
    return config.with_overrides(**overrides)


def _uniform_maxwellian_block(sp: SpeciesSpec, mesh: MeshSpec, state: StateVector, s: int):
    """Unit-density Maxwellian matched to the species basis: C_000 = 1/prod(alpha)."""
    C = state.species(s)
    C[..., 0, 0, 0, 0] = 1.0 / float(np.prod(sp.alpha))


def whistler_config() -> SimConfig:
    """Preset for the electron temperature-anisotropy whistler instability."""
    mass_ratio = 1836.0
    vte = np.array([0.056, 0.125, 0.125])
    vti = vte / math.sqrt(mass_ratio)
    electrons = SpeciesSpec(
        "electrons", mass=1.0, charge=-1.0, hermite_orders=(9, 9, 9),
        alpha=tuple(math.sqrt(2.0) * v for v in vte),
    )
    ions = SpeciesSpec(
        "ions", mass=mass_ratio, charge=1.0, hermite_orders=(9, 9, 9),
        alpha=tuple(math.sqrt(2.0) * v for v in vti),
    )
    return SimConfig(
        mesh=MeshSpec(n_cells=(72, 1, 1), lengths=(2.0 * math.pi, 1.0, 1.0), dg_degree=1),
        species=(electrons, ions),
        physics=PhysicsConstants(omega_ratio=4.0, collision_rate=1.0),
        method="rkc",
        dt=0.01,
        t_end=400.0,
        output_every=10,
        scenario="whistler",
        track_fields=("B_z",),
    )


def whistler_state(config: SimConfig) -> StateVector:
    """Uniform anisotropic Maxwellians, B_x = 1, and the seed current
    j_x^e = 1e-3 cos(x) carried by the electron Hermite mode (1,0,0)."""
    state = StateVector.zeros(config.layout)
    for s, sp in enumerate(config.species):
        _uniform_maxwellian_block(sp, config.mesh, state, s)
    state.bfield()[0, ..., 0] = 1.0
    # j_x = q prod(alpha) alpha_x C_100 / sqrt(2) per cell and DG mode
    e = config.species[0]
    scale = math.sqrt(2.0) / (e.charge * float(np.prod(e.alpha)) * e.alpha[0])
    c100 = project_to_dg(config.mesh, lambda X, Y, Z: 1e-3 * np.cos(X) * scale)
    state.species(0)[..., 1, 0, 0] = c100
    return state


def init_whistler(overrides: dict | None = None) -> tuple[SimConfig, StateVector]:
    """Electron temperature-anisotropy-driven whistler instability (1D-3V).

    Domain [0, 2 pi] with 72 cells, two species at realistic mass ratio 1836,
    background B_x = 1, anisotropic Maxwellians (perpendicular electron thermal
    velocity 0.125, parallel 0.056), and an electron current perturbation
    j_x^e = 1e-3 cos(x) seeded through the first parallel Hermite mode.
    """
    config = _apply_overrides(whistler_config(), overrides)
    return config, whistler_state(config)


XMODE_AMPLITUDES = (0.598, 0.517, 0.193, 0.218)
XMODE_PHASES = (0.305, 0.586, 0.050, 0.089)


def xmode_config() -> SimConfig:
    """Preset for the cold-plasma X-mode dispersion test."""
    lx = 100.0 * math.pi
    electrons = SpeciesSpec(
        "electrons", mass=1.0, charge=-1.0, hermite_orders=(3, 3, 3),
        alpha=(0.002, 0.002, 0.002),
    )
    return SimConfig(
        mesh=MeshSpec(n_cells=(500, 1, 1), lengths=(lx, 1.0, 1.0), dg_degree=1),
        species=(electrons,),
        physics=PhysicsConstants(omega_ratio=1.0, collision_rate=0.0),
        method="rkc",
        dt=math.pi / 25.0,
        t_end=100.0 * math.pi,
        output_every=1,
        scenario="xmode",
        background_charge=1.0,  # static ions: uniform charge, zero current
        track_fields=("E_y",),
    )


def xmode_state(config: SimConfig) -> StateVector:
    """Maxwellian electrons on a static ion background, B_z = 1, and a
    Gaussian-envelope multi-mode current perturbation along y."""
    lx = config.mesh.lengths[0]
    k_min = 2.0 * math.pi / lx

    def j_y(x):
        envelope = np.exp(-(((x - lx / 2.0) / (0.15 * lx)) ** 2))
        waves = sum(
            a * np.sin(50.0 * (i + 1) * k_min * x + p)
            for i, (a, p) in enumerate(zip(XMODE_AMPLITUDES, XMODE_PHASES))
        )
        return 1e-4 * envelope * waves

    state = StateVector.zeros(config.layout)
    e = config.species[0]
    _uniform_maxwellian_block(e, config.mesh, state, 0)
    state.bfield()[2, ..., 0] = 1.0
    scale = math.sqrt(2.0) / (e.charge * float(np.prod(e.alpha)) * e.alpha[1])
    c010 = project_to_dg(config.mesh, lambda X, Y, Z: j_y(X) * scale)
    state.species(0)[..., 0, 1, 0] = c010
    return state


def init_xmode(overrides: dict | None = None) -> tuple[SimConfig, StateVector]:
    """Cold-plasma X-mode wave dispersion test (1D-3V, kinetic electrons only).

    Domain [0, 100 pi] with 500 cells, B_z = 1, a static neutralizing ion
    background, and a multi-mode electron current perturbation along y under a
    Gaussian envelope.
    """
    config = _apply_overrides(xmode_config(), overrides)
    return config, xmode_state(config)


def _maxwellian_coeffs_1d(order: int, alpha: float, shift: float,
                          bulk: np.ndarray, vth: float) -> np.ndarray:
    """Hermite coefficients of a unit-density 1D Maxwellian with array-valued
    bulk velocity; shape (*bulk.shape, order+1)."""
    from .basis import gauss_hermite, hermite_dual_table

    xi, w = gauss_hermite(order + 4)
    v = shift + alpha * xi
    bulk = np.asarray(bulk, dtype=float)
    f = np.exp(
        -((v - bulk[..., None]) ** 2) / (2.0 * vth**2) + xi**2
    ) / (vth * math.sqrt(2.0 * math.pi))
    duals = hermite_dual_table(order, xi)  # (order+1, nq)
    return np.einsum("...q,nq,q->...n", f, duals, w)


OT_DELTA_B = 0.2
OT_V_A = 0.1


def orszag_tang_config(paper_scale: bool = False) -> SimConfig:
    """Preset for the Orszag-Tang vortex.  The paper-scale grid is 108x108;
    the default halves it to 54x54 so property checks run at desk scale."""
    mass_ratio = 25.0
    electrons = SpeciesSpec(
        "electrons", mass=1.0, charge=-1.0, hermite_orders=(3, 3, 3),
        alpha=(0.25, 0.25, 0.25),
    )
    ions = SpeciesSpec(
        "ions", mass=mass_ratio, charge=1.0, hermite_orders=(3, 3, 3),
        alpha=(0.05, 0.05, 0.05),
    )
    n = 108 if paper_scale else 54
    return SimConfig(
        mesh=MeshSpec(n_cells=(n, n, 1), lengths=(50.0, 50.0, 1.0), dg_degree=1),
        species=(electrons, ions),
        physics=PhysicsConstants(omega_ratio=2.0, collision_rate=1.0),
        method="rkc",
        dt=0.05,  # the paper also exercises dt = 0.025
        t_end=1000.0,
        output_every=10,
        scenario="orszag-tang",
    )


def orszag_tang_state(config: SimConfig) -> StateVector:
    """Perturbed in-plane B on a B_z = 1 guide field with shifted Maxwellians;
    the out-of-plane electron flow cancels curl B so E = 0 is consistent."""
    delta_b = OT_DELTA_B
    v_a = OT_V_A
    omega_ratio = config.physics.omega_ratio
    lx, ly = config.mesh.lengths[0], config.mesh.lengths[1]
    kx = 2.0 * math.pi / lx
    ky = 2.0 * math.pi / ly

    def b_x(X, Y, Z):
        return -delta_b * np.sin(ky * Y + 4.1)

    def b_y(X, Y, Z):
        return delta_b * np.sin(2.0 * kx * X + 2.3)

    def u_x(X, Y):
        return -delta_b * v_a * np.sin(ky * Y + 0.5)

    def u_y(X, Y):
        return delta_b * v_a * np.sin(kx * X + 1.4)

    def u_z_e(X, Y):
        return (
            -delta_b / omega_ratio
            * (2.0 * kx * np.cos(2.0 * kx * X + 2.3) + ky * np.cos(ky * Y + 4.1))
        )

    state = StateVector.zeros(config.layout)
    B = state.bfield()
    B[0] = project_to_dg(config.mesh, b_x)
    B[1] = project_to_dg(config.mesh, b_y)
    B[2, ..., 0] = 1.0

    # Shifted Maxwellians in the (alpha, u=0) bases: per-axis 1D projections are
    # separable, with only one axis carrying a space-dependent bulk velocity.
    mesh = config.mesh
    degs = mesh.axis_degrees
    nq = [d + 1 + 4 for d in degs]
    from numpy.polynomial.legendre import leggauss
    from .basis import LegendreBasis

    qt, qw, qv = [], [], []
    for ax in range(3):
        t, w = leggauss(nq[ax])
        qt.append(t)
        qw.append(w * mesh.dx[ax] / 2.0)
        qv.append(LegendreBasis(degs[ax]).eval_table(t))
    xs = (np.arange(mesh.n_cells[0]) * mesh.dx[0])[:, None] + (qt[0] + 1.0) * mesh.dx[0] / 2.0
    ys = (np.arange(mesh.n_cells[1]) * mesh.dx[1])[:, None] + (qt[1] + 1.0) * mesh.dx[1] / 2.0

    inv_mass = 1.0 / mode_mass(mesh)
    for s, sp in enumerate(config.species):
        vth = sp.alpha[0] / math.sqrt(2.0)
        H = sp.hermite_shape
        # U_x depends on y only, U_y on x only, U_z^e on both; each axis's 1D
        # velocity projection is evaluated on the spatial quadrature points
        cxv = _maxwellian_coeffs_1d(sp.hermite_orders[0], sp.alpha[0], 0.0,
                                    u_x(None, ys), vth)            # (Ny, qy, Hx)
        cyv = _maxwellian_coeffs_1d(sp.hermite_orders[1], sp.alpha[1], 0.0,
                                    u_y(xs, None), vth)            # (Nx, qx, Hy)
        if sp.name == "electrons":
            uz = u_z_e(xs[:, None, :, None], ys[None, :, None, :])  # (Nx, Ny, qx, qy)
            czv = _maxwellian_coeffs_1d(sp.hermite_orders[2], sp.alpha[2], 0.0, uz, vth)
        else:
            cz0 = _maxwellian_coeffs_1d(sp.hermite_orders[2], sp.alpha[2], 0.0,
                                        np.zeros(()), vth)
            czv = np.broadcast_to(cz0, (xs.shape[0], ys.shape[0], nq[0], nq[1], H[2]))
        coeff = np.einsum("YbN,XaM,XYabP->XYabNMP", cxv, cyv, czv, optimize=True)
        proj = np.einsum(
            "XYabNMP,ia,jb,a,b->XYijNMP", coeff, qv[0], qv[1], qw[0], qw[1], optimize=True
        )
        # z axis is degenerate (single cell, constant mode): multiply its measure
        proj = proj * mesh.dx[2]
        C = state.species(s)
        flat = proj.reshape(mesh.n_cells[0], mesh.n_cells[1], degs[0] + 1, degs[1] + 1, *H)
        nlz = degs[2] + 1  # == 1
        modes = flat.reshape(mesh.n_cells[0], mesh.n_cells[1], (degs[0] + 1) * (degs[1] + 1) * nlz, *H)
        C[:, :, 0, :, :, :, :] = modes * inv_mass[None, None, :, None, None, None]
    return state


def init_orszag_tang(overrides: dict | None = None) -> tuple[SimConfig, StateVector]:
    """Orszag-Tang vortex (2D-3V, two species at mass ratio 25) at desk scale;
    pass overrides (or use ``orszag_tang_config(paper_scale=True)``) for the
    paper-resolution grid."""
    config = _apply_overrides(orszag_tang_config(), overrides)
    return config, orszag_tang_state(config)


_STATE_BUILDERS = {
    "whistler": whistler_state,
    "xmode": xmode_state,
    "orszag-tang": orszag_tang_state,
}


def build_initial_state(config: SimConfig) -> StateVector:
    """Initial condition for a (possibly file-loaded) config whose scenario id
    names a built-in benchmark."""
    if config.scenario not in _STATE_BUILDERS:
        raise ValueError(f"unknown scenario {config.scenario!r}; expected one of {SCENARIOS}")
    return _STATE_BUILDERS[config.scenario](config)


def build_scenario(name: str, overrides: dict | None = None) -> tuple[SimConfig, StateVector]:
    builders = {
        "whistler": init_whistler,
        "xmode": init_xmode,
        "orszag-tang": init_orszag_tang,
    }
    if name not in builders:
        raise ValueError(f"unknown scenario {name!r}; expected one of {SCENARIOS}")
    return builders[name](overrides)


# --------------------------------------------------------------------------
# Run loop
# --------------------------------------------------------------------------

@dataclass
class RunResult:
    final_state: StateVector
    records: list[DiagnosticsRecord]
    reports: list[StepReport]
    field_history: dict[str, np.ndarray] | None
    times: np.ndarray


FIELD_COMPONENTS = {
    "E_x": ("E", 0), "E_y": ("E", 1), "E_z": ("E", 2),
    "B_x": ("B", 0), "B_y": ("B", 1), "B_z": ("B", 2),
}


def cell_center_values(state: StateVector, field: str, mws: MaxwellWorkspace) -> np.ndarray:
    """Cell-center samples of one EM component or current component (1D meshes
    flatten to shape (Nx,); general meshes keep (Nx, Ny, Nz))."""
    cv = mws.ops.center_values
    if field in FIELD_COMPONENTS:
        which, comp = FIELD_COMPONENTS[field]
        coefs = state.efield()[comp] if which == "E" else state.bfield()[comp]
    elif field in ("J_x", "J_y", "J_z"):
        coefs = current_density_dg(state)[("J_x", "J_y", "J_z").index(field)]
    else:
        raise KeyError(f"unknown field {field!r}")
    vals = coefs @ cv
    return vals.reshape(-1) if vals.shape[1] == vals.shape[2] == 1 else vals


def run_simulation(config: SimConfig, state: StateVector, sinks=None) -> RunResult:
    """Fixed-step integration to t_end with cadence-sampled diagnostics.

    ``sinks``, when given, is an :class:`OutputSinks`; rows/snapshots are
    written as the run progresses so a step failure leaves everything sampled
    so far on disk (the failure is re-raised after flushing).

    BLAS pools are pinned to one thread for the loop: the kernels are batches
    of small GEMMs where thread handoff costs more than it saves.
    """
    from threadpoolctl import threadpool_limits

    with threadpool_limits(limits=1, user_api="blas"):
        return _run_simulation(config, state, sinks)


def _run_simulation(config: SimConfig, state: StateVector, sinks=None) -> RunResult:
    rhs, vws, mws = make_rhs(config)
    energy = make_energy_functionals(config, mws)
    stepper = make_stepper(config, rhs, energy)
    omega_ratio = config.physics.omega_ratio

    n_steps = int(round(config.t_end / config.dt))
    jump_weight = float(config.epsilon) if config.family == "mrk" else 1.0

    track = tuple(config.track_fields)
    history: dict[str, list[np.ndarray]] = {f: [] for f in track}
    records: list[DiagnosticsRecord] = []
    reports: list[StepReport] = []
    times = []
    e_tot0 = None
    cum_jump = 0.0

    def sample(step_index: int, st: StateVector, rep: StepReport | None):
        nonlocal e_tot0
        t = step_index * config.dt
        e_kin = kinetic_energy(st)
        e_em = em_energy(st, omega_ratio)
        e_tot = e_kin + e_em
        if e_tot0 is None:
            e_tot0 = e_tot
        div_e, div_b = divergence_residuals(st, mws, config.background_charge)
        rec = DiagnosticsRecord(
            t=t,
            particle_numbers=tuple(
                particle_number(st, s) for s in range(len(config.species))
            ),
            e_kin=e_kin,
            e_em=e_em,
            e_tot=e_tot,
            de_tot_rel=(e_tot - e_tot0) / e_tot0 if e_tot0 != 0.0 else 0.0,
            cum_jump=cum_jump,
            gamma=rep.gamma if rep is not None else 1.0,
            div_e=div_e,
            div_b=div_b,
            newton_iters=rep.newton_iters if rep is not None else 0,
        )
        records.append(rec)
        times.append(t)
        for f in track:
            history[f].append(cell_center_values(st, f, mws))
        if sinks is not None:
            sinks.on_record(rec, config)
            if config.snapshot_every and step_index % config.snapshot_every == 0:
                sinks.on_snapshot(st, config, t, mws)

    sample(0, state, None)
    try:
        for step_index in range(1, n_steps + 1):
            state, rep = stepper(state, config.dt)
            reports.append(rep)
            cum_jump += rep.gamma * jump_weight * rep.de_jump
            if step_index % config.output_every == 0 or step_index == n_steps:
                sample(step_index, state, rep)
    finally:
        if sinks is not None:
            sinks.flush(config, history, times)

    return RunResult(
        final_state=state,
        records=records,
        reports=reports,
        field_history={f: np.asarray(v) for f, v in history.items()} if track else None,
        times=np.asarray(times),
    )


# --------------------------------------------------------------------------
# File output
# --------------------------------------------------------------------------

def config_digest(config: SimConfig) -> str:
    blob = json.dumps(asdict(config), sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


TIMESERIES_COLUMNS = (
    "t", "E_kin", "E_EB", "E_tot", "dE_tot_rel",
    "cum_jump_dissipation", "gamma", "div_E_residual", "div_B_residual", "newton_iters",
)


def timeseries_header(config: SimConfig) -> list[str]:
    cols = ["t"]
    cols += [f"N_{sp.name}" for sp in config.species]
    cols += list(TIMESERIES_COLUMNS[1:])
    return cols


def record_row(rec: DiagnosticsRecord) -> list[str]:
    vals = [rec.t, *rec.particle_numbers, rec.e_kin, rec.e_em, rec.e_tot,
            rec.de_tot_rel, rec.cum_jump, rec.gamma, rec.div_e, rec.div_b]
    return [f"{v:.17g}" for v in vals] + [str(rec.newton_iters)]


def write_timeseries(path, records, config: SimConfig) -> None:
    try:
        with open(path, "w", newline="") as fh:
            fh.write(",".join(timeseries_header(config)) + "\n")
            for rec in records:
                fh.write(",".join(record_row(rec)) + "\n")
    except OSError as exc:
        raise IOError(f"cannot write timeseries {path}: {exc}") from exc


def write_field_snapshot(path, state: StateVector, config: SimConfig, t: float,
                         mws: MaxwellWorkspace, include_coefficients: bool = False) -> None:
    """Cell-center field values; optionally a lossless flat coefficient dump."""
    mesh = config.mesh
    fields = ["E_x", "E_y", "E_z", "B_x", "B_y", "B_z", "J_x", "J_y", "J_z"]
    values = {}
    for f in fields:
        which = FIELD_COMPONENTS.get(f)
        if which is not None:
            coefs = state.efield()[which[1]] if which[0] == "E" else state.bfield()[which[1]]
        else:
            coefs = current_density_dg(state)[("J_x", "J_y", "J_z").index(f)]
        values[f] = coefs @ mws.ops.center_values
    centers = [mesh.cell_centers(ax) for ax in range(3)]
    meta = {
        "schema": "fields-v1",
        "t": t,
        "config_hash": config_digest(config),
        "n_cells": list(mesh.n_cells),
        "lengths": list(mesh.lengths),
        "dg_degree": mesh.dg_degree,
    }
    try:
        with open(path, "w", newline="") as fh:
            fh.write("# " + json.dumps(meta, sort_keys=True) + "\n")
            fh.write("ix,iy,iz,x,y,z," + ",".join(fields) + "\n")
            for ix in range(mesh.n_cells[0]):
                for iy in range(mesh.n_cells[1]):
                    for iz in range(mesh.n_cells[2]):
                        row = [str(ix), str(iy), str(iz),
                               f"{centers[0][ix]:.17g}", f"{centers[1][iy]:.17g}",
                               f"{centers[2][iz]:.17g}"]
                        row += [f"{values[f][ix, iy, iz]:.17g}" for f in fields]
                        fh.write(",".join(row) + "\n")
        if include_coefficients:
            cpath = str(path) + ".coeffs"
            with open(cpath, "w", newline="") as fh:
                fh.write("index,value\n")
                for i, v in enumerate(state.data):
                    fh.write(f"{i},{v:.17g}\n")
    except OSError as exc:
        raise IOError(f"cannot write snapshot {path}: {exc}") from exc


def write_field_history(path, field: str, history: np.ndarray, times,
                        config: SimConfig) -> None:
    """1D cell-center time history: one row per sample, one column per cell."""
    mesh = config.mesh
    meta = {
        "schema": "fieldhist-v1",
        "field": field,
        "domain_length": mesh.lengths[0],
        "x_centers": [float(x) for x in mesh.cell_centers(0)],
        "config_hash": config_digest(config),
    }
    try:
        with open(path, "w", newline="") as fh:
            fh.write("# " + json.dumps(meta, sort_keys=True) + "\n")
            fh.write("t," + ",".join(f"c{i:04d}" for i in range(history.shape[1])) + "\n")
            for t, row in zip(times, history):
                fh.write(f"{t:.17g}," + ",".join(f"{v:.17g}" for v in row) + "\n")
    except OSError as exc:
        raise IOError(f"cannot write field history {path}: {exc}") from exc


class OutputSinks:
    """Streams diagnostics/snapshots to an output directory during a run."""

    def __init__(self, out_dir):
        self.out_dir = str(out_dir)
        os.makedirs(self.out_dir, exist_ok=True)
        self._ts_fh = None
        self._snapshots = 0

    def on_record(self, rec: DiagnosticsRecord, config: SimConfig):
        if self._ts_fh is None:
            path = os.path.join(self.out_dir, "timeseries.csv")
            try:
                self._ts_fh = open(path, "w", newline="")
            except OSError as exc:
                raise IOError(f"cannot open {path}: {exc}") from exc
            self._ts_fh.write(",".join(timeseries_header(config)) + "\n")
        self._ts_fh.write(",".join(record_row(rec)) + "\n")

    def on_snapshot(self, state: StateVector, config: SimConfig, t: float, mws):
        path = os.path.join(self.out_dir, f"fields_{t:.6f}.csv")
        write_field_snapshot(path, state, config, t, mws)
        self._snapshots += 1

    def flush(self, config: SimConfig, history: dict, times):
        if self._ts_fh is not None:
            self._ts_fh.close()
            self._ts_fh = None
        for field, rows in history.items():
            if rows:
                path = os.path.join(self.out_dir, f"history_{field}.csv")
                write_field_history(path, field, np.asarray(rows), times, config)
