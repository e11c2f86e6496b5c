"""Simulation configuration, global coefficient layout, and vector utilities.

The global unknown vector stacks, in order: one block of Hermite-DG
coefficients per plasma species, then the DG coefficients of the electric
field, then those of the magnetic field.  Within a species block the Hermite
index runs fastest, then the DG mode, then the cell.  Within each
electromagnetic block the ordering is component (slowest), cell, DG mode.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib


class ConfigError(ValueError):
    """Raised when a configuration file or override violates an invariant."""


METHODS = ("imc", "imu", "rkc", "rku", "mrkc", "mrku0", "mrku1")

# method abbreviation -> (integrator family, maxwell flux, epsilon)
METHOD_TABLE = {
    "imc": ("gl", "central", 0),
    "imu": ("gl", "upwind", 0),
    "rkc": ("rk", "central", 0),
    "rku": ("rk", "upwind", 0),
    "mrkc": ("mrk", "central", 0),
    "mrku0": ("mrk", "upwind", 0),
    "mrku1": ("mrk", "upwind", 1),
}


def _as_triple(value, name: str, cast=float) -> tuple:
    if np.isscalar(value):
        value = (value, value, value)
    t = tuple(cast(v) for v in value)
    if len(t) != 3:
        raise ConfigError(f"{name} must be a scalar or a 3-sequence, got {value!r}")
    return t


@dataclass(frozen=True)
class MeshSpec:
    """Uniform periodic hexahedral mesh with tensor-product Legendre modes."""

    n_cells: tuple[int, int, int]
    lengths: tuple[float, float, float]
    dg_degree: int = 1
    periodic: tuple[bool, bool, bool] = (True, True, True)

    def __post_init__(self):
        object.__setattr__(self, "n_cells", _as_triple(self.n_cells, "n_cells", int))
        object.__setattr__(self, "lengths", _as_triple(self.lengths, "lengths", float))
        object.__setattr__(self, "periodic", _as_triple(self.periodic, "periodic", bool))
        for ax, (n, L) in enumerate(zip(self.n_cells, self.lengths)):
            if n < 1:
                raise ConfigError(f"n_cells[{ax}] must be >= 1, got {n}")
            if L <= 0.0:
                raise ConfigError(f"lengths[{ax}] must be > 0, got {L}")
        if self.dg_degree < 0:
            raise ConfigError(f"dg_degree must be >= 0, got {self.dg_degree}")
        if not all(self.periodic):
            raise ConfigError("only fully periodic meshes are supported")

    @property
    def dx(self) -> tuple[float, float, float]:
        return tuple(L / n for L, n in zip(self.lengths, self.n_cells))

    @property
    def cell_volume(self) -> float:
        return math.prod(self.dx)

    @property
    def axis_degrees(self) -> tuple[int, int, int]:
        # single-cell axes are invariant directions: the DG degree collapses to 0
        return tuple(self.dg_degree if n > 1 else 0 for n in self.n_cells)

    @property
    def active_axes(self) -> tuple[int, ...]:
        return tuple(ax for ax in range(3) if self.n_cells[ax] > 1)

    @property
    def n_modes(self) -> int:
        return math.prod(d + 1 for d in self.axis_degrees)

    @property
    def n_cells_total(self) -> int:
        return math.prod(self.n_cells)

    def cell_centers(self, axis: int) -> np.ndarray:
        n = self.n_cells[axis]
        d = self.dx[axis]
        return (np.arange(n) + 0.5) * d


@dataclass(frozen=True)
class SpeciesSpec:
    """One plasma species and its Hermite velocity basis parameters."""

    name: str
    mass: float
    charge: float
    hermite_orders: tuple[int, int, int]
    alpha: tuple[float, float, float]
    shift: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(
            self, "hermite_orders", _as_triple(self.hermite_orders, "hermite_orders", int)
        )
        object.__setattr__(self, "alpha", _as_triple(self.alpha, "alpha"))
        object.__setattr__(self, "shift", _as_triple(self.shift, "shift"))
        if self.mass <= 0:
            raise ConfigError(f"species {self.name!r}: mass must be > 0")
        for ax in range(3):
            if self.alpha[ax] <= 0:
                raise ConfigError(f"species {self.name!r}: alpha[{ax}] must be > 0")
            if self.hermite_orders[ax] < 0:
                raise ConfigError(f"species {self.name!r}: hermite_orders[{ax}] must be >= 0")

    @property
    def n_hermite(self) -> int:
        return math.prod(o + 1 for o in self.hermite_orders)

    @property
    def hermite_shape(self) -> tuple[int, int, int]:
        return tuple(o + 1 for o in self.hermite_orders)


@dataclass(frozen=True)
class PhysicsConstants:
    """Dimensionless plasma parameters shared by all operators."""

    omega_ratio: float = 1.0  # omega_pe / omega_ce
    collision_rate: float = 0.0

    def __post_init__(self):
        if self.omega_ratio <= 0:
            raise ConfigError("omega_ratio must be > 0")
        if self.collision_rate < 0:
            raise ConfigError("collision_rate must be >= 0")


@dataclass(frozen=True)
class StateLayout:
    """Bijective map between the (s, I, l, n, m, p) / EM multi-indices and flat offsets."""

    mesh: MeshSpec
    species: tuple[SpeciesSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "species", tuple(self.species))
        nc, nl = self.mesh.n_cells_total, self.mesh.n_modes
        lens = tuple(nc * nl * sp.n_hermite for sp in self.species)
        # derived offsets, cached because views sit on hot paths
        object.__setattr__(self, "_block_lens", lens)
        object.__setattr__(self, "_hermite_total", sum(lens))
        object.__setattr__(self, "_em_block", 3 * nc * nl)
        offs, acc = [], 0
        for ln in lens:
            offs.append(acc)
            acc += ln
        object.__setattr__(self, "_species_offsets", tuple(offs))

    @property
    def species_block_lens(self) -> tuple[int, ...]:
        return self._block_lens

    @property
    def hermite_total_len(self) -> int:
        return self._hermite_total

    @property
    def em_block_len(self) -> int:
        return self._em_block

    @property
    def e_offset(self) -> int:
        return self._hermite_total

    @property
    def b_offset(self) -> int:
        return self._hermite_total + self._em_block

    @property
    def total_len(self) -> int:
        return self._hermite_total + 2 * self._em_block

    def species_offset(self, s: int) -> int:
        return self._species_offsets[s]

    def species_index(self, name: str) -> int:
        for i, sp in enumerate(self.species):
            if sp.name == name:
                return i
        raise KeyError(f"no species named {name!r}")

    # ---- views ------------------------------------------------------------
    def species_view(self, data: np.ndarray, s: int) -> np.ndarray:
        """Zero-copy view of species ``s`` shaped (Nx, Ny, Nz, n_modes, Hx, Hy, Hz)."""
        off = self.species_offset(s)
        sp = self.species[s]
        shape = (*self.mesh.n_cells, self.mesh.n_modes, *sp.hermite_shape)
        return data[off : off + self.species_block_lens[s]].reshape(shape)

    def em_view(self, data: np.ndarray, which: str) -> np.ndarray:
        """Zero-copy view of the E or B block shaped (3, Nx, Ny, Nz, n_modes)."""
        off = {"E": self.e_offset, "B": self.b_offset}[which]
        shape = (3, *self.mesh.n_cells, self.mesh.n_modes)
        return data[off : off + self.em_block_len].reshape(shape)

    # ---- scalar index map --------------------------------------------------
    def _check_range(self, value: int, hi: int, what: str) -> int:
        if not 0 <= value < hi:
            raise IndexError(f"{what} index {value} out of range [0, {hi})")
        return value

    def _cell_mode_flat(self, cell: Sequence[int], mode: Sequence[int]) -> tuple[int, int]:
        ncx, ncy, ncz = self.mesh.n_cells
        degs = self.mesh.axis_degrees
        ix = self._check_range(cell[0], ncx, "cell x")
        iy = self._check_range(cell[1], ncy, "cell y")
        iz = self._check_range(cell[2], ncz, "cell z")
        lx = self._check_range(mode[0], degs[0] + 1, "DG mode x")
        ly = self._check_range(mode[1], degs[1] + 1, "DG mode y")
        lz = self._check_range(mode[2], degs[2] + 1, "DG mode z")
        cell_flat = (ix * ncy + iy) * ncz + iz
        mode_flat = (lx * (degs[1] + 1) + ly) * (degs[2] + 1) + lz
        return cell_flat, mode_flat


def index_of(layout: StateLayout, multi_index: tuple) -> int:
    """Flat offset of one coefficient.

    ``multi_index`` is either ``("species", s, (ix,iy,iz), (lx,ly,lz), (n,m,p))``
    or ``("E"|"B", component, (ix,iy,iz), (lx,ly,lz))``.
    """
    kind = multi_index[0]
    nl = layout.mesh.n_modes
    if kind == "species":
        _, s, cell, mode, herm = multi_index
        layout._check_range(s, len(layout.species), "species")
        sp = layout.species[s]
        cell_flat, mode_flat = layout._cell_mode_flat(cell, mode)
        hx, hy, hz = sp.hermite_shape
        n = layout._check_range(herm[0], hx, "hermite n")
        m = layout._check_range(herm[1], hy, "hermite m")
        p = layout._check_range(herm[2], hz, "hermite p")
        herm_flat = (n * hy + m) * hz + p
        return layout.species_offset(s) + (cell_flat * nl + mode_flat) * sp.n_hermite + herm_flat
    if kind in ("E", "B"):
        _, comp, cell, mode = multi_index
        layout._check_range(comp, 3, "field component")
        cell_flat, mode_flat = layout._cell_mode_flat(cell, mode)
        base = layout.e_offset if kind == "E" else layout.b_offset
        return base + (comp * layout.mesh.n_cells_total + cell_flat) * nl + mode_flat
    raise IndexError(f"unknown multi-index kind {kind!r}")


@dataclass
class StateVector:
    """Flat coefficient vector over a fixed layout."""

    layout: StateLayout
    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.shape != (self.layout.total_len,):
            raise ValueError(
                f"state length {self.data.shape} does not match layout ({self.layout.total_len},)"
            )

    @classmethod
    def zeros(cls, layout: StateLayout) -> "StateVector":
        return cls(layout, np.zeros(layout.total_len))

    def copy(self) -> "StateVector":
        return StateVector(self.layout, self.data.copy())

    def species(self, s: int) -> np.ndarray:
        return self.layout.species_view(self.data, s)

    def efield(self) -> np.ndarray:
        return self.layout.em_view(self.data, "E")

    def bfield(self) -> np.ndarray:
        return self.layout.em_view(self.data, "B")

    def assert_finite(self) -> None:
        if not np.isfinite(self.data).all():
            raise FloatingPointError("state contains non-finite entries")


def state_linear_comb(coeffs: Sequence[float], states: Sequence[StateVector]) -> StateVector:
    """Elementwise sum(coeffs[k] * states[k]); all states must share one layout."""
    if len(coeffs) != len(states) or not states:
        raise ValueError("coeffs and states must have equal nonzero length")
    layout = states[0].layout
    for st in states[1:]:
        if st.layout is not layout and st.layout != layout:
            raise ValueError("states do not share a layout")
    acc = coeffs[0] * states[0].data
    for c, st in zip(coeffs[1:], states[1:]):
        acc += c * st.data
    return StateVector(layout, acc)


@dataclass(frozen=True)
class NewtonKrylovConfig:
    """Tolerances for the matrix-free Newton-Krylov stage solver."""

    newton_rtol: float = 1e-8
    newton_atol: float = 1e-50
    linear_rtol: float = 1e-5
    linear_atol: float = 1e-50
    max_newton_iter: int = 50
    krylov_restart: int = 60
    fd_epsilon: float | None = None  # None -> sqrt(machine eps)*(1+|y|)/|v|

    def __post_init__(self):
        for name in ("newton_rtol", "newton_atol", "linear_rtol", "linear_atol"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be > 0")


@dataclass(frozen=True)
class SimConfig:
    """Everything needed to reproduce one run."""

    mesh: MeshSpec
    species: tuple[SpeciesSpec, ...]
    physics: PhysicsConstants
    method: str = "rkc"
    dt: float = 0.01
    t_end: float = 1.0
    output_every: int = 1
    snapshot_every: int = 0  # 0 disables field snapshots
    scenario: str = "custom"
    solver: NewtonKrylovConfig = field(default_factory=NewtonKrylovConfig)
    background_charge: float = 0.0  # static neutralizing charge density
    track_fields: tuple[str, ...] = ()  # cell-center histories, e.g. ("B_z", "E_y")

    def __post_init__(self):
        object.__setattr__(self, "species", tuple(self.species))
        if self.method not in METHOD_TABLE:
            raise ConfigError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.dt <= 0:
            raise ConfigError("dt must be > 0")
        # t_end = 0 is admitted so a run can degenerate to a single sample
        if self.t_end < 0:
            raise ConfigError("t_end must be >= 0")
        if self.output_every < 1:
            raise ConfigError("output_every must be >= 1")

    @property
    def family(self) -> str:
        return METHOD_TABLE[self.method][0]

    @property
    def maxwell_flux(self) -> str:
        return METHOD_TABLE[self.method][1]

    @property
    def epsilon(self) -> int:
        # only meaningful for upwind fluxes; the jump term vanishes for central
        return METHOD_TABLE[self.method][2]

    @property
    def layout(self) -> StateLayout:
        return StateLayout(self.mesh, self.species)

    def with_overrides(self, **kwargs) -> "SimConfig":
        return replace(self, **kwargs)


# --------------------------------------------------------------------------
# TOML configuration files
# --------------------------------------------------------------------------

def _require(section: dict, key: str, where: str):
    if key not in section:
        raise ConfigError(f"missing key {key!r} in [{where}]")
    return section[key]


def load_config(path) -> SimConfig:
    """Parse and validate a TOML run configuration.

    Sections: ``[mesh]``, ``[species.<name>]`` (one per species), ``[physics]``,
    ``[integrator]``, ``[output]``.  See docs/config.md for the key schema.
    """
    with open(path, "rb") as fh:
        try:
            raw = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc

    try:
        mesh_raw = _require(raw, "mesh", "")
        mesh = MeshSpec(
            n_cells=_require(mesh_raw, "n_cells", "mesh"),
            lengths=_require(mesh_raw, "lengths", "mesh"),
            dg_degree=mesh_raw.get("dg_degree", 1),
        )
        species = []
        for name, sec in raw.get("species", {}).items():
            species.append(
                SpeciesSpec(
                    name=name,
                    mass=_require(sec, "mass", f"species.{name}"),
                    charge=_require(sec, "charge", f"species.{name}"),
                    hermite_orders=_require(sec, "hermite_orders", f"species.{name}"),
                    alpha=_require(sec, "alpha", f"species.{name}"),
                    shift=sec.get("shift", 0.0),
                )
            )
        phys_raw = raw.get("physics", {})
        physics = PhysicsConstants(
            omega_ratio=phys_raw.get("omega_ratio", 1.0),
            collision_rate=phys_raw.get("collision_rate", 0.0),
        )
        integ = raw.get("integrator", {})
        method = integ.get("method", "rkc")
        if "maxwell_flux" in integ and method in METHOD_TABLE:
            implied = METHOD_TABLE[method][1]
            if integ["maxwell_flux"] != implied:
                raise ConfigError(
                    f"[integrator] maxwell_flux={integ['maxwell_flux']!r} contradicts "
                    f"method {method!r} (implies {implied!r})"
                )
        solver = NewtonKrylovConfig(
            newton_rtol=integ.get("newton_rtol", 1e-8),
            newton_atol=integ.get("newton_atol", 1e-50),
            linear_rtol=integ.get("linear_rtol", 1e-5),
            linear_atol=integ.get("linear_atol", 1e-50),
            max_newton_iter=integ.get("max_newton_iter", 50),
            krylov_restart=integ.get("krylov_restart", 60),
        )
        out = raw.get("output", {})
        return SimConfig(
            mesh=mesh,
            species=tuple(species),
            physics=physics,
            method=method,
            dt=_require(integ, "dt", "integrator"),
            t_end=_require(integ, "t_end", "integrator"),
            output_every=out.get("every", 1),
            snapshot_every=out.get("snapshot_every", 0),
            scenario=raw.get("scenario", {}).get("id", "custom"),
            solver=solver,
            background_charge=phys_raw.get("background_charge", 0.0),
            track_fields=tuple(out.get("track_fields", ())),
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
