"""Semi-discrete Maxwell operator in conservative form.

The conservative unknown is the stacked 6-vector u = (E, B); the directional
fluxes are constant 6x6 matrices and the weak form couples cells through
either central (energy-neutral) or upwind (dissipative) numerical fluxes on
faces.  The plasma current enters the E equations as a pointwise DG source.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import DGMeshOperators, characteristic_split, dg_flux_divergence, mode_mass
from .state import SimConfig, StateLayout, StateVector


@dataclass(frozen=True)
class FluxMatrices:
    """Directional flux matrices F_x, F_y, F_z and their characteristic splits."""

    full: tuple[np.ndarray, np.ndarray, np.ndarray]
    plus: tuple[np.ndarray, np.ndarray, np.ndarray]
    minus: tuple[np.ndarray, np.ndarray, np.ndarray]
    abs: tuple[np.ndarray, np.ndarray, np.ndarray]


def build_flux_matrices() -> FluxMatrices:
    """The 6x6 matrices F_beta with F_beta(u) the beta-directed flux of (E, B),
    split as F = F+ + F- through the (symmetric) eigendecomposition with
    eigenvalues {-1, -1, 0, 0, +1, +1}."""
    blocks = {
        0: np.array([[0.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, -1.0, 0.0]]),
        1: np.array([[0.0, 0.0, -1.0], [0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]),
        2: np.array([[0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, 0.0]]),
    }
    full, plus, minus, fabs = [], [], [], []
    z = np.zeros((3, 3))
    for ax in range(3):
        F = np.block([[z, blocks[ax]], [-blocks[ax], z]])
        fp, fm, fa = characteristic_split(F)
        full.append(F)
        plus.append(fp)
        minus.append(fm)
        fabs.append(fa)
    return FluxMatrices(tuple(full), tuple(plus), tuple(minus), tuple(fabs))


class MaxwellWorkspace:
    """Precomputed tables for the Maxwell right-hand side of one configuration."""

    def __init__(self, config: SimConfig):
        self.layout: StateLayout = config.layout
        self.mesh = config.mesh
        self.flux_mode = config.maxwell_flux
        if self.flux_mode not in ("central", "upwind"):
            raise ValueError(f"unknown flux mode {self.flux_mode!r}")
        self.source_prefactor = config.physics.omega_ratio  # omega_pe / omega_ce
        self.flux = build_flux_matrices()
        self.ops = DGMeshOperators(config.mesh)
        self.mode_mass = mode_mass(config.mesh)


def _apply_comp(M: np.ndarray, W: np.ndarray) -> np.ndarray:
    # flux matrices act on the trailing 6-component axis
    return W @ M.T


def current_density_dg(state: StateVector) -> np.ndarray:
    """DG coefficients of the plasma current, shape (3, Nx, Ny, Nz, n_modes).

    J_beta = sum_s q^s a_x a_y a_z [u_beta C_000 + a_beta C_{e_beta} / sqrt(2)],
    exact for the truncated Hermite expansion.
    """
    layout = state.layout
    mesh = layout.mesh
    J = np.zeros((3, *mesh.n_cells, mesh.n_modes))
    for s, sp in enumerate(layout.species):
        C = state.species(s)
        pa = sp.charge * float(np.prod(sp.alpha))
        c000 = C[..., 0, 0, 0]
        first = (C[..., 1, 0, 0] if sp.hermite_orders[0] >= 1 else 0.0,
                 C[..., 0, 1, 0] if sp.hermite_orders[1] >= 1 else 0.0,
                 C[..., 0, 0, 1] if sp.hermite_orders[2] >= 1 else 0.0)
        for ax in range(3):
            J[ax] += pa * (sp.shift[ax] * c000 + sp.alpha[ax] / np.sqrt(2.0) * first[ax])
    return J


def maxwell_rhs(state: StateVector, ws: MaxwellWorkspace, out: np.ndarray | None = None) -> StateVector:
    """Time derivative of the EM blocks (Hermite blocks of the result are zero)."""
    layout = state.layout
    if out is None:
        out = np.zeros(layout.total_len)
    mesh = layout.mesh
    E = state.efield()
    B = state.bfield()
    # (Nx, Ny, Nz, nl, 6) working array
    U = np.moveaxis(np.concatenate([E, B], axis=0), 0, -1)

    acc = np.zeros_like(U)
    upwind = ws.flux_mode == "upwind"
    for ax in mesh.active_axes:
        acc += dg_flux_divergence(
            U, ax, ws.ops, _apply_comp,
            ws.flux.full[ax],
            ws.flux.plus[ax] if upwind else None,
            ws.flux.minus[ax] if upwind else None,
        )
    acc *= ws.ops.inv_mass[:, None]

    dU = np.moveaxis(acc, -1, 0)
    dE_view = layout.em_view(out, "E")
    dB_view = layout.em_view(out, "B")
    dE_view[:] = dU[:3]
    dB_view[:] = dU[3:]
    if layout.species:
        dE_view -= ws.source_prefactor * current_density_dg(state)
    return StateVector(layout, out)


def charge_density_dg(state: StateVector, background_charge: float = 0.0) -> np.ndarray:
    """DG coefficients of the charge density, shape (Nx, Ny, Nz, n_modes)."""
    layout = state.layout
    mesh = layout.mesh
    rho = np.zeros((*mesh.n_cells, mesh.n_modes))
    for s, sp in enumerate(layout.species):
        pa = sp.charge * float(np.prod(sp.alpha))
        rho += pa * state.species(s)[..., 0, 0, 0]
    rho[..., 0] += background_charge
    return rho


def divergence_residuals(
    state: StateVector, ws: MaxwellWorkspace, background_charge: float = 0.0
) -> tuple[float, float]:
    """L2 norms of the DG-weak residuals of div E = (omega_pe/omega_ce) rho
    and div B = 0.  Diagnostic only; nothing in the evolution enforces these."""
    layout = state.layout
    mesh = layout.mesh
    ident = np.eye(1)

    def weak_div(F3: np.ndarray) -> np.ndarray:
        # F3: (3, Nx, Ny, Nz, nl); central averages on faces
        div = np.zeros((*mesh.n_cells, mesh.n_modes))
        for ax in mesh.active_axes:
            W = F3[ax][..., None]  # scalar payload
            div -= dg_flux_divergence(W, ax, ws.ops, _apply_comp, ident)[..., 0]
        return div * ws.ops.inv_mass

    def l2(field: np.ndarray) -> float:
        return float(np.sqrt(np.sum(field**2 * ws.mode_mass)))

    res_e = weak_div(state.efield()) - ws.source_prefactor * charge_density_dg(
        state, background_charge
    )
    res_b = weak_div(state.bfield())
    return l2(res_e), l2(res_b)
