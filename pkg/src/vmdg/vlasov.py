"""Semi-discrete Vlasov operator.

Each species evolves a tensor of Hermite-DG coefficients C[cell, mode, n, m, p].
Streaming couples Hermite neighbors through the per-axis tridiagonal velocity
moment matrices and cells through upwind DG fluxes; the Lorentz term couples
the Hermite ladder to the DG electromagnetic fields; the artificial collision
operator damps high-order Hermite modes without touching the collisional
invariants (indices 0..2 per axis).
"""

from __future__ import annotations

import numpy as np

from .basis import (
    DGMeshOperators,
    VelocityCoupling,
    build_velocity_coupling,
    dg_div_from_parts,
)
from .state import SimConfig, StateLayout, StateVector

def apply_hermite_matrix(M: np.ndarray, W: np.ndarray, axis: int) -> np.ndarray:
    """Contract a dense (test, trial) matrix M with one Hermite axis of
    (..., Hx, Hy, Hz) through batched matmuls on reshaped views."""
    hx, hy, hz = W.shape[-3], W.shape[-2], W.shape[-1]
    if axis == 0:
        flat = W.reshape(-1, hx, hy * hz)
    elif axis == 1:
        flat = W.reshape(-1, hy, hz)
    else:
        return (W.reshape(-1, hz) @ M.T).reshape(W.shape)
    return np.matmul(M, flat).reshape(W.shape)


def _lowering_matrix(factors: np.ndarray) -> np.ndarray:
    """L[k, n] = factors[k] delta_{n, k-1}: the dual-derivative shift written
    as a matrix so it rides the same batched-matmul fast path."""
    h = factors.size
    L = np.zeros((h, h))
    if h > 1:
        L[np.arange(1, h), np.arange(h - 1)] = factors[1:]
    return L


class VlasovWorkspace:
    """Per-configuration tables for the Vlasov right-hand side."""

    def __init__(self, config: SimConfig):
        self.layout: StateLayout = config.layout
        self.mesh = config.mesh
        self.ops = DGMeshOperators(config.mesh)
        self.nu = config.physics.collision_rate
        self.coupling: list[VelocityCoupling] = []
        self.lorentz_prefactor: list[float] = []
        self.collision_table: list[np.ndarray] = []
        self.lowering: list[tuple[np.ndarray, np.ndarray, np.ndarray]] = []
        for sp in config.species:
            cpl = build_velocity_coupling(sp)
            self.coupling.append(cpl)
            self.lorentz_prefactor.append(
                sp.charge / sp.mass / config.physics.omega_ratio
            )
            self.collision_table.append(_collision_table(sp.hermite_orders))
            self.lowering.append(tuple(_lowering_matrix(v) for v in cpl.lower))


def _collision_table(orders: tuple[int, int, int]) -> np.ndarray:
    """D[n,m,p] = sum_ax idx(idx-1)(idx-2)/kappa_ax, kappa = Nv(Nv-1)(Nv-2).

    Axes with Nv < 3 contribute nothing: every admissible index there has
    idx(idx-1)(idx-2) = 0, so the undefined kappa never enters.
    """
    shape = tuple(o + 1 for o in orders)
    D = np.zeros(shape)
    for ax, nv in enumerate(orders):
        if nv < 3:
            continue
        idx = np.arange(nv + 1, dtype=float)
        damp = idx * (idx - 1.0) * (idx - 2.0) / (nv * (nv - 1.0) * (nv - 2.0))
        reshape = [1, 1, 1]
        reshape[ax] = nv + 1
        D += damp.reshape(reshape)
    return D


def vlasov_streaming_rhs(state: StateVector, ws: VlasovWorkspace,
                         out: np.ndarray | None = None) -> StateVector:
    """Streaming (free transport) contribution: upwind DG fluxes of v_beta f."""
    layout = state.layout
    if out is None:
        out = np.zeros(layout.total_len)
    for s in range(len(layout.species)):
        C = state.species(s)
        dC = layout.species_view(out, s)
        cpl = ws.coupling[s]
        acc = None
        for ax in ws.mesh.active_axes:
            # the characteristic halves come from a single |T| product:
            # T+- = (T +- |T|) / 2
            g = apply_hermite_matrix(cpl.flux[ax], C, ax)
            absd = apply_hermite_matrix(cpl.flux_abs[ax], C, ax)
            w_plus = 0.5 * (g + absd)
            w_minus = g - w_plus
            term = dg_div_from_parts(g, w_plus, w_minus, ax, ws.ops)
            acc = term if acc is None else acc + term
        if acc is not None:
            dC += acc * ws.ops.inv_mass[:, None, None, None]
    return StateVector(layout, out)


def vlasov_lorentz_rhs(state: StateVector, ws: VlasovWorkspace,
                       out: np.ndarray | None = None) -> StateVector:
    """Lorentz force contribution (q/m)(omega_ce/omega_pe) (E + v x B) . grad_v f.

    Velocity integration by parts puts the derivative on the dual test
    functions, which lowers one Hermite index per force component; products of
    the DG fields with the coefficient fields are projected back onto the DG
    modes through the precomputed triple-product tensor.
    """
    layout = state.layout
    if out is None:
        out = np.zeros(layout.total_len)
    E = state.efield()
    B = state.bfield()
    proj = ws.ops.proj
    nl = ws.ops.n_modes

    def dg_product(field: np.ndarray, W: np.ndarray) -> np.ndarray:
        # out[..., k, H] = sum_ab field[..., a] W[..., b, H] proj[a, b, k];
        # two BLAS-shaped stages instead of one path-planned einsum
        pk = np.tensordot(field, proj, axes=([-1], [0]))       # (..., b, k)
        h_shape = W.shape[4:]
        Wf = W.reshape(*W.shape[:3], nl, -1)
        res = np.matmul(np.swapaxes(pk, -1, -2), Wf)           # (..., k, H)
        return res.reshape(*W.shape[:3], nl, *h_shape)

    for s in range(len(layout.species)):
        C = state.species(s)
        dC = layout.species_view(out, s)
        cpl = ws.coupling[s]
        pref = ws.lorentz_prefactor[s]
        tC = [apply_hermite_matrix(cpl.flux[ax], C, ax) for ax in range(3)]
        # (E + v x B) components against the lowered dual index per axis
        combos = (
            (E[0], C, B[2], tC[1], B[1], tC[2]),  # E_x + v_y B_z - v_z B_y
            (E[1], C, B[0], tC[2], B[2], tC[0]),  # E_y + v_z B_x - v_x B_z
            (E[2], C, B[1], tC[0], B[0], tC[1]),  # E_z + v_x B_y - v_y B_x
        )
        for ax, (e, w0, bp, wp, bm, wm) in enumerate(combos):
            W = dg_product(e, w0) + dg_product(bp, wp) - dg_product(bm, wm)
            dC += pref * apply_hermite_matrix(ws.lowering[s][ax], W, ax)
    return StateVector(layout, out)


def collision_rhs(state: StateVector, ws: VlasovWorkspace,
                  out: np.ndarray | None = None) -> StateVector:
    """Hermite-space collisional damping; identically zero on indices <= 2."""
    layout = state.layout
    if out is None:
        out = np.zeros(layout.total_len)
    if ws.nu > 0.0:
        for s in range(len(layout.species)):
            dC = layout.species_view(out, s)
            dC -= ws.nu * ws.collision_table[s] * state.species(s)
    return StateVector(layout, out)


def vlasov_rhs(state: StateVector, ws: VlasovWorkspace,
               out: np.ndarray | None = None) -> StateVector:
    """Full Vlasov contribution: streaming + Lorentz + collisions."""
    layout = state.layout
    if out is None:
        out = np.zeros(layout.total_len)
    vlasov_streaming_rhs(state, ws, out)
    vlasov_lorentz_rhs(state, ws, out)
    collision_rhs(state, ws, out)
    return StateVector(layout, out)
