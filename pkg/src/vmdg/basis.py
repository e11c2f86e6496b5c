"""Velocity and space bases: asymmetrically weighted Hermite functions,
tensor-product Legendre DG modes, Gaussian quadrature, and the per-species
velocity coupling tables consumed by the spectral operators.

Conventions (univariate, reference variable xi):

    psi_n(xi)  = (pi 2^n n!)^{-1/2} H_n(xi) exp(-xi^2)      (trial, weighted)
    psi^n(xi)  = (2^n n!)^{-1/2} H_n(xi)                    (dual, unweighted)

with H_n the physicists' Hermite polynomials, so that
int psi_n psi^m dxi = delta_nm.  Physical velocity maps to the reference
variable through xi = (v - u) / alpha per axis and species.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.hermite import hermgauss
from numpy.polynomial.legendre import leggauss, legval, legder

from .state import MeshSpec, SpeciesSpec


# --------------------------------------------------------------------------
# Hermite functions
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class HermiteBasis:
    """Per-axis asymmetrically weighted Hermite basis of one species."""

    max_order: tuple[int, int, int]
    alpha: tuple[float, float, float]
    shift: tuple[float, float, float]

    @classmethod
    def for_species(cls, sp: SpeciesSpec) -> "HermiteBasis":
        return cls(sp.hermite_orders, sp.alpha, sp.shift)


def hermite_aw_table(n_max: int, xi: np.ndarray) -> np.ndarray:
    """psi_n(xi) for n = 0..n_max, shape (n_max+1, len(xi)).

    Uses the weighted three-term recurrence directly so the Gaussian weight
    never meets the raw polynomial growth (stable at high order):
    xi psi_n = sqrt((n+1)/2) psi_{n+1} + sqrt(n/2) psi_{n-1}.
    """
    xi = np.asarray(xi, dtype=np.float64)
    out = np.zeros((n_max + 1, *xi.shape))
    out[0] = np.exp(-(xi**2)) / math.sqrt(math.pi)
    if n_max >= 1:
        out[1] = xi * out[0] / math.sqrt(0.5)
    for n in range(1, n_max):
        out[n + 1] = (xi * out[n] - math.sqrt(n / 2.0) * out[n - 1]) / math.sqrt((n + 1) / 2.0)
    return out


def hermite_dual_table(n_max: int, xi: np.ndarray) -> np.ndarray:
    """psi^n(xi) for n = 0..n_max, shape (n_max+1, len(xi))."""
    xi = np.asarray(xi, dtype=np.float64)
    out = np.zeros((n_max + 1, *xi.shape))
    out[0] = np.ones_like(xi)
    if n_max >= 1:
        out[1] = math.sqrt(2.0) * xi
    for n in range(1, n_max):
        out[n + 1] = math.sqrt(2.0 / (n + 1)) * xi * out[n] - math.sqrt(n / (n + 1)) * out[n - 1]
    return out


def hermite_aw_eval(basis: HermiteBasis, order: int, xi, axis: int = 0) -> np.ndarray:
    if not 0 <= order <= basis.max_order[axis]:
        raise IndexError(f"hermite order {order} out of range [0, {basis.max_order[axis]}]")
    return hermite_aw_table(order, np.asarray(xi, dtype=float))[order]


def hermite_dual_eval(basis: HermiteBasis, order: int, xi, axis: int = 0) -> np.ndarray:
    if not 0 <= order <= basis.max_order[axis]:
        raise IndexError(f"hermite order {order} out of range [0, {basis.max_order[axis]}]")
    return hermite_dual_table(order, np.asarray(xi, dtype=float))[order]


def gauss_hermite(n_nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes/weights for int G(xi) exp(-xi^2) dxi = sum w_i G(x_i)."""
    return hermgauss(n_nodes)


# --------------------------------------------------------------------------
# Legendre DG basis
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class LegendreBasis:
    """Univariate Legendre modes L_0..L_degree on [-1, 1] with quadrature
    exact through degree 2*degree + 3 (degree+2 Gauss nodes)."""

    degree: int

    @property
    def n_quad(self) -> int:
        return self.degree + 2

    def nodes_weights(self) -> tuple[np.ndarray, np.ndarray]:
        return leggauss(self.n_quad)

    def eval_table(self, t: np.ndarray) -> np.ndarray:
        """L_i(t), shape (degree+1, len(t))."""
        return np.stack(
            [legval(t, np.eye(self.degree + 1)[i]) for i in range(self.degree + 1)]
        )

    def deriv_table(self, t: np.ndarray) -> np.ndarray:
        """dL_i/dt, shape (degree+1, len(t))."""
        rows = []
        for i in range(self.degree + 1):
            c = np.eye(self.degree + 1)[i]
            rows.append(legval(t, legder(c)) if i > 0 else np.zeros_like(t))
        return np.stack(rows)

    def mass_1d(self) -> np.ndarray:
        """Diagonal of int L_i L_j dt = 2/(2i+1) delta_ij."""
        return 2.0 / (2.0 * np.arange(self.degree + 1) + 1.0)


def legendre_cell_eval(mesh: MeshSpec, mode: tuple[int, int, int],
                       cell: tuple[int, int, int], x: tuple[float, float, float]) -> float:
    """Tensor-product Legendre mode value at a physical point inside a cell."""
    val = 1.0
    degs = mesh.axis_degrees
    for ax in range(3):
        if not 0 <= mode[ax] <= degs[ax]:
            raise IndexError(f"DG mode {mode[ax]} out of range on axis {ax}")
        d = mesh.dx[ax]
        lo = cell[ax] * d
        t = 2.0 * (x[ax] - lo) / d - 1.0
        if not -1.0 - 1e-12 <= t <= 1.0 + 1e-12:
            raise ValueError(f"point {x[ax]} outside cell {cell[ax]} on axis {ax}")
        val *= legval(t, np.eye(degs[ax] + 1)[mode[ax]])
    return float(val)


# --------------------------------------------------------------------------
# Mesh-level DG operator tables (shared by the Vlasov and Maxwell operators)
# --------------------------------------------------------------------------

class DGMeshOperators:
    """Precomputed per-mesh matrices for the tensor-product DG discretization.

    All matrices are dense (n_modes x n_modes); with n_modes <= 27 this is
    cheaper and simpler than exploiting their Kronecker structure.

    Attributes
    ----------
    mass : (nl,) diagonal of the 3D mode mass matrix, includes cell volume.
    inv_mass : (nl,) its inverse.
    grad[ax] : (nl, nl) volume matrices  G[k,l] = int_cell phi_l d_ax phi_k dx.
    face_own_hi / face_nbr_hi / face_own_lo / face_nbr_lo : per axis,
        (nl, nl) surface matrices coupling cell traces across a face
        (``hi`` = face at the high-coordinate side of the cell).
    triple : (nl, nl, nl) raw integrals int_cell phi_a phi_b phi_k dx.
    mode_degrees : (nl, 3) per-axis degree of each flattened mode.
    center_values : (nl,) mode values at the cell center.
    """

    def __init__(self, mesh: MeshSpec):
        self.mesh = mesh
        degs = mesh.axis_degrees
        dx = mesh.dx
        shapes = [d + 1 for d in degs]
        nl = math.prod(shapes)
        self.n_modes = nl

        bases = [LegendreBasis(d) for d in degs]
        # per-axis 1D building blocks
        m1, k1, ehi, elo, c0 = [], [], [], [], []
        for ax, lb in enumerate(bases):
            t, w = lb.nodes_weights()
            V = lb.eval_table(t)       # (deg+1, nq)
            D = lb.deriv_table(t)      # dL/dt
            # int L_i L_j dx over a cell: (dx/2) * int L_i L_j dt
            m1.append((dx[ax] / 2.0) * np.einsum("iq,jq,q->ij", V, V, w))
            # int L_j d_x L_i dx = int L_j L_i' dt   (the dx factors cancel)
            k1.append(np.einsum("iq,jq,q->ij", D, V, w))
            ehi.append(lb.eval_table(np.array([1.0]))[:, 0])
            elo.append(lb.eval_table(np.array([-1.0]))[:, 0])
            c0.append(lb.eval_table(np.array([0.0]))[:, 0])

        def tensor3(fx, fy, fz):
            return np.einsum("ia,jb,kc->ijkabc", fx, fy, fz).reshape(nl, nl)

        mass3 = tensor3(m1[0], m1[1], m1[2])
        self.mass = np.diag(mass3).copy()
        self.inv_mass = 1.0 / self.mass

        self.grad = []
        for ax in range(3):
            parts = [m1[0], m1[1], m1[2]]
            parts[ax] = k1[ax]
            self.grad.append(tensor3(*parts))

        # surface matrices: trace(test at own face) x trace(source) x transverse mass
        self.face_own_hi, self.face_nbr_hi = [], []
        self.face_own_lo, self.face_nbr_lo = [], []
        for ax in range(3):
            tm = [m1[0], m1[1], m1[2]]
            hi, lo = ehi[ax], elo[ax]
            def facemat(test_tr, src_tr):
                parts = list(tm)
                parts[ax] = np.outer(test_tr, src_tr)
                return tensor3(*parts)
            self.face_own_hi.append(facemat(hi, hi))   # own trace at its hi face
            self.face_nbr_hi.append(facemat(hi, lo))   # neighbor (I+1) trace at the same face
            self.face_own_lo.append(facemat(lo, lo))
            self.face_nbr_lo.append(facemat(lo, hi))   # neighbor (I-1) trace at the lo face

        # triple products for pointwise DG products (Lorentz term)
        tq, tw, tV = [], [], []
        for ax, lb in enumerate(bases):
            t, w = lb.nodes_weights()
            tV.append(lb.eval_table(t))
            tq.append(t)
            tw.append(w * dx[ax] / 2.0)
        t1 = [np.einsum("aq,bq,kq,q->abk", V, V, V, w) for V, w in zip(tV, tw)]
        self.triple = np.einsum("abk,cdl,efm->acebdfklm", t1[0], t1[1], t1[2]).reshape(nl, nl, nl)
        # projection tensor: product of two DG fields projected back to modes
        self.proj = self.triple * self.inv_mass[None, None, :]

        self.mode_degrees = np.indices(shapes).reshape(3, nl).T
        self.center_values = np.einsum("i,j,k->ijk", c0[0], c0[1], c0[2]).reshape(nl)

        # face areas per axis (measure of the transverse cell cross-section)
        self.face_area = [
            math.prod(dx[b] for b in range(3) if b != ax) for ax in range(3)
        ]
        # quadrature tables reused by oracles and initialization
        self.quad_nodes = tq
        self.quad_weights = tw
        self.quad_eval = tV


def mode_mass(mesh: MeshSpec) -> np.ndarray:
    """Diagonal (nl,) of the 3D DG mass matrix: prod_ax dx_ax / (2 deg_ax + 1)."""
    degs = mesh.axis_degrees
    dx = mesh.dx
    per_axis = [dx[ax] / (2.0 * np.arange(degs[ax] + 1) + 1.0) for ax in range(3)]
    return np.einsum("i,j,k->ijk", *per_axis).reshape(-1)


def apply_mode_matrix(M: np.ndarray, W: np.ndarray) -> np.ndarray:
    """Contract an (n_modes, n_modes) matrix with the mode axis of
    (Nx, Ny, Nz, n_modes, *payload) through a batched matmul."""
    nl = W.shape[3]
    flat = W.reshape(*W.shape[:3], nl, -1)
    return np.matmul(M, flat).reshape(W.shape)


def dg_div_from_parts(
    g: np.ndarray,
    w_plus: np.ndarray,
    w_minus: np.ndarray,
    axis: int,
    ops: DGMeshOperators,
) -> np.ndarray:
    """Volume + face terms given the flux-applied payloads.

    ``g`` is the full flux T W (volume term); ``w_plus``/``w_minus`` are the
    characteristic halves whose traces feed the hi/lo sides of each face.
    """
    vol = apply_mode_matrix(ops.grad[axis], g)
    w_minus_next = np.roll(w_minus, -1, axis=axis)  # trace entering from cell I+1
    w_plus_prev = np.roll(w_plus, +1, axis=axis)    # trace entering from cell I-1
    hi = apply_mode_matrix(ops.face_own_hi[axis], w_plus)
    hi += apply_mode_matrix(ops.face_nbr_hi[axis], w_minus_next)
    lo = apply_mode_matrix(ops.face_nbr_lo[axis], w_plus_prev)
    lo += apply_mode_matrix(ops.face_own_lo[axis], w_minus)
    return vol - hi + lo


def dg_flux_divergence(
    W: np.ndarray,
    axis: int,
    ops: DGMeshOperators,
    mat_apply,
    T_full: np.ndarray,
    T_plus: np.ndarray | None = None,
    T_minus: np.ndarray | None = None,
) -> np.ndarray:
    """Weak-form spatial terms of d/dt for one flux direction on a periodic mesh.

    ``W`` has shape (Nx, Ny, Nz, n_modes, *payload); ``mat_apply(M, W)``
    applies the flux matrix to the payload.  Returns
    int_I (T W) . d_ax phi  -  oint_{dI} <n . T W> phi, i.e. the right-hand
    side of the mass-matrix system (mass inversion is left to the caller).
    Pass ``T_plus``/``T_minus`` for the upwind flux; omit them for central.
    """
    g = mat_apply(T_full, W)
    if T_plus is None:
        w_plus = 0.5 * g
        w_minus = w_plus
    else:
        w_plus = mat_apply(T_plus, W)
        w_minus = mat_apply(T_minus, W)
    return dg_div_from_parts(g, w_plus, w_minus, axis, ops)


# --------------------------------------------------------------------------
# Velocity coupling (tridiagonal flux matrices and force lowering factors)
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class VelocityCoupling:
    """Per-axis Hermite tables of one species.

    flux[ax]     : (H, H) symmetric tridiagonal matrix of int v_ax psi_n psi^k,
                   i.e. v_ax Psi_n expressed in the span {Psi_{n-1}, Psi_n, Psi_{n+1}}
                   with coefficients beyond the truncation dropped.
    flux_plus / flux_minus / flux_abs : characteristic splits of flux[ax].
    shift_diag / ladder_off : the tridiagonal structure of flux[ax]
                   (diagonal u_ax, off-diagonal alpha_ax sqrt(k/2)),
                   kept separately for the slicing-based fast apply.
    lower[ax]    : (H,) factors sqrt(2k)/alpha_ax of the dual-basis derivative
                   d psi^k / d v_ax = lower[k] psi^{k-1}.
    """

    flux: tuple[np.ndarray, np.ndarray, np.ndarray]
    flux_plus: tuple[np.ndarray, np.ndarray, np.ndarray]
    flux_minus: tuple[np.ndarray, np.ndarray, np.ndarray]
    flux_abs: tuple[np.ndarray, np.ndarray, np.ndarray]
    lower: tuple[np.ndarray, np.ndarray, np.ndarray]
    shift_diag: tuple[float, float, float]
    ladder_off: tuple[np.ndarray, np.ndarray, np.ndarray]


def characteristic_split(T: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """T = T+ + T- with T+- = R D+- R^T, D+- = diag(lam +- |lam|)/2.

    Eigenvalues are sorted ascending; each eigenvector's first component of
    magnitude > 1e-12 is made positive so the split is reproducible.
    """
    lam, R = np.linalg.eigh(T)
    for j in range(R.shape[1]):
        col = R[:, j]
        nz = np.nonzero(np.abs(col) > 1e-12)[0]
        if nz.size and col[nz[0]] < 0:
            R[:, j] = -col
    dplus = 0.5 * (lam + np.abs(lam))
    dminus = 0.5 * (lam - np.abs(lam))
    tplus = (R * dplus) @ R.T
    tminus = (R * dminus) @ R.T
    return tplus, tminus, tplus - tminus


def build_velocity_coupling(species: SpeciesSpec) -> VelocityCoupling:
    flux, fp, fm, fa, lower, offs = [], [], [], [], [], []
    for ax in range(3):
        h = species.hermite_orders[ax] + 1
        u, a = species.shift[ax], species.alpha[ax]
        k = np.arange(1, h)
        off = a * np.sqrt(k / 2.0)
        T = np.diag(np.full(h, u)) + np.diag(off, 1) + np.diag(off, -1)
        tp, tm, ta = characteristic_split(T)
        flux.append(T)
        fp.append(tp)
        fm.append(tm)
        fa.append(ta)
        lower.append(np.sqrt(2.0 * np.arange(h)) / a)
        offs.append(off)
    return VelocityCoupling(
        tuple(flux), tuple(fp), tuple(fm), tuple(fa), tuple(lower),
        tuple(species.shift), tuple(offs),
    )


def project_to_dg(mesh: MeshSpec, fn, extra_quad: int = 4) -> np.ndarray:
    """L2 projection of a smooth scalar field onto the DG space.

    ``fn(X, Y, Z)`` must broadcast over coordinate arrays.  Returns
    coefficients shaped (Nx, Ny, Nz, n_modes).  ``extra_quad`` raises the
    per-axis Gauss node count above the polynomial-exact minimum so that
    non-polynomial initial data is projected to near machine accuracy.
    """
    degs = mesh.axis_degrees
    dx = mesh.dx
    nodes, weights, tables = [], [], []
    for ax in range(3):
        t, w = leggauss(degs[ax] + 1 + extra_quad)
        nodes.append(t)
        weights.append(w * dx[ax] / 2.0)
        tables.append(LegendreBasis(degs[ax]).eval_table(t))
    # physical coordinates of every quadrature point of every cell
    coords = []
    for ax in range(3):
        lo = np.arange(mesh.n_cells[ax]) * dx[ax]
        coords.append(lo[:, None] + (nodes[ax][None, :] + 1.0) * dx[ax] / 2.0)
    X = coords[0][:, None, None, :, None, None]
    Y = coords[1][None, :, None, None, :, None]
    Z = coords[2][None, None, :, None, None, :]
    vals = np.broadcast_to(
        np.asarray(fn(X, Y, Z), dtype=float),
        (*mesh.n_cells, nodes[0].size, nodes[1].size, nodes[2].size),
    )
    raw = np.einsum(
        "xyzabc,ia,jb,kc,a,b,c->xyzijk",
        vals, tables[0], tables[1], tables[2], weights[0], weights[1], weights[2],
        optimize=True,
    ).reshape(*mesh.n_cells, -1)
    return raw / mode_mass(mesh)


# --------------------------------------------------------------------------
# Maxwellian projection
# --------------------------------------------------------------------------

def project_shifted_maxwellian(
    species: SpeciesSpec,
    density: float,
    bulk_velocity,
    thermal,
    n_quad: int | None = None,
) -> np.ndarray:
    """Hermite coefficients of a shifted Maxwellian by dual-basis quadrature.

    The target distribution is
        f(v) = density * prod_b (2 pi vT_b^2)^{-1/2} exp(-(v_b - U_b)^2 / (2 vT_b^2))
    and the returned block C[n, m, p] satisfies f ~= sum C Psi_{nmp}(xi) in the
    species' own (alpha, u) variables.  Separable, so the 3D block is an outer
    product of 1D projections.
    """
    bulk = np.broadcast_to(np.asarray(bulk_velocity, dtype=float), (3,))
    vth = np.broadcast_to(np.asarray(thermal, dtype=float), (3,))
    if np.any(vth <= 0):
        raise ValueError("thermal velocities must be > 0")
    coeffs_1d = []
    for ax in range(3):
        h = species.hermite_orders[ax]
        nq = n_quad if n_quad is not None else h + 4
        xi, w = gauss_hermite(nq)
        v = species.shift[ax] + species.alpha[ax] * xi
        # strip the quadrature weight's own Gaussian: integrand = f * psi^n
        fvals = (
            np.exp(-((v - bulk[ax]) ** 2) / (2.0 * vth[ax] ** 2) + xi**2)
            / (vth[ax] * math.sqrt(2.0 * math.pi))
        )
        duals = hermite_dual_table(h, xi)
        coeffs_1d.append(duals @ (w * fvals))
    out = density * np.einsum("n,m,p->nmp", *coeffs_1d)
    return out
