"""Time integration: explicit Runge-Kutta, implicit Gauss-Legendre via
matrix-free Newton-Krylov, and the projection-modified explicit RK that
rescales each update so a declared energy balance holds exactly per step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres as _scipy_gmres

from .state import NewtonKrylovConfig, SimConfig, StateVector, state_linear_comb


class StepFailure(RuntimeError):
    """A time step could not be completed."""

    def __init__(self, message: str, stage: int | None = None, residual: float | None = None):
        super().__init__(message)
        self.stage = stage
        self.residual = residual


class GammaDegenerate(RuntimeError):
    """The electromagnetic energy of the update direction is numerically zero,
    so the projection constraint is vacuous."""


@dataclass(frozen=True)
class ButcherTableau:
    name: str
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    order: int
    explicit: bool

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        b = np.asarray(self.b, dtype=float)
        c = np.asarray(self.c, dtype=float)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)
        s = b.size
        if a.shape != (s, s) or c.shape != (s,):
            raise ValueError(f"tableau {self.name!r}: inconsistent shapes")
        if abs(b.sum() - 1.0) > 1e-13:
            raise ValueError(f"tableau {self.name!r}: weights must sum to 1")
        if self.explicit and np.any(np.abs(np.triu(a)) > 0):
            raise ValueError(f"tableau {self.name!r}: explicit tableau must be strictly lower triangular")

    @property
    def n_stages(self) -> int:
        return self.b.size

    def quadratic_invariant_residual(self) -> float:
        """max_ij |b_i b_j - a_ij b_i - a_ji b_j|; zero for Gauss-Legendre methods."""
        b, a = self.b, self.a
        M = np.outer(b, b) - a * b[:, None] - a.T * b[None, :]
        return float(np.abs(M).max())


def _gl_nodes_weights(n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gauss-Legendre collocation tableau on [0, 1] built from the quadrature rule."""
    x, w = np.polynomial.legendre.leggauss(n)
    c = 0.5 * (x + 1.0)
    b = 0.5 * w
    # a_ij = int_0^{c_i} ell_j(s) ds with ell_j the Lagrange basis on the nodes
    a = np.zeros((n, n))
    for j in range(n):
        coeffs = np.poly1d([1.0])
        for k in range(n):
            if k != j:
                coeffs *= np.poly1d([1.0, -c[k]]) / (c[j] - c[k])
        P = coeffs.integ()
        for i in range(n):
            a[i, j] = P(c[i]) - P(0.0)
    return a, b, c


def _make_registry() -> dict[str, ButcherTableau]:
    reg = {}
    reg["euler"] = ButcherTableau("euler", [[0.0]], [1.0], [0.0], order=1, explicit=True)
    reg["heun2"] = ButcherTableau(
        "heun2", [[0.0, 0.0], [1.0, 0.0]], [0.5, 0.5], [0.0, 1.0], order=2, explicit=True
    )
    # non-adaptive 3-stage third-order method of Bogacki and Shampine
    reg["bs3"] = ButcherTableau(
        "bs3",
        [[0.0, 0.0, 0.0], [0.5, 0.0, 0.0], [0.0, 0.75, 0.0]],
        [2.0 / 9.0, 1.0 / 3.0, 4.0 / 9.0],
        [0.0, 0.5, 0.75],
        order=3,
        explicit=True,
    )
    reg["rk4"] = ButcherTableau(
        "rk4",
        [
            [0.0, 0.0, 0.0, 0.0],
            [0.5, 0.0, 0.0, 0.0],
            [0.0, 0.5, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
        ],
        [1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0],
        [0.0, 0.5, 0.5, 1.0],
        order=4,
        explicit=True,
    )
    for n in (1, 2, 3):
        a, b, c = _gl_nodes_weights(n)
        reg[f"gl{n}"] = ButcherTableau(f"gl{n}", a, b, c, order=2 * n, explicit=False)
    return reg


TABLEAUX = _make_registry()
DEFAULT_EXPLICIT = "bs3"
DEFAULT_GL = "gl1"  # implicit midpoint


@dataclass(frozen=True)
class EnergyFunctionals:
    """Evaluators the modified RK projection and the step reports consume."""

    total: Callable[[StateVector], float]
    em: Callable[[StateVector], float]          # quadratic part, valid on increments
    jump: Callable[[StateVector], float]
    boundary: Callable[[StateVector], float]    # identically 0 on periodic meshes


@dataclass
class StepReport:
    gamma: float = 1.0
    de_jump: float = 0.0
    de_bnd: float = 0.0
    newton_iters: int = 0
    residual_norm: float = 0.0
    degenerate_gamma: bool = False


RHS = Callable[[StateVector], StateVector]


def _rk_sweep(
    y: StateVector,
    dt: float,
    tableau: ButcherTableau,
    rhs: RHS,
    energy_fns: EnergyFunctionals | None,
) -> tuple[StateVector, float, float]:
    """Standard explicit sweep: returns (y_bar, dE_jump, dE_bnd) with the stage
    quadratures dE = dt sum_i b_i E(Y_i) accumulated during the pass."""
    s = tableau.n_stages
    a, b = tableau.a, tableau.b
    fs: list[np.ndarray] = []
    de_jump = 0.0
    de_bnd = 0.0
    for i in range(s):
        stage = y.data if i == 0 else y.data + dt * sum(
            a[i, j] * fs[j] for j in range(i) if a[i, j] != 0.0
        )
        if not np.isfinite(stage).all():
            raise StepFailure(f"non-finite value in RK stage {i}", stage=i)
        stage_state = StateVector(y.layout, stage)
        if energy_fns is not None and b[i] != 0.0:
            de_jump += dt * b[i] * energy_fns.jump(stage_state)
            de_bnd += dt * b[i] * energy_fns.boundary(stage_state)
        fs.append(rhs(stage_state).data)
    update = dt * sum(b[i] * fs[i] for i in range(s) if b[i] != 0.0)
    y_bar = StateVector(y.layout, y.data + update)
    return y_bar, de_jump, de_bnd


def rk_step(
    y: StateVector,
    dt: float,
    tableau: ButcherTableau,
    rhs: RHS,
    energy_fns: EnergyFunctionals | None = None,
) -> tuple[StateVector, StepReport]:
    """One explicit Runge-Kutta step (autonomous right-hand side)."""
    if not tableau.explicit:
        raise ValueError("rk_step requires an explicit tableau")
    y_bar, de_jump, de_bnd = _rk_sweep(y, dt, tableau, rhs, energy_fns)
    if not np.isfinite(y_bar.data).all():
        raise StepFailure("non-finite RK update", stage=tableau.n_stages)
    return y_bar, StepReport(gamma=1.0, de_jump=de_jump, de_bnd=de_bnd)


def compute_gamma(
    y: StateVector,
    y_bar: StateVector,
    epsilon: int,
    energy_fns: EnergyFunctionals,
    de_bnd: float = 0.0,
    de_jump: float = 0.0,
    degeneracy_threshold: float | None = None,
) -> float:
    """Projection factor gamma = 1 - [E_tot(y_bar) - E_tot(y) + dE_bnd
    + eps dE_jump] / E_EB(y_bar - y).

    Raises :class:`GammaDegenerate` when the denominator is below the
    degeneracy threshold (nothing moved, the constraint is vacuous).
    """
    delta = state_linear_comb([1.0, -1.0], [y_bar, y])
    denom = energy_fns.em(delta)
    e_tot_y = energy_fns.total(y)
    thresh = (
        degeneracy_threshold
        if degeneracy_threshold is not None
        else 1e-30 * max(1.0, abs(e_tot_y))
    )
    if abs(denom) <= thresh:
        raise GammaDegenerate(f"EM energy of update direction {denom:.3e} below threshold")
    numer = energy_fns.total(y_bar) - e_tot_y + de_bnd + epsilon * de_jump
    return 1.0 - numer / denom


def modified_rk_step(
    y: StateVector,
    dt: float,
    tableau: ButcherTableau,
    rhs: RHS,
    epsilon: int,
    energy_fns: EnergyFunctionals,
) -> tuple[StateVector, StepReport]:
    """Projection-modified explicit RK: y + gamma (y_bar - y) with gamma chosen
    so that E_tot(y_new) - E_tot(y) + gamma (dE_bnd + eps dE_jump) = 0.

    Falls back to the unmodified update with a flagged report when the update
    direction carries no electromagnetic energy (e.g. at a steady state).
    """
    if not tableau.explicit:
        raise ValueError("modified_rk_step requires an explicit tableau")
    if tableau.n_stages < 2:
        raise ValueError("the projection does not apply to single-stage (Euler) methods")
    y_bar, de_jump, de_bnd = _rk_sweep(y, dt, tableau, rhs, energy_fns)
    try:
        gamma = compute_gamma(y, y_bar, epsilon, energy_fns, de_bnd, de_jump)
        degenerate = False
    except GammaDegenerate:
        gamma = 1.0
        degenerate = True
    y_new = state_linear_comb([1.0 - gamma, gamma], [y, y_bar])
    if not np.isfinite(y_new.data).all():
        raise StepFailure("non-finite modified-RK update")
    return y_new, StepReport(
        gamma=gamma, de_jump=de_jump, de_bnd=de_bnd, degenerate_gamma=degenerate
    )


# --------------------------------------------------------------------------
# Matrix-free nonlinear machinery
# --------------------------------------------------------------------------

class LinearSolveError(RuntimeError):
    pass


class NonlinearSolveError(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


def gmres_solve(
    matvec: Callable[[np.ndarray], np.ndarray],
    rhs_vec: np.ndarray,
    rtol: float,
    atol: float,
    restart: int = 60,
    maxiter: int | None = None,
) -> np.ndarray:
    """GMRES to ||rhs - A x|| <= max(rtol ||rhs||, atol)."""
    n = rhs_vec.size

    def fresh_matvec(v: np.ndarray) -> np.ndarray:
        # scipy mutates work arrays in place; never hand back an aliased buffer
        out = np.asarray(matvec(v), dtype=np.float64)
        if np.shares_memory(out, v):
            out = out.copy()
        return out

    op = LinearOperator((n, n), matvec=fresh_matvec, dtype=np.float64)
    x, info = _scipy_gmres(
        op, rhs_vec, rtol=rtol, atol=atol, restart=restart, maxiter=maxiter
    )
    if info > 0:
        raise LinearSolveError(f"GMRES did not converge within {info} iterations")
    if info < 0:
        raise LinearSolveError("GMRES breakdown")
    return x


def jfnk_solve(
    residual: Callable[[np.ndarray], np.ndarray],
    guess: np.ndarray,
    nk: NewtonKrylovConfig,
) -> tuple[np.ndarray, int, float]:
    """Newton iteration with finite-difference directional derivatives and an
    inner GMRES solve; returns (solution, newton_iterations, final_residual_norm)."""
    x = np.array(guess, dtype=np.float64)
    r = residual(x)
    rnorm = float(np.linalg.norm(r))
    target = max(nk.newton_rtol * rnorm, nk.newton_atol)
    iters = 0
    sqrt_eps = math.sqrt(np.finfo(np.float64).eps)
    while rnorm > target:
        if iters >= nk.max_newton_iter:
            raise NonlinearSolveError(
                f"Newton stalled at residual {rnorm:.3e} after {iters} iterations", rnorm
            )
        xnorm = float(np.linalg.norm(x))

        def jv(v: np.ndarray) -> np.ndarray:
            vnorm = float(np.linalg.norm(v))
            if vnorm == 0.0:
                return np.zeros_like(v)
            eps = nk.fd_epsilon if nk.fd_epsilon is not None else sqrt_eps * (1.0 + xnorm) / vnorm
            return (residual(x + eps * v) - r) / eps

        try:
            delta = gmres_solve(
                jv, -r, rtol=nk.linear_rtol, atol=nk.linear_atol, restart=nk.krylov_restart
            )
        except LinearSolveError as exc:
            raise NonlinearSolveError(f"inner linear solve failed: {exc}", rnorm) from exc
        x = x + delta
        r = residual(x)
        rnorm = float(np.linalg.norm(r))
        iters += 1
    return x, iters, rnorm


def gl_step(
    y: StateVector,
    dt: float,
    tableau: ButcherTableau,
    rhs: RHS,
    nk: NewtonKrylovConfig,
    energy_fns: EnergyFunctionals | None = None,
) -> tuple[StateVector, StepReport]:
    """One Gauss-Legendre (implicit RK) step solved by Newton-Krylov on the
    coupled stage system Y_i = y + dt sum_j a_ij F(Y_j)."""
    if tableau.explicit:
        raise ValueError("gl_step requires an implicit (Gauss-Legendre) tableau")
    layout = y.layout
    s = tableau.n_stages
    a, b = tableau.a, tableau.b
    m = y.data.size

    def rhs_arr(arr: np.ndarray) -> np.ndarray:
        return rhs(StateVector(layout, arr)).data

    def residual(zflat: np.ndarray) -> np.ndarray:
        Z = zflat.reshape(s, m)
        F = np.stack([rhs_arr(Z[i]) for i in range(s)])
        return (Z - y.data[None, :] - dt * (a @ F)).ravel()

    guess = np.tile(y.data, s)
    try:
        zflat, iters, rnorm = jfnk_solve(residual, guess, nk)
    except NonlinearSolveError as exc:
        raise StepFailure(f"implicit stage solve failed: {exc}", residual=exc.residual) from exc

    Z = zflat.reshape(s, m)
    F = np.stack([rhs_arr(Z[i]) for i in range(s)])
    y_new = StateVector(layout, y.data + dt * (b @ F))
    if not np.isfinite(y_new.data).all():
        raise StepFailure("non-finite implicit update")
    de_jump = 0.0
    de_bnd = 0.0
    if energy_fns is not None:
        for i in range(s):
            stage = StateVector(layout, Z[i])
            de_jump += dt * b[i] * energy_fns.jump(stage)
            de_bnd += dt * b[i] * energy_fns.boundary(stage)
    return y_new, StepReport(
        gamma=1.0, de_jump=de_jump, de_bnd=de_bnd, newton_iters=iters, residual_norm=rnorm
    )


def make_stepper(
    config: SimConfig,
    rhs: RHS,
    energy_fns: EnergyFunctionals | None,
) -> Callable[[StateVector, float], tuple[StateVector, StepReport]]:
    """Method dispatcher: maps the configured method abbreviation to a step
    function; the Maxwell flux choice is already baked into ``rhs``."""
    family = config.family
    if family == "rk":
        tableau = TABLEAUX[DEFAULT_EXPLICIT]
        return lambda y, dt: rk_step(y, dt, tableau, rhs, energy_fns)
    if family == "gl":
        tableau = TABLEAUX[DEFAULT_GL]
        return lambda y, dt: gl_step(y, dt, tableau, rhs, config.solver, energy_fns)
    if family == "mrk":
        if energy_fns is None:
            raise ValueError("modified RK methods require energy functionals")
        tableau = TABLEAUX[DEFAULT_EXPLICIT]
        eps = config.epsilon
        return lambda y, dt: modified_rk_step(y, dt, tableau, rhs, eps, energy_fns)
    raise ValueError(f"unknown method family {family!r}")
