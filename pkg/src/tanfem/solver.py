"""Iterative linear solvers, Newton iteration, implicit Euler stepping."""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import BreakdownError
from .fields import QProxyField

__all__ = ["SolveConfig", "NewtonConfig", "SolveStats", "linear_solve",
           "newton_solve", "implicit_euler_step"]

_BREAKDOWN = 1e-300


@dataclass(frozen=True)
class SolveConfig:
    """Krylov solver settings.

    method: ``"bicgstab_l"`` (native BiCGstab(l)) or ``"cg"`` (scipy).
    """

    method: str = "bicgstab_l"
    l: int = 2
    preconditioner: str = "jacobi"
    rel_tol: float = 1e-10
    max_iter: int = 20000

    def __post_init__(self):
        if not 0.0 < self.rel_tol < 1.0:
            raise ValueError("rel_tol must lie in (0, 1)")
        if self.l not in (1, 2, 4):
            raise ValueError("l must be one of 1, 2, 4")
        if self.method not in ("bicgstab_l", "cg"):
            raise ValueError(f"unknown solver method {self.method!r}")
        if self.preconditioner not in ("none", "jacobi"):
            raise ValueError(f"unknown preconditioner {self.preconditioner!r}")


@dataclass(frozen=True)
class NewtonConfig:
    tol: float = 1e-8
    max_newton: int = 10
    damping: float = 1.0

    def __post_init__(self):
        if self.max_newton < 1:
            raise ValueError("max_newton must be >= 1")
        if not 0.0 < self.damping <= 1.0:
            raise ValueError("damping must lie in (0, 1]")


@dataclass
class SolveStats:
    iterations: int
    matvecs: int
    residual: float
    converged: bool
    method: str


def linear_solve(system, config=None, x0=None):
    """Solve a BlockSystem (or an ``(A, b)`` pair) to the configured tolerance.

    Returns ``(x, stats)``; `stats.converged` is False when max_iter was hit
    (the best iterate is still returned).  The reported residual is the true
    relative residual, recomputed from the original operator.
    """
    config = config or SolveConfig()
    if isinstance(system, tuple):
        a, b = system
    else:
        a, b = system.matrix, system.rhs
    a = a.tocsr() if sp.issparse(a) else sp.csr_matrix(a)
    b = np.asarray(b, dtype=float)
    if not np.all(np.isfinite(b)) or not np.all(np.isfinite(a.data)):
        raise ValueError("non-finite entries in linear system")

    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros_like(b), SolveStats(0, 0, 0.0, True, config.method)

    if config.preconditioner == "jacobi":
        diag = a.diagonal()
        safe = np.where(np.abs(diag) > _BREAKDOWN, diag, 1.0)
        minv = 1.0 / safe
    else:
        minv = None

    if config.method == "cg":
        return _cg_solve(a, b, bnorm, config, minv, x0)
    return _bicgstab_l(a, b, bnorm, config, minv, x0)


def _cg_solve(a, b, bnorm, config, minv, x0):
    m = None
    if minv is not None:
        m = spla.LinearOperator(a.shape, matvec=lambda v: minv * v)
    count = {"n": 0}

    def cb(_):
        count["n"] += 1

    x, _info = spla.cg(a, b, x0=x0, rtol=config.rel_tol * 0.5, atol=0.0,
                       maxiter=config.max_iter, M=m, callback=cb)
    res = float(np.linalg.norm(a @ x - b) / bnorm)
    return x, SolveStats(count["n"], count["n"], res,
                         res <= config.rel_tol, "cg")


def _bicgstab_l(a, b, bnorm, config, minv, x0):
    """Right-preconditioned BiCGstab(l) after Sleijpen & Fokkema.

    Iterates on A M^{-1}; the recurrence residual therefore equals the true
    residual of the original system.  On a rho/gamma breakdown the shadow
    residual is refreshed once; a second breakdown raises.
    """
    ell = config.l
    n = len(b)

    if minv is None:
        def op(v):
            return a @ v
        def unprec(y):
            return y
    else:
        def op(v):
            return a @ (minv * v)
        def unprec(y):
            return minv * y

    if x0 is None:
        y = np.zeros(n)
    elif minv is None:
        y = np.asarray(x0, dtype=float).copy()
    else:
        y = np.asarray(x0, dtype=float) / minv   # y = M x
    matvecs = 0
    tol_abs = config.rel_tol * bnorm

    r0 = b - op(y)
    matvecs += 1
    shadow = r0.copy()
    restarted = False

    rho0, alpha, omega = 1.0, 0.0, 1.0
    u = [np.zeros(n) for _ in range(ell + 1)]
    r = [r0] + [np.zeros(n) for _ in range(ell)]
    it = 0

    while np.linalg.norm(r[0]) > tol_abs and matvecs < config.max_iter:
        it += 1
        rho0 = -omega * rho0
        breakdown = False
        for j in range(ell):
            rho1 = float(r[j] @ shadow)
            if abs(rho0) < _BREAKDOWN:
                breakdown = True
                break
            beta = alpha * rho1 / rho0
            rho0 = rho1
            for i in range(j + 1):
                u[i] = r[i] - beta * u[i]
            u[j + 1] = op(u[j])
            matvecs += 1
            gamma = float(u[j + 1] @ shadow)
            if abs(gamma) < _BREAKDOWN:
                breakdown = True
                break
            alpha = rho0 / gamma
            for i in range(j + 1):
                r[i] = r[i] - alpha * u[i + 1]
            r[j + 1] = op(r[j])
            matvecs += 1
            y = y + alpha * u[0]

        if breakdown:
            if restarted:
                raise BreakdownError("BiCGstab(l) broke down twice")
            restarted = True
            shadow = r[0].copy()
            rho0, alpha, omega = 1.0, 0.0, 1.0
            u = [np.zeros(n) for _ in range(ell + 1)]
            continue

        # minimal-residual polynomial step (modified Gram-Schmidt)
        tau = np.zeros((ell + 1, ell + 1))
        sigma = np.zeros(ell + 1)
        gamma_p = np.zeros(ell + 1)
        for j in range(1, ell + 1):
            for i in range(1, j):
                tau[i, j] = float(r[j] @ r[i]) / sigma[i]
                r[j] = r[j] - tau[i, j] * r[i]
            sigma[j] = float(r[j] @ r[j])
            if sigma[j] < _BREAKDOWN:
                if restarted:
                    raise BreakdownError("BiCGstab(l) broke down twice")
                restarted = True
                shadow = r[0].copy()
                rho0, alpha, omega = 1.0, 0.0, 1.0
                u = [np.zeros(n) for _ in range(ell + 1)]
                break
            gamma_p[j] = float(r[0] @ r[j]) / sigma[j]
        else:
            gam = np.zeros(ell + 1)
            gam[ell] = gamma_p[ell]
            omega = gam[ell]
            for j in range(ell - 1, 0, -1):
                gam[j] = gamma_p[j] - sum(tau[j, i] * gam[i]
                                          for i in range(j + 1, ell + 1))
            gam_pp = np.zeros(ell)
            for j in range(1, ell):
                gam_pp[j] = gam[j + 1] + sum(tau[j, i] * gam[i + 1]
                                             for i in range(j + 1, ell))
            y = y + gam[1] * r[0]
            r[0] = r[0] - gamma_p[ell] * r[ell]
            u[0] = u[0] - gam[ell] * u[ell]
            for j in range(1, ell):
                u[0] = u[0] - gam[j] * u[j]
                y = y + gam_pp[j] * r[j]
                r[0] = r[0] - gamma_p[j] * r[j]

    x = unprec(y)
    res = float(np.linalg.norm(a @ x - b) / bnorm)
    return x, SolveStats(it, matvecs, res, res <= config.rel_tol, "bicgstab_l")


@dataclass
class NewtonTrace:
    residual_norms: list = field(default_factory=list)
    converged: bool = False
    linear_stats: list = field(default_factory=list)
    first_delta: object = None


def newton_solve(residual_and_jacobian, u0, config=None, linear=None, x0=None):
    """Damped Newton iteration u <- u - s J^{-1} F(u).

    `residual_and_jacobian(u)` must return ``(F, J)`` with `J` either a
    sparse matrix or a zero-argument callable producing one (lazy Jacobian:
    the final accepted iterate never materializes it).  The step is halved
    (up to 10 times) whenever the residual norm would increase.  `x0` seeds
    the first linear solve (useful across smooth time steps).  Returns
    ``(u, trace)``; `trace.converged` reports whether ``|F| <= tol``.
    """
    config = config or NewtonConfig()
    linear = linear or SolveConfig(rel_tol=1e-8)
    u = np.asarray(u0, dtype=float).copy()
    fvec, jac = residual_and_jacobian(u)
    fnorm = float(np.linalg.norm(fvec))
    f0 = fnorm
    trace = NewtonTrace(residual_norms=[fnorm])
    guess = x0

    for _ in range(config.max_newton):
        if fnorm <= config.tol:
            trace.converged = True
            return u, trace
        if fnorm > 10.0 * f0:
            break   # clearly diverging; let the caller shrink the step
        if callable(jac):
            jac = jac()
        delta, stats = linear_solve((jac, -fvec), linear, x0=guess)
        guess = None
        trace.linear_stats.append(stats)
        trace.first_delta = delta if trace.first_delta is None else trace.first_delta
        if not stats.converged:
            break   # unreliable direction; let the caller shrink the step
        step = config.damping
        best = None
        for _halving in range(10):
            cand = u + step * delta
            fc, jc = residual_and_jacobian(cand)
            fcn = float(np.linalg.norm(fc))
            if best is None or fcn < best[3]:
                best = (cand, fc, jc, fcn)
            if fcn < fnorm:
                break
            step *= 0.5
        u, fvec, jac, fnorm = best
        trace.residual_norms.append(fnorm)

    trace.converged = fnorm <= config.tol
    return u, trace


def implicit_euler_step(state, tau, step_assembler, newton=None, linear=None):
    """One backward-Euler step of the Q-tensor flow.

    `step_assembler(q_prev_flat, tau)` must return a residual/Jacobian
    callback for the time-discrete equation; the previous state seeds the
    Newton iteration.  Returns ``(new_state, trace)``.
    """
    if tau <= 0.0:
        raise ValueError("time step must be positive")
    q_prev = state.flat()
    rj = step_assembler(q_prev, tau)
    u, trace = newton_solve(rj, q_prev, newton, linear)
    return QProxyField.from_flat(u, state.n_vertices), trace
