"""Surface Landau-de Gennes relaxation: implicit Euler + Newton time loop."""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NoConvergence
from .experiments import detect_defects
from .fem import QBulkAssembler, qtensor_operator_parts
from .fields import QProxyField, Q_BASIS, q_pack
from .solver import NewtonConfig, SolveConfig, newton_solve

__all__ = ["LdGParams", "RelaxationTrace", "random_init", "ldg_relax", "ensemble"]


@dataclass(frozen=True)
class LdGParams:
    """Relaxation parameters (one-constant model).

    The bulk density W(q) = (tr q^2)^2/2 - tr q^2/2 drives tr q^2 toward
    1/2; omega weights it against the elastic and curvature terms.
    """

    omega: float = 100.0
    omega_t: float = 1000.0
    tau: float = 0.05
    t_end: float = 50.0
    seed: int = 0
    steady_tol: float = 1e-6
    energy_tol: float = 2e-6
    newton: NewtonConfig = NewtonConfig(tol=1e-8, max_newton=16)
    linear: SolveConfig = SolveConfig(rel_tol=1e-6, max_iter=1200)

    def __post_init__(self):
        if self.omega <= 0 or self.omega_t <= 0 or self.tau <= 0:
            raise ValueError("omega, omega_t, tau must be positive")


@dataclass
class RelaxationTrace:
    """Per-step time/energy/Newton records of one relaxation run."""

    times: list = field(default_factory=list)
    energies: list = field(default_factory=list)
    newton_iterations: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    converged: bool = False
    steps: int = 0
    seed: int = 0
    defects: object = None
    final_energy: float = math.nan

    def energy_monotone(self, slack):
        e = np.asarray(self.energies)
        return bool(np.all(np.diff(e) <= slack))


def random_init(mesh, g, seed):
    """Seeded random tangential surface Q-tensor field.

    Five iid uniform [-1/2, 1/2] proxy components per vertex, expanded,
    projected tangentially, and recentred to zero surface trace; the result
    is exactly symmetric, tangential, and traceless in both senses.
    """
    rng = np.random.default_rng(seed)
    raw = rng.uniform(-0.5, 0.5, size=(mesh.n_vertices, 5))
    m = np.einsum("vc,cij->vij", raw, Q_BASIS)
    pv = g.vertex_projectors
    t = np.einsum("vik,vjl,vkl->vij", pv, pv, m)
    tr = np.einsum("vii->v", t)
    t -= 0.5 * tr[:, None, None] * pv
    from .fields import TensorField
    return q_pack(TensorField(2, t))


class _FlowOperator:
    """Cached matrices of the time-discrete flow at a given mesh/geometry."""

    def __init__(self, mesh, g, params):
        self.params = params
        stiff, curv, pen, mass = qtensor_operator_parts(mesh, g, params.omega_t)
        self.stiff = stiff
        self.curv = curv
        self.mass = mass
        self.base = (stiff + curv + pen).tocsr()
        self.bulk = QBulkAssembler(mesh, g, params.omega)
        self._a_tau_cache = {}

    def energy(self, u):
        return float(0.5 * u @ (self.stiff @ u) + 0.5 * u @ (self.curv @ u)
                     + self.bulk.bulk_energy(u))

    def step_callback(self, q_prev, tau):
        if tau not in self._a_tau_cache:
            self._a_tau_cache[tau] = (self.base + self.mass / tau).tocsr()
        a_tau = self._a_tau_cache[tau]
        rhs_prev = self.mass @ (q_prev / tau)

        def residual_and_jacobian(u):
            f = a_tau @ u - rhs_prev + self.bulk.residual_vector(u)
            return f, lambda: a_tau + self.bulk.jacobian_matrix(u)

        return residual_and_jacobian

    def stationary_residual(self, u):
        return float(np.linalg.norm(self.base @ u + self.bulk.residual_vector(u)))


def ldg_relax(mesh, g, params, q0=None, flow=None):
    """Relax a (random or given) initial state to an energy minimum.

    Implicit Euler with Newton per step; the time step is halved (up to 4
    times) when Newton stalls.  The run counts as steady when either the
    coefficient drift rms(q^m - q^{m-1})/tau falls below `steady_tol` or
    the energy decrease per unit time falls below
    ``energy_tol * (1 + |F|)`` (minimum formations on a symmetric surface
    keep creeping along near-zero modes, so the drift alone may never
    vanish); otherwise the loop ends at t_end without the steady flag.
    Energy must be non-increasing within 10x the Newton tolerance; a
    violation raises :class:`NoConvergence` carrying the partial trace.
    """
    if not mesh.is_closed:
        raise NoConvergence("relaxation needs a closed mesh")
    flow = flow or _FlowOperator(mesh, g, params)
    q = random_init(mesh, g, params.seed) if q0 is None else q0
    u = q.flat()
    n = len(u)
    trace = RelaxationTrace(seed=params.seed)
    trace.times.append(0.0)
    trace.energies.append(flow.energy(u))
    slack = 10.0 * params.newton.tol

    t = 0.0
    halvings = 0
    warm = None
    # fixed ramp-in: the bulk term makes the implicit operator indefinite
    # until local order forms, so the early steps are geometrically shorter
    ramp = [16] * 2 + [8] * 4 + [4] * 6 + [2] * 10
    while t < params.t_end:
        div = ramp[trace.steps] if trace.steps < len(ramp) else 1
        tau = params.tau / div / (2 ** halvings)
        rj = flow.step_callback(u, tau)
        u_new, ntrace = newton_solve(rj, u, params.newton, params.linear,
                                     x0=warm if div == 1 else None)
        if not ntrace.converged:
            if halvings >= 4:
                trace.converged = False
                raise NoConvergence(
                    f"Newton stalled at t={t:.3f} after 4 tau halvings",
                    best=QProxyField.from_flat(u, n // 5), trace=trace)
            halvings += 1
            warm = None
            continue
        warm = ntrace.first_delta
        t += tau
        trace.steps += 1
        e = flow.energy(u_new)
        trace.times.append(t)
        trace.energies.append(e)
        trace.newton_iterations.append(len(ntrace.residual_norms) - 1)
        trace.residuals.append(ntrace.residual_norms[-1])
        if e > trace.energies[-2] + slack:
            raise NoConvergence(
                f"energy increased by {e - trace.energies[-2]:.3e} at t={t:.3f}",
                best=QProxyField.from_flat(u_new, n // 5), trace=trace)
        drift = float(np.linalg.norm(u_new - u) / math.sqrt(n)) / tau
        u = u_new
        if drift < params.steady_tol:
            trace.converged = True
            break
        if _energy_flat(trace, params.energy_tol):
            trace.converged = True
            break

    qfinal = QProxyField.from_flat(u, n // 5)
    trace.final_energy = trace.energies[-1]
    if trace.converged:
        trace.defects = detect_defects(qfinal, mesh, g)
    return qfinal, trace


def _energy_flat(trace, energy_tol, window=1.0):
    """Energy decrease per unit time below tolerance over the last window."""
    t_now = trace.times[-1]
    if t_now < 2.0 * window:
        return False
    e_now = trace.energies[-1]
    k = np.searchsorted(np.asarray(trace.times), t_now - window)
    if k >= len(trace.times) - 1:
        return False
    dt = t_now - trace.times[k]
    rate = (trace.energies[k] - e_now) / dt
    return rate < energy_tol * (1.0 + abs(e_now))


def ensemble(mesh, g, params, n_runs, threads=1):
    """Seeded relaxation ensemble: defect-count histogram + best-energy run.

    Runs seeds ``params.seed .. params.seed + n_runs - 1``; failures are
    collected, not raised.  Returns (histogram, runs, best) where
    `histogram` maps (positive_count, negative_count) to occurrences,
    `runs` is the per-seed record list in seed order, and `best` is the
    (field, trace) pair of the lowest-energy converged run.
    """
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    seeds = [params.seed + k for k in range(n_runs)]
    results = []
    if threads > 1:
        from concurrent.futures import ProcessPoolExecutor
        import dataclasses
        with ProcessPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(_run_one, mesh, g, dataclasses.replace(
                params, seed=s)) for s in seeds]
            results = [f.result() for f in futures]
    else:
        flow = _FlowOperator(mesh, g, params)
        import dataclasses
        for s in seeds:
            results.append(_run_one(mesh, g, dataclasses.replace(params, seed=s),
                                    flow=flow))

    histogram = {}
    runs = []
    best = None
    for s, (qf, trace, error) in zip(seeds, results):
        rec = {"seed": s, "converged": trace.converged if trace else False,
               "steps": trace.steps if trace else 0,
               "energy": trace.final_energy if trace else math.nan,
               "error": error}
        if trace is not None and trace.converged and trace.defects is not None:
            pos, neg = trace.defects.counts()
            rec["n_positive"] = pos
            rec["n_negative"] = neg
            rec["total_charge"] = trace.defects.total_charge
            histogram[(pos, neg)] = histogram.get((pos, neg), 0) + 1
            if best is None or trace.final_energy < best[1].final_energy:
                best = (qf, trace)
        runs.append(rec)
    return histogram, runs, best


def _run_one(mesh, g, params, flow=None):
    try:
        qf, trace = ldg_relax(mesh, g, params, flow=flow)
        return qf, trace, ""
    except NoConvergence as exc:
        return None, exc.trace, str(exc)
