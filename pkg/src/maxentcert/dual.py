"""Dual reduction: minimize ``D(lam) = alpha(lam) + lam . u`` over ``lam >= 0``.

The minimizer gives the exponential-form density
``pi(x) = 1_S(x) exp(-alpha - sum lam_g phi_g(x))`` and its entropy.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import AcceptanceRateCollapse, DivergentPartition, NoExistenceRoute, NotConverged
from .measurements import as_point, _as_points
from .quadrature import QuadratureOptions, laplace_proposal, tilted_stats, _t_draws, _t_logpdf

ACTIVE_REL = 1e-8


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-8
    max_iter: int = 200
    budget: int = 400_000
    seed: int = 0
    target_rel_tol: float = 1e-10
    raise_on_failure: bool = False

    def quadrature(self):
        return QuadratureOptions(budget=int(self.budget), target_rel_tol=self.target_rel_tol,
                                 seed=int(self.seed))


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    objective: float
    grad_norm: float
    step: float


@dataclass(frozen=True)
class DualSolution:
    """Immutable result of a dual solve (or of hand-supplied multipliers)."""

    lambda_: np.ndarray
    alpha: float
    entropy: float
    fitted_moments: np.ndarray
    active_set: np.ndarray
    slackness_residual: float
    entropy_identity_residual: float
    trace: tuple = ()
    converged: bool = True
    iterations: int = 0
    projected_gradient_norm: float = 0.0
    alpha_error: float = 0.0
    evaluations: int = 0
    warnings: tuple = ()

    def __post_init__(self):
        for name in ("lambda_", "fitted_moments", "active_set"):
            arr = np.array(getattr(self, name))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def entropy_from_bounds(self):
        """``alpha + lam . u``; equals :attr:`entropy` under complementary slackness."""
        return self.entropy - self.slackness_residual

    @classmethod
    def from_multipliers(cls, problem, lam, opts=None, *, alpha=None):
        """Assemble a solution from given multipliers without optimizing."""
        lam = _check_lambda(problem, lam)
        st = tilted_stats(problem, lam, opts or QuadratureOptions())
        a = st.alpha if alpha is None else float(alpha)
        return _assemble(problem, lam, a, st, (), True, 0, 0.0, st.evaluations, tuple(st.warnings))

    def summary(self):
        return {
            "lambda": [float(v) for v in self.lambda_],
            "alpha": float(self.alpha),
            "entropy": float(self.entropy),
            "entropy_from_bounds": float(self.entropy_from_bounds),
            "fitted_moments": [float(v) for v in self.fitted_moments],
            "active_set": [bool(v) for v in self.active_set],
            "slackness_residual": float(self.slackness_residual),
            "entropy_identity_residual": float(self.entropy_identity_residual),
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
            "projected_gradient_norm": float(self.projected_gradient_norm),
            "alpha_error": float(self.alpha_error),
            "warnings": list(self.warnings),
        }


def active_threshold(lam):
    lam = np.asarray(lam, dtype=float)
    return ACTIVE_REL * (1.0 + (float(np.max(np.abs(lam))) if lam.size else 0.0))


def _check_lambda(problem, lam):
    lam = np.asarray(lam, dtype=float).reshape(-1)
    if lam.size != problem.m:
        raise ValueError(f"need {problem.m} multipliers, got {lam.size}")
    if not np.all(np.isfinite(lam)):
        raise ValueError("multipliers must be finite")
    if np.any(lam < 0):
        raise ValueError("multipliers must be nonnegative")
    return lam


def _assemble(problem, lam, alpha, st, trace, converged, iterations, pg_norm, evals, warnings):
    u = problem.bounds
    mom = np.asarray(st.moments, dtype=float)
    slack = float(lam @ (mom - u)) if lam.size else 0.0
    h = alpha + (float(lam @ mom) if lam.size else 0.0)
    identity = abs(h - (alpha + (float(lam @ u) if lam.size else 0.0)))
    return DualSolution(
        lambda_=lam.copy(), alpha=float(alpha), entropy=float(h), fitted_moments=mom.copy(),
        active_set=lam > active_threshold(lam), slackness_residual=slack,
        entropy_identity_residual=float(identity), trace=tuple(trace), converged=bool(converged),
        iterations=int(iterations), projected_gradient_norm=float(pg_norm),
        alpha_error=float(st.alpha_err), evaluations=int(evals), warnings=tuple(warnings))


def dual_objective(problem, lam, budget=None, opts=None):
    """``alpha(lam) + lam . u``."""
    lam = _check_lambda(problem, lam)
    st = tilted_stats(problem, lam, _opts(opts, budget))
    return st.alpha + float(lam @ problem.bounds)


def dual_gradient(problem, lam, budget=None, opts=None):
    """``u - E_lam[phi]``, from one shared node set."""
    lam = _check_lambda(problem, lam)
    st = tilted_stats(problem, lam, _opts(opts, budget))
    return problem.bounds - st.moments


def _opts(opts, budget):
    opts = opts or QuadratureOptions()
    if budget is not None:
        opts = replace(opts, budget=int(budget))
    return opts


def initial_multipliers(problem):
    return np.array([1.0 if phi.declared_stable else 1e-3 for phi in problem.functions])


class _Oracle:
    """Deterministic D, grad D at fixed quadrature settings (common random numbers)."""

    def __init__(self, problem, qopts):
        self.problem = problem
        self.qopts = qopts
        self.evaluations = 0
        self.unconverged = 0

    def __call__(self, lam):
        st = tilted_stats(self.problem, lam, self.qopts)
        self.evaluations += st.evaluations
        if not st.converged:
            self.unconverged += 1
        D = st.alpha + float(lam @ self.problem.bounds)
        g = self.problem.bounds - st.moments
        return D, g, st


def _projected_gradient(lam, g):
    return lam - np.maximum(lam - g, 0.0)


def _initial_hessian(oracle, lam, g):
    m = lam.size
    B = np.empty((m, m))
    for j in range(m):
        h = 1e-4 * max(1.0, lam[j])
        step = lam.copy()
        step[j] += h
        try:
            _, gj, _ = oracle(step)
            B[:, j] = (gj - g) / h
        except DivergentPartition:
            B[:, j] = 0.0
            B[j, j] = 1.0
    B = 0.5 * (B + B.T)
    w, V = np.linalg.eigh(B)
    floor = 1e-10 * max(float(np.max(np.abs(w))), 1.0)
    return (V * np.maximum(w, floor)) @ V.T


def solve(problem, options=None, *, force=False, diagnosis=None):
    """Minimize the dual by projected quasi-Newton descent.

    Unless ``force`` is set, the existence diagnostics must report a route
    (a diagnosis may be passed in to avoid recomputing it). Returns a
    :class:`DualSolution`; when the iteration limit is hit the best iterate
    is returned with ``converged=False`` (or :class:`NotConverged` is raised
    if ``options.raise_on_failure``).
    """
    opts = options or SolverOptions()
    if not force:
        if diagnosis is None:
            from .certificate import diagnose_existence
            diagnosis = diagnose_existence(problem, seed=opts.seed)
        if diagnosis.route == "none":
            raise NoExistenceRoute("; ".join(diagnosis.reasons) or "no existence route", diagnosis)
    oracle = _Oracle(problem, opts.quadrature())
    if problem.m == 0:
        lam = np.zeros(0)
        D, g, st = oracle(lam)
        return _assemble(problem, lam, st.alpha, st, (IterationRecord(0, D, 0.0, 0.0),),
                         True, 0, 0.0, oracle.evaluations, _warnings(oracle, st))

    lam = initial_multipliers(problem)
    try:
        D, g, st = oracle(lam)
    except DivergentPartition as exc:
        raise DivergentPartition(
            f"partition function diverges at the initial multipliers {lam.tolist()}: "
            f"no stabilizing constraint keeps exp(-sum lam*phi) integrable ({exc})") from exc
    B = _initial_hessian(oracle, lam, g)
    trace = []
    converged = False
    it = 0
    pg = _projected_gradient(lam, g)
    for it in range(opts.max_iter + 1):
        pg = _projected_gradient(lam, g)
        pgn = float(np.max(np.abs(pg)))
        if pgn < opts.tol:
            converged = True
            trace.append(IterationRecord(it, D, pgn, 0.0))
            break
        if it == opts.max_iter:
            trace.append(IterationRecord(it, D, pgn, 0.0))
            break
        eps = min(1e-3, pgn)
        binding = (lam <= eps) & (g > 0)
        free = ~binding
        d = np.zeros_like(lam)
        if np.any(free):
            Bf = B[np.ix_(free, free)]
            try:
                d[free] = -np.linalg.solve(Bf, g[free])
            except np.linalg.LinAlgError:
                d[free] = -g[free]
        if not float(g @ d) < 0:
            d = -pg
        new = _line_search(oracle, lam, D, g, d, st)
        if new is None and not np.allclose(d, -pg):
            new = _line_search(oracle, lam, D, g, -pg / max(float(np.max(np.diag(B))), 1e-12), st)
        if new is None:
            trace.append(IterationRecord(it, D, pgn, 0.0))
            break
        lam_n, D_n, g_n, st_n, t = new
        s = lam_n - lam
        y = g_n - g
        sy = float(s @ y)
        if sy > 1e-12 * float(np.linalg.norm(s) * np.linalg.norm(y)):
            Bs = B @ s
            B = B - np.outer(Bs, Bs) / float(s @ Bs) + np.outer(y, y) / sy
        trace.append(IterationRecord(it, D, pgn, float(np.max(np.abs(s)))))
        lam, D, g, st = lam_n, D_n, g_n, st_n
    pgn = float(np.max(np.abs(_projected_gradient(lam, g))))
    warnings = _warnings(oracle, st)
    if not converged:
        warnings = warnings + (f"projected-gradient norm {pgn:.3g} above tol {opts.tol:.3g}",)
    sol = _assemble(problem, lam, st.alpha, st, trace, converged, it, pgn,
                    oracle.evaluations, warnings)
    if not converged and opts.raise_on_failure:
        raise NotConverged(f"dual solve stopped with projected-gradient norm {pgn:.3g}", sol)
    return sol


def _warnings(oracle, st):
    out = list(st.warnings)
    if oracle.unconverged and not out:
        out.append(f"{oracle.unconverged} quadrature calls exhausted their budget")
    return tuple(out)


def _line_search(oracle, lam, D, g, d, st, c1=1e-4, max_halvings=50):
    t = 1.0
    for _ in range(max_halvings):
        trial = np.maximum(lam + t * d, 0.0)
        if np.array_equal(trial, lam):
            return None
        try:
            D_t, g_t, st_t = oracle(trial)
        except DivergentPartition:
            t *= 0.5
            continue
        noise = 10.0 * (st.alpha_err + st_t.alpha_err) + 1e-14 * (1.0 + abs(D))
        if D_t <= D + c1 * float(g @ (trial - lam)) + noise and D_t <= D + noise:
            return trial, D_t, g_t, st_t, t
        t *= 0.5
    return None


# --------------------------------------------------------------------------- density

def log_density(solution, problem, X):
    """``ln pi(x)`` for points of shape (n, d); ``-inf`` outside S."""
    X = _as_points(X, problem.dimension)
    inside = problem.support.contains(X)
    out = np.full(X.shape[0], -np.inf)
    if np.any(inside):
        F = problem.features(X[inside])
        E = F @ solution.lambda_ if problem.m else np.zeros(F.shape[0])
        out[inside] = -solution.alpha - E
    return out


def density_at(solution, problem, x):
    """``1_S(x) exp(-alpha - lam . phi(x))`` at a single point."""
    x = as_point(x, problem.dimension)
    return float(np.exp(log_density(solution, problem, x[None, :])[0]))


# --------------------------------------------------------------------------- sampling

@dataclass
class _Proposal:
    draw: object
    logpdf: object
    kind: str
    params: dict = field(default_factory=dict)


def _proposal(solution, problem):
    sup = problem.support
    lo, hi = sup.bounds
    if np.all(np.isfinite(lo)) and np.all(np.isfinite(hi)):
        logv = float(np.sum(np.log(hi - lo)))
        return _Proposal(lambda rng, n: lo + (hi - lo) * rng.random((n, sup.dim)),
                         lambda X: np.full(X.shape[0], -logv), "uniform-box")
    energy = lambda X: log_density(solution, problem, X) * -1.0  # noqa: E731
    loc, scale = laplace_proposal(energy, sup)
    logdet = float(np.sum(np.log(scale)))
    return _Proposal(lambda rng, n: loc + scale * _t_draws(rng, n, sup.dim),
                     lambda X: _t_logpdf((X - loc) / scale) - logdet, "student-t",
                     {"loc": loc.tolist(), "scale": scale.tolist()})


def sample(solution, problem, n, seed=0, *, min_rate=1e-4, collapse_trials=100_000):
    """Draw ``n`` points from the solved density by rejection sampling.

    The envelope constant is estimated from proposal probes and enlarged
    whenever a draw exceeds it. Deterministic given ``seed``.
    """
    n = int(n)
    if n < 1:
        raise ValueError("n must be at least 1")
    prop = _proposal(solution, problem)
    probe_rng = np.random.default_rng(np.random.SeedSequence([int(seed), 1]))
    P = prop.draw(probe_rng, 20_000)
    ratio = log_density(solution, problem, P) - prop.logpdf(P)
    log_m = float(np.max(ratio)) + math.log(1.1)
    if not math.isfinite(log_m):
        raise AcceptanceRateCollapse("no proposal probe landed in the support")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0]))
    out = []
    got, trials = 0, 0
    batch = max(2 * n, 1024)
    while got < n:
        X = prop.draw(rng, batch)
        U = rng.random(batch)
        r = log_density(solution, problem, X) - prop.logpdf(X)
        peak = float(np.max(r))
        if peak > log_m:
            log_m = peak + math.log(1.1)
        keep = np.log(U) < r - log_m
        trials += batch
        acc = X[keep]
        out.append(acc[: n - got])
        got += min(acc.shape[0], n - got)
        if trials >= collapse_trials and got / trials < min_rate:
            raise AcceptanceRateCollapse(
                f"acceptance rate {got / trials:.2e} over {trials} trials; "
                f"the {prop.kind} proposal does not match the density")
    return np.vstack(out)[:n]
