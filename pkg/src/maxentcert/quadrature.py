"""Integrals of exponential-family weights over the support.

Everything here is some variant of ``int_S w(x) exp(-sum_g lambda_g phi_g(x)) dx``.
For d <= 3 the support is truncated to a box and integrated by adaptive
Gauss-Kronrod subdivision (G10/K21 in 1-d, tensor G7/K15 above); infinite
sides are handled by doubling the truncation radius until the added shell
is negligible. For d > 3 a seeded importance sampler with a Laplace-matched
Student-t proposal is used.

Sums are carried as ``exp(log_scale) * scaled`` so that multipliers spanning
many orders of magnitude neither overflow nor underflow.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special

from . import kernels
from .errors import DivergentIntegral, DivergentPartition
from .support import SupportSet

log = logging.getLogger(__name__)

__all__ = [
    "QuadratureOptions", "IntegrationRequest", "QuadratureResult", "TiltedStats",
    "integrate", "log_partition", "moments_under", "tilted_stats", "laplace_proposal",
]

# QUADPACK qk21 / qk15 abscissae and weights (nonnegative half, centre last).
_XK21 = np.array([
    0.995657163025808080735527280689003, 0.973906528517171720077964012084452,
    0.930157491355708226001207180059508, 0.865063366688984510732096688423493,
    0.780817726586416897063717578345042, 0.679409568299024406234327365114874,
    0.562757134668604683339000099272694, 0.433395394129247190799265943165784,
    0.294392862701460198131126603103866, 0.148874338981631210884826001129720, 0.0])
_WK21 = np.array([
    0.011694638867371874278064396062192, 0.032558162307964727478818972459390,
    0.054755896574351996031381300244580, 0.075039674810919952767043140916190,
    0.093125454583697605535065465083366, 0.109387158802297641899210590325805,
    0.123491976262065851077208745710081, 0.134709217311473325928054001771707,
    0.142775938577060080797094273138717, 0.147739104901338491374841515972068,
    0.149445554002916905664936468389821])
_WG10 = np.array([
    0.066671344308688137593568809893332, 0.149451349150580593145776339657697,
    0.219086362515982043995534934228163, 0.269266719309996355091226921569469,
    0.295524224714752870173892994651138])
_XK15 = np.array([
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.0])
_WK15 = np.array([
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714])
_WG7 = np.array([
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327])


def _symmetric_rule(xk, wk, wg):
    x = np.concatenate([-xk[:-1], xk[::-1]])
    k = np.concatenate([wk[:-1], wk[::-1]])
    g_half = np.zeros_like(wk)
    g_half[1::2] = wg
    g = np.concatenate([g_half[:-1], g_half[::-1]])
    return x, k, g


_RULES = {}


def _rule(d):
    """Tensor-product Kronrod rule on [-1, 1]^d with the embedded Gauss weights."""
    if d not in _RULES:
        x, k, g = _symmetric_rule(_XK21, _WK21, _WG10) if d == 1 else _symmetric_rule(_XK15, _WK15, _WG7)
        grids = np.meshgrid(*([x] * d), indexing="ij")
        nodes = np.stack([gr.reshape(-1) for gr in grids], axis=1)
        wk = np.ones(nodes.shape[0])
        wg = np.ones(nodes.shape[0])
        for axis_w in np.meshgrid(*([k] * d), indexing="ij"):
            wk *= axis_w.reshape(-1)
        for axis_w in np.meshgrid(*([g] * d), indexing="ij"):
            wg *= axis_w.reshape(-1)
        _RULES[d] = (np.ascontiguousarray(nodes), wk, wg)
    return _RULES[d]


@dataclass(frozen=True)
class QuadratureOptions:
    budget: int = 400_000
    target_rel_tol: float = 1e-10
    seed: int = 0
    tail_tol: float = 1e-9
    initial_panels: int = 8
    max_doublings: int = 40


@dataclass(frozen=True)
class IntegrationRequest:
    support: SupportSet
    exponent_terms: tuple = ()
    weight: object = None
    budget: int = 400_000
    target_rel_tol: float = 1e-10
    seed: int = 0
    ordinal: int = 0
    truncation_radius: float | None = None

    def __post_init__(self):
        for lam, phi in self.exponent_terms:
            if not (math.isfinite(lam) and lam >= 0):
                raise ValueError(f"exponent multipliers must be finite and >= 0, got {lam}")
            if phi.dim != self.support.dim:
                raise ValueError("exponent function dimension does not match the support")
        if self.budget < 1000:
            raise ValueError("budget must be at least 1000 evaluations")
        if not self.target_rel_tol > 0:
            raise ValueError("target_rel_tol must be positive")


@dataclass(frozen=True)
class QuadratureResult:
    value: float
    abs_error_estimate: float
    evaluations_used: int
    method: str
    truncation_radius: float
    converged: bool = True
    log_value: float = math.nan


@dataclass
class _Sums:
    """``exp(log_scale) * scaled`` with matching error and absolute-value sums."""

    log_scale: float
    scaled: np.ndarray
    err: np.ndarray
    absolute: np.ndarray
    evals: int = 0
    converged: bool = True

    def plus(self, other):
        if other.log_scale == -math.inf:
            return _Sums(self.log_scale, self.scaled, self.err, self.absolute,
                         self.evals + other.evals, self.converged and other.converged)
        if self.log_scale == -math.inf:
            return _Sums(other.log_scale, other.scaled, other.err, other.absolute,
                         self.evals + other.evals, self.converged and other.converged)
        c = max(self.log_scale, other.log_scale)
        a, b = math.exp(self.log_scale - c), math.exp(other.log_scale - c)
        return _Sums(c, a * self.scaled + b * other.scaled, a * self.err + b * other.err,
                     a * self.absolute + b * other.absolute,
                     self.evals + other.evals, self.converged and other.converged)

    def rescaled(self, log_scale):
        f = math.exp(self.log_scale - log_scale) if self.log_scale > -math.inf else 0.0
        return self.scaled * f, self.err * f, self.absolute * f


@dataclass
class TiltedStats:
    """Moments of the tilted density ``exp(-alpha - lambda . phi)`` on S."""

    alpha: float
    alpha_err: float
    moments: np.ndarray
    moments_err: np.ndarray
    second: np.ndarray | None
    evaluations: int
    method: str
    truncation_radius: float
    converged: bool
    warnings: list = field(default_factory=list)


# --------------------------------------------------------------------------- boxes

def _initial_boxes(lo, hi, breaks, n_panels):
    """Partition a finite box, cutting at breakpoints that fall inside it."""
    d = lo.size
    axes = []
    for i in range(d):
        cuts = [b for b in breaks[i] if lo[i] < b < hi[i]]
        if d == 1:
            base = np.linspace(lo[i], hi[i], n_panels + 1)
        else:
            base = np.array([lo[i], hi[i]])
            if not cuts and n_panels > 1:
                cuts = [0.5 * (lo[i] + hi[i])]
        edges = np.unique(np.concatenate([base, cuts]))
        axes.append(edges)
    grids = np.meshgrid(*[np.arange(len(e) - 1) for e in axes], indexing="ij")
    idx = np.stack([g.reshape(-1) for g in grids], axis=1)
    blo = np.column_stack([axes[i][idx[:, i]] for i in range(d)])
    bhi = np.column_stack([axes[i][idx[:, i] + 1] for i in range(d)])
    return blo, bhi


def _truncation_box(lo, hi, radius):
    """Support box with every infinite side cut at distance ``radius``."""
    tlo, thi = lo.copy(), hi.copy()
    for i in range(lo.size):
        a, b = lo[i], hi[i]
        if math.isinf(a) and math.isinf(b):
            tlo[i], thi[i] = -radius, radius
        elif math.isinf(a):
            tlo[i] = min(b, 0.0) - radius
        elif math.isinf(b):
            thi[i] = max(a, 0.0) + radius
    return tlo, thi


def _box_difference(olo, ohi, nlo, nhi):
    """Disjoint boxes covering ``new \\ old`` for nested boxes old within new."""
    out = []
    cur_lo, cur_hi = nlo.copy(), nhi.copy()
    for i in range(nlo.size):
        if olo[i] > cur_lo[i]:
            a, b = cur_lo.copy(), cur_hi.copy()
            b[i] = olo[i]
            out.append((a, b))
        if ohi[i] < cur_hi[i]:
            a, b = cur_lo.copy(), cur_hi.copy()
            a[i] = ohi[i]
            out.append((a, b))
        cur_lo[i], cur_hi[i] = olo[i], ohi[i]
    return out


# --------------------------------------------------------------------------- adaptive GK

def _panel_error(K, G, A):
    # QUADPACK scaling: |K - G| overstates the Kronrod error on smooth panels
    diff = np.abs(K - G)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(A > 0, 200.0 * diff / A, 0.0)
    return np.where(A > 0, A * np.minimum(1.0, ratio ** 1.5), diff)


def _adaptive(integrand, support, blo, bhi, k, rel_tol, budget, abs_target=None):
    """Adaptive tensor Gauss-Kronrod over the union of boxes ``[blo, bhi]``.

    ``abs_target`` is an optional ``(log_scale, vector)`` absolute error goal
    expressed on another sum's scale (used for truncation shells).
    """
    d = blo.shape[1]
    nodes, wk, wg = _rule(d)
    N = nodes.shape[0]
    masked = support.has_halfspaces

    def evaluate(lo, hi):
        c = 0.5 * (lo + hi)
        h = 0.5 * (hi - lo)
        X = (c[:, None, :] + h[:, None, :] * nodes[None, :, :]).reshape(-1, d)
        E, W = integrand(X)
        if masked:
            E = np.where(support.contains(X), E, np.inf)
        return (np.ascontiguousarray(E, dtype=float), np.ascontiguousarray(W, dtype=float),
                np.ascontiguousarray(np.prod(h, axis=1)))

    E, W, jac = evaluate(blo, bhi)
    evals = E.size
    finite = E[np.isfinite(E)]
    if finite.size == 0:
        zero = np.zeros(k)
        return _Sums(-math.inf, zero, zero.copy(), zero.copy(), evals, True)
    floor = float(finite.min())
    K, G, A = kernels.panel_sums(E, W, floor, wk, wg, jac)
    lo, hi = blo.copy(), bhi.copy()
    converged = False
    tiny = 1e-300
    while True:
        err = _panel_error(K, G, A)
        tot_err, tot_abs = err.sum(axis=0), A.sum(axis=0)
        goal = rel_tol * tot_abs
        if abs_target is not None:
            ref_scale, ref_abs = abs_target
            goal = np.maximum(goal, ref_abs * math.exp(min(ref_scale + floor, 700.0)))
        if np.all(tot_err <= goal):
            converged = True
            break
        score = (err / np.maximum(goal, tiny)).max(axis=1)
        order = np.argsort(-score, kind="stable")
        cum = np.cumsum(score[order])
        n_pick = int(min(np.searchsorted(cum, 0.5 * cum[-1]) + 1, 256))
        pick = order[:n_pick]
        width = hi[pick] - lo[pick]
        if np.all(width.max(axis=1) <= 1e-13 * np.maximum(1.0, np.abs(hi[pick]).max(axis=1))):
            break
        if evals + 2 * n_pick * N > budget:
            break
        axis = np.argmax(width, axis=1)
        rows = np.arange(n_pick)
        mid = 0.5 * (lo[pick, axis] + hi[pick, axis])
        left_hi = hi[pick].copy()
        left_hi[rows, axis] = mid
        right_lo = lo[pick].copy()
        right_lo[rows, axis] = mid
        clo = np.vstack([lo[pick], right_lo])
        chi = np.vstack([left_hi, hi[pick]])
        cE, cW, cjac = evaluate(clo, chi)
        evals += cE.size
        cfin = cE[np.isfinite(cE)]
        if cfin.size and cfin.min() < floor:
            shift = math.exp(float(cfin.min()) - floor)
            K, G, A = K * shift, G * shift, A * shift
            floor = float(cfin.min())
        cK, cG, cA = kernels.panel_sums(cE, cW, floor, wk, wg, cjac)
        keep = np.ones(lo.shape[0], dtype=bool)
        keep[pick] = False
        lo = np.vstack([lo[keep], clo])
        hi = np.vstack([hi[keep], chi])
        K = np.vstack([K[keep], cK])
        G = np.vstack([G[keep], cG])
        A = np.vstack([A[keep], cA])
    err = _panel_error(K, G, A)
    return _Sums(-floor, K.sum(axis=0), err.sum(axis=0), A.sum(axis=0), evals, converged)


def _truncated(integrand, support, k, opts, breaks, r0, radius=None):
    """Integrate over S, doubling the truncation of infinite sides as needed."""
    lo, hi = support.bounds
    bounded = bool(np.all(np.isfinite(lo)) and np.all(np.isfinite(hi)))
    if bounded:
        blo, bhi = _initial_boxes(lo, hi, breaks, opts.initial_panels)
        sums = _adaptive(integrand, support, blo, bhi, k, opts.target_rel_tol, opts.budget)
        return sums, float(np.max(np.abs(np.concatenate([lo, hi]))))
    R = float(radius if radius is not None else r0)
    tlo, thi = _truncation_box(lo, hi, R)
    blo, bhi = _initial_boxes(tlo, thi, breaks, opts.initial_panels)
    total = _adaptive(integrand, support, blo, bhi, k, opts.target_rel_tol, opts.budget)
    if radius is not None:
        return total, R
    shell_mass = []
    rising = 0
    for _ in range(opts.max_doublings):
        nlo, nhi = _truncation_box(lo, hi, 2 * R)
        pieces = _box_difference(tlo, thi, nlo, nhi)
        shell = None
        for plo, phi in pieces:
            slo, shi = _initial_boxes(plo, phi, breaks, 2 if support.dim == 1 else 1)
            remaining = max(opts.budget - total.evals - (shell.evals if shell else 0), 1000)
            target = (total.log_scale, opts.target_rel_tol * total.absolute)
            part = _adaptive(integrand, support, slo, shi, k, opts.target_rel_tol, remaining,
                             abs_target=target)
            shell = part if shell is None else shell.plus(part)
        total = total.plus(shell)
        shell_volume = float(np.prod(nhi - nlo) - np.prod(thi - tlo))
        R, tlo, thi = 2 * R, nlo, nhi
        # mass per unit volume: slow exponential decay lowers it, divergence does not
        mass = (shell.log_scale + math.log(shell.absolute[0]) - math.log(shell_volume)
                if shell.absolute[0] > 0 else -math.inf)
        if shell_mass and mass >= shell_mass[-1]:
            rising += 1
        else:
            rising = 0
        shell_mass.append(mass)
        if rising >= 4:
            raise DivergentIntegral(
                f"tail mass density did not shrink over 4 doublings of the truncation radius (R={R:g})")
        s_abs = shell.rescaled(total.log_scale)[2]
        if np.all(s_abs <= opts.tail_tol * total.absolute):
            return total, R
        if total.evals >= opts.budget:
            break
    total.converged = False
    return total, R


# --------------------------------------------------------------------------- importance sampling

_T_DOF = 4.0


def _energy_point(energy, x):
    return float(energy(x[None, :])[0])


def laplace_proposal(energy, support, x0=None):
    """Location and per-axis scale of a proposal matched to ``exp(-energy)``.

    The location is a numerical minimizer of the energy over the support
    bounding box; scales come from finite-difference curvature (smallest of
    a fine and a unit step), falling back to the inverse slope along flat
    directions. Scales are floored at 1e-3.
    """
    lo, hi = support.bounds
    d = support.dim
    if x0 is None:
        x0 = np.clip(np.zeros(d), lo, hi)
    bounds = [(None if not math.isfinite(a) else a, None if not math.isfinite(b) else b)
              for a, b in zip(lo, hi)]

    def f(x):
        v = _energy_point(energy, x)
        return v if math.isfinite(v) else 1e300

    def g(x):
        # inf outside the support, so finite differences can go one-sided
        if not support.contains(x[None, :])[0]:
            return math.inf
        v = _energy_point(energy, x)
        return v if math.isfinite(v) else math.inf

    res = optimize.minimize(f, x0, method="L-BFGS-B", bounds=bounds)
    x = res.x if res.fun <= f(x0) else x0
    if support.has_halfspaces and not support.contains(x[None, :])[0]:
        x = x0
    e0 = f(x)
    scale = np.ones(d)
    for i in range(d):
        curv = []
        for h in (1e-2 * (1 + abs(x[i])), 1.0):
            e = np.zeros(d)
            e[i] = h
            fp, fm = g(x + e), g(x - e)
            if math.isfinite(fp) and math.isfinite(fm):
                curv.append(((fp - 2 * e0 + fm) / h ** 2, (fp - fm) / (2 * h)))
                continue
            sgn = 1.0 if math.isfinite(fp) else -1.0
            f1, f2 = g(x + sgn * e), g(x + 2 * sgn * e)
            if math.isfinite(f1) and math.isfinite(f2):
                curv.append(((f2 - 2 * f1 + e0) / h ** 2, (f1 - e0) / h))
        c_vals = [c[0] for c in curv if c[0] > 1e-8]
        if c_vals:
            scale[i] = 1.0 / math.sqrt(min(c_vals))
        else:
            slope = abs(curv[-1][1]) if curv else 0.0
            scale[i] = 1.0 / slope if slope > 1e-8 else 1.0
    scale = np.maximum(scale, 1e-3)
    return x, scale


def _t_logpdf(Z):
    nu = _T_DOF
    c = special.gammaln((nu + 1) / 2) - special.gammaln(nu / 2) - 0.5 * math.log(nu * math.pi)
    return np.sum(c - (nu + 1) / 2 * np.log1p(Z ** 2 / nu), axis=1)


def _t_draws(rng, n, d):
    z = rng.standard_normal((n, d))
    w = rng.chisquare(_T_DOF, size=(n, d))
    return z / np.sqrt(w / _T_DOF)


def _importance(integrand, support, k, opts, ordinal):
    energy = lambda X: integrand(X)[0]  # noqa: E731
    loc, scale = laplace_proposal(energy, support)
    rng = np.random.default_rng(np.random.SeedSequence([opts.seed, ordinal]))
    n = int(opts.budget)
    Z = _t_draws(rng, n, support.dim)
    X = loc + scale * Z
    logq = _t_logpdf(Z) - np.sum(np.log(scale))
    E, W = integrand(X)
    inside = support.contains(X)
    logw = np.where(inside, -E - logq, -np.inf)
    m = float(np.max(logw))
    if not math.isfinite(m):
        zero = np.zeros(k)
        return _Sums(-math.inf, zero, zero.copy(), zero.copy(), n, False)
    e = np.exp(logw - m)
    V = e[:, None] * W
    scaled = V.mean(axis=0)
    err = V.std(axis=0) / math.sqrt(n)
    absolute = np.abs(V).mean(axis=0)
    converged = bool(np.all(err <= opts.target_rel_tol * np.maximum(absolute, 1e-300)))
    return _Sums(m, scaled, err, absolute, n, converged)


# --------------------------------------------------------------------------- dispatch

def _method_name(d):
    return "adaptive-1d" if d == 1 else ("tensor-product" if d <= 3 else "monte-carlo")


def _initial_radius(terms):
    coercive = [lam for lam, phi in terms if lam > 0 and phi.is_coercive]
    r0 = 8.0 / math.sqrt(min(coercive)) if coercive else 16.0
    return min(max(r0, 1.0), 1e8)


def _breaks(functions, d):
    return [sorted({b for f in functions for b in f.breakpoints(i)}) for i in range(d)]


def _run(integrand, support, k, terms, opts, ordinal=0, radius=None, extra_functions=()):
    d = support.dim
    if not support.finite_volume and not any(lam > 0 for lam, _ in terms):
        raise DivergentIntegral("no positive exponent term on an infinite-volume support")
    if d > 3:
        sums = _importance(integrand, support, k, opts, ordinal)
        return sums, math.inf
    breaks = _breaks([phi for lam, phi in terms if lam > 0] + list(extra_functions), d)
    return _truncated(integrand, support, k, opts, breaks, _initial_radius(terms), radius)


def integrate(req: IntegrationRequest) -> QuadratureResult:
    """Integrate ``weight * exp(-sum lambda*phi)`` over the request's support.

    Raises :class:`DivergentIntegral` when the tail mass does not shrink;
    an exhausted budget returns the best estimate with ``converged=False``.
    """
    terms = [(float(lam), phi) for lam, phi in req.exponent_terms]
    active = [(lam, phi) for lam, phi in terms if lam > 0]
    weight = req.weight

    def integrand(X):
        E = np.zeros(X.shape[0])
        for lam, phi in active:
            E += lam * phi(X)
        W = np.ones((X.shape[0], 1)) if weight is None else weight(X)[:, None]
        return E, W

    opts = QuadratureOptions(budget=req.budget, target_rel_tol=req.target_rel_tol, seed=req.seed)
    extra = [weight] if weight is not None else []
    sums, radius = _run(integrand, req.support, 1, terms, opts, req.ordinal,
                        req.truncation_radius, extra)
    if sums.log_scale == -math.inf:
        return QuadratureResult(0.0, 0.0, sums.evals, _method_name(req.support.dim), radius,
                                sums.converged, -math.inf)
    scale = math.exp(sums.log_scale) if sums.log_scale < 709 else math.inf
    value = float(sums.scaled[0] * scale)
    log_value = sums.log_scale + math.log(abs(sums.scaled[0])) if sums.scaled[0] != 0 else -math.inf
    if not sums.converged:
        log.debug("integration budget exhausted before reaching rel tol %g", req.target_rel_tol)
    return QuadratureResult(value, float(sums.err[0] * scale), sums.evals,
                            _method_name(req.support.dim), radius, sums.converged, log_value)


def tilted_stats(problem, lam, opts=None, *, ordinal=0, second=False, radius=None):
    """Log-partition and constraint moments at multipliers ``lam``.

    All integrals share one node set (or one sample set), so the moment
    ratios use correlated numerators and denominators.
    """
    opts = opts or QuadratureOptions()
    lam = np.asarray(lam, dtype=float).reshape(-1)
    m = problem.m
    if lam.size != m:
        raise ValueError(f"need {m} multipliers, got {lam.size}")
    if np.any(~np.isfinite(lam)) or np.any(lam < 0):
        raise ValueError("multipliers must be finite and nonnegative")
    pos = np.flatnonzero(lam > 0)
    iu = np.triu_indices(m) if second else None

    def integrand(X):
        F = problem.features(X)
        E = F[:, pos] @ lam[pos] if pos.size else np.zeros(X.shape[0])
        cols = [np.ones((X.shape[0], 1)), F]
        if second:
            cols.append(F[:, iu[0]] * F[:, iu[1]])
        return E, np.hstack(cols)

    terms = [(float(lam[g]), problem.functions[g]) for g in range(m)]
    k = 1 + m + (len(iu[0]) if second else 0)
    try:
        sums, R = _run(integrand, problem.support, k, terms, opts, ordinal, radius,
                       problem.functions)
    except DivergentIntegral as exc:
        raise DivergentPartition(str(exc)) from exc
    s0 = sums.scaled[0]
    if not s0 > 0:
        raise DivergentPartition("partition function evaluated to zero")
    alpha = sums.log_scale + math.log(s0)
    alpha_err = float(sums.err[0] / s0)
    mom = sums.scaled[1:1 + m] / s0
    mom_err = (sums.err[1:1 + m] + np.abs(mom) * sums.err[0]) / s0
    sec = None
    if second:
        vals = sums.scaled[1 + m:] / s0
        sec = np.zeros((m, m))
        sec[iu] = vals
        sec = sec + np.triu(sec, 1).T
    warnings = [] if sums.converged else ["quadrature budget exhausted before target tolerance"]
    return TiltedStats(float(alpha), alpha_err, mom, mom_err, sec, sums.evals,
                       _method_name(problem.dimension), R, sums.converged, warnings)


def log_partition(problem, lam, budget=None, opts=None):
    """``alpha = ln int_S exp(-sum lambda*phi)`` and its error estimate."""
    opts = _with_budget(opts, budget)
    st = tilted_stats(problem, lam, opts)
    return st.alpha, st.alpha_err


def moments_under(problem, lam, budget=None, opts=None):
    """Expected constraint values under the tilted density at ``lam``."""
    opts = _with_budget(opts, budget)
    return tilted_stats(problem, lam, opts).moments


def _with_budget(opts, budget):
    opts = opts or QuadratureOptions()
    if budget is not None:
        opts = QuadratureOptions(**{**opts.__dict__, "budget": int(budget)})
    return opts
