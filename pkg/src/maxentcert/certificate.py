"""Existence diagnostics before a solve and an optimality certificate after it.

A candidate ``pi = 1_S exp(-alpha - lam . phi)`` with ``lam >= 0`` is the
maximum-entropy density of the feasible family when it is itself feasible,
is supported on all of S, and satisfies complementary slackness. The
certificate recomputes the moments independently and checks these.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from .errors import DivergentIntegral, DivergentPartition
from .measurements import check_stable, combine_for_stability
from .quadrature import IntegrationRequest, QuadratureOptions, integrate, tilted_stats

ROUTES = ("finite-volume", "stabilizing", "none")
SUPPORT_ASSUMPTION = "support of the exponential form taken equal to S by construction"
WITNESS_SCALES = (1.0, 4.0, 16.0, 64.0, 256.0)
BRACKET_LAMBDAS = tuple(2.0 ** k for k in range(-4, 5))


@dataclass
class ExistenceDiagnosis:
    """Which existence route applies, with the evidence gathered for it.

    ``stabilizer_weights`` is set when no single constraint function is
    stable but their unit-weight sum is; that sum, with the summed bound, is
    a redundant constraint and serves as the stabilizer.
    """

    route: str
    C_nonzero_volume: bool
    witnesses: np.ndarray
    stabilizer_index: int | None
    slater_witness: dict | None
    entropy_bracket: tuple | None
    reasons: list = field(default_factory=list)
    stability: dict = field(default_factory=dict)
    stabilizer_weights: list | None = None

    @property
    def slater_status(self):
        return "verified" if self.slater_witness is not None else "not verified"

    def to_dict(self, max_witnesses=8):
        return {
            "route": self.route,
            "C_nonzero_volume": bool(self.C_nonzero_volume),
            "witness_count": int(self.witnesses.shape[0]),
            "witnesses": self.witnesses[:max_witnesses].tolist(),
            "stabilizer_index": self.stabilizer_index,
            "stabilizer_weights": self.stabilizer_weights,
            "slater": self.slater_status,
            "slater_witness": self.slater_witness,
            "entropy_bracket": None if self.entropy_bracket is None else list(self.entropy_bracket),
            "reasons": list(self.reasons),
            "stability": {str(k): v for k, v in self.stability.items()},
        }


def _witness_candidates(problem, budget, seed):
    """Quasi-random points of S at growing scales; independent of the bounds u."""
    per_scale = max(256, int(budget) // len(WITNESS_SCALES))
    per_scale = 1 << (per_scale.bit_length() - 1)
    pts = []
    lo, hi = problem.support.bounds
    scales = (1.0,) if problem.support.finite_volume else WITNESS_SCALES
    for k, radius in enumerate(scales):
        a = np.where(np.isfinite(lo), lo, np.where(np.isfinite(hi), hi - radius, -radius))
        b = np.where(np.isfinite(hi), hi, np.where(np.isfinite(lo), lo + radius, radius))
        rng = np.random.default_rng(np.random.SeedSequence([seed, k]))
        sob = qmc.Sobol(problem.dimension, scramble=True, seed=rng)
        X = qmc.scale(sob.random(per_scale), a, b)
        pts.append(X[problem.support.contains(X)])
    return np.vstack(pts)


def _in_C(problem, X):
    if not problem.m:
        return np.ones(X.shape[0], dtype=bool)
    F = problem.features(X)
    return np.all(np.isfinite(F) & (F <= problem.bounds), axis=1)


def _box_volume(lo, hi):
    return float(np.prod(hi - lo))


def diagnose_existence(problem, budget=40_000, seed=0, *, quad_budget=200_000):
    """Decide between the finite-volume and stabilizing-constraint routes.

    Never raises for a well-formed problem: when neither route applies the
    diagnosis has ``route="none"`` and ``reasons`` explains why.
    """
    reasons = []
    sup = problem.support
    X = _witness_candidates(problem, budget, seed)
    hit = _in_C(problem, X)
    W = X[hit]
    c_ok = W.shape[0] > 0
    if not c_ok:
        reasons.append("no point of S satisfies every constraint pointwise "
                       "(the set C = {x in S: phi_g(x) <= u_g for all g} looks null)")

    unbounded = [g for g, lb in enumerate(problem.lower_bounds) if not math.isfinite(lb)]
    if unbounded:
        reasons.append(f"constraint functions {unbounded} are unbounded below on S")

    stabilizer, stability = None, {}
    for g, phi in enumerate(problem.functions):
        if not math.isfinite(problem.lower_bounds[g]) and not phi.declared_stable:
            stability[g] = "not stable (unbounded below)"
            continue
        rep = check_stable(phi, sup, budget=quad_budget, seed=seed)
        stability[g] = "stable" if rep.stable else "undetermined"
        if rep.stable:
            stabilizer = g
            break

    weights = None
    if stabilizer is None and problem.m > 1 and not unbounded:
        # no single stable function: try the redundant sum of all of them
        weights = [1.0] * problem.m
        phi_mu, _ = combine_for_stability(problem, weights)
        rep = check_stable(phi_mu, sup, budget=quad_budget, seed=seed)
        stability["sum"] = "stable" if rep.stable else "undetermined"
        if not rep.stable:
            weights = None

    if sup.finite_volume and c_ok and not unbounded:
        route = "finite-volume"
    elif (stabilizer is not None or weights is not None) and c_ok and not unbounded:
        route = "stabilizing"
    else:
        route = "none"
        if not sup.finite_volume and stabilizer is None and weights is None:
            reasons.insert(0, "support has infinite volume and no constraint function is stable "
                              "on it: a stabilizing constraint is missing")

    bracket, slater = None, None
    if c_ok:
        lower, slater = _inner_box(problem, W, seed)
        uppers = []
        if sup.finite_volume:
            uppers.append(math.log(sup.volume))
        if stabilizer is not None:
            phi, u = problem.constraints[stabilizer]
            uppers.append(_stabilizing_upper(problem, phi, u, quad_budget, seed))
        elif weights is not None:
            phi, u = combine_for_stability(problem, weights)
            uppers.append(_stabilizing_upper(problem, phi, u, quad_budget, seed))
        if uppers:
            bracket = (lower, min(uppers))
    return ExistenceDiagnosis(route, c_ok, W, stabilizer, slater, bracket, reasons, stability,
                              weights)


def _inner_box(problem, W, seed, n=100_000):
    """``ln |C'|`` for C' = C within the witnesses' bounding box, plus a Slater check."""
    lo, hi = W.min(axis=0), W.max(axis=0)
    degenerate = hi <= lo
    if np.any(degenerate):
        pad = 1e-9 * (1.0 + np.abs(lo))
        lo, hi = np.where(degenerate, lo - pad, lo), np.where(degenerate, hi + pad, hi)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 7]))
    U = lo + (hi - lo) * rng.random((n, problem.dimension))
    inside = problem.support.contains(U) & _in_C(problem, U)
    frac = inside.mean()
    if frac == 0:
        return -math.inf, None
    lower = math.log(frac * _box_volume(lo, hi))
    slater = None
    if problem.m:
        mom = problem.features(U[inside]).mean(axis=0)
        if np.all(mom < problem.bounds):
            slater = {"kind": "uniform", "lower": lo.tolist(), "upper": hi.tolist(),
                      "moments": mom.tolist()}
    else:
        slater = {"kind": "uniform", "lower": lo.tolist(), "upper": hi.tolist(), "moments": []}
    return lower, slater


def _stabilizing_upper(problem, phi, u, budget, seed):
    best = math.inf
    for lam in BRACKET_LAMBDAS:
        try:
            res = integrate(IntegrationRequest(problem.support, ((lam, phi),), budget=budget,
                                               target_rel_tol=1e-9, seed=seed))
        except DivergentIntegral:
            continue
        if res.value > 0:
            best = min(best, lam * u + res.log_value)
    return best


# --------------------------------------------------------------------------- certificate

@dataclass(frozen=True)
class Tolerances:
    feasibility: float
    slackness: float
    entropy: float

    @classmethod
    def default(cls, problem, solution):
        u_inf = float(np.max(np.abs(problem.bounds))) if problem.m else 0.0
        return cls(1e-5 * (1 + u_inf), 1e-5 * (1 + u_inf), 1e-4 * (1 + abs(solution.entropy)))

    def to_dict(self):
        return {"feasibility": self.feasibility, "slackness": self.slackness,
                "entropy": self.entropy}


@dataclass
class Certificate:
    """Residuals of the optimality conditions and the resulting verdict."""

    feasibility_residuals: np.ndarray
    slackness_residual: float
    entropy_identity_residual: float
    normalization_residual: float
    recomputed_moments: np.ndarray
    recomputed_alpha: float
    support_assumption: str
    slater: str
    verdict: str
    reasons: list
    tolerances: Tolerances
    evaluations: int = 0
    warnings: list = field(default_factory=list)

    @property
    def certified(self):
        return self.verdict == "certified"

    def to_dict(self):
        return {
            "verdict": self.verdict,
            "reasons": list(self.reasons),
            "feasibility_residuals": [float(v) for v in self.feasibility_residuals],
            "slackness_residual": float(self.slackness_residual),
            "entropy_identity_residual": float(self.entropy_identity_residual),
            "normalization_residual": float(self.normalization_residual),
            "recomputed_moments": [float(v) for v in self.recomputed_moments],
            "recomputed_alpha": float(self.recomputed_alpha),
            "support_assumption": self.support_assumption,
            "slater": self.slater,
            "tolerances": self.tolerances.to_dict(),
            "warnings": list(self.warnings),
        }

    def residual_table(self):
        t = self.tolerances
        rows = [(f"feasibility[{g}]", float(r), t.feasibility)
                for g, r in enumerate(self.feasibility_residuals)]
        rows.append(("slackness", float(self.slackness_residual), t.slackness))
        rows.append(("entropy identity", float(self.entropy_identity_residual), t.entropy))
        rows.append(("normalization", float(self.normalization_residual), t.entropy))
        return rows


def certify(problem, solution, tolerances=None, budget=400_000, seed=0, *, diagnosis=None,
            target_rel_tol=1e-11):
    """Check a candidate solution with an independent, more expensive recomputation.

    Moments are recomputed with four times ``budget`` and a seed distinct
    from the solve. The verdict is ``"certified"`` only when every residual
    is below its tolerance; otherwise ``"rejected"`` with reasons.
    """
    lam = np.asarray(solution.lambda_, dtype=float)
    if lam.size != problem.m or not np.all(np.isfinite(lam)) or np.any(lam < 0):
        raise ValueError("multipliers must be finite, nonnegative and one per constraint")
    tol = tolerances or Tolerances.default(problem, solution)
    slater = diagnosis.slater_status if diagnosis is not None else "not verified"
    opts = QuadratureOptions(budget=4 * int(budget), target_rel_tol=target_rel_tol,
                             seed=int(seed) + 1)
    nan = np.full(problem.m, np.nan)
    try:
        st = tilted_stats(problem, lam, opts)
    except DivergentPartition as exc:
        return Certificate(nan, math.nan, math.nan, math.nan, nan, math.nan, SUPPORT_ASSUMPTION,
                           slater, "rejected", [f"divergent: {exc}"], tol)
    mom = np.asarray(st.moments, dtype=float)
    feas = np.maximum(0.0, mom - problem.bounds) if problem.m else np.zeros(0)
    slack = abs(float(lam @ (mom - problem.bounds))) if problem.m else 0.0
    identity = abs(solution.entropy - (st.alpha + (float(lam @ mom) if problem.m else 0.0)))
    norm = abs(solution.alpha - st.alpha)
    reasons = []
    for g, r in enumerate(feas):
        if not r < tol.feasibility:
            reasons.append(f"constraint {g} violated by {r:.3g} (tol {tol.feasibility:.3g})")
    if not slack < tol.slackness:
        reasons.append(f"complementary slackness residual {slack:.3g} (tol {tol.slackness:.3g})")
    if not identity < tol.entropy:
        reasons.append(f"entropy identity residual {identity:.3g} (tol {tol.entropy:.3g})")
    if not norm < tol.entropy:
        reasons.append(f"normalization residual {norm:.3g} (tol {tol.entropy:.3g})")
    verdict = "certified" if not reasons else "rejected"
    return Certificate(feas, slack, identity, norm, mom, st.alpha, SUPPORT_ASSUMPTION, slater,
                       verdict, reasons, tol, st.evaluations, list(st.warnings))
