"""Measurement functions, the moment problem, and structural checks.

A measurement function maps points of R^d to reals and carries structural
declarations (lower bound, convexity, coercivity, well-behavedness). For the
built-in kinds these are derived from the parameters; opaque callbacks declare
them. Declarations are spot-checked by sampling, never proved.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from .errors import (DeclarationInconsistent, DimensionMismatch, NonFiniteInput,
                     ProblemError)
from .support import SupportSet

__all__ = [
    "MeasurementFunction", "PowerMoment", "NormPower", "QuadraticForm",
    "IndicatorComplement", "LinearCombination", "Scaled", "Callback",
    "MomentProblem", "as_point", "evaluate", "equality_constraint",
    "check_stable", "check_well_behaved", "combine_for_stability",
    "StabilityReport", "WellBehavedReport",
]


def as_point(x, dim):
    """Validate a single point and return it as a float array of shape (dim,)."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != dim:
        raise DimensionMismatch(f"point has dimension {x.size}, expected {dim}")
    if not np.all(np.isfinite(x)):
        raise NonFiniteInput(f"point has non-finite coordinates: {x.tolist()}")
    return x


def _as_points(X, dim):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, dim) if dim > 1 else X.reshape(-1, 1)
    if X.shape[1] != dim:
        raise DimensionMismatch(f"points have dimension {X.shape[1]}, expected {dim}")
    return X


def _mul(c, v):
    # 0 * (+-inf) = 0
    return 0.0 if c == 0 else c * v


class MeasurementFunction:
    """Base class. Subclasses implement :meth:`_values` on an (n, d) array."""

    kind = "abstract"

    def __init__(self, dim, *, is_convex=False, is_coercive=False,
                 is_well_behaved=False, well_behaved_radius=None,
                 lower_bound=-math.inf, upper_bound=math.inf,
                 is_affine=False, locally_bounded=True):
        if int(dim) < 1:
            raise ProblemError("dimension must be >= 1")
        self.dim = int(dim)
        self.is_convex = bool(is_convex)
        self.is_coercive = bool(is_coercive)
        self.is_affine = bool(is_affine)
        self.locally_bounded = bool(locally_bounded)
        if is_convex and is_coercive and not is_well_behaved:
            is_well_behaved, well_behaved_radius = True, 0.0
        if is_well_behaved:
            if well_behaved_radius is None:
                raise ProblemError("a well-behaved declaration needs a radius M >= 0")
            if not (well_behaved_radius >= 0 and math.isfinite(well_behaved_radius)):
                raise ProblemError("well_behaved_radius must be a finite nonnegative number")
        self.is_well_behaved = bool(is_well_behaved)
        self.well_behaved_radius = None if well_behaved_radius is None else float(well_behaved_radius)
        self.lower_bound = float(lower_bound)
        self.upper_bound = float(upper_bound)

    def __call__(self, X):
        """Vectorized evaluation: ``X`` of shape (n, d) -> values of shape (n,)."""
        X = _as_points(X, self.dim)
        return np.asarray(self._values(X), dtype=float).reshape(X.shape[0])

    def _values(self, X):
        raise NotImplementedError

    def lower_bound_on(self, support: SupportSet):
        """A lower bound of the function over ``support`` (may be -inf)."""
        return self.lower_bound

    def upper_bound_on(self, support: SupportSet):
        return self.upper_bound

    def breakpoints(self, axis):
        """Coordinates along ``axis`` where the function may have a kink or jump."""
        return []

    @property
    def declared_stable(self):
        return self.is_well_behaved or (self.is_convex and self.is_coercive)

    def attributes(self):
        return {
            "is_convex": self.is_convex,
            "is_coercive": self.is_coercive,
            "is_well_behaved": self.is_well_behaved,
            "well_behaved_radius": self.well_behaved_radius,
            "lower_bound": self.lower_bound,
        }

    def describe(self):
        return {"kind": self.kind, "dim": self.dim}

    def __repr__(self):
        params = ", ".join(f"{k}={v!r}" for k, v in self.describe().items() if k != "kind")
        return f"{type(self).__name__}({params})"


class PowerMoment(MeasurementFunction):
    """``|x_i|^p`` (``absolute=True``) or the signed power ``x_i^p`` (integer p)."""

    kind = "power"

    def __init__(self, p, index=0, dim=1, absolute=True):
        p = float(p)
        if not (p > 0 and math.isfinite(p)):
            raise ProblemError("power p must be positive and finite")
        if not 0 <= index < dim:
            raise DimensionMismatch(f"index {index} out of range for dimension {dim}")
        even = p == int(p) and int(p) % 2 == 0
        if not absolute and p != int(p):
            raise ProblemError("signed powers need an integer exponent")
        self.p, self.index, self.absolute = p, int(index), bool(absolute)
        nonneg = absolute or even
        convex = (p >= 1) if absolute else (p == 1 or even)
        super().__init__(
            dim,
            is_convex=convex,
            is_coercive=nonneg and dim == 1,
            is_affine=(not absolute and p == 1),
            lower_bound=0.0 if nonneg else -math.inf,
        )

    def _values(self, X):
        x = X[:, self.index]
        return np.abs(x) ** self.p if self.absolute else x ** int(self.p)

    def _scalar(self, t):
        return abs(t) ** self.p if self.absolute else t ** int(self.p)

    def breakpoints(self, axis):
        return [0.0] if (axis == self.index and self.absolute and self.p < 2) else []

    def lower_bound_on(self, support):
        lo, hi = support.bounds
        a, b = lo[self.index], hi[self.index]
        if self.lower_bound == 0.0:
            return 0.0 if a <= 0 <= b else min(self._scalar(a), self._scalar(b))
        # odd signed power is increasing
        return self._scalar(a) if math.isfinite(a) else -math.inf

    def upper_bound_on(self, support):
        lo, hi = support.bounds
        a, b = lo[self.index], hi[self.index]
        if not (math.isfinite(a) and math.isfinite(b)):
            if self.lower_bound == 0.0 or not math.isfinite(b):
                return math.inf
            return self._scalar(b)
        return max(self._scalar(a), self._scalar(b))

    def describe(self):
        return {"kind": self.kind, "dim": self.dim, "index": self.index,
                "p": self.p, "absolute": self.absolute}


class NormPower(MeasurementFunction):
    """Euclidean norm power ``||x||^p`` with p > 0."""

    kind = "norm-power"

    def __init__(self, p, dim=1):
        p = float(p)
        if not (p > 0 and math.isfinite(p)):
            raise ProblemError("power p must be positive and finite")
        self.p = p
        super().__init__(dim, is_convex=p >= 1, is_coercive=True, lower_bound=0.0)

    def _values(self, X):
        return np.linalg.norm(X, axis=1) ** self.p

    def breakpoints(self, axis):
        return [0.0] if self.p < 2 else []

    def upper_bound_on(self, support):
        lo, hi = support.bounds
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            return math.inf
        return float(np.linalg.norm(np.maximum(np.abs(lo), np.abs(hi))) ** self.p)

    def describe(self):
        return {"kind": self.kind, "dim": self.dim, "p": self.p}


class QuadraticForm(MeasurementFunction):
    """``x^T Q x`` with Q symmetric positive semidefinite."""

    kind = "quadratic"

    def __init__(self, Q):
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        if Q.shape[0] != Q.shape[1]:
            raise DimensionMismatch("Q must be square")
        if not np.all(np.isfinite(Q)):
            raise ProblemError("Q must be finite")
        Q = 0.5 * (Q + Q.T)
        eig = np.linalg.eigvalsh(Q)
        scale = max(1.0, float(np.max(np.abs(eig))))
        if eig[0] < -1e-12 * scale:
            raise ProblemError("Q must be positive semidefinite")
        self.Q = Q
        self.Q.setflags(write=False)
        self._eig = eig
        super().__init__(Q.shape[0], is_convex=True, is_coercive=bool(eig[0] > 1e-12 * scale),
                         lower_bound=0.0)

    def _values(self, X):
        return np.einsum("ni,ij,nj->n", X, self.Q, X)

    def upper_bound_on(self, support):
        lo, hi = support.bounds
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            return math.inf
        corner = np.maximum(np.abs(lo), np.abs(hi))
        return float(self._eig[-1] * corner @ corner)

    def describe(self):
        return {"kind": self.kind, "dim": self.dim, "Q": self.Q.tolist()}


class IndicatorComplement(MeasurementFunction):
    """``1 - 1_A(x)`` for the closed box ``A = [lower, upper]``."""

    kind = "indicator-complement"

    def __init__(self, lower, upper):
        lower = np.asarray(lower, dtype=float).reshape(-1)
        upper = np.asarray(upper, dtype=float).reshape(-1)
        if lower.shape != upper.shape:
            raise DimensionMismatch("region bounds must have equal length")
        if np.any(lower > upper):
            raise ProblemError("region must satisfy lower <= upper")
        self.region_lower, self.region_upper = lower, upper
        super().__init__(lower.size, lower_bound=0.0, upper_bound=1.0)

    def _values(self, X):
        inside = np.all((X >= self.region_lower) & (X <= self.region_upper), axis=1)
        return np.where(inside, 0.0, 1.0)

    def breakpoints(self, axis):
        return [float(v) for v in (self.region_lower[axis], self.region_upper[axis]) if math.isfinite(v)]

    def describe(self):
        return {"kind": self.kind, "dim": self.dim,
                "lower": self.region_lower.tolist(), "upper": self.region_upper.tolist()}


class LinearCombination(MeasurementFunction):
    """``sum_g mu_g phi_g`` with nonnegative, finite weights."""

    kind = "linear-combination"

    def __init__(self, functions, weights):
        functions = list(functions)
        weights = np.asarray(weights, dtype=float).reshape(-1)
        if not functions or len(functions) != weights.size:
            raise DimensionMismatch("need one weight per function")
        if not np.all(np.isfinite(weights)):
            raise ProblemError("weights must be finite")
        if np.any(weights < 0):
            raise ProblemError("linear-combination weights must be nonnegative")
        dims = {f.dim for f in functions}
        if len(dims) != 1:
            raise DimensionMismatch("all combined functions must share one dimension")
        self.functions, self.weights = functions, weights
        pos = [(w, f) for w, f in zip(weights, functions) if w > 0]
        lbs = [f.lower_bound for _, f in pos]
        bounded = all(math.isfinite(lb) for lb in lbs)
        wb_terms = [f for _, f in pos if f.is_well_behaved]
        wb = bool(wb_terms) and bounded and all(f.locally_bounded for _, f in pos)
        super().__init__(
            dims.pop(),
            is_convex=bool(pos) and all(f.is_convex for _, f in pos),
            is_coercive=any(f.is_coercive for _, f in pos) and bounded,
            is_well_behaved=wb,
            well_behaved_radius=max(f.well_behaved_radius for f in wb_terms) if wb else None,
            is_affine=bool(pos) and all(f.is_affine for _, f in pos),
            lower_bound=sum(_mul(w, f.lower_bound) for w, f in pos) if pos else 0.0,
            upper_bound=sum(_mul(w, f.upper_bound) for w, f in pos) if pos else 0.0,
            locally_bounded=all(f.locally_bounded for _, f in pos),
        )
        self._pos = pos

    def breakpoints(self, axis):
        return sorted({b for _, f in self._pos for b in f.breakpoints(axis)})

    def _values(self, X):
        out = np.zeros(X.shape[0])
        for w, f in self._pos:
            out += w * f(X)
        return out

    def lower_bound_on(self, support):
        return sum(_mul(w, f.lower_bound_on(support)) for w, f in self._pos) if self._pos else 0.0

    def upper_bound_on(self, support):
        return sum(_mul(w, f.upper_bound_on(support)) for w, f in self._pos) if self._pos else 0.0

    def describe(self):
        return {"kind": self.kind, "dim": self.dim, "weights": self.weights.tolist(),
                "terms": [f.describe() for f in self.functions]}


class Scaled(MeasurementFunction):
    """``factor * phi``; a negative factor is how equality constraints are encoded."""

    kind = "scaled"

    def __init__(self, base, factor):
        factor = float(factor)
        if factor == 0 or not math.isfinite(factor):
            raise ProblemError("scale factor must be finite and nonzero")
        self.base, self.factor = base, factor
        if factor > 0:
            lb, ub = factor * base.lower_bound, factor * base.upper_bound
        else:
            lb, ub = factor * base.upper_bound, factor * base.lower_bound
        pos = factor > 0
        super().__init__(
            base.dim,
            is_convex=(base.is_convex and pos) or base.is_affine,
            is_coercive=base.is_coercive and pos,
            is_well_behaved=base.is_well_behaved and pos,
            well_behaved_radius=base.well_behaved_radius if (base.is_well_behaved and pos) else None,
            is_affine=base.is_affine,
            lower_bound=lb, upper_bound=ub,
            locally_bounded=base.locally_bounded,
        )

    def _values(self, X):
        return self.factor * self.base(X)

    def breakpoints(self, axis):
        return self.base.breakpoints(axis)

    def lower_bound_on(self, support):
        if self.factor > 0:
            return self.factor * self.base.lower_bound_on(support)
        return self.factor * self.base.upper_bound_on(support)

    def upper_bound_on(self, support):
        if self.factor > 0:
            return self.factor * self.base.upper_bound_on(support)
        return self.factor * self.base.lower_bound_on(support)

    def describe(self):
        return {"kind": self.kind, "dim": self.dim, "factor": self.factor,
                "base": self.base.describe()}


class Callback(MeasurementFunction):
    """Opaque user function with user-supplied structural declarations.

    ``minorant``, if given, is the convex coercive function that dominates
    from below outside the well-behaved radius; it is used only for
    spot-checking the declaration.
    """

    kind = "callback"

    def __init__(self, func, dim=1, *, lower_bound=-math.inf, upper_bound=math.inf,
                 is_convex=False, is_coercive=False, is_well_behaved=False,
                 well_behaved_radius=None, minorant=None, vectorized=False, name=None,
                 locally_bounded=True, breakpoints=()):
        self.func, self.minorant, self.vectorized = func, minorant, vectorized
        self._breaks = [float(b) for b in breakpoints]
        self.name = name or getattr(func, "__name__", "callback")
        super().__init__(dim, is_convex=is_convex, is_coercive=is_coercive,
                         is_well_behaved=is_well_behaved,
                         well_behaved_radius=well_behaved_radius,
                         lower_bound=lower_bound, upper_bound=upper_bound,
                         locally_bounded=locally_bounded)

    def _values(self, X):
        if self.vectorized:
            return self.func(X[:, 0] if self.dim == 1 else X)
        arg = (lambda row: row[0]) if self.dim == 1 else (lambda row: row)
        return np.array([float(self.func(arg(row))) for row in X])

    def breakpoints(self, axis):
        return list(self._breaks)

    def describe(self):
        return {"kind": self.kind, "dim": self.dim, "name": self.name}


def evaluate(phi: MeasurementFunction, x) -> float:
    """Evaluate ``phi`` at a single point, enforcing the declared lower bound."""
    x = as_point(x, phi.dim)
    value = float(phi(x[None, :])[0])
    if not math.isfinite(value):
        raise NonFiniteInput(f"{phi!r} returned a non-finite value at {x.tolist()}")
    if value < phi.lower_bound:
        raise DeclarationInconsistent(
            f"{phi!r} returned {value} below its declared lower bound {phi.lower_bound}")
    return value


def equality_constraint(phi, u):
    """Encode ``E[phi] = u`` as the pair ``E[phi] <= u`` and ``E[-phi] <= -u``."""
    return [(phi, float(u)), (Scaled(phi, -1.0), -float(u))]


class MomentProblem:
    """The feasible family: densities on S with ``E[phi_g] <= u_g`` for every g.

    Constraint functions must be bounded below on S; pass
    ``require_bounded_below=False`` to admit a problem only for diagnosis.
    """

    def __init__(self, support: SupportSet, constraints=(), *, require_bounded_below=True):
        self.support = support
        self.dimension = support.dim
        pairs = []
        for g, item in enumerate(constraints):
            try:
                phi, u = item
            except (TypeError, ValueError):
                raise ProblemError(f"constraint {g} must be a (function, bound) pair") from None
            if not isinstance(phi, MeasurementFunction):
                raise ProblemError(f"constraint {g}: not a MeasurementFunction")
            if phi.dim != self.dimension:
                raise DimensionMismatch(
                    f"constraint {g} has dimension {phi.dim}, support has {self.dimension}")
            u = float(u)
            if not math.isfinite(u):
                raise ProblemError(f"constraint {g}: bound u must be finite")
            pairs.append((phi, u))
        if not pairs and not support.finite_volume:
            raise ProblemError("an unconstrained problem needs a finite-volume support")
        self.constraints = tuple(pairs)
        self.lower_bounds = np.array([phi.lower_bound_on(support) for phi, _ in pairs])
        self.bounded_below = bool(np.all(np.isfinite(self.lower_bounds)))
        if require_bounded_below and not self.bounded_below:
            bad = [g for g, lb in enumerate(self.lower_bounds) if not math.isfinite(lb)]
            raise ProblemError(
                f"constraint functions {bad} are not bounded below on the support; "
                "the feasible family is then not guaranteed complete")
        self.bounds = np.array([u for _, u in pairs])
        self.bounds.setflags(write=False)
        self.lower_bounds.setflags(write=False)

    @property
    def functions(self):
        return [phi for phi, _ in self.constraints]

    @property
    def m(self):
        return len(self.constraints)

    @property
    def uniform_lower_bound(self):
        """One bound L valid for every constraint function (min of the per-function bounds)."""
        return float(np.min(self.lower_bounds)) if self.m else 0.0

    def features(self, X):
        """Matrix of constraint-function values, shape (n, m)."""
        X = _as_points(X, self.dimension)
        if not self.m:
            return np.zeros((X.shape[0], 0))
        return np.column_stack([phi(X) for phi in self.functions])

    def with_bound(self, index, u):
        cons = list(self.constraints)
        cons[index] = (cons[index][0], u)
        return MomentProblem(self.support, cons, require_bounded_below=self.bounded_below)

    def with_bounds(self, bounds):
        cons = [(phi, float(u)) for (phi, _), u in zip(self.constraints, bounds)]
        return MomentProblem(self.support, cons, require_bounded_below=self.bounded_below)

    def appended(self, phi, u):
        return MomentProblem(self.support, list(self.constraints) + [(phi, u)],
                             require_bounded_below=self.bounded_below)

    def sample_support(self, n, seed=0, radius=16.0):
        """Scrambled-Sobol points of S (infinite sides truncated at ``radius``)."""
        lo, hi = self.support.bounds
        lo = np.where(np.isfinite(lo), lo, -radius)
        hi = np.where(np.isfinite(hi), hi, np.maximum(lo, 0) + radius)
        sob = qmc.Sobol(self.dimension, scramble=True, seed=seed)
        pts = qmc.scale(sob.random(n), lo, hi)
        return pts[self.support.contains(pts)]

    def describe(self):
        return {
            "dimension": self.dimension,
            "support": self.support.describe(),
            "constraints": [{"function": phi.describe(), "u": u} for phi, u in self.constraints],
        }

    def __repr__(self):
        return f"MomentProblem(d={self.dimension}, m={self.m}, support={self.support.shape})"


# --------------------------------------------------------------------------- checks

@dataclass
class StabilityReport:
    verdicts: dict
    partition: dict
    path: str
    notes: list = field(default_factory=list)

    @property
    def stable(self):
        return all(v == "stable" for v in self.verdicts.values())


def check_stable(phi, support, lambdas=(0.1, 1.0, 10.0), budget=200_000, seed=0):
    """Decide, per lambda, whether ``exp(-lambda*phi)`` is integrable over S.

    Convex and coercive or well-behaved functions are stable by structure.
    Otherwise the integral is computed with a growing truncation radius and
    declared stable only when the tail contributions die out; failure to
    settle is reported as ``"undetermined"``.
    """
    from .quadrature import IntegrationRequest, integrate
    from .errors import DivergentIntegral

    lambdas = [float(v) for v in lambdas]
    if not lambdas or any(not (v > 0) for v in lambdas):
        raise ValueError("lambdas must be nonempty and positive")
    structural = phi.declared_stable
    verdicts, partition, notes = {}, {}, []
    for lam in lambdas:
        req = IntegrationRequest(support, ((lam, phi),), budget=budget,
                                 target_rel_tol=1e-9, seed=seed)
        try:
            res = integrate(req)
        except DivergentIntegral as exc:
            verdicts[lam] = "stable" if structural else "undetermined"
            partition[lam] = None
            notes.append(f"lambda={lam}: {exc}")
            continue
        partition[lam] = res.value
        if structural or res.converged:
            verdicts[lam] = "stable"
        else:
            verdicts[lam] = "undetermined"
            notes.append(f"lambda={lam}: budget exhausted before the tail settled")
    return StabilityReport(verdicts, partition, "structural" if structural else "numerical", notes)


@dataclass
class WellBehavedReport:
    radius: float
    ball_points: int
    rays: int
    violations: list

    @property
    def consistent(self):
        return not self.violations


def check_well_behaved(phi, n_ball=512, n_rays=64, doublings=14, seed=0, strict=True):
    """Spot-check a well-behaved declaration by sampling.

    Samples the ball of radius M for finite values, then walks random rays
    outward from M and requires the function to grow without bound (and to
    dominate ``phi.minorant`` when one is supplied).
    """
    if not (phi.is_well_behaved or (phi.is_convex and phi.is_coercive)):
        raise ValueError("function declares neither well-behavedness nor convex+coercive")
    M = phi.well_behaved_radius or 0.0
    d = phi.dim
    rng = np.random.default_rng(seed)
    violations = []

    dirs = rng.standard_normal((n_ball, d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    radii = M * rng.random(n_ball) ** (1.0 / d)
    ball = np.vstack([np.zeros((1, d)), dirs * radii[:, None]])
    vals = phi(ball)
    if not np.all(np.isfinite(vals)):
        violations.append(f"non-finite value inside the ball of radius {M}")
    ball_sup = float(np.max(np.abs(vals[np.isfinite(vals)]))) if np.any(np.isfinite(vals)) else math.inf

    if d == 1:
        ray_dirs = np.array([[1.0], [-1.0]])
    else:
        ray_dirs = rng.standard_normal((n_rays, d))
        ray_dirs /= np.linalg.norm(ray_dirs, axis=1, keepdims=True)
    steps = max(M, 1.0) * 2.0 ** np.arange(doublings + 1)
    for v in ray_dirs:
        pts = steps[:, None] * v[None, :]
        along = phi(pts)
        if not np.all(np.isfinite(along)):
            violations.append(f"non-finite value along ray {v.tolist()}")
            continue
        tail = along[-4:]
        if not (np.all(np.diff(tail) > 0) and tail[-1] > ball_sup + 1.0):
            violations.append(
                f"no growth along ray {np.round(v, 6).tolist()}: values {np.round(tail, 6).tolist()}")
        minorant = getattr(phi, "minorant", None)
        if minorant is not None:
            outside = steps > M
            low = np.array([minorant(p if d > 1 else p[0]) for p in pts[outside]])
            if np.any(along[outside] < low):
                violations.append(f"minorant not dominated along ray {v.tolist()}")
    report = WellBehavedReport(M, ball.shape[0], len(ray_dirs), violations)
    if strict and violations:
        raise DeclarationInconsistent(
            f"{phi!r}: well-behaved declaration contradicted ({violations[0]})", report)
    return report


def combine_for_stability(problem: MomentProblem, weights):
    """Form ``phi_mu = sum mu_g phi_g`` and ``u_mu = sum mu_g u_g``.

    The pair is a redundant constraint: every feasible density already
    satisfies it, so appending it leaves the maxent solution unchanged.
    """
    weights = np.asarray(weights, dtype=float).reshape(-1)
    if weights.size != problem.m:
        raise DimensionMismatch(f"need {problem.m} weights, got {weights.size}")
    if np.any(weights < 0):
        raise ProblemError("weights must be nonnegative")
    if not np.any(weights > 0):
        raise ProblemError("weights must not all be zero")
    phi_mu = LinearCombination(problem.functions, weights)
    u_mu = float(sum(_mul(w, u) for w, u in zip(weights, problem.bounds)))
    return phi_mu, u_mu
