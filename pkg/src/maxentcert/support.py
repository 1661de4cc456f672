"""Support sets: boxes, half-space intersections, and their intersection."""
from __future__ import annotations

import math

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, HalfspaceIntersection

from .errors import DimensionMismatch, ProblemError

SHAPES = ("full", "box", "halfspaces", "box+halfspaces")


class SupportSet:
    """Closed set ``S = {x : lower <= x <= upper, A x <= b}`` with nonzero volume.

    Use the factories :meth:`full`, :meth:`box` and :meth:`halfspaces`
    rather than the constructor.
    """

    def __init__(self, lower, upper, A=None, b=None):
        lower = np.asarray(lower, dtype=float).reshape(-1)
        upper = np.asarray(upper, dtype=float).reshape(-1)
        if lower.shape != upper.shape or lower.size == 0:
            raise DimensionMismatch("lower and upper must be nonempty and of equal length")
        if np.any(np.isnan(lower)) or np.any(np.isnan(upper)):
            raise ProblemError("support bounds must not be NaN")
        if np.any(lower == np.inf) or np.any(upper == -np.inf):
            raise ProblemError("support bounds point the wrong way")
        if np.any(lower >= upper):
            raise ProblemError("support has zero volume: need lower < upper componentwise")
        self.dim = lower.size
        self.lower = lower
        self.upper = upper
        self.lower.setflags(write=False)
        self.upper.setflags(write=False)
        if A is None:
            self.A = None
            self.b = None
        else:
            A = np.atleast_2d(np.asarray(A, dtype=float))
            b = np.asarray(b, dtype=float).reshape(-1)
            if A.shape != (b.size, self.dim):
                raise DimensionMismatch(f"half-space matrix must be ({b.size}, {self.dim})")
            if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
                raise ProblemError("half-space data must be finite")
            if np.any(np.linalg.norm(A, axis=1) == 0):
                raise ProblemError("half-space normal vectors must be nonzero")
            self.A = A
            self.b = b
            self.A.setflags(write=False)
            self.b.setflags(write=False)
        self._bbox = self._bounding_box()
        self._volume = self._compute_volume()

    # ------------------------------------------------------------------ factories
    @classmethod
    def full(cls, dim):
        return cls(np.full(dim, -np.inf), np.full(dim, np.inf))

    @classmethod
    def box(cls, lower, upper):
        return cls(lower, upper)

    @classmethod
    def halfspaces(cls, A, b, lower=None, upper=None):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        d = A.shape[1]
        lower = np.full(d, -np.inf) if lower is None else lower
        upper = np.full(d, np.inf) if upper is None else upper
        return cls(lower, upper, A, b)

    # ------------------------------------------------------------------ geometry
    @property
    def shape(self):
        box_part = bool(np.any(np.isfinite(self.lower)) or np.any(np.isfinite(self.upper)))
        if self.A is None:
            return "box" if box_part else "full"
        return "box+halfspaces" if box_part else "halfspaces"

    @property
    def has_halfspaces(self):
        return self.A is not None

    @property
    def bounds(self):
        """Tight axis-aligned bounding box ``(lower, upper)`` of S."""
        return self._bbox

    @property
    def volume(self):
        return self._volume

    @property
    def finite_volume(self):
        return math.isfinite(self._volume)

    def contains(self, X):
        """Boolean membership mask for points ``X`` of shape (n, d)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.dim:
            raise DimensionMismatch(f"points have dimension {X.shape[1]}, support has {self.dim}")
        inside = np.all((X >= self.lower) & (X <= self.upper), axis=1)
        if self.A is not None:
            inside &= np.all(X @ self.A.T <= self.b, axis=1)
        return inside

    def describe(self):
        out = {
            "shape": self.shape,
            "lower": [float(v) for v in self.lower],
            "upper": [float(v) for v in self.upper],
        }
        if self.A is not None:
            out["A"] = self.A.tolist()
            out["b"] = self.b.tolist()
        return out

    def __eq__(self, other):
        if not isinstance(other, SupportSet):
            return NotImplemented
        same_box = np.array_equal(self.lower, other.lower) and np.array_equal(self.upper, other.upper)
        if (self.A is None) != (other.A is None):
            return False
        if self.A is None:
            return same_box
        return same_box and np.array_equal(self.A, other.A) and np.array_equal(self.b, other.b)

    def __hash__(self):
        return hash((self.lower.tobytes(), self.upper.tobytes()))

    def __repr__(self):
        return f"SupportSet({self.describe()})"

    # ------------------------------------------------------------------ internals
    def _lp_bounds(self):
        return [(None if not np.isfinite(lo) else lo, None if not np.isfinite(hi) else hi)
                for lo, hi in zip(self.lower, self.upper)]

    def _bounding_box(self):
        if self.A is None:
            return self.lower, self.upper
        # Chebyshev ball: positive radius certifies a nonempty interior.
        rows, rhs = [self.A], [self.b]
        for i in range(self.dim):
            e = np.zeros(self.dim)
            e[i] = 1.0
            if np.isfinite(self.upper[i]):
                rows.append(e[None, :]); rhs.append([self.upper[i]])
            if np.isfinite(self.lower[i]):
                rows.append(-e[None, :]); rhs.append([-self.lower[i]])
        G = np.vstack(rows)
        h = np.concatenate([np.atleast_1d(r) for r in rhs])
        gnorm = np.linalg.norm(G, axis=1)
        c = np.zeros(self.dim + 1)
        c[-1] = -1.0
        res = linprog(c, A_ub=np.hstack([G, gnorm[:, None]]), b_ub=h,
                      bounds=[(None, None)] * self.dim + [(0, 1.0)], method="highs")
        if res.status == 2 or (res.status == 0 and res.x[-1] <= 1e-12):
            raise ProblemError("support has empty interior (zero volume)")
        lo = np.array(self.lower, dtype=float)
        hi = np.array(self.upper, dtype=float)
        for i in range(self.dim):
            for sign in (1.0, -1.0):
                c = np.zeros(self.dim)
                c[i] = sign
                res = linprog(c, A_ub=self.A, b_ub=self.b, bounds=self._lp_bounds(), method="highs")
                if res.status == 3:
                    continue
                if res.status != 0:
                    raise ProblemError(f"could not bound the support along axis {i}: {res.message}")
                if sign > 0:
                    lo[i] = max(lo[i], res.fun)
                else:
                    hi[i] = min(hi[i], -res.fun)
        lo.setflags(write=False)
        hi.setflags(write=False)
        return lo, hi

    def _compute_volume(self):
        lo, hi = self._bbox
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            # unbounded full-dimensional convex sets have infinite volume
            return math.inf
        if self.A is None or self.dim == 1:
            return float(np.prod(hi - lo))
        halfspaces = [np.append(self.A[j], -self.b[j]) for j in range(self.A.shape[0])]
        for i in range(self.dim):
            e = np.zeros(self.dim)
            e[i] = 1.0
            halfspaces.append(np.append(e, -hi[i]))
            halfspaces.append(np.append(-e, lo[i]))
        interior = self._interior_point(np.array(halfspaces))
        hs = HalfspaceIntersection(np.array(halfspaces), interior)
        return float(ConvexHull(hs.intersections).volume)

    @staticmethod
    def _interior_point(halfspaces):
        A, b = halfspaces[:, :-1], -halfspaces[:, -1]
        norm = np.linalg.norm(A, axis=1)
        c = np.zeros(A.shape[1] + 1)
        c[-1] = -1.0
        res = linprog(c, A_ub=np.hstack([A, norm[:, None]]), b_ub=b,
                      bounds=[(None, None)] * A.shape[1] + [(0, None)], method="highs")
        return res.x[:-1]
