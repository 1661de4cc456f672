"""Ground truth: closed-form maxent fixtures and a brute-force grid solver.

The grid solver shares no code with :mod:`maxentcert.dual`. It balances one
multiplier at a time on a fixed lattice (cyclic coordinate descent on the
discrete dual), so agreement between the two is an independent check.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import linprog

from . import kernels
from .errors import InfeasibleDiscretization
from .measurements import MomentProblem, PowerMoment
from .support import SupportSet


@dataclass(frozen=True)
class AnalyticFixture:
    name: str
    problem: MomentProblem
    lambda_true: np.ndarray
    alpha_true: float
    entropy_true: float
    density: Callable
    truncation: tuple

    def mass_outside_truncation(self):
        """Closed-form mass of the density beyond the grid truncation box."""
        return _TAILS[self.name](self.truncation)


def _ray():
    return SupportSet.box([0.0], [np.inf])


def _uniform(a=0.0, b=2.0):
    P = MomentProblem(SupportSet.box([a], [b]), [])
    h = math.log(b - a)
    dens = lambda x: np.where((x >= a) & (x <= b), 1.0 / (b - a), 0.0)  # noqa: E731
    return AnalyticFixture("uniform", P, np.zeros(0), h, h, dens, ((a,), (b,)))


def _exponential(mean=1.0):
    lam = 1.0 / mean
    P = MomentProblem(_ray(), [(PowerMoment(1), mean)])
    alpha = -math.log(lam)
    dens = lambda x: np.where(x >= 0, lam * np.exp(-lam * np.maximum(x, 0)), 0.0)  # noqa: E731
    return AnalyticFixture("exponential", P, np.array([lam]), alpha, 1 + math.log(mean), dens,
                           ((0.0,), (40.0 * mean,)))


def _gaussian(var=1.0):
    lam = 1.0 / (2 * var)
    P = MomentProblem(SupportSet.full(1), [(PowerMoment(2), var)])
    alpha = 0.5 * math.log(2 * math.pi * var)
    dens = lambda x: np.exp(-x ** 2 / (2 * var)) / math.sqrt(2 * math.pi * var)  # noqa: E731
    s = 10.0 * math.sqrt(var)
    return AnalyticFixture("gaussian", P, np.array([lam]), alpha,
                           0.5 * math.log(2 * math.pi * math.e * var), dens, ((-s,), (s,)))


def _laplace(b=1.0):
    P = MomentProblem(SupportSet.full(1), [(PowerMoment(1), b)])
    alpha = math.log(2 * b)
    dens = lambda x: np.exp(-np.abs(x) / b) / (2 * b)  # noqa: E731
    return AnalyticFixture("laplace", P, np.array([1.0 / b]), alpha, 1 + math.log(2 * b), dens,
                           ((-20.0 * b,), (20.0 * b,)))


def _truncated_exponential(T=5.0, lam=1.0):
    z = (1 - math.exp(-lam * T)) / lam
    u = 1 / lam - T / math.expm1(lam * T)
    P = MomentProblem(SupportSet.box([0.0], [T]), [(PowerMoment(1), u)])
    alpha = math.log(z)
    dens = lambda x: np.where((x >= 0) & (x <= T), np.exp(-lam * x) / z, 0.0)  # noqa: E731
    return AnalyticFixture("truncated-exponential", P, np.array([lam]), alpha, alpha + lam * u,
                           dens, ((0.0,), (T,)))


def _inactive_quadratic(half=10.0, u=200.0):
    P = MomentProblem(SupportSet.box([-half], [half]), [(PowerMoment(2), u)])
    h = math.log(2 * half)
    dens = lambda x: np.where(np.abs(x) <= half, 1.0 / (2 * half), 0.0)  # noqa: E731
    return AnalyticFixture("inactive-quadratic", P, np.zeros(1), h, h, dens, ((-half,), (half,)))


_TAILS = {
    "uniform": lambda box: 0.0,
    "truncated-exponential": lambda box: 0.0,
    "inactive-quadratic": lambda box: 0.0,
    "exponential": lambda box: math.exp(-box[1][0]),
    "gaussian": lambda box: math.erfc(box[1][0] / math.sqrt(2)),
    "laplace": lambda box: math.exp(-box[1][0]),
}


def analytic_fixtures():
    """The five closed-form fixtures used by the self-test."""
    return [_uniform(), _exponential(), _gaussian(), _laplace(), _truncated_exponential()]


def fixture(name):
    """Look up a fixture by name, including ``inactive-quadratic``."""
    for fx in analytic_fixtures() + [_inactive_quadratic()]:
        if fx.name == name:
            return fx
    raise KeyError(f"unknown fixture {name!r}")


FIXTURE_NAMES = ("uniform", "exponential", "gaussian", "laplace", "truncated-exponential",
                 "inactive-quadratic")


# --------------------------------------------------------------------------- grid oracle

@dataclass(frozen=True)
class GridMaxent:
    grid: np.ndarray
    cell_volume: float
    cell_widths: np.ndarray
    probabilities: np.ndarray
    entropy_grid: float
    lambda_: np.ndarray
    moments: np.ndarray
    iterations: int
    kkt_residual: float

    def density(self, X):
        """Step-function density (probability over cell volume) at points X."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.zeros(X.shape[0])
        lo = self.grid.min(axis=0) - self.cell_widths / 2
        idx = np.floor((X - lo) / self.cell_widths).astype(int)
        n_axis = np.round((self.grid.max(axis=0) - self.grid.min(axis=0)) / self.cell_widths
                          ).astype(int) + 1
        ok = np.all((idx >= 0) & (idx < n_axis), axis=1)
        lookup = {tuple(k): i for i, k in enumerate(
            np.round((self.grid - lo) / self.cell_widths - 0.5).astype(int))}
        for j in np.flatnonzero(ok):
            i = lookup.get(tuple(idx[j]))
            if i is not None:
                out[j] = self.probabilities[i] / self.cell_volume
        return out

    def tv_distance(self, density, mass_outside=0.0):
        """Total variation to a continuous density, by cell midpoints.

        ``mass_outside`` is the continuous density's mass beyond the grid.
        """
        q = np.asarray(density(self.grid[:, 0] if self.grid.shape[1] == 1 else self.grid),
                       dtype=float) * self.cell_volume
        return 0.5 * (float(np.sum(np.abs(self.probabilities - q))) + mass_outside)


def _lattice(support, truncation, cells):
    lo = np.asarray(truncation[0], dtype=float).reshape(-1)
    hi = np.asarray(truncation[1], dtype=float).reshape(-1)
    d = support.dim
    if lo.size != d or hi.size != d or not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise ValueError("truncation must be a finite box of the problem dimension")
    blo, bhi = support.bounds
    lo, hi = np.maximum(lo, blo), np.minimum(hi, bhi)
    if np.any(lo >= hi):
        raise ValueError("truncation box misses the support")
    per_axis = max(2, int(round(cells ** (1.0 / d))))
    widths = (hi - lo) / per_axis
    axes = [lo[i] + widths[i] * (np.arange(per_axis) + 0.5) for i in range(d)]
    G = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    G = G[support.contains(G)]
    return G, widths


def _line_minimize(logw, f, u, t0, tol):
    """Minimize ``logZ(t) + t u`` over ``t >= 0`` (safeguarded Newton)."""
    _, mean0, _ = kernels.tilted_line_stats(logw, f, 0.0)
    if mean0 <= u:
        return 0.0
    lo, hi = 0.0, max(t0, 1.0)
    while kernels.tilted_line_stats(logw, f, hi)[1] > u:
        lo, hi = hi, 2 * hi
        if hi > 1e15:
            raise InfeasibleDiscretization("bound below every grid value of a constraint")
    t = min(max(t0, lo), hi) if lo < t0 < hi else 0.5 * (lo + hi)
    for _ in range(200):
        _, mean, var = kernels.tilted_line_stats(logw, f, t)
        g = u - mean
        if abs(g) <= tol:
            break
        if g < 0:
            lo = t
        else:
            hi = t
        step = t - g / var if var > 0 else 0.5 * (lo + hi)
        t = step if lo < step < hi else 0.5 * (lo + hi)
        if hi - lo <= 1e-15 * max(1.0, hi):
            break
    return t


def grid_solve(problem, truncation, cells=4000, tol=1e-10, max_sweeps=10_000):
    """Discrete maxent on a lattice over ``truncation`` intersected with S.

    Maximizes ``sum -p ln(p/Delta)`` subject to the moment inequalities by
    cyclic coordinate descent on the multipliers. Raises
    :class:`InfeasibleDiscretization` when no lattice distribution meets the
    constraints.
    """
    G, widths = _lattice(problem.support, truncation, cells)
    if G.shape[0] == 0:
        raise InfeasibleDiscretization("no lattice cell centre lies in the support")
    delta = float(np.prod(widths))
    F = problem.features(G)
    u = np.asarray(problem.bounds, dtype=float)
    m = problem.m
    if m:
        res = linprog(np.zeros(G.shape[0]), A_ub=F.T, b_ub=u, A_eq=np.ones((1, G.shape[0])),
                      b_eq=[1.0], bounds=(0, None), method="highs")
        if res.status != 0:
            raise InfeasibleDiscretization("no distribution on the lattice satisfies the bounds")
    Ft = np.ascontiguousarray(F.T)
    lam = np.zeros(m)
    base = np.full(G.shape[0], math.log(delta))
    sweeps, kkt = 0, 0.0
    for sweeps in range(1, max_sweeps + 1):
        for g in range(m):
            rest = base - (F @ lam - Ft[g] * lam[g])
            lam[g] = _line_minimize(rest, Ft[g], u[g], lam[g], 0.1 * tol)
        a = base - F @ lam if m else base
        p = np.exp(a - a.max())
        p /= p.sum()
        mom = F.T @ p if m else np.zeros(0)
        grad = u - mom
        kkt = float(np.max(np.abs(lam - np.maximum(lam - grad, 0.0)))) if m else 0.0
        if kkt < tol:
            break
    nz = p > 0
    ent = float(-np.sum(p[nz] * np.log(p[nz] / delta)))
    return GridMaxent(G, delta, widths, p, ent, lam, mom, sweeps, kkt)
