"""Brute-force references: simplex lattice search, finite differences, scan argmin.

Nothing in here shares code paths with the solvers it is used to check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .generators import eval_f

MAX_DIM = 4
MIN_RESOLUTION = 1e-4


@dataclass(frozen=True)
class GridSpec:
    resolution: float
    n: int

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("n must be at least 2")
        if self.n > MAX_DIM:
            raise ValueError(f"lattice oracle is capped at n <= {MAX_DIM}, got {self.n}")
        if not (MIN_RESOLUTION - 1e-15 <= self.resolution <= 0.5):
            raise ValueError(f"resolution must lie in [{MIN_RESOLUTION}, 0.5]")
        k = 1.0 / self.resolution
        if abs(k - round(k)) > 1e-9 * k:
            raise ValueError("1/resolution must be an integer")

    @property
    def steps(self) -> int:
        return int(round(1.0 / self.resolution))

    @property
    def size(self) -> int:
        return math.comb(self.steps + self.n - 1, self.n - 1)


def _compositions(total: int, parts: int) -> np.ndarray:
    """All non-negative integer vectors of length ``parts`` summing to ``total``."""
    if parts == 1:
        return np.array([[total]], dtype=np.int64)
    if parts == 2:
        a = np.arange(total + 1, dtype=np.int64)
        return np.stack([a, total - a], axis=1)
    if parts == 3:
        i, j = np.triu_indices(total + 1)
        # i <= j: first = i, second = j - i, third = total - j
        return np.stack([i, j - i, total - j], axis=1).astype(np.int64)
    raise ValueError("parts must be <= 3")


def grid_maximize(objective, spec: GridSpec, chunk_rows: int = 2_000_000):
    """Exhaustively maximise ``objective`` over ``{k * resolution} ∩ simplex``.

    ``objective`` receives a 2-D array of candidate points (one per row) and
    returns one value per row.  Returns ``(point, value)``.
    """
    K, n = spec.steps, spec.n
    best_val = -math.inf
    best_pt = None
    if n <= 3:
        pts = _compositions(K, n).astype(float) / K
        vals = np.asarray(objective(pts), dtype=float)
        i = int(np.nanargmax(np.where(np.isnan(vals), -np.inf, vals)))
        return pts[i].copy(), float(vals[i])
    # n == 4: sweep the first coordinate, enumerate the remaining three
    for k0 in range(K + 1):
        rest = _compositions(K - k0, 3)
        pts = np.empty((rest.shape[0], 4))
        pts[:, 0] = k0 / K
        pts[:, 1:] = rest / K
        for s in range(0, pts.shape[0], chunk_rows):
            block = pts[s : s + chunk_rows]
            vals = np.asarray(objective(block), dtype=float)
            vals = np.where(np.isnan(vals), -np.inf, vals)
            i = int(np.argmax(vals))
            if vals[i] > best_val:
                best_val = float(vals[i])
                best_pt = block[i].copy()
    return best_pt, best_val


def grid_maximize_separable(terms, spec: GridSpec):
    """Lattice maximum of ``sum_i terms[i](p_i)`` by max-plus dynamic programming.

    Visits exactly the same lattice as :func:`grid_maximize` and returns the
    same maximum, in ``O(n K^2)`` instead of ``O(K^(n-1))``.  ``terms[i]``
    maps an array of coordinate values to per-coordinate contributions.
    """
    K = spec.steps
    if len(terms) != spec.n:
        raise ValueError("need one term per coordinate")
    levels = np.arange(K + 1) / K
    tables = []
    for term in terms:
        with np.errstate(all="ignore"):
            v = np.asarray(term(levels), dtype=float)
        tables.append(np.where(np.isnan(v), -np.inf, v))
    # best[m] = best value of the first j coordinates using m units
    best = tables[0].copy()
    choice = []
    idx = np.arange(K + 1)
    for tab in tables[1:]:
        # cand[m, k] = best[m - k] + tab[k] for k <= m
        diff = idx[:, None] - idx[None, :]
        valid = diff >= 0
        cand = np.where(valid, best[np.clip(diff, 0, K)] + tab[None, :], -np.inf)
        arg = np.argmax(cand, axis=1)
        best = cand[idx, arg]
        choice.append(arg)
    value = float(best[K])
    units = np.zeros(spec.n, dtype=np.int64)
    m = K
    for j in range(spec.n - 1, 0, -1):
        k = int(choice[j - 1][m])
        units[j] = k
        m -= k
    units[0] = m
    return units / K, value


def full_objective_rows(r, q, beta: float, gen):
    """Row-wise ``<r, p> - beta * sum_i q_i f(p_i / q_i)`` written out from scratch."""
    r = np.asarray(r, dtype=float)
    q = np.asarray(q, dtype=float)

    def objective(points):
        P = np.atleast_2d(np.asarray(points, dtype=float))
        with np.errstate(all="ignore"):
            pen = np.asarray(eval_f(gen, P / q), dtype=float) * q
            return P @ r - beta * pen.sum(axis=1)

    return objective


def grid_full_objective(r, q, beta: float, gen, resolution: float = 1e-3):
    """Lattice maximum of the full objective via the separable search."""
    r = np.asarray(r, dtype=float)
    q = np.asarray(q, dtype=float)
    spec = GridSpec(resolution, r.size)
    terms = [
        (lambda x, ri=ri, qi=qi: ri * x - beta * qi * np.asarray(eval_f(gen, x / qi), dtype=float))
        for ri, qi in zip(r, q)
    ]
    return grid_maximize_separable(terms, spec)


def round_to_lattice(p, resolution: float, keep_support: bool = True) -> np.ndarray:
    """Largest-remainder rounding of ``p`` onto the lattice of step ``resolution``.

    With ``keep_support`` every strictly positive coordinate keeps at least
    one lattice unit (when the budget allows).
    """
    p = np.asarray(p, dtype=float)
    K = int(round(1.0 / resolution))
    raw = p * K
    units = np.floor(raw).astype(np.int64)
    if keep_support:
        units = np.where((p > 0) & (units == 0), 1, units)
    deficit = K - int(units.sum())
    rem = raw - units
    order = np.argsort(-rem, kind="stable")
    i = 0
    while deficit != 0 and i < 10 * p.size + 10:
        j = order[i % p.size]
        if deficit > 0:
            units[j] += 1
            deficit -= 1
        elif units[j] > (1 if (keep_support and p[j] > 0) else 0):
            units[j] -= 1
            deficit += 1
        i += 1
    if deficit != 0:
        return round_to_lattice(p, resolution, keep_support=False)
    return units / K


def lattice_slack(objective, p, resolution: float) -> float:
    """Upper bound on ``objective(p) - max(lattice)`` from rounding ``p``."""
    p = np.asarray(p, dtype=float)
    pr = round_to_lattice(p, resolution)
    hi = float(np.asarray(objective(p[None, :]))[0])
    lo = float(np.asarray(objective(pr[None, :]))[0])
    return max(hi - lo, 0.0)


def finite_diff_gradient(fn, point, h: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of a scalar function."""
    x = np.atleast_1d(np.asarray(point, dtype=float))
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        fp, fm = float(fn(x + e)), float(fn(x - e))
        if not (math.isfinite(fp) and math.isfinite(fm)):
            raise ValueError(f"non-finite evaluation around coordinate {i}")
        g[i] = (fp - fm) / (2.0 * h)
    return g


def one_sided_gap(fn, point, h: float = 1e-6) -> np.ndarray:
    """Per-coordinate |forward - backward| difference quotient gap."""
    x = np.atleast_1d(np.asarray(point, dtype=float))
    f0 = float(fn(x))
    out = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        fwd = (float(fn(x + e)) - f0) / h
        bwd = (f0 - float(fn(x - e))) / h
        out[i] = abs(fwd - bwd)
    return out


@dataclass(frozen=True)
class GradientCheck:
    analytic: np.ndarray
    numeric: np.ndarray
    max_rel_error: float
    nonsmooth: bool
    ok: bool


def check_gradient(fn, grad, point, h: float = 1e-6, rtol: float = 1e-6, atol: float = 1e-10) -> GradientCheck:
    """Compare an analytic gradient with central differences.

    A point is flagged ``nonsmooth`` when forward and backward quotients
    disagree far more than curvature over a step of ``h`` explains; such
    points are reported but never counted as failures.
    """
    x = np.atleast_1d(np.asarray(point, dtype=float))
    a = np.atleast_1d(np.asarray(grad(x), dtype=float))
    num = finite_diff_gradient(fn, x, h)
    gap = one_sided_gap(fn, x, h)
    scale = np.maximum(np.abs(a), np.abs(num))
    err = np.abs(a - num)
    rel = float(np.max(err / np.maximum(scale, atol / rtol)))
    nonsmooth = bool(np.any(gap > 1e-3 * np.maximum(scale, 1.0)))
    ok = nonsmooth or bool(np.all(err <= rtol * scale + atol))
    return GradientCheck(a, num, rel, nonsmooth, ok)


def grid_argmin_scalar(fn, lo: float, hi: float, points: int = 1_000_000):
    """Best sample of ``fn`` on a log-spaced grid over ``[lo, hi]``."""
    if not lo < hi:
        raise ValueError("need lo < hi")
    xs = np.geomspace(lo, hi, points)
    with np.errstate(all="ignore"):
        vals = np.asarray(fn(xs), dtype=float)
    vals = np.where(np.isfinite(vals), vals, np.inf)
    if not np.isfinite(vals).any():
        raise ValueError("function is non-finite on the whole grid")
    i = int(np.argmin(vals))
    return float(xs[i]), float(vals[i])
