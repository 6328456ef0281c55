"""Numerical classification of generators.

Two questions are answered here:

* is ``f`` DPO-inducing, i.e. does ``f'(t)`` tend to ``-inf`` as ``t -> 0+``
  (falling back to the boundedness of ``(f(t) - f(0)) / t`` when the limit
  test is not decisive), and
* is ``f`` displacement-resistant, i.e. is ``argmin_{t > 0} f(t) >= 1``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import generators as gens
from .generators import Generator

DIVERGENCE_THRESHOLD = -1e6
PLATEAU_TOL = 1e-6
# successive per-decade decrements of a log-rate divergence stay constant;
# convergent tails shrink them geometrically
DECREMENT_RATIO_FLOOR = 0.999
GEOMETRIC_DECAY = 0.8
RESISTANT_TOL = 1e-9

INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


class Verdict(str, enum.Enum):
    INDUCING = "Inducing"
    NOT_INDUCING = "NotInducing"
    INCONCLUSIVE = "Inconclusive"


@dataclass(frozen=True)
class InducingVerdict:
    verdict: Verdict
    method: str  # "limit-test" or "ratio-test"
    evidence: tuple  # ((t, value), ...)
    reason: str = ""

    @property
    def inducing(self) -> bool:
        return self.verdict is Verdict.INDUCING


@dataclass(frozen=True)
class ArgminResult:
    location: float
    value: float
    resistant: bool


def _sequence_behaviour(values: np.ndarray) -> tuple[str, str]:
    """Classify the tail of a sequence sampled at t = 10^-1, 10^-2, ...

    Returns one of ``"minus_inf"``, ``"plus_inf"``, ``"finite"``,
    ``"unknown"`` and a short reason.
    """
    if values.size < 5:
        return "unknown", "fewer than 5 samples"
    if not np.all(np.isfinite(values)):
        if np.any(np.isnan(values)):
            return "unknown", "NaN in samples"
        last = values[-1]
        if last == -math.inf:
            return "minus_inf", "sample reached -inf"
        if last == math.inf:
            return "plus_inf", "sample reached +inf"
        return "unknown", "non-finite samples"
    tail = values[-5:]
    diffs = np.diff(tail)
    if np.all(np.abs(diffs[-4:]) < PLATEAU_TOL):
        return "finite", f"plateau at {tail[-1]:.6g}"
    if np.all(diffs < 0):
        if tail[-1] < DIVERGENCE_THRESHOLD:
            return "minus_inf", f"final sample {tail[-1]:.3g} below {DIVERGENCE_THRESHOLD:g}"
        dec = -diffs
        if np.all(dec[1:] >= DECREMENT_RATIO_FLOOR * dec[:-1]):
            return "minus_inf", "per-decade decrements do not shrink"
    steps = np.abs(diffs)
    if np.all(steps > 0) and np.all(steps[1:] <= GEOMETRIC_DECAY * steps[:-1]):
        # geometric tail: remaining movement is at most step * r / (1 - r)
        r = float(np.max(steps[1:] / steps[:-1]))
        limit = tail[-1] + np.sign(diffs[-1]) * steps[-1] * r / (1.0 - r)
        return "finite", f"geometric tail, limit about {limit:.6g}"
    if np.all(diffs > 0):
        if tail[-1] > -DIVERGENCE_THRESHOLD:
            return "plus_inf", f"final sample {tail[-1]:.3g} above {-DIVERGENCE_THRESHOLD:g}"
        inc = diffs
        if np.all(inc[1:] >= DECREMENT_RATIO_FLOOR * inc[:-1]):
            return "plus_inf", "per-decade increments do not shrink"
    return "unknown", "neither diverging nor settled"


def is_dpo_inducing(gen: Generator, t_min: float = 1e-12) -> InducingVerdict:
    """Decide whether ``lim_{t->0+} f'(t) = -inf`` by sampling.

    ``f'`` is evaluated at ``t = 10^-k`` for ``k = 1 .. log10(1/t_min)``.
    A sequence running off to ``-inf`` gives ``Inducing``; a settled
    finite limit or a ``+inf`` limit gives ``NotInducing``.  Anything else
    falls through to the ratio test on ``(f(t) - f(0)) / t``.
    """
    kmax = int(round(-math.log10(t_min)))
    if kmax < 5:
        raise ValueError("t_min must be at most 1e-5")
    ts = 10.0 ** -np.arange(1, kmax + 1, dtype=float)
    with np.errstate(all="ignore"):
        fp = np.asarray(gen.f_prime(ts), dtype=float)
    evidence = tuple(zip(ts.tolist(), fp.tolist()))
    if np.any(np.isnan(fp)):
        return InducingVerdict(Verdict.INCONCLUSIVE, "limit-test", evidence, "NaN in f'")

    kind, why = _sequence_behaviour(fp)
    if kind == "minus_inf":
        return InducingVerdict(Verdict.INDUCING, "limit-test", evidence, why)
    if kind in ("finite", "plus_inf"):
        return InducingVerdict(Verdict.NOT_INDUCING, "limit-test", evidence, why)

    if math.isinf(gen.f_at_zero):
        return InducingVerdict(Verdict.INDUCING, "ratio-test", evidence, "f(0) = +inf")
    with np.errstate(all="ignore"):
        ratio = (np.asarray(gen.f(ts), dtype=float) - gen.f_at_zero) / ts
    evidence = tuple(zip(ts.tolist(), ratio.tolist()))
    if np.any(np.isnan(ratio)):
        return InducingVerdict(Verdict.INCONCLUSIVE, "ratio-test", evidence, "NaN in ratio")
    kind, why = _sequence_behaviour(ratio)
    if kind == "minus_inf":
        return InducingVerdict(Verdict.INDUCING, "ratio-test", evidence, why)
    if kind in ("finite", "plus_inf"):
        return InducingVerdict(Verdict.NOT_INDUCING, "ratio-test", evidence, why)
    return InducingVerdict(Verdict.INCONCLUSIVE, "ratio-test", evidence, why)


def golden_section(fn, a: float, b: float, tol: float = 1e-12, max_iter: int = 500):
    """Minimise a unimodal scalar function on ``[a, b]``."""
    c = b - INVPHI * (b - a)
    d = a + INVPHI * (b - a)
    fc, fd = fn(c), fn(d)
    for _ in range(max_iter):
        if abs(b - a) <= tol:
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - INVPHI * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + INVPHI * (b - a)
            fd = fn(d)
        if c >= d:  # bracket collapsed to rounding
            break
    return (c, fc) if fc <= fd else (d, fd)


def _bisect_sign_change(fp, a: float, b: float, max_iter: int = 200) -> float | None:
    fa, fb = fp(a), fp(b)
    if not (np.isfinite(fa) and np.isfinite(fb)) or fa > 0 or fb < 0:
        return None
    for _ in range(max_iter):
        m = 0.5 * (a + b)
        if m <= a or m >= b:
            break
        fm = fp(m)
        if fm == 0:
            return m
        if fm < 0:
            a = m
        else:
            b = m
    return 0.5 * (a + b)


def argmin_f(gen: Generator, lo: float = 1e-8, hi: float = 50.0, points: int = 100_000) -> ArgminResult:
    """Global minimiser of ``f`` on ``[lo, hi]``.

    A log-spaced grid scan picks the bracket, golden-section search refines
    it, and when ``f'`` changes sign inside the final bracket a bisection on
    ``f'`` pins the stationary point down to rounding (golden section on
    ``f`` alone stalls near ``sqrt(eps)`` because ``f`` is flat there).
    """
    if not lo < hi:
        raise ValueError("need lo < hi")
    grid = np.geomspace(lo, hi, points)
    with np.errstate(all="ignore"):
        vals = np.asarray(gen.f(grid), dtype=float)
    finite = np.isfinite(vals)
    if not finite.any():
        raise ValueError(f"f is non-finite on the whole grid for {gen.id}")
    vals = np.where(finite, vals, np.inf)
    i = int(np.argmin(vals))
    if i == 0 or i == points - 1:
        loc = float(grid[i])
        return ArgminResult(loc, float(vals[i]), loc >= 1.0 - RESISTANT_TOL)

    a, b = float(grid[i - 1]), float(grid[i + 1])

    def fs(x):
        return float(gen.f(np.asarray(x, dtype=float)))

    loc, val = golden_section(fs, a, b)

    def fps(x):
        return float(gen.f_prime(np.asarray(x, dtype=float)))

    root = _bisect_sign_change(fps, a, b)
    if root is not None:
        rv = fs(root)
        if rv <= val + 1e-15 * max(1.0, abs(val)):
            loc, val = root, rv
    if val > vals[i]:
        loc, val = float(grid[i]), float(vals[i])
    return ArgminResult(float(loc), float(val), float(loc) >= 1.0 - RESISTANT_TOL)


def is_displacement_resistant(gen: Generator, lo: float = 1e-8, hi: float = 50.0) -> bool:
    return argmin_f(gen, lo, hi).resistant


@dataclass(frozen=True)
class TaxonomyRow:
    id: str
    convex: bool
    inducing: bool
    resistant: bool
    argmin_location: float


# Region membership read off the Venn diagram; chipo is placed from its
# known argmin W(1) < 1 and its t log t term.
REFERENCE_TAXONOMY = {
    "kl": (True, True, False),
    "reverse_kl": (True, True, True),
    "jeffrey": (True, True, True),
    "js": (True, True, True),
    "alpha:0.5": (True, True, True),
    "chi2": (True, False, True),
    "chipo": (True, True, False),
    "squaredpo": (False, True, True),
    "t_log_sq": (False, False, True),
}


def classify(gen: Generator) -> TaxonomyRow:
    verdict = is_dpo_inducing(gen)
    am = argmin_f(gen)
    return TaxonomyRow(gen.id, gen.convex, verdict.inducing, am.resistant, am.location)


def classify_taxonomy(alpha: float = gens.DEFAULT_ALPHA) -> list[TaxonomyRow]:
    return [classify(g) for g in gens.catalog(alpha)]


def taxonomy_mismatches(rows: list[TaxonomyRow]) -> list[str]:
    out = []
    for row in rows:
        want = REFERENCE_TAXONOMY.get(row.id)
        if want is None:
            continue
        got = (row.convex, row.inducing, row.resistant)
        if got != want:
            out.append(f"{row.id}: got {got}, expected {want}")
    return out
