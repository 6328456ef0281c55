"""Catalog of f-divergence generating functions.

Every generator carries vectorised evaluators for ``f``, ``f'`` and ``f''``
(the last is needed by the f-DPO gradients and the KKT Newton polish), an
optional inverse of ``f'`` for entries whose derivative is monotone, and the
value ``f(0)`` as an extended real (``math.inf`` when the generator blows up
at the origin).

Generators are addressed by string id::

    kl, reverse_kl, jeffrey, js, alpha:<value>, chi2, chipo, squaredpo, t_log_sq
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import wrightomega, xlogy

ArrayFn = Callable[[np.ndarray], np.ndarray]

DEFAULT_ALPHA = 0.5
LOG2 = math.log(2.0)


@dataclass(frozen=True)
class Generator:
    """A named generating function ``f: R_+ -> R`` with ``f(1) = 0``."""

    id: str
    f: ArrayFn = field(repr=False)
    f_prime: ArrayFn = field(repr=False)
    f_second: ArrayFn = field(repr=False)
    f_at_zero: float
    convex: bool
    f_prime_inverse: Optional[ArrayFn] = field(default=None, repr=False)
    alpha: Optional[float] = None
    formula: str = ""

    @property
    def invertible(self) -> bool:
        return self.f_prime_inverse is not None

    def __call__(self, t):
        return eval_f(self, t)


def _arr(t):
    return np.asarray(t, dtype=float)


def _scalar_or_array(out, like):
    if np.ndim(like) == 0:
        return float(out)
    return out


# ---------------------------------------------------------------------------
# raw evaluators; all expect strictly positive input except where noted


def _kl_f(t):
    # xlogy gives 0*log(0) = 0 exactly
    return xlogy(t, t)


def _kl_inv(u):
    return np.exp(u - 1.0)


def _rkl_inv(u):
    u = _arr(u)
    with np.errstate(divide="ignore"):
        return np.where(u < 0.0, -1.0 / np.minimum(u, -1e-300), np.inf)


def _jeffrey_inv(u):
    # log t + 1 - 1/t = u  <=>  w + log w = 1 - u  with  w = 1/t
    return 1.0 / wrightomega(1.0 - _arr(u)).real


def _js_f(t):
    t = _arr(t)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = xlogy(t, t) - (t + 1.0) * np.log1p((t - 1.0) / 2.0)
    return out


def _js_fp(t):
    t = _arr(t)
    with np.errstate(divide="ignore"):
        return LOG2 - np.log1p(1.0 / t)


def _js_inv(u):
    u = _arr(u)
    gap = LOG2 - u
    with np.errstate(divide="ignore", over="ignore"):
        out = 1.0 / np.expm1(np.maximum(gap, 0.0))
    return np.where(gap > 0.0, out, np.inf)


def _chipo_inv(u):
    return wrightomega(_arr(u)).real


def _sq_f(t):
    with np.errstate(divide="ignore"):
        return 0.5 * np.log(t) ** 2


def _sq_fp(t):
    return np.log(t) / t


def _sq_fpp(t):
    return (1.0 - np.log(t)) / t**2


def _tls_f(t):
    t = _arr(t)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = 0.5 * t * np.log(t) ** 2
    return np.where(t < 1e-300, 0.0, out)


def _tls_fp(t):
    lt = np.log(t)
    return 0.5 * lt**2 + lt


def _make_alpha(alpha: float) -> Generator:
    a = float(alpha)
    if a == 0.0 or a == 1.0 or not math.isfinite(a):
        raise ValueError(f"alpha-divergence needs alpha outside {{0, 1}}, got {alpha!r}")
    denom = a * (a - 1.0)

    def f(t):
        t = _arr(t)
        with np.errstate(divide="ignore", over="ignore"):
            return (np.power(t, 1.0 - a) - (1.0 - a) * t - a) / denom

    def fp(t):
        return -np.expm1(-a * np.log(t)) / a

    def fpp(t):
        return np.power(t, -a - 1.0)

    def inv(u):
        u = _arr(u)
        base = 1.0 - a * u
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            out = np.power(np.maximum(base, 0.0), -1.0 / a)
        # outside the range of f' the preimage sits at 0 or +inf
        edge = np.inf if a > 0 else 0.0
        return np.where(base > 0.0, out, edge)

    f0 = 1.0 / (1.0 - a) if a < 1.0 else math.inf
    return Generator(
        id=f"alpha:{a:g}",
        f=f,
        f_prime=fp,
        f_second=fpp,
        f_at_zero=f0,
        convex=True,
        f_prime_inverse=inv,
        alpha=a,
        formula="(t^(1-a) - (1-a) t - a) / (a (a - 1))",
    )


KL = Generator(
    id="kl",
    f=_kl_f,
    f_prime=lambda t: np.log(t) + 1.0,
    f_second=lambda t: 1.0 / _arr(t),
    f_at_zero=0.0,
    convex=True,
    f_prime_inverse=_kl_inv,
    formula="t log t",
)

REVERSE_KL = Generator(
    id="reverse_kl",
    f=lambda t: -np.log(t),
    f_prime=lambda t: -1.0 / _arr(t),
    f_second=lambda t: 1.0 / _arr(t) ** 2,
    f_at_zero=math.inf,
    convex=True,
    f_prime_inverse=_rkl_inv,
    formula="-log t",
)

JEFFREY = Generator(
    id="jeffrey",
    # (t - 1) log t is t log t - log t without the cancellation near t = 1
    f=lambda t: (_arr(t) - 1.0) * np.log(t),
    f_prime=lambda t: np.log(t) + 1.0 - 1.0 / _arr(t),
    f_second=lambda t: 1.0 / _arr(t) + 1.0 / _arr(t) ** 2,
    f_at_zero=math.inf,
    convex=True,
    f_prime_inverse=_jeffrey_inv,
    formula="t log t - log t",
)

JENSEN_SHANNON = Generator(
    id="js",
    f=_js_f,
    f_prime=_js_fp,
    f_second=lambda t: 1.0 / (_arr(t) * (_arr(t) + 1.0)),
    f_at_zero=LOG2,
    convex=True,
    f_prime_inverse=_js_inv,
    formula="-(t + 1) log((t + 1) / 2) + t log t",
)

CHI2 = Generator(
    id="chi2",
    f=lambda t: (_arr(t) - 1.0) ** 2,
    f_prime=lambda t: 2.0 * (_arr(t) - 1.0),
    f_second=lambda t: np.full_like(_arr(t), 2.0),
    f_at_zero=1.0,
    convex=True,
    f_prime_inverse=lambda u: np.maximum(1.0 + _arr(u) / 2.0, 0.0),
    formula="(t - 1)^2",
)

CHIPO = Generator(
    id="chipo",
    f=lambda t: 0.5 * (_arr(t) - 1.0) ** 2 + _kl_f(t),
    f_prime=lambda t: _arr(t) + np.log(t),
    f_second=lambda t: 1.0 + 1.0 / _arr(t),
    f_at_zero=0.5,
    convex=True,
    f_prime_inverse=_chipo_inv,
    formula="(t - 1)^2 / 2 + t log t",
)

SQUAREDPO = Generator(
    id="squaredpo",
    f=_sq_f,
    f_prime=_sq_fp,
    f_second=_sq_fpp,
    f_at_zero=math.inf,
    convex=False,
    formula="(log t)^2 / 2",
)

T_LOG_SQ = Generator(
    id="t_log_sq",
    f=_tls_f,
    f_prime=_tls_fp,
    f_second=lambda t: (np.log(t) + 1.0) / _arr(t),
    f_at_zero=0.0,
    convex=False,
    formula="t (log t)^2 / 2",
)

_FIXED = {g.id: g for g in (KL, REVERSE_KL, JEFFREY, JENSEN_SHANNON, CHI2, CHIPO, SQUAREDPO, T_LOG_SQ)}


def alpha_divergence(alpha: float = DEFAULT_ALPHA) -> Generator:
    return _make_alpha(alpha)


def catalog(alpha: float = DEFAULT_ALPHA) -> list[Generator]:
    """The nine catalog generators, with the alpha-divergence at ``alpha``."""
    return [
        KL,
        REVERSE_KL,
        JEFFREY,
        JENSEN_SHANNON,
        _make_alpha(alpha),
        CHI2,
        CHIPO,
        SQUAREDPO,
        T_LOG_SQ,
    ]


def get(gen_id: str) -> Generator:
    """Look a generator up by id; ``alpha`` alone means ``alpha:0.5``."""
    key = gen_id.strip().lower()
    if key in _FIXED:
        return _FIXED[key]
    if key == "alpha":
        return _make_alpha(DEFAULT_ALPHA)
    if key.startswith("alpha:"):
        try:
            a = float(key.split(":", 1)[1])
        except ValueError:
            raise KeyError(f"bad alpha value in generator id {gen_id!r}") from None
        return _make_alpha(a)
    raise KeyError(f"unknown generator id {gen_id!r}")


def eval_f(gen: Generator, t):
    """``f(t)`` for ``t >= 0``; returns ``gen.f_at_zero`` where ``t == 0``."""
    ta = _arr(t)
    if np.any(ta < 0) or np.any(np.isnan(ta)):
        raise ValueError("f is only defined on t >= 0")
    pos = ta > 0
    safe = np.where(pos, ta, 1.0)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        vals = np.asarray(gen.f(safe), dtype=float)
    out = np.where(pos, vals, gen.f_at_zero)
    return _scalar_or_array(out, t)


def eval_f_prime(gen: Generator, t):
    ta = _arr(t)
    if np.any(ta <= 0):
        raise ValueError("f' is only evaluated on t > 0")
    with np.errstate(divide="ignore", over="ignore"):
        out = np.asarray(gen.f_prime(ta), dtype=float)
    return _scalar_or_array(out, t)


def f_divergence(p, q, gen: Generator) -> float:
    """``sum_i q_i f(p_i / q_i)`` as an extended real."""
    p = _arr(p)
    q = _arr(q)
    if p.shape != q.shape or p.ndim != 1:
        raise ValueError(f"length mismatch: {p.shape} vs {q.shape}")
    if np.any(q <= 0):
        raise ValueError("q must be strictly positive")
    if np.any(p < 0):
        raise ValueError("p must be non-negative")
    if math.isinf(gen.f_at_zero) and np.any(p == 0):
        return math.inf
    terms = q * np.asarray(eval_f(gen, p / q))
    if np.any(np.isposinf(terms)):
        return math.inf
    return float(np.sum(terms))


def check_distribution(p, name: str = "p", atol: float = 1e-12) -> np.ndarray:
    p = _arr(p)
    if p.ndim != 1 or p.size < 2:
        raise ValueError(f"{name} must be a vector of length >= 2")
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise ValueError(f"{name} has negative or non-finite entries")
    if abs(p.sum() - 1.0) > atol:
        raise ValueError(f"{name} sums to {p.sum()!r}, not 1")
    return p
