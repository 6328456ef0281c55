"""Finite-alphabet RLHF problems with an f-divergence penalty.

For a single prompt with rewards ``r``, reference ``q`` and coefficient
``beta`` the full objective is::

    g(p) = r.p - beta * sum_i q_i f(p_i / q_i)

and the partial-sum objective restricts the penalty to an in-sample index
set ``S``.  This module evaluates both, solves them (numerically, and in
closed form where one exists) and checks first-order optimality, the
in-sample shrinkage bound and the implied reward gaps.
"""

from __future__ import annotations

import enum
import itertools
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp

from . import classifier
from ._rng import make_rng
from .generators import Generator, eval_f, f_divergence

log = logging.getLogger(__name__)

MAX_ITER = 5000
GRAD_TOL = 1e-10
MU_BISECT_TOL = 1e-12
MU_BRACKET_DOUBLINGS = 60


class ConvergenceWarning(UserWarning):
    pass


class HypothesisViolation(ValueError):
    """The premise of the shrinkage bound does not hold for this input."""


@dataclass(frozen=True)
class SimplexInstance:
    r: np.ndarray
    q: np.ndarray
    beta: float
    s_set: Optional[tuple] = None

    def __post_init__(self):
        r = np.asarray(self.r, dtype=float).copy()
        q = np.asarray(self.q, dtype=float).copy()
        if r.ndim != 1 or q.shape != r.shape:
            raise ValueError(f"r and q must be vectors of equal length, got {r.shape} and {q.shape}")
        if r.size < 2:
            raise ValueError("need at least two responses")
        if not np.all(np.isfinite(r)):
            raise ValueError("rewards must be finite")
        if np.any(q <= 0) or not np.all(np.isfinite(q)):
            raise ValueError("q must be strictly positive")
        if abs(q.sum() - 1.0) > 1e-9:
            raise ValueError(f"q sums to {q.sum()!r}, not 1")
        q = q / q.sum()
        if not (self.beta > 0 and math.isfinite(self.beta)):
            raise ValueError("beta must be positive")
        r.flags.writeable = False
        q.flags.writeable = False
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "beta", float(self.beta))
        if self.s_set is not None:
            s = tuple(sorted({int(i) for i in self.s_set}))
            if not s:
                raise ValueError("S must not be empty")
            if s[0] < 0 or s[-1] >= r.size:
                raise ValueError(f"S indices out of range for n={r.size}")
            if len(s) == r.size:
                raise ValueError("S must be a strict subset of the responses")
            object.__setattr__(self, "s_set", s)

    @property
    def n(self) -> int:
        return self.r.size

    @property
    def in_mask(self) -> np.ndarray:
        if self.s_set is None:
            raise ValueError("instance has no in-sample set S")
        m = np.zeros(self.n, dtype=bool)
        m[list(self.s_set)] = True
        return m

    @property
    def out_indices(self) -> np.ndarray:
        return np.flatnonzero(~self.in_mask)

    @property
    def r_hat(self) -> float:
        """Largest reward outside S."""
        return float(self.r[~self.in_mask].max())

    def argmax_outside(self) -> np.ndarray:
        out = self.out_indices
        return out[self.r[out] == self.r[out].max()]


def _check_p(inst: SimplexInstance, p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.shape != (inst.n,):
        raise ValueError(f"length mismatch: p has shape {p.shape}, instance has n={inst.n}")
    return p


def objective_full(inst: SimplexInstance, gen: Generator, p) -> float:
    p = _check_p(inst, p)
    return float(inst.r @ p) - inst.beta * f_divergence(p, inst.q, gen)


def objective_partial(inst: SimplexInstance, gen: Generator, p) -> float:
    p = _check_p(inst, p)
    m = inst.in_mask
    terms = inst.q[m] * np.asarray(eval_f(gen, p[m] / inst.q[m]))
    if np.any(np.isposinf(terms)):
        return -math.inf
    return float(inst.r @ p) - inst.beta * float(terms.sum())


def partial_penalty(inst: SimplexInstance, gen: Generator, p) -> float:
    """The (not necessarily non-negative) in-sample penalty sum."""
    p = _check_p(inst, p)
    m = inst.in_mask
    return float(np.sum(inst.q[m] * np.asarray(eval_f(gen, p[m] / inst.q[m]))))


def closed_form_kl(inst: SimplexInstance) -> np.ndarray:
    """``p_i ∝ q_i exp(r_i / beta)``, the maximiser of the KL-penalised objective."""
    z = np.log(inst.q) + inst.r / inst.beta
    return np.exp(z - logsumexp(z))


# ---------------------------------------------------------------------------
# generic face problem: maximise c.p - beta * sum_{i in pen} w_i f(p_i / w_i)
# over the relative interior of a simplex


@dataclass
class _Face:
    c: np.ndarray
    w: np.ndarray
    pen: np.ndarray
    beta: float
    gen: Generator

    @property
    def m(self) -> int:
        return self.c.size

    def value_from_logp(self, logp: np.ndarray) -> float:
        p = np.exp(logp)
        s = logp[self.pen] - np.log(self.w[self.pen])
        with np.errstate(all="ignore"):
            fv = np.asarray(self.gen.f(np.exp(s)), dtype=float)
        return float(self.c @ p - self.beta * np.sum(self.w[self.pen] * fv))

    def partials(self, p: np.ndarray) -> np.ndarray:
        """``dg/dp_i``; only meaningful where ``p_i > 0``."""
        a = self.c.astype(float).copy()
        t = p[self.pen] / self.w[self.pen]
        with np.errstate(all="ignore"):
            a[self.pen] -= self.beta * np.asarray(self.gen.f_prime(t), dtype=float)
        return a


def _softmax_logp(z: np.ndarray) -> np.ndarray:
    return z - logsumexp(z)


def _ascend_logits(face: _Face, z0: np.ndarray) -> tuple[np.ndarray, float, bool]:
    """L-BFGS on ``-g(softmax(z))``; returns (logp, value, converged)."""

    def negval_grad(z):
        logp = _softmax_logp(z)
        p = np.exp(logp)
        val = face.value_from_logp(logp)
        a = face.partials(p)
        if not (math.isfinite(val) and np.all(np.isfinite(a))):
            return 1e300, np.zeros_like(z)
        grad = p * (a - p @ a)
        return -val, -grad

    res = minimize(
        negval_grad,
        z0,
        jac=True,
        method="L-BFGS-B",
        options={"maxiter": MAX_ITER, "gtol": GRAD_TOL, "ftol": 1e-16, "maxcor": 20},
    )
    logp = _softmax_logp(res.x)
    return logp, face.value_from_logp(logp), bool(res.success)


def _kkt_spread(face: _Face, p: np.ndarray, tol: float = 0.0) -> float:
    a = face.partials(p)
    pos = p > tol
    if pos.sum() < 2:
        return 0.0
    return float(np.max(a[pos]) - np.min(a[pos]))


def _newton_interior(face: _Face, logp: np.ndarray, max_iter: int = 60) -> Optional[np.ndarray]:
    """Polish an interior KKT point of a face whose every coordinate is penalised.

    Unknowns are the log-ratios ``s_i = log(p_i / w_i)`` and the multiplier;
    the bordered diagonal system is solved by elimination.
    """
    w = face.w
    s = logp - np.log(w)
    t = np.exp(s)
    lam = float(np.exp(logp) @ face.partials(np.exp(logp)))
    gen, beta = face.gen, face.beta

    def resid(s, lam):
        t = np.exp(s)
        F = face.c - beta * np.asarray(gen.f_prime(t), dtype=float) - lam
        G = float(w @ t) - 1.0
        return F, G

    F, G = resid(s, lam)
    norm = max(np.max(np.abs(F)), abs(G))
    for _ in range(max_iter):
        if norm < 1e-15 * max(1.0, np.max(np.abs(face.c))):
            break
        t = np.exp(s)
        J = -beta * np.asarray(gen.f_second(t), dtype=float) * t
        if not np.all(np.isfinite(J)) or np.any(J == 0):
            return None
        a = w * t
        dlam = (-G + np.sum(a * F / J)) / np.sum(a / J)
        ds = (dlam - F) / J
        step = 1.0
        improved = False
        for _ls in range(40):
            s_new, lam_new = s + step * ds, lam + step * dlam
            F_new, G_new = resid(s_new, lam_new)
            n_new = max(np.max(np.abs(F_new)), abs(G_new))
            if np.isfinite(n_new) and n_new < norm:
                improved = True
                break
            step *= 0.5
        if not improved:
            break
        s, lam, F, G, norm = s_new, lam_new, F_new, G_new, n_new
    logp_new = s + np.log(w)
    return logp_new - logsumexp(logp_new)


def _newton_scalar(fun, dfun, x0: float, max_iter: int = 100) -> Optional[float]:
    x = x0
    fx = fun(x)
    for _ in range(max_iter):
        if abs(fx) < 1e-15:
            return x
        d = dfun(x)
        if not math.isfinite(d) or d == 0:
            return None
        step = -fx / d
        for _ls in range(60):
            xn = x + step
            fn = fun(xn)
            if math.isfinite(fn) and abs(fn) < abs(fx):
                break
            step *= 0.5
        else:
            return x if abs(fx) < 1e-9 else None
        x, fx = xn, fn
    return x


def _newton_fixed_multiplier(face: _Face, logp: np.ndarray, lam: float) -> Optional[np.ndarray]:
    """Polish a face with one free unpenalised coordinate holding multiplier ``lam``."""
    gen, beta = face.gen, face.beta
    out = logp.copy()
    pen_idx = np.flatnonzero(face.pen)
    for i in pen_idx:
        ci, wi = face.c[i], face.w[i]

        def fun(s, ci=ci):
            return float(ci - beta * gen.f_prime(np.exp(s)) - lam)

        def dfun(s):
            t = np.exp(s)
            return float(-beta * gen.f_second(t) * t)

        with np.errstate(all="ignore"):
            s = _newton_scalar(fun, dfun, float(logp[i] - np.log(wi)))
        if s is None:
            return None
        out[i] = s + np.log(wi)
    pen_mass = float(np.exp(out[pen_idx]).sum())
    free = 1.0 - pen_mass
    if free <= 0:
        return None
    free_idx = np.flatnonzero(~face.pen)
    out[free_idx] = np.log(free / free_idx.size)
    return out


def _solve_face(face: _Face, restarts: int, rng: np.random.Generator, start: Optional[np.ndarray] = None):
    """Best (p, value, converged) over multi-start ascent plus Newton polish."""
    starts = []
    if start is not None:
        starts.append(np.log(np.maximum(start, np.finfo(float).tiny)))
    starts.append(np.zeros(face.m))
    while len(starts) < max(restarts, 1) + (start is not None):
        starts.append(rng.normal(scale=2.0, size=face.m))
    best = (None, -math.inf, False)
    for z0 in starts:
        logp, val, ok = _ascend_logits(face, z0)
        if face.pen.all():
            with np.errstate(all="ignore"):
                pol = _newton_interior(face, logp)
        elif (~face.pen).sum() >= 1 and len(set(face.c[~face.pen].tolist())) == 1:
            pol = _newton_fixed_multiplier(face, logp, float(face.c[~face.pen][0]))
        else:
            pol = None
        if pol is not None and np.all(np.isfinite(pol)):
            with np.errstate(all="ignore"):
                pval = face.value_from_logp(pol)
            if pval >= val - 1e-12 * (1.0 + abs(val)):
                logp, val = pol, pval
                ok = ok or _kkt_spread(face, np.exp(logp)) < 1e-9
        if val > best[1]:
            best = (np.exp(logp), val, ok)
    return best


# ---------------------------------------------------------------------------
# boundary-capable search for generators that are not DPO-inducing


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort-based)."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ind = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / ind > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def _projected_ascent(value, partials, p0: np.ndarray, max_iter: int = MAX_ITER) -> tuple[np.ndarray, float]:
    p = project_simplex(p0)
    val = value(p)
    step = 1.0
    for _ in range(max_iter):
        g = partials(p)
        g = np.where(np.isfinite(g), g, np.sign(g) * 1e12)
        improved = False
        for _ls in range(60):
            cand = project_simplex(p + step * g)
            cv = value(cand)
            if cv > val + 1e-4 * float(g @ (cand - p)) and cv > val:
                improved = True
                break
            step *= 0.5
        if not improved:
            break
        moved = np.max(np.abs(cand - p))
        p, val = cand, cv
        step = min(step * 4.0, 1e6)
        if moved < 1e-15:
            break
    return p, val


def _boundary_search(value, partials, n: int, restarts: int, rng) -> tuple[np.ndarray, float]:
    cands = [np.eye(n)[i] for i in range(n)]
    cands.append(np.full(n, 1.0 / n))
    for _ in range(restarts):
        cands.append(rng.dirichlet(np.ones(n)))
    best = (None, -math.inf)
    for p0 in cands:
        p, v = _projected_ascent(value, partials, p0)
        if v > best[1]:
            best = (p, v)
    return best


# ---------------------------------------------------------------------------
# public solvers


def _is_inducing(gen: Generator) -> bool:
    return classifier.is_dpo_inducing(gen).inducing


def solve_full(inst: SimplexInstance, gen: Generator, restarts: int = 8, seed: int = 0) -> np.ndarray:
    """Maximiser of the full objective.

    DPO-inducing generators have interior optima, found by multi-start
    ascent on softmax logits followed by a Newton polish of the KKT system.
    Other generators additionally get a boundary-capable projected ascent.
    """
    rng = make_rng(seed, 1)
    face = _Face(inst.r, inst.q, np.ones(inst.n, dtype=bool), inst.beta, gen)
    inducing = _is_inducing(gen)
    start = closed_form_kl(inst) if gen.id == "kl" else inst.q
    p, val, ok = _solve_face(face, restarts, rng, start=start)
    if not inducing:
        warnings.warn(f"{gen.id} is not DPO-inducing: boundary optima are possible", UserWarning, stacklevel=2)

        def value(x):
            return objective_full(inst, gen, x)

        def partials(x):
            t = np.maximum(x / inst.q, 1e-12)
            return inst.r - inst.beta * np.asarray(gen.f_prime(t), dtype=float)

        pb, vb = _boundary_search(value, partials, inst.n, restarts, rng)
        if vb > val:
            p, val, ok = pb, vb, True
    if not ok:
        warnings.warn(f"ascent did not converge for {gen.id}; returning best iterate", ConvergenceWarning, stacklevel=2)
    if gen.id == "kl":
        gap = float(np.max(np.abs(p - closed_form_kl(inst))))
        if gap > 1e-6:
            warnings.warn(f"KL solution deviates from the closed form by {gap:.2e}", ConvergenceWarning, stacklevel=2)
    return p


def solve_partial_numeric(inst: SimplexInstance, gen: Generator, restarts: int = 8, seed: int = 0) -> np.ndarray:
    """Best point found for the partial-sum objective.

    Out-of-sample coordinates carry no penalty, so at an optimum only the
    reward-maximising out-of-sample responses can hold mass.  Two faces are
    searched: S alone, and S plus the aggregated argmax responses; a plain
    full-softmax ascent is added as a safety net.
    """
    if not _is_inducing(gen):
        warnings.warn(f"{gen.id} is not DPO-inducing: in-sample zeros are possible", UserWarning, stacklevel=2)
    rng = make_rng(seed, 2)
    S = np.array(inst.s_set)
    ties = inst.argmax_outside()
    k = S.size
    results = []

    face_a = _Face(inst.r[S], inst.q[S], np.ones(k, dtype=bool), inst.beta, gen)
    pa, va, oka = _solve_face(face_a, restarts, rng)
    full_a = np.zeros(inst.n)
    full_a[S] = pa
    results.append((full_a, oka))

    c_b = np.append(inst.r[S], inst.r_hat)
    w_b = np.append(inst.q[S], 1.0)
    pen_b = np.append(np.ones(k, dtype=bool), False)
    face_b = _Face(c_b, w_b, pen_b, inst.beta, gen)
    pb, vb, okb = _solve_face(face_b, restarts, rng)
    full_b = np.zeros(inst.n)
    full_b[S] = pb[:k]
    full_b[ties] = pb[k] / ties.size
    results.append((full_b, okb))

    face_c = _Face(inst.r, inst.q, inst.in_mask, inst.beta, gen)
    pc, vc, okc = _solve_face(face_c, max(1, restarts // 4), rng)
    results.append((pc, okc))

    best_p, best_v, best_ok = None, -math.inf, False
    for p, ok in results:
        v = objective_partial(inst, gen, p)
        # the full-softmax fallback only wins on a strict improvement
        if v > best_v + 1e-12 * (1.0 + abs(v)):
            best_p, best_v, best_ok = p, v, ok
    if not best_ok:
        warnings.warn(f"partial ascent did not converge for {gen.id}", ConvergenceWarning, stacklevel=2)
    return best_p


class PartialCase(str, enum.Enum):
    FAMILY_ON_ARGMAX = "FamilyOnArgmax"
    UNIQUE_INTERIOR_MU = "UniqueInteriorMu"


@dataclass(frozen=True)
class PartialOptimalSet:
    """Optimal set of the partial-sum problem for a convex invertible generator."""

    case: PartialCase
    n: int
    s_indices: tuple
    fixed_s_probs: np.ndarray
    z: np.ndarray
    r_hat: float
    free_mass: float = 0.0
    free_indices: tuple = ()
    mu: Optional[float] = None

    def point(self) -> np.ndarray:
        """Canonical member: leftover mass spread evenly over reward ties."""
        p = np.zeros(self.n)
        p[list(self.s_indices)] = self.fixed_s_probs
        if self.case is PartialCase.FAMILY_ON_ARGMAX and self.free_indices:
            p[list(self.free_indices)] = self.free_mass / len(self.free_indices)
        return p

    def contains(self, p, atol: float = 1e-10) -> bool:
        p = np.asarray(p, dtype=float)
        S = list(self.s_indices)
        if np.max(np.abs(p[S] - self.fixed_s_probs)) > atol:
            return False
        rest = np.ones(self.n, dtype=bool)
        rest[S] = False
        if self.case is PartialCase.UNIQUE_INTERIOR_MU:
            return bool(np.all(np.abs(p[rest]) <= atol))
        free = np.zeros(self.n, dtype=bool)
        free[list(self.free_indices)] = True
        return bool(np.all(np.abs(p[rest & ~free]) <= atol) and abs(p[free].sum() - self.free_mass) <= atol)


def _mass(inst: SimplexInstance, inv, mu: float, S) -> float:
    u = (inst.r[S] + mu) / inst.beta
    with np.errstate(all="ignore"):
        return float(np.sum(inst.q[S] * np.asarray(inv(u), dtype=float)))


def solve_partial_convex(inst: SimplexInstance, gen: Generator) -> PartialOptimalSet:
    """Closed-form optimal set of the partial-sum problem (convex, invertible ``f'``)."""
    if not gen.convex:
        raise ValueError(f"{gen.id} is not convex")
    if gen.f_prime_inverse is None:
        raise ValueError(f"{gen.id} has no invertible derivative")
    if not _is_inducing(gen):
        raise ValueError(f"{gen.id} is not DPO-inducing")
    inv = gen.f_prime_inverse
    S = np.array(inst.s_set)
    r_hat = inst.r_hat
    with np.errstate(all="ignore"):
        z = inst.q[S] * np.asarray(inv((inst.r[S] - r_hat) / inst.beta), dtype=float)
    total = float(np.sum(z))
    if total < 1.0:
        ties = tuple(int(i) for i in inst.argmax_outside())
        return PartialOptimalSet(
            case=PartialCase.FAMILY_ON_ARGMAX,
            n=inst.n,
            s_indices=inst.s_set,
            fixed_s_probs=z,
            z=z,
            r_hat=r_hat,
            free_mass=1.0 - total,
            free_indices=ties,
        )

    span = float(np.max(np.abs(inst.r))) + 10.0 * inst.beta
    lo, hi = -span, span
    for _ in range(MU_BRACKET_DOUBLINGS):
        if _mass(inst, inv, lo, S) < 1.0:
            break
        lo -= hi - lo
    else:
        raise RuntimeError("could not bracket mu from below")
    for _ in range(MU_BRACKET_DOUBLINGS):
        if _mass(inst, inv, hi, S) > 1.0:
            break
        hi += hi - lo
    else:
        raise RuntimeError("could not bracket mu from above")
    mu = 0.5 * (lo + hi)
    for _ in range(400):
        mu = 0.5 * (lo + hi)
        m = _mass(inst, inv, mu, S)
        if abs(m - 1.0) <= MU_BISECT_TOL:
            break
        if m < 1.0:
            lo = mu
        else:
            hi = mu
        if hi - lo <= 4 * np.finfo(float).eps * max(1.0, abs(mu)):
            break
    with np.errstate(all="ignore"):
        ps = inst.q[S] * np.asarray(inv((inst.r[S] + mu) / inst.beta), dtype=float)
    ps = ps / ps.sum()
    return PartialOptimalSet(
        case=PartialCase.UNIQUE_INTERIOR_MU,
        n=inst.n,
        s_indices=inst.s_set,
        fixed_s_probs=ps,
        z=z,
        r_hat=r_hat,
        mu=float(mu),
    )


def kkt_partials(inst: SimplexInstance, gen: Generator, p, mode: str = "full") -> np.ndarray:
    """Partial derivatives of the full or partial objective at ``p``."""
    p = _check_p(inst, p)
    if mode == "full":
        pen = np.ones(inst.n, dtype=bool)
    elif mode == "partial":
        pen = inst.in_mask
    else:
        raise ValueError(f"mode must be 'full' or 'partial', got {mode!r}")
    a = inst.r.copy()
    t = p[pen] / inst.q[pen]
    with np.errstate(all="ignore"):
        a[pen] -= inst.beta * np.asarray(gen.f_prime(t), dtype=float)
    return a


def verify_kkt_equal_partials(inst: SimplexInstance, gen: Generator, p, tol: float = 1e-6, mode: str = "full") -> bool:
    """All coordinates with ``p_i > tol`` share the same partial derivative."""
    p = _check_p(inst, p)
    pos = p > tol
    if pos.sum() < 2:
        return True
    a = kkt_partials(inst, gen, p, mode)[pos]
    if not np.all(np.isfinite(a)):
        return False
    return bool(np.max(a) - np.min(a) <= tol)


def check_displacement_bound(inst: SimplexInstance, gen: Generator, p, c: Optional[float] = None) -> bool:
    """``p_i <= c q_i`` on S, where ``c`` is the global minimiser of ``f``.

    Raises :class:`HypothesisViolation` when the premises do not hold: the
    minimiser must lie in (0, 1] and no in-sample reward may exceed the best
    out-of-sample reward.
    """
    p = _check_p(inst, p)
    if c is None:
        c = classifier.argmin_f(gen).location
    if not (0.0 < c <= 1.0 + classifier.RESISTANT_TOL):
        raise HypothesisViolation(f"{gen.id} has no global minimiser in (0, 1] (found {c:.6g})")
    m = inst.in_mask
    if float(inst.r[m].max()) > inst.r_hat:
        raise HypothesisViolation("an in-sample reward exceeds every out-of-sample reward")
    return bool(np.all(p[m] <= c * inst.q[m] + 1e-9))


def implied_reward_gap(gen: Generator, beta: float, p_w_ratio: float, p_l_ratio: float) -> float:
    """``beta f'(winner ratio) - beta f'(loser ratio)``."""
    if p_w_ratio <= 0 or p_l_ratio <= 0:
        raise ValueError("ratios must be strictly positive")
    fw = float(gen.f_prime(np.asarray(p_w_ratio, dtype=float)))
    fl = float(gen.f_prime(np.asarray(p_l_ratio, dtype=float)))
    return beta * fw - beta * fl


def implied_gaps(inst: SimplexInstance, gen: Generator, p, pairs: Optional[Sequence] = None) -> dict:
    """Implied reward gaps for ordered pairs of S (or for ``pairs``)."""
    p = _check_p(inst, p)
    if pairs is None:
        pairs = list(itertools.permutations(inst.s_set, 2))
    out = {}
    for w, l in pairs:
        out[(int(w), int(l))] = implied_reward_gap(gen, inst.beta, p[w] / inst.q[w], p[l] / inst.q[l])
    return out


def boundary_instance(gen: Generator, n: int = 3, beta: float = 1.0) -> SimplexInstance:
    """Instance whose optimum is the vertex ``e_1`` when ``f`` is not DPO-inducing.

    Uniform reference, ``r_1 = max(beta D - beta m + 1, 1)`` and zero
    elsewhere, where ``m`` lower-bounds ``(f(t) - f(0)) / t`` on ``(0, n]`` and
    ``D`` is the largest ``f'`` on ``[1, 2n]``.
    """
    if math.isinf(gen.f_at_zero):
        raise ValueError("construction needs a finite f(0)")
    ts = np.geomspace(1e-9, n, 200_001)
    with np.errstate(all="ignore"):
        # small margin keeps m a lower bound below the first grid point
        m = float(np.min((np.asarray(gen.f(ts)) - gen.f_at_zero) / ts)) - 1e-6
    D = float(np.max(gen.f_prime(np.linspace(1.0, 2.0 * n, 200_001))))
    r = np.zeros(n)
    r[0] = max(beta * D - beta * m + 1.0, 1.0)
    return SimplexInstance(r, np.full(n, 1.0 / n), beta)


def random_instance(rng: np.random.Generator, n: int, s_size: Optional[int] = None, reward_scale: float = 1.0,
                    beta_range=(0.3, 2.0)) -> SimplexInstance:
    """Random instance with a Dirichlet(1) reference and Gaussian rewards."""
    q = rng.dirichlet(np.ones(n))
    q = np.maximum(q, 1e-3)
    q = q / q.sum()
    r = reward_scale * rng.normal(size=n)
    beta = float(rng.uniform(*beta_range))
    s_set = None
    if s_size is not None:
        s_set = tuple(int(i) for i in rng.choice(n, size=s_size, replace=False))
    return SimplexInstance(r, q, beta, s_set)
