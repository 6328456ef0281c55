"""Preference losses with analytic gradients.

All functions work elementwise on scalars or numpy arrays.  Gradients are
with respect to the policy log-probabilities of the winner and the loser;
reference log-probabilities are frozen.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from . import generators as gens
from .generators import Generator

DEFAULT_CLIP = 50.0


@dataclass(frozen=True)
class TripleLogProbs:
    lp_theta_w: np.ndarray
    lp_ref_w: np.ndarray
    lp_theta_l: np.ndarray
    lp_ref_l: np.ndarray

    @property
    def delta_w(self):
        return np.asarray(self.lp_theta_w, dtype=float) - np.asarray(self.lp_ref_w, dtype=float)

    @property
    def delta_l(self):
        return np.asarray(self.lp_theta_l, dtype=float) - np.asarray(self.lp_ref_l, dtype=float)


@dataclass(frozen=True)
class LossValue:
    value: np.ndarray
    grad_w: np.ndarray
    grad_l: np.ndarray


def _out(x):
    x = np.asarray(x, dtype=float)
    return float(x) if x.ndim == 0 else x


def bt_nll(reward_gap):
    """``-log sigmoid(gap)`` as ``softplus(-gap)``."""
    return _out(np.logaddexp(0.0, -np.asarray(reward_gap, dtype=float)))


def _from_gap(gap, dgap_dw, dgap_dl) -> LossValue:
    # d/dgap softplus(-gap) = -sigmoid(-gap)
    s = expit(-gap)
    return LossValue(bt_nll(gap), _out(-s * dgap_dw), _out(-s * dgap_dl))


def dpo_loss(t: TripleLogProbs, beta: float) -> LossValue:
    if beta <= 0:
        raise ValueError("beta must be positive")
    gap = beta * (t.delta_w - t.delta_l)
    return _from_gap(gap, beta, -beta)


def fdpo_loss(t: TripleLogProbs, gen: Generator, beta: float) -> LossValue:
    """``-log sigmoid(beta f'(rho_w) - beta f'(rho_l))`` with ``rho = exp(delta)``.

    By the chain rule ``d f'(e^d) / dd = f''(e^d) e^d``.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    rw, rl = np.exp(t.delta_w), np.exp(t.delta_l)
    gap = beta * (np.asarray(gen.f_prime(rw)) - np.asarray(gen.f_prime(rl)))
    dw = beta * np.asarray(gen.f_second(rw)) * rw
    dl = -beta * np.asarray(gen.f_second(rl)) * rl
    return _from_gap(gap, dw, dl)


def adaptive_beta(delta, beta: float, clip: float = DEFAULT_CLIP):
    """``beta * exp(min(-delta, clip))``: beta divided by the policy/reference ratio."""
    return _out(beta * np.exp(np.minimum(-np.asarray(delta, dtype=float), clip)))


def squaredpo_loss(t: TripleLogProbs, beta: float, clip: float = DEFAULT_CLIP, stop_gradient_beta: bool = False) -> LossValue:
    """DPO with the adaptive coefficient ``beta_theta`` on each log-ratio.

    The coefficient is clipped from above only.  In the clipped regime it is
    constant, so only the log-ratio factor carries gradient.  With
    ``stop_gradient_beta`` the coefficient is treated as a constant
    everywhere.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    if clip <= 0:
        raise ValueError("clip must be positive")
    dw, dl = t.delta_w, t.delta_l
    bw, bl = adaptive_beta(dw, beta, clip), adaptive_beta(dl, beta, clip)
    gap = bw * dw - bl * dl
    if stop_gradient_beta:
        gw, gl = bw, -bl
    else:
        # d/dd [beta e^{-d} d] = beta e^{-d} (1 - d) while unclipped
        gw = np.where(-dw < clip, bw * (1.0 - dw), bw)
        gl = -np.where(-dl < clip, bl * (1.0 - dl), bl)
    return _from_gap(gap, gw, gl)


def loss_by_id(loss_id: str, t: TripleLogProbs, beta: float, clip: float = DEFAULT_CLIP,
               stop_gradient_beta: bool = False) -> LossValue:
    """Dispatch on ``"dpo"``, ``"squaredpo"`` or ``"fdpo:<generator-id>"``."""
    key = loss_id.strip().lower()
    if key == "dpo":
        return dpo_loss(t, beta)
    if key == "squaredpo":
        return squaredpo_loss(t, beta, clip, stop_gradient_beta)
    if key.startswith("fdpo:"):
        return fdpo_loss(t, gens.get(key.split(":", 1)[1]), beta)
    raise KeyError(f"unknown loss id {loss_id!r}")


def validate_loss_id(loss_id: str) -> str:
    key = loss_id.strip().lower()
    if key in ("dpo", "squaredpo"):
        return key
    if key.startswith("fdpo:"):
        gens.get(key.split(":", 1)[1])
        return key
    raise KeyError(f"unknown loss id {loss_id!r}")
