"""Tabular preference-optimisation laboratory.

A synthetic world holds a latent reward and a reference policy for each
prompt.  Preferences are sampled from the Bradley-Terry model, a tabular
softmax policy is trained from the reference with plain full-batch gradient
descent, and the chosen log-ratios are tracked across epochs.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, log_softmax

from . import losses
from ._rng import make_rng

# stream keys under the user seed
_REWARD_STREAM = 0
_REF_STREAM = 1
_PREF_STREAM = 2

DECREASE_TOL = 1e-12
# Mean-loss gradients scale like beta / (2 * num_triples) per logit, so at
# beta = 0.01 and 800 triples a unit step barely moves the table.  This step
# moves mean chosen log-ratios by about 0.1 over four epochs.
DEFAULT_LR = 5000.0


class TrainingDiverged(RuntimeError):
    """Raised when the loss turns NaN; ``checkpoints`` holds every good epoch."""

    def __init__(self, message, checkpoints):
        super().__init__(message)
        self.checkpoints = checkpoints


@dataclass(frozen=True)
class SyntheticWorld:
    num_prompts: int
    vocab_size: int
    true_reward: np.ndarray
    ref_logits: np.ndarray
    seed: int

    @property
    def ref_logprobs(self) -> np.ndarray:
        return log_softmax(self.ref_logits, axis=1)

    @property
    def displacement_free(self) -> bool:
        """With two responses there is nowhere for in-sample mass to go."""
        return self.vocab_size == 2


@dataclass(frozen=True)
class PreferenceTriple:
    prompt: int
    winner: int
    loser: int

    def __post_init__(self):
        if self.winner == self.loser:
            raise ValueError("winner and loser must differ")


@dataclass(frozen=True)
class TabularPolicy:
    logits: np.ndarray
    epoch_tag: str

    def logprobs(self) -> np.ndarray:
        return log_softmax(self.logits, axis=1)

    def probs(self) -> np.ndarray:
        return np.exp(self.logprobs())


def generate_world(num_prompts: int = 200, vocab_size: int = 16, reward_scale: float = 1.0,
                   ref_scale: float = 1.0, seed: int = 0) -> SyntheticWorld:
    """Draw standard-normal rewards and reference logits, each scaled."""
    if num_prompts < 1 or vocab_size < 2:
        raise ValueError("need num_prompts >= 1 and vocab_size >= 2")
    if reward_scale < 0 or ref_scale < 0:
        raise ValueError("scales must be non-negative")
    shape = (int(num_prompts), int(vocab_size))
    reward = reward_scale * make_rng(seed, _REWARD_STREAM).standard_normal(shape)
    ref = ref_scale * make_rng(seed, _REF_STREAM).standard_normal(shape)
    reward.setflags(write=False)
    ref.setflags(write=False)
    return SyntheticWorld(shape[0], shape[1], reward, ref, int(seed))


@dataclass(frozen=True)
class ToyConfig:
    """Default experiment for the displacement study."""

    num_prompts: int = 200
    vocab_size: int = 16
    reward_scale: float = 1.0
    ref_scale: float = 1.0
    pairs_per_prompt: int = 4
    loss: str = "dpo"
    beta: float = 0.01
    lr: float = DEFAULT_LR
    epochs: int = 4
    clip: float = losses.DEFAULT_CLIP
    stop_gradient_beta: bool = False
    steps_per_epoch: int = 1


@dataclass(frozen=True)
class RunResult:
    world: SyntheticWorld
    triples: list
    checkpoints: list
    report: "DisplacementReport"
    diverged: str | None = None


def run_experiment(cfg: ToyConfig, seed: int = 0) -> RunResult:
    """World, preferences and training all derived from one seed.

    A divergent run still yields a report over the good checkpoints when
    there are at least two of them.
    """
    world = generate_world(cfg.num_prompts, cfg.vocab_size, cfg.reward_scale, cfg.ref_scale, seed)
    triples = sample_preferences(world, cfg.pairs_per_prompt, seed)
    diverged = None
    try:
        ckpts = train(world, triples, cfg.loss, cfg.beta, cfg.lr, cfg.epochs, seed, clip=cfg.clip,
                      stop_gradient_beta=cfg.stop_gradient_beta, steps_per_epoch=cfg.steps_per_epoch)
    except TrainingDiverged as exc:
        ckpts, diverged = exc.checkpoints, str(exc)
    report = displacement_report(ckpts, world, triples) if len(ckpts) >= 2 else None
    return RunResult(world, triples, ckpts, report, diverged)


def sample_preferences(world: SyntheticWorld, pairs_per_prompt: int = 4, seed: int = 0) -> list[PreferenceTriple]:
    """Sample unordered response pairs per prompt and label them with Bradley-Terry.

    For a pair ``(a, b)`` with ``a < b`` the label is ``a`` with probability
    ``sigmoid(r_a - r_b)``.  Pairs are drawn independently, so a prompt may
    see the same pair twice.
    """
    if pairs_per_prompt < 1:
        raise ValueError("pairs_per_prompt must be >= 1")
    if world.vocab_size < 2:
        raise ValueError("vocab_size must be >= 2")
    rng = make_rng(seed, _PREF_STREAM)
    P, k = world.num_prompts, int(pairs_per_prompt)
    first = rng.integers(0, world.vocab_size, size=(P, k))
    # second index uniform over the other responses
    second = (first + rng.integers(1, world.vocab_size, size=(P, k))) % world.vocab_size
    a, b = np.minimum(first, second), np.maximum(first, second)
    rows = np.arange(P)[:, None]
    p_a = expit(world.true_reward[rows, a] - world.true_reward[rows, b])
    a_wins = rng.random((P, k)) < p_a
    out = []
    for x in range(P):
        for j in range(k):
            w, l = (a[x, j], b[x, j]) if a_wins[x, j] else (b[x, j], a[x, j])
            out.append(PreferenceTriple(x, int(w), int(l)))
    return out


def _triple_arrays(triples):
    if len(triples) == 0:
        raise ValueError("need at least one triple")
    arr = np.array([(t.prompt, t.winner, t.loser) for t in triples], dtype=np.int64)
    return arr[:, 0], arr[:, 1], arr[:, 2]


def _check_triples(world, x, w, l):
    if x.min() < 0 or x.max() >= world.num_prompts:
        raise ValueError("triple prompt index out of range")
    if min(w.min(), l.min()) < 0 or max(w.max(), l.max()) >= world.vocab_size:
        raise ValueError("triple response index out of range")


def mean_loss_and_grad(logits, ref_logprobs, triples, loss_id, beta, clip=losses.DEFAULT_CLIP,
                       stop_gradient_beta=False):
    """Mean loss over ``triples`` and its gradient with respect to ``logits``."""
    x, w, l = _triple_arrays(triples)
    lp = log_softmax(logits, axis=1)
    t = losses.TripleLogProbs(lp[x, w], ref_logprobs[x, w], lp[x, l], ref_logprobs[x, l])
    lv = losses.loss_by_id(loss_id, t, beta, clip, stop_gradient_beta)
    m = len(x)
    gw = np.atleast_1d(lv.grad_w) / m
    gl = np.atleast_1d(lv.grad_l) / m
    # d log pi_y / d z_k = [y == k] - pi_k
    grad = np.zeros_like(logits)
    np.add.at(grad, (x, w), gw)
    np.add.at(grad, (x, l), gl)
    coeff = np.zeros(logits.shape[0])
    np.add.at(coeff, x, gw + gl)
    grad -= coeff[:, None] * np.exp(lp)
    return float(np.mean(lv.value)), grad


def train(world: SyntheticWorld, triples, loss_id: str = "dpo", beta: float = 0.01, lr: float = DEFAULT_LR,
          epochs: int = 4, seed: int = 0, *, clip: float = losses.DEFAULT_CLIP,
          stop_gradient_beta: bool = False, steps_per_epoch: int = 1) -> list[TabularPolicy]:
    """Train a tabular policy from the reference.

    Returns ``epochs + 1`` checkpoints, the first being the reference.  Each
    epoch takes ``steps_per_epoch`` full-batch gradient steps on the mean
    loss.  ``seed`` is accepted for interface symmetry; full-batch descent
    draws no randomness.
    """
    loss_id = losses.validate_loss_id(loss_id)
    if epochs < 0 or steps_per_epoch < 1:
        raise ValueError("epochs must be >= 0 and steps_per_epoch >= 1")
    if beta <= 0 or lr < 0:
        raise ValueError("need beta > 0 and lr >= 0")
    x, w, l = _triple_arrays(triples)
    _check_triples(world, x, w, l)
    ref_lp = world.ref_logprobs
    logits = np.array(world.ref_logits, dtype=float)
    checkpoints = [TabularPolicy(logits.copy(), "epoch-0")]
    for epoch in range(1, epochs + 1):
        for _ in range(steps_per_epoch):
            with np.errstate(all="ignore"):
                value, grad = mean_loss_and_grad(logits, ref_lp, triples, loss_id, beta, clip, stop_gradient_beta)
            if not (math.isfinite(value) and np.all(np.isfinite(grad))):
                raise TrainingDiverged(f"non-finite loss during epoch {epoch}", checkpoints)
            with np.errstate(all="ignore"):
                logits = logits - lr * grad
        checkpoints.append(TabularPolicy(logits.copy(), f"epoch-{epoch}"))
    return checkpoints


def chosen_log_ratios(policy: TabularPolicy, world: SyntheticWorld, triples) -> np.ndarray:
    """``log pi(winner) - log pi_ref(winner)`` for every triple."""
    if policy.logits.shape != world.ref_logits.shape:
        raise ValueError("policy and world shapes differ")
    x, w, _ = _triple_arrays(triples)
    return policy.logprobs()[x, w] - world.ref_logprobs[x, w]


def effective_betas(policy: TabularPolicy, world: SyntheticWorld, triples, beta: float,
                    clip: float = losses.DEFAULT_CLIP) -> np.ndarray:
    """SquaredPO's adaptive winner coefficient at a checkpoint."""
    return np.atleast_1d(losses.adaptive_beta(chosen_log_ratios(policy, world, triples), beta, clip))


@dataclass
class DisplacementReport:
    per_winner_logratio: np.ndarray  # triples x (epochs + 1), column 0 is the reference
    mean_per_epoch: np.ndarray
    median_per_epoch: np.ndarray
    # horizon epoch -> fraction, or None when no winner decreased in epoch 1
    monotone_fractions: dict = field(default_factory=dict)
    monotone_counts: dict = field(default_factory=dict)
    denominator: int = 0

    @property
    def epochs(self) -> int:
        return self.per_winner_logratio.shape[1] - 1

    def to_dict(self) -> dict:
        lr = self.per_winner_logratio
        return {
            "epochs": self.epochs,
            "num_triples": int(lr.shape[0]),
            "mean_per_epoch": [float(v) for v in self.mean_per_epoch],
            "median_per_epoch": [float(v) for v in self.median_per_epoch],
            "min_logratio_per_epoch": [float(v) for v in lr.min(axis=0)],
            "max_logratio_per_epoch": [float(v) for v in lr.max(axis=0)],
            "first_epoch_decreasing": int(self.denominator),
            "monotone_fractions": {str(k): v for k, v in self.monotone_fractions.items()},
            "monotone_counts": {str(k): int(v) for k, v in self.monotone_counts.items()},
        }


def displacement_report(checkpoints, world: SyntheticWorld, triples, tol: float = DECREASE_TOL) -> DisplacementReport:
    """Per-winner trajectories and monotone-decrease fractions.

    Among winners whose log-ratio is below zero after epoch 1, the fraction
    for horizon ``k`` counts those whose log-ratio drops by more than
    ``tol`` at every epoch from 2 to ``k``.  Horizons start at 2, so a
    single-epoch run has no fractions.
    """
    if len(checkpoints) < 2:
        raise ValueError("need at least 2 checkpoints")
    lr = np.stack([chosen_log_ratios(c, world, triples) for c in checkpoints], axis=1)
    mean = lr.mean(axis=0)
    median = np.median(lr, axis=0)
    first_down = lr[:, 1] < 0
    denom = int(first_down.sum())
    fractions, counts = {}, {}
    still = first_down.copy()
    for k in range(2, lr.shape[1]):
        still &= (lr[:, k] - lr[:, k - 1]) < -tol
        counts[k] = int(still.sum())
        fractions[k] = counts[k] / denom if denom else None
    return DisplacementReport(lr, mean, median, fractions, counts, denom)


def write_trajectories_csv(path, report: DisplacementReport) -> None:
    lr = report.per_winner_logratio
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["triple_id", "epoch", "logratio"])
        for i in range(lr.shape[0]):
            for e in range(lr.shape[1]):
                out.writerow([i, e, repr(float(lr[i, e]))])


def write_histogram_csv(path, report: DisplacementReport, epoch: int | None = None) -> None:
    """One row per triple with its log-ratio at ``epoch`` (default: last)."""
    lr = report.per_winner_logratio
    e = lr.shape[1] - 1 if epoch is None else int(epoch)
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["triple_id", "logratio"])
        for i in range(lr.shape[0]):
            out.writerow([i, repr(float(lr[i, e]))])
