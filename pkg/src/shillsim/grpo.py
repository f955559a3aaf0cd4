"""Group-relative policy optimisation and the PPO baseline.

A :class:`GroupBatch` holds one trajectory per discourse episode: the comment
feature rows, the sampled joint action, the (mixed) reward, and the pooled
rows of the state before and after the market reaction. The policy ratio is
taken per trajectory, i.e. over the product of per-comment Bernoullis.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .errors import ConfigError, DegenerateDenominator, DimensionMismatch, GroupTooSmall
from .policy import PolicyParams, ValueParams, entropy_and_grad, row_log_probs, values, weighted_log_prob_grad


class Algo(str, Enum):
    GRPO_MEANSUB = "GRPO_MeanSubtract"
    GRPO_NORMALIZED = "GRPO_Normalized"
    PPO = "PPO"


@dataclass(frozen=True)
class TrainConfig:
    algo: Algo = Algo.GRPO_NORMALIZED
    gamma: float = 0.99
    epsilon_stab: float = 0.1
    epsilon_clip: float = 0.2
    lr_policy: float = 5e-4
    lr_value: float = 1e-3
    entropy_coef: float = 0.0
    minibatch: int = 64
    ppo_epochs: int = 4
    episodes: int = 6400
    group_size: int = 32
    hidden: int = 16
    literal_eq24: bool = False
    value_baseline: bool = False
    optimizer: str = "sgd"
    anneal_lr: bool = False
    ppo_lr_policy: float = 3e-4
    ppo_entropy_coef: float = 0.01
    probe_episodes: int = 256
    eval_every: int = 1
    corpus_size: int = 2000

    def __post_init__(self):
        object.__setattr__(self, "algo", Algo(self.algo))

    def with_algo(self, algo: Algo | str) -> "TrainConfig":
        """Copy configured for ``algo``; PPO takes its own learning rate, entropy bonus and annealing."""
        algo = Algo(algo)
        if algo is Algo.PPO:
            return replace(self, algo=algo, lr_policy=self.ppo_lr_policy, entropy_coef=self.ppo_entropy_coef,
                           anneal_lr=True)
        return replace(self, algo=algo)

    @property
    def steps(self) -> int:
        return self.episodes // self.group_size

    def validate(self, prefix: str = "train") -> None:
        if not (self.lr_policy > 0):
            raise ConfigError(f"{prefix}.lr_policy", "learning rate must be > 0")
        if not (self.ppo_lr_policy > 0):
            raise ConfigError(f"{prefix}.ppo_lr_policy", "learning rate must be > 0")
        if self.probe_episodes < 1 or self.eval_every < 1 or self.corpus_size < 1:
            raise ConfigError(f"{prefix}.corpus_size", "corpus, probe and eval cadence must be >= 1")
        if not (self.lr_value > 0):
            raise ConfigError(f"{prefix}.lr_value", "learning rate must be > 0")
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigError(f"{prefix}.gamma", "must lie in [0,1)")
        if not self.epsilon_stab > 0:
            raise ConfigError(f"{prefix}.epsilon_stab", "must be > 0")
        if not self.epsilon_clip > 0:
            raise ConfigError(f"{prefix}.epsilon_clip", "must be > 0")
        if self.entropy_coef < 0:
            raise ConfigError(f"{prefix}.entropy_coef", "must be >= 0")
        if self.group_size < 2:
            raise ConfigError(f"{prefix}.group_size", "must be >= 2")
        if self.minibatch < 1:
            raise ConfigError(f"{prefix}.minibatch", "must be >= 1")
        if self.ppo_epochs < 1:
            raise ConfigError(f"{prefix}.ppo_epochs", "must be >= 1")
        if self.episodes < 0:
            raise ConfigError(f"{prefix}.episodes", "must be >= 0")
        if self.hidden < 1:
            raise ConfigError(f"{prefix}.hidden", "must be >= 1")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"{prefix}.optimizer", "must be 'adam' or 'sgd'")


# ---------------------------------------------------------------------------
# Advantages
# ---------------------------------------------------------------------------

def group_advantage_meansub(rewards) -> np.ndarray:
    r = np.asarray(rewards, dtype=np.float64)
    if r.size < 2:
        raise GroupTooSmall(f"group of {r.size}")
    if np.all(r == r[0]):
        # the floating mean of equal values can miss them by an ulp
        return np.zeros_like(r)
    return r - r.mean()


def group_advantage_normalized(adv_hat, epsilon_stab: float = 0.1, literal: bool = False) -> np.ndarray:
    """Scale advantages by ``mean|A| + eps`` (or ``mean(A) + eps`` in literal mode)."""
    a = np.asarray(adv_hat, dtype=np.float64)
    if a.size < 2:
        raise GroupTooSmall(f"group of {a.size}")
    if literal:
        denom = a.mean() + epsilon_stab
        if abs(denom) < 1e-12:
            raise DegenerateDenominator(f"mean advantage + eps = {denom}")
    else:
        denom = np.abs(a).mean() + epsilon_stab
    return a / denom


def discounted_group_return(rewards, gamma: float) -> float:
    if not 0.0 <= gamma < 1.0:
        raise ValueError("gamma must lie in [0,1)")
    g = 0.0
    for r in reversed(list(rewards)):
        g = r + gamma * g
    return float(g)


def variance_identity_check(groups) -> tuple[float, float, float]:
    """Compare Var(r - group mean) with Var(r) - Cov(r_i, r_j)/|G|.

    ``groups`` is an (n_groups, G) array. Cov is the mean over distinct ordered
    pairs within a group. Returns ``(lhs, rhs, lhs - rhs)``.
    """
    R = np.asarray(groups, dtype=np.float64)
    n, g = R.shape
    if g < 2:
        raise GroupTooSmall(f"group of {g}")
    adv = R - R.mean(axis=1, keepdims=True)
    lhs = float(adv.var())
    mu = R.mean()
    var_r = float(R.var())
    dev = R - mu
    s = dev.sum(axis=1)
    pair_sum = (s * s - (dev * dev).sum(axis=1)).sum()
    cov = float(pair_sum / (n * g * (g - 1)))
    rhs = var_r - cov / g
    return lhs, rhs, lhs - rhs


# ---------------------------------------------------------------------------
# Batches and optimisers
# ---------------------------------------------------------------------------

@dataclass
class GroupBatch:
    X: np.ndarray          # all comment rows, trajectories concatenated
    seg: np.ndarray        # trajectory index of each row
    actions: np.ndarray    # per-row action
    rewards: np.ndarray    # per-trajectory reward (already mixed)
    pooled: np.ndarray     # per-trajectory pooled state row
    pooled_next: np.ndarray
    done: np.ndarray = field(default=None)

    def __post_init__(self):
        self.seg = np.asarray(self.seg, dtype=np.int64)
        self.actions = np.asarray(self.actions, dtype=np.int64)
        self.rewards = np.asarray(self.rewards, dtype=np.float64)
        if self.done is None:
            self.done = np.ones(self.size, dtype=bool)
        if self.size < 2:
            raise GroupTooSmall(f"group of {self.size}")
        if self.X.shape[0] != self.seg.size or self.seg.size != self.actions.size:
            raise DimensionMismatch("rows, segments and actions must align")
        if self.pooled.shape != (self.size, self.X.shape[1]) or self.pooled_next.shape != self.pooled.shape:
            raise DimensionMismatch("pooled rows must match trajectory count and feature width")

    @property
    def size(self) -> int:
        return self.rewards.size

    @classmethod
    def from_trajectories(cls, trajectories) -> "GroupBatch":
        """Build from ``(rows, actions, reward, pooled, pooled_next)`` tuples."""
        rows, seg, acts = [], [], []
        for k, (X, a, _, _, _) in enumerate(trajectories):
            rows.append(np.asarray(X, dtype=np.float64))
            acts.append(np.asarray(a))
            seg.append(np.full(len(a), k))
        width = next((r.shape[1] for r in rows if r.ndim == 2), 0)
        return cls(
            X=np.vstack([r.reshape(-1, width) for r in rows]),
            seg=np.concatenate(seg),
            actions=np.concatenate(acts),
            rewards=np.array([t[2] for t in trajectories], dtype=np.float64),
            pooled=np.array([t[3] for t in trajectories], dtype=np.float64),
            pooled_next=np.array([t[4] for t in trajectories], dtype=np.float64),
        )

    def subset(self, idx) -> "GroupBatch":
        idx = np.asarray(idx)
        remap = -np.ones(self.size, dtype=np.int64)
        remap[idx] = np.arange(idx.size)
        mask = np.isin(self.seg, idx)
        return GroupBatch(self.X[mask], remap[self.seg[mask]], self.actions[mask], self.rewards[idx],
                          self.pooled[idx], self.pooled_next[idx], self.done[idx])


class Optimizer:
    """Gradient ascent step on a flat vector: plain or Adam."""

    def __init__(self, kind: str = "adam", beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.kind = kind
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = self.v = None
        self.t = 0

    def step(self, grad: np.ndarray, lr: float) -> np.ndarray:
        if self.kind == "sgd":
            return lr * grad
        if self.m is None:
            self.m = np.zeros_like(grad)
            self.v = np.zeros_like(grad)
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        mhat = self.m / (1 - self.beta1 ** self.t)
        vhat = self.v / (1 - self.beta2 ** self.t)
        return lr * mhat / (np.sqrt(vhat) + self.eps)


@dataclass
class OptState:
    policy: Optimizer
    value: Optimizer

    @classmethod
    def new(cls, kind: str = "adam") -> "OptState":
        return cls(Optimizer(kind), Optimizer(kind))


def trajectory_log_probs(params: PolicyParams, batch: GroupBatch) -> np.ndarray:
    lp = row_log_probs(params, batch.X, batch.actions)
    return np.bincount(batch.seg, weights=lp, minlength=batch.size)


def td_targets(vp: ValueParams, batch: GroupBatch, gamma: float) -> np.ndarray:
    boot = np.where(batch.done, 0.0, gamma * values(vp, batch.pooled_next))
    return batch.rewards + boot


def value_step(vp: ValueParams, batch: GroupBatch, gamma: float, lr: float, opt: Optimizer):
    """One descent step on the mean squared TD error (semi-gradient)."""
    v = values(vp, batch.pooled)
    err = v - td_targets(vp, batch, gamma)
    grad = np.concatenate([err @ batch.pooled, [err.sum()]]) / batch.size
    loss = float(np.mean(err * err))
    return ValueParams(vp.input_dim, vp.phi - opt.step(grad, lr)), loss


def grpo_advantages(batch: GroupBatch, cfg: TrainConfig, vp: ValueParams | None = None) -> np.ndarray:
    base = batch.rewards
    if cfg.value_baseline and vp is not None:
        base = base - values(vp, batch.pooled)
    adv = group_advantage_meansub(base)
    if cfg.algo is Algo.GRPO_NORMALIZED:
        adv = group_advantage_normalized(adv, cfg.epsilon_stab, cfg.literal_eq24)
    return adv


def grpo_surrogate(params: PolicyParams, batch: GroupBatch, adv: np.ndarray, logp_old: np.ndarray,
                   epsilon_clip: float) -> float:
    ratio = np.exp(trajectory_log_probs(params, batch) - logp_old)
    gate = np.abs(ratio - 1.0) <= epsilon_clip
    return float(np.mean(np.where(gate, ratio * adv, 0.0)))


def grpo_policy_grad(params: PolicyParams, batch: GroupBatch, adv: np.ndarray, logp_old: np.ndarray,
                     epsilon_clip: float):
    """Gradient of the gated ratio surrogate; samples outside the band contribute nothing."""
    lp_rows = row_log_probs(params, batch.X, batch.actions)
    logp = np.bincount(batch.seg, weights=lp_rows, minlength=batch.size)
    ratio = np.exp(logp - logp_old)
    gate = np.abs(ratio - 1.0) <= epsilon_clip
    coef = np.where(gate, ratio * adv, 0.0) / batch.size
    _, grad = weighted_log_prob_grad(params, batch.X, batch.actions, coef[batch.seg])
    return grad, ratio, gate


def _entropy_term(params: PolicyParams, batch: GroupBatch, coef: float):
    if coef == 0 or batch.X.shape[0] == 0:
        return 0.0, 0.0
    ent, grad = entropy_and_grad(params, batch.X, coef / batch.size)
    return float(ent.sum() / batch.size), grad


def grpo_update(params: PolicyParams, vp: ValueParams, batch: GroupBatch, cfg: TrainConfig,
                opt: OptState | None = None, lr_scale: float = 1.0):
    """One policy step and one value step on a group; returns ``(params', vp', diagnostics)``."""
    if cfg.algo is Algo.PPO:
        raise ValueError("grpo_update called with a PPO config")
    opt = opt or OptState.new(cfg.optimizer)
    logp_old = trajectory_log_probs(params, batch)
    adv = grpo_advantages(batch, cfg, vp)
    grad, ratio, gate = grpo_policy_grad(params, batch, adv, logp_old, cfg.epsilon_clip)
    entropy, egrad = _entropy_term(params, batch, cfg.entropy_coef)
    grad = grad + egrad
    if np.any(grad):
        new_theta = params.theta + opt.policy.step(grad, cfg.lr_policy * lr_scale)
    else:
        new_theta = params.theta
    new_params = params.replace_theta(new_theta)
    new_vp, vloss = value_step(vp, batch, cfg.gamma, cfg.lr_value * lr_scale, opt.value)
    diag = {
        "mean_ratio": float(ratio.mean()),
        "clipped_fraction": float(1.0 - gate.mean()),
        "policy_oscillation": float(np.linalg.norm(new_theta - params.theta)),
        "entropy": entropy,
        "value_loss": vloss,
        "mean_abs_advantage": float(np.abs(adv).mean()),
    }
    return new_params, new_vp, diag


def ppo_surrogate(ratio, adv, epsilon_clip: float) -> np.ndarray:
    return np.minimum(ratio * adv, np.clip(ratio, 1.0 - epsilon_clip, 1.0 + epsilon_clip) * adv)


def ppo_policy_grad(params: PolicyParams, batch: GroupBatch, adv: np.ndarray, logp_old: np.ndarray,
                    epsilon_clip: float):
    lp_rows = row_log_probs(params, batch.X, batch.actions)
    logp = np.bincount(batch.seg, weights=lp_rows, minlength=batch.size)
    ratio = np.exp(logp - logp_old)
    # the clipped branch is flat wherever it is the active minimum
    saturated = ((adv > 0) & (ratio > 1.0 + epsilon_clip)) | ((adv < 0) & (ratio < 1.0 - epsilon_clip))
    coef = np.where(saturated, 0.0, ratio * adv) / batch.size
    _, grad = weighted_log_prob_grad(params, batch.X, batch.actions, coef[batch.seg])
    return grad, ratio, saturated


def ppo_update(params: PolicyParams, vp: ValueParams, batch: GroupBatch, cfg: TrainConfig,
               opt: OptState | None = None, lr_scale: float = 1.0, rng=None):
    """Clipped-surrogate epochs over minibatches with an entropy bonus."""
    if cfg.algo is not Algo.PPO:
        raise ValueError("ppo_update called with a GRPO config")
    opt = opt or OptState.new(cfg.optimizer)
    theta0 = params.theta
    logp_old = trajectory_log_probs(params, batch)
    adv = batch.rewards - values(vp, batch.pooled)
    ratios, clipped, vlosses, entropies = [], [], [], []
    for _ in range(cfg.ppo_epochs):
        order = np.arange(batch.size) if rng is None else rng.permutation(batch.size)
        for start in range(0, batch.size, cfg.minibatch):
            idx = np.sort(order[start:start + cfg.minibatch])
            mb = batch.subset(idx) if idx.size < batch.size else batch
            grad, ratio, sat = ppo_policy_grad(params, mb, adv[idx], logp_old[idx], cfg.epsilon_clip)
            entropy, egrad = _entropy_term(params, mb, cfg.entropy_coef)
            grad = grad + egrad
            if np.any(grad):
                params = params.replace_theta(params.theta + opt.policy.step(grad, cfg.lr_policy * lr_scale))
            vp, vloss = value_step(vp, mb, cfg.gamma, cfg.lr_value * lr_scale, opt.value)
            ratios.append(ratio.mean())
            clipped.append(sat.mean())
            vlosses.append(vloss)
            entropies.append(entropy)
    diag = {
        "mean_ratio": float(np.mean(ratios)),
        "clipped_fraction": float(np.mean(clipped)),
        "policy_oscillation": float(np.linalg.norm(params.theta - theta0)),
        "entropy": float(np.mean(entropies)),
        "value_loss": float(np.mean(vlosses)),
        "mean_abs_advantage": float(np.abs(adv).mean()),
    }
    return params, vp, diag


def update(params, vp, batch, cfg: TrainConfig, opt: OptState, lr_scale: float = 1.0, rng=None):
    if cfg.algo is Algo.PPO:
        return ppo_update(params, vp, batch, cfg, opt, lr_scale, rng)
    return grpo_update(params, vp, batch, cfg, opt, lr_scale)
