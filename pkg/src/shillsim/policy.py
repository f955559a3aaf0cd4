"""Detector policy (one-hidden-layer MLP, sigmoid per comment) and linear value head.

Parameters live in flat vectors so optimisers and checkpoints can treat them
uniformly. Layout of ``theta`` for input dimension D and hidden width H::

    W1 (H x D, row-major) | b1 (H) | w2 (H) | b2 (1)

``phi`` is ``w (D) | b (1)``. Every gradient is computed by hand.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np
from scipy.special import expit, log_expit

from .errors import DimensionMismatch, SchemaMismatch
from .features import FEATURE_MAP_VERSION

DEFAULT_HIDDEN = 16
_P_MAX = np.nextafter(1.0, 0.0)
_P_MIN = np.finfo(np.float64).tiny


class Mode(str, Enum):
    STOCHASTIC = "Stochastic"
    GREEDY = "Greedy"


def policy_size(input_dim: int, hidden: int) -> int:
    return hidden * (input_dim + 1) + hidden + 1


@dataclass(frozen=True)
class PolicyParams:
    input_dim: int
    hidden: int
    theta: np.ndarray

    def __post_init__(self):
        theta = np.array(self.theta, dtype=np.float64)
        if theta.shape != (policy_size(self.input_dim, self.hidden),):
            raise DimensionMismatch(
                f"theta has {theta.size} entries, expected {policy_size(self.input_dim, self.hidden)}")
        if not np.all(np.isfinite(theta)):
            raise ValueError("theta must be finite")
        theta.flags.writeable = False
        object.__setattr__(self, "theta", theta)

    def unpack(self):
        d, h, t = self.input_dim, self.hidden, self.theta
        o = h * d
        return t[:o].reshape(h, d), t[o:o + h], t[o + h:o + 2 * h], t[o + 2 * h]

    def replace_theta(self, theta: np.ndarray) -> "PolicyParams":
        return PolicyParams(self.input_dim, self.hidden, theta)

    @classmethod
    def zeros(cls, input_dim: int, hidden: int = DEFAULT_HIDDEN) -> "PolicyParams":
        return cls(input_dim, hidden, np.zeros(policy_size(input_dim, hidden)))

    @classmethod
    def init(cls, input_dim: int, hidden: int = DEFAULT_HIDDEN, rng=None) -> "PolicyParams":
        """Uniform in +-1/sqrt(fan_in) for each layer."""
        rng = rng if rng is not None else np.random.default_rng()
        a1 = 1.0 / np.sqrt(input_dim)
        a2 = 1.0 / np.sqrt(hidden)
        parts = [
            rng.uniform(-a1, a1, hidden * input_dim),
            rng.uniform(-a1, a1, hidden),
            rng.uniform(-a2, a2, hidden),
            rng.uniform(-a2, a2, 1),
        ]
        return cls(input_dim, hidden, np.concatenate(parts))


@dataclass(frozen=True)
class ValueParams:
    input_dim: int
    phi: np.ndarray

    def __post_init__(self):
        phi = np.array(self.phi, dtype=np.float64)
        if phi.shape != (self.input_dim + 1,):
            raise DimensionMismatch(f"phi has {phi.size} entries, expected {self.input_dim + 1}")
        if not np.all(np.isfinite(phi)):
            raise ValueError("phi must be finite")
        phi.flags.writeable = False
        object.__setattr__(self, "phi", phi)

    @classmethod
    def zeros(cls, input_dim: int) -> "ValueParams":
        return cls(input_dim, np.zeros(input_dim + 1))


def _as_rows(x, input_dim: int) -> np.ndarray:
    X = np.asarray(x, dtype=np.float64)
    X = X.reshape(1, -1) if X.ndim == 1 else X
    if X.ndim != 2 or (X.shape[0] and X.shape[1] != input_dim):
        raise DimensionMismatch(f"expected rows of width {input_dim}, got shape {np.shape(x)}")
    return X.reshape(-1, input_dim)


def logits(params: PolicyParams, X: np.ndarray):
    """Return ``(z, h)``: output logits and hidden activations for each row."""
    W1, b1, w2, b2 = params.unpack()
    h = np.tanh(X @ W1.T + b1)
    return h @ w2 + b2, h


def predict_proba(params: PolicyParams, x) -> np.ndarray | float:
    """Sigmoid output per row; a single vector gives a float. Clipped strictly inside (0, 1)."""
    single = np.ndim(x) == 1
    X = _as_rows(x, params.input_dim)
    z, _ = logits(params, X)
    p = np.clip(expit(z), _P_MIN, _P_MAX)
    return float(p[0]) if single else p


def _state_rows(S) -> np.ndarray:
    return S.rows if hasattr(S, "rows") else np.asarray(S, dtype=np.float64)


def sample_actions(params: PolicyParams, S, mode: Mode | str = Mode.STOCHASTIC, rng=None,
                   threshold: float = 0.5) -> np.ndarray:
    X = _state_rows(S)
    if X.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    p = predict_proba(params, X)
    if Mode(mode) is Mode.GREEDY:
        return (p >= threshold).astype(np.int64)
    return (rng.random(p.shape[0]) < p).astype(np.int64)


def row_log_probs(params: PolicyParams, X: np.ndarray, a: np.ndarray) -> np.ndarray:
    z, _ = logits(params, X)
    return np.where(a == 1, log_expit(z), log_expit(-z))


def weighted_log_prob_grad(params: PolicyParams, X: np.ndarray, a: np.ndarray,
                           weights: np.ndarray | float = 1.0):
    """Per-row log-probs and the gradient of ``sum_i weights_i * log p(a_i | x_i)``."""
    X = _as_rows(X, params.input_dim)
    a = np.asarray(a, dtype=np.float64)
    if a.shape != (X.shape[0],):
        raise DimensionMismatch(f"{a.size} actions for {X.shape[0]} comments")
    W1, b1, w2, b2 = params.unpack()
    h = np.tanh(X @ W1.T + b1)
    z = h @ w2 + b2
    lp = np.where(a == 1, log_expit(z), log_expit(-z))
    g = np.broadcast_to(weights, a.shape) * (a - expit(z))
    return lp, _backprop(params, X, h, g)


def _backprop(params: PolicyParams, X, h, g) -> np.ndarray:
    """Gradient of ``sum_i g_i * z_i`` with respect to theta."""
    _, _, w2, _ = params.unpack()
    dpre = np.outer(g, w2) * (1.0 - h * h)
    return np.concatenate([(dpre.T @ X).ravel(), dpre.sum(axis=0), g @ h, [g.sum()]])


def log_prob_and_grad(params: PolicyParams, S, a) -> tuple[float, np.ndarray]:
    """Log-probability of the joint action under independent Bernoullis, and its gradient."""
    X = _state_rows(S)
    if X.shape[0] == 0:
        if np.size(a) != 0:
            raise DimensionMismatch(f"{np.size(a)} actions for 0 comments")
        return 0.0, np.zeros_like(params.theta)
    lp, grad = weighted_log_prob_grad(params, X, a)
    return float(lp.sum()), grad


def entropy_and_grad(params: PolicyParams, X: np.ndarray, weights: np.ndarray | float = 1.0):
    """Per-row Bernoulli entropies (nats) and the gradient of their weighted sum."""
    X = _as_rows(X, params.input_dim)
    W1, b1, w2, b2 = params.unpack()
    h = np.tanh(X @ W1.T + b1)
    z = h @ w2 + b2
    p = expit(z)
    ent = -(p * log_expit(z) + (1.0 - p) * log_expit(-z))
    # dH/dz = -z p (1 - p)
    g = np.broadcast_to(weights, z.shape) * (-z * p * (1.0 - p))
    return ent, _backprop(params, X, h, g)


def value_and_grad(vp: ValueParams, pooled) -> tuple[float, np.ndarray]:
    x = np.asarray(pooled, dtype=np.float64)
    if x.shape != (vp.input_dim,):
        raise DimensionMismatch(f"pooled row has shape {x.shape}, expected ({vp.input_dim},)")
    grad = np.append(x, 1.0)
    return float(vp.phi[:-1] @ x + vp.phi[-1]), grad


def values(vp: ValueParams, X: np.ndarray) -> np.ndarray:
    X = _as_rows(X, vp.input_dim)
    return X @ vp.phi[:-1] + vp.phi[-1]


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def checkpoint_dict(params: PolicyParams, vp: ValueParams, *, seed: int, episode_count: int,
                    extra: dict | None = None) -> dict:
    d = {
        "input_dim": params.input_dim,
        "hidden": params.hidden,
        "theta": params.theta.tolist(),
        "phi": vp.phi.tolist(),
        "feature_map_version": FEATURE_MAP_VERSION,
        "seed": int(seed),
        "episode_count": int(episode_count),
    }
    if extra:
        d.update(extra)
    return d


def save_checkpoint(path: str | Path, params: PolicyParams, vp: ValueParams, *, seed: int,
                    episode_count: int, extra: dict | None = None) -> None:
    d = checkpoint_dict(params, vp, seed=seed, episode_count=episode_count, extra=extra)
    Path(path).write_text(json.dumps(d, allow_nan=False), encoding="utf-8")


def load_checkpoint(path: str | Path) -> tuple[PolicyParams, ValueParams, dict]:
    d = json.loads(Path(path).read_text(encoding="utf-8"))
    if d.get("feature_map_version") != FEATURE_MAP_VERSION:
        raise SchemaMismatch(
            f"checkpoint feature map version {d.get('feature_map_version')} != {FEATURE_MAP_VERSION}")
    params = PolicyParams(d["input_dim"], d["hidden"], np.asarray(d["theta"]))
    vp = ValueParams(d["input_dim"], np.asarray(d["phi"]))
    return params, vp, d
