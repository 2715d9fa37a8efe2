"""State-action value function: features, network, targets, trainer.

A state-action pair is encoded as five 2048-bit fingerprints (both
original synthons, both post-action synthons, the product) plus the
remaining-step scalar, ordered with the acting agent first. The value
network is a fully connected ReLU stack (default 10241-4096-2048-1024-1)
with inverted dropout between hidden layers, trained with Adam on
discounted-terminal-reward targets.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .chem import N_BITS, MolGraph, morgan_fingerprint
from .env import Action, Episode, State, _apply_one

FEATURE_DIM = 5 * N_BITS + 1
DEFAULT_LAYER_SIZES = (FEATURE_DIM, 4096, 2048, 1024, 1)


class QFuncError(ValueError):
    pass


# ---------------------------------------------------------------------------
# featurization


def _fp_bits(mol: MolGraph) -> np.ndarray:
    return morgan_fingerprint(mol).bits


def assemble_feature_row(out: np.ndarray, m_i: np.ndarray, m_j: np.ndarray,
                         m_i_next: np.ndarray, m_j_next: np.ndarray,
                         p: np.ndarray, steps_scalar: float) -> None:
    """Fill one preallocated row with the agent-first feature layout."""
    out[0:N_BITS] = m_i
    out[N_BITS:2 * N_BITS] = m_j
    out[2 * N_BITS:3 * N_BITS] = m_i_next
    out[3 * N_BITS:4 * N_BITS] = m_j_next
    out[4 * N_BITS:5 * N_BITS] = p
    out[5 * N_BITS] = steps_scalar


def featurize(state: State, a1: Action, a2: Action, agent: int,
              dtype=np.float64) -> np.ndarray:
    """Feature vector for (state, joint action) seen from one agent.

    Layout: own synthon, other synthon, own post-action current, other
    post-action current, product, then T-(t+1). Raises if either action
    is infeasible in the state.
    """
    if agent not in (1, 2):
        raise QFuncError("agent must be 1 or 2")
    if state.is_terminal:
        raise QFuncError("cannot featurize actions in a terminal state")
    next1 = _apply_one(state.current1, a1)
    next2 = _apply_one(state.current2, a2)
    row = np.empty(FEATURE_DIM, dtype=dtype)
    if agent == 1:
        parts = (state.synthon1, state.synthon2, next1, next2)
    else:
        parts = (state.synthon2, state.synthon1, next2, next1)
    assemble_feature_row(
        row,
        _fp_bits(parts[0]), _fp_bits(parts[1]),
        _fp_bits(parts[2]), _fp_bits(parts[3]),
        _fp_bits(state.product),
        float(state.steps_left - 1),
    )
    return row


# ---------------------------------------------------------------------------
# parameters and network


@dataclass
class QParams:
    """Network weights plus the training hyperparameters that travel with them."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    gamma: float = 0.95
    alpha: float = 1e-5
    learning_rate: float = 1e-4
    dropout_rate: float = 0.7
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if not (0.0 < self.gamma < 1.0):
            raise QFuncError("gamma must lie strictly inside (0, 1)")
        if self.alpha < 0:
            raise QFuncError("alpha must be non-negative")
        if not (0.0 <= self.dropout_rate < 1.0):
            raise QFuncError("dropout rate must lie in [0, 1)")
        if len(self.weights) != len(self.biases) or not self.weights:
            raise QFuncError("weights and biases must pair up")
        if self.weights[-1].shape[1] != 1:
            raise QFuncError("output layer must have a single unit")
        for k in range(len(self.weights) - 1):
            if self.weights[k].shape[1] != self.weights[k + 1].shape[0]:
                raise QFuncError("consecutive layer shapes do not chain")

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return (self.weights[0].shape[0],) + tuple(w.shape[1] for w in self.weights)

    @property
    def dtype(self):
        return self.weights[0].dtype

    def copy(self) -> "QParams":
        return replace(self, weights=[w.copy() for w in self.weights],
                       biases=[b.copy() for b in self.biases])


def init_qparams(layer_sizes: Sequence[int] = DEFAULT_LAYER_SIZES,
                 gamma: float = 0.95, alpha: float = 1e-5,
                 learning_rate: float = 1e-4, dropout_rate: float = 0.7,
                 seed: int = 0, dtype=np.float64) -> QParams:
    """He-style uniform fan-in initialization from a seeded generator."""
    if len(layer_sizes) < 2 or layer_sizes[-1] != 1:
        raise QFuncError("layer sizes must end in a single output unit")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        limit = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(dtype))
        biases.append(np.zeros(fan_out, dtype=dtype))
    return QParams(weights, biases, gamma=gamma, alpha=alpha,
                   learning_rate=learning_rate, dropout_rate=dropout_rate,
                   rng_seed=seed)


def _forward(params: QParams, x: np.ndarray, mode: str,
             rng: Optional[np.random.Generator], keep_cache: bool):
    if mode not in ("train", "eval"):
        raise QFuncError("mode must be 'train' or 'eval'")
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[1] != params.weights[0].shape[0]:
        raise QFuncError(
            f"feature dim {x.shape[1]} does not match input layer {params.weights[0].shape[0]}")
    dropout = params.dropout_rate if mode == "train" else 0.0
    if dropout > 0.0 and rng is None:
        raise QFuncError("train-mode forward with dropout needs a generator")

    h = x.astype(params.dtype, copy=False)
    acts = [h]
    relu_masks = []
    drop_masks = []
    last = len(params.weights) - 1
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ w + b
        if k < last:
            mask = z > 0
            h = np.where(mask, z, 0.0)
            if dropout > 0.0:
                keep = (rng.random(h.shape) >= dropout).astype(params.dtype)
                keep /= (1.0 - dropout)  # inverted dropout: eval needs no rescale
                h = h * keep
            else:
                keep = None
            relu_masks.append(mask)
            drop_masks.append(keep)
            acts.append(h)
        else:
            h = z
    out = h[:, 0]
    if keep_cache:
        return out, (acts, relu_masks, drop_masks)
    return out, None


def q_forward(params: QParams, x: np.ndarray, mode: str = "eval",
              rng: Optional[np.random.Generator] = None):
    """Scalar Q for one feature vector, or a vector for a batch."""
    single = np.asarray(x).ndim == 1
    out, _ = _forward(params, np.asarray(x), mode, rng, keep_cache=False)
    return float(out[0]) if single else out


def _as_arrays(params: QParams, batch) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(batch, tuple) and len(batch) == 2 and isinstance(batch[0], np.ndarray):
        X, y = batch
    else:
        if len(batch) == 0:
            raise QFuncError("empty batch")
        X = np.stack([np.asarray(x) for x, _ in batch])
        y = np.array([t for _, t in batch], dtype=params.dtype)
    if X.shape[0] == 0:
        raise QFuncError("empty batch")
    return X.astype(params.dtype, copy=False), y.astype(params.dtype, copy=False)


def regularizer(params: QParams) -> float:
    total = 0.0
    for w, b in zip(params.weights, params.biases):
        total += float((w * w).sum()) + float((b * b).sum())
    return total


def loss(params: QParams, batch, mode: str = "eval",
         rng: Optional[np.random.Generator] = None) -> float:
    """Mean squared error against targets plus alpha * ||params||^2."""
    X, y = _as_arrays(params, batch)
    pred, _ = _forward(params, X, mode, rng, keep_cache=False)
    mse = float(np.mean((pred - y) ** 2))
    return mse + params.alpha * regularizer(params)


def loss_and_grad(params: QParams, batch, mode: str = "eval",
                  rng: Optional[np.random.Generator] = None):
    """Loss plus analytic gradients for every weight and bias."""
    X, y = _as_arrays(params, batch)
    pred, cache = _forward(params, X, mode, rng, keep_cache=True)
    acts, relu_masks, drop_masks = cache
    n = X.shape[0]
    diff = pred - y
    value = float(np.mean(diff ** 2)) + params.alpha * regularizer(params)

    grad_w = [np.empty_like(w) for w in params.weights]
    grad_b = [np.empty_like(b) for b in params.biases]
    delta = (2.0 / n) * diff[:, None]  # (n, 1) at the output layer
    last = len(params.weights) - 1
    for k in range(last, -1, -1):
        h_in = acts[k]
        grad_w[k][...] = h_in.T @ delta + 2.0 * params.alpha * params.weights[k]
        grad_b[k][...] = delta.sum(axis=0) + 2.0 * params.alpha * params.biases[k]
        if k > 0:
            back = delta @ params.weights[k].T
            if drop_masks[k - 1] is not None:
                back = back * drop_masks[k - 1]
            back = np.where(relu_masks[k - 1], back, 0.0)
            delta = back
    return value, grad_w, grad_b


# ---------------------------------------------------------------------------
# targets


def sarsa_targets(episode: Episode, gamma: float) -> list[float]:
    """Backed-up targets: the terminal reward discounted along the trajectory."""
    if episode.reward is None:
        raise QFuncError("episode has no reward set")
    if not (0.0 < gamma < 1.0):
        raise QFuncError("gamma must lie strictly inside (0, 1)")
    horizon = len(episode.actions)
    targets = [0.0] * horizon
    targets[horizon - 1] = float(episode.reward)
    for t in range(horizon - 2, -1, -1):
        targets[t] = gamma * targets[t + 1]
    return targets


# ---------------------------------------------------------------------------
# trainer


@dataclass
class TrainConfig:
    """Optimization settings; a batch of B episodes is B*T*2 samples."""

    batch_products: int = 10
    epochs: int = 60
    rng_seed: int = 0
    patience: Optional[int] = None   # early stop on stalled epoch loss
    min_delta: float = 0.0


def build_dataset(episodes: Sequence[Episode], gamma: float,
                  dtype=np.float64) -> tuple[np.ndarray, np.ndarray, list[int]]:
    """Stack every (step, agent) sample; returns X, targets and group sizes."""
    rows: list[np.ndarray] = []
    targets: list[float] = []
    groups: list[int] = []
    for ep in episodes:
        qs = sarsa_targets(ep, gamma)
        count = 0
        for t, (a1, a2) in enumerate(ep.actions):
            for agent in (1, 2):
                rows.append(featurize(ep.states[t], a1, a2, agent, dtype=dtype))
                targets.append(qs[t])
                count += 1
        groups.append(count)
    if not rows:
        raise QFuncError("no training samples")
    return np.stack(rows), np.array(targets, dtype=dtype), groups


class _Adam:
    def __init__(self, params: QParams) -> None:
        self.m_w = [np.zeros_like(w) for w in params.weights]
        self.v_w = [np.zeros_like(w) for w in params.weights]
        self.m_b = [np.zeros_like(b) for b in params.biases]
        self.v_b = [np.zeros_like(b) for b in params.biases]
        self.t = 0
        self.beta1 = 0.9
        self.beta2 = 0.999
        self.eps = 1e-8

    def step(self, params: QParams, grad_w, grad_b) -> None:
        self.t += 1
        lr = params.learning_rate
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for k in range(len(params.weights)):
            for theta, g, m, v in (
                (params.weights[k], grad_w[k], self.m_w[k], self.v_w[k]),
                (params.biases[k], grad_b[k], self.m_b[k], self.v_b[k]),
            ):
                m *= self.beta1
                m += (1.0 - self.beta1) * g
                v *= self.beta2
                v += (1.0 - self.beta2) * (g * g)
                theta -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def train(episodes: Sequence[Episode], cfg: TrainConfig, params: QParams,
          loss_log: Optional[list] = None) -> QParams:
    """Fit a copy of ``params`` on the episodes; fully seeded and reproducible.

    Every episode contributes one sample per step per agent. Episodes are
    shuffled each epoch and consumed in batches of ``batch_products``.
    """
    if not episodes:
        raise QFuncError("no episodes to train on")
    params = params.copy()
    X, y, groups = build_dataset(episodes, params.gamma, dtype=params.dtype)
    starts = np.concatenate(([0], np.cumsum(groups)))
    n_eps = len(groups)
    rng = np.random.default_rng(cfg.rng_seed)
    adam = _Adam(params)

    best = np.inf
    stale = 0
    for _ in range(cfg.epochs):
        order = rng.permutation(n_eps)
        epoch_loss = 0.0
        n_batches = 0
        for lo in range(0, n_eps, cfg.batch_products):
            chunk = order[lo:lo + cfg.batch_products]
            idx = np.concatenate([np.arange(starts[e], starts[e + 1]) for e in chunk])
            value, gw, gb = loss_and_grad(params, (X[idx], y[idx]),
                                          mode="train", rng=rng)
            adam.step(params, gw, gb)
            epoch_loss += value
            n_batches += 1
        epoch_loss /= n_batches
        if loss_log is not None:
            loss_log.append(epoch_loss)
        if cfg.patience is not None:
            if epoch_loss < best - cfg.min_delta:
                best = epoch_loss
                stale = 0
            else:
                stale += 1
                if stale > cfg.patience:
                    break
    return params
