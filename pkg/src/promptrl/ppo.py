"""From-scratch PPO for a 3-action categorical policy over fixed-dim states.

Policy and value networks are small tanh MLPs (dim -> 64 -> 64 -> out) in
float64 numpy with hand-written backprop: gradients are exactly the
analytic derivatives of the clipped-surrogate loss, checked against finite
differences in the test suite. Updates use Adam-style adaptive moments with
global gradient-norm clipping and do not mutate the input parameters.
"""
from __future__ import annotations

import json
from copy import deepcopy
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    CheckpointIncompatible,
    DegenerateDistribution,
    DimensionMismatch,
    LengthMismatch,
    NonFiniteLoss,
)
from .transforms import ActionId

HIDDEN = 64
N_ACTIONS = 3
CHECKPOINT_VERSION = 1

_ADAM_BETA1 = 0.9
_ADAM_BETA2 = 0.999
_ADAM_EPS = 1e-8


@dataclass(frozen=True)
class PpoConfig:
    clip_epsilon: float = 0.2
    gamma: float = 0.99
    gae_lambda: float = 0.95
    learning_rate: float = 3e-4
    epochs_per_update: int = 4
    minibatch_size: int = 64
    value_coef: float = 0.5
    entropy_coef: float = 0.01
    max_grad_norm: float = 0.5
    update_every_episodes: int = 8

    def __post_init__(self):
        if self.clip_epsilon <= 0:
            raise ValueError("clip_epsilon must be positive")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must be in (0, 1]")
        if not 0.0 <= self.gae_lambda <= 1.0:
            raise ValueError("gae_lambda must be in [0, 1]")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if min(self.epochs_per_update, self.minibatch_size, self.update_every_episodes) < 1:
            raise ValueError("epochs, minibatch size and update cadence must be >= 1")
        if self.value_coef < 0 or self.entropy_coef < 0 or self.max_grad_norm <= 0:
            raise ValueError("value_coef/entropy_coef must be >= 0, max_grad_norm > 0")


@dataclass
class MlpParams:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray

    def tensors(self) -> list[tuple[str, np.ndarray]]:
        return [(name, getattr(self, name)) for name in ("w1", "b1", "w2", "b2", "w3", "b3")]


@dataclass
class PolicyParams:
    dim: int
    policy: MlpParams
    value: MlpParams

    def tensors(self) -> list[tuple[str, np.ndarray]]:
        return [(f"policy.{n}", t) for n, t in self.policy.tensors()] + [
            (f"value.{n}", t) for n, t in self.value.tensors()
        ]


def _orthogonal(rows: int, cols: int, gain: float, rng: np.random.Generator) -> np.ndarray:
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return np.ascontiguousarray(gain * q[:rows, :cols], dtype=np.float64)


def _init_mlp(dim: int, out: int, final_gain: float, rng: np.random.Generator) -> MlpParams:
    return MlpParams(
        w1=_orthogonal(HIDDEN, dim, np.sqrt(2.0), rng),
        b1=np.zeros(HIDDEN),
        w2=_orthogonal(HIDDEN, HIDDEN, np.sqrt(2.0), rng),
        b2=np.zeros(HIDDEN),
        w3=_orthogonal(out, HIDDEN, final_gain, rng),
        b3=np.zeros(out),
    )


def init_params(dim: int, rng: np.random.Generator) -> PolicyParams:
    """Orthogonal-style scaled init; tiny final policy layer and zero biases
    keep the initial action distribution near-uniform."""
    return PolicyParams(
        dim=dim,
        policy=_init_mlp(dim, N_ACTIONS, 0.01, rng),
        value=_init_mlp(dim, 1, 1.0, rng),
    )


def _mlp_forward(p: MlpParams, x: np.ndarray):
    h1 = np.tanh(x @ p.w1.T + p.b1)
    h2 = np.tanh(h1 @ p.w2.T + p.b2)
    out = h2 @ p.w3.T + p.b3
    return out, (x, h1, h2)


def _mlp_backward(p: MlpParams, cache, g_out: np.ndarray) -> MlpParams:
    x, h1, h2 = cache
    g_w3 = g_out.T @ h2
    g_b3 = g_out.sum(axis=0)
    g_h2 = g_out @ p.w3
    g_u2 = g_h2 * (1.0 - h2 * h2)
    g_w2 = g_u2.T @ h1
    g_b2 = g_u2.sum(axis=0)
    g_h1 = g_u2 @ p.w2
    g_u1 = g_h1 * (1.0 - h1 * h1)
    g_w1 = g_u1.T @ x
    g_b1 = g_u1.sum(axis=0)
    return MlpParams(w1=g_w1, b1=g_b1, w2=g_w2, b2=g_b2, w3=g_w3, b3=g_b3)


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(_log_softmax(logits))


def policy_forward(params: PolicyParams, state: np.ndarray) -> tuple[np.ndarray, float]:
    """Action probabilities and value estimate for one state."""
    state = np.asarray(state, dtype=np.float64)
    if state.shape != (params.dim,):
        raise DimensionMismatch(f"state shape {state.shape} != ({params.dim},)")
    logits, _ = _mlp_forward(params.policy, state[None, :])
    value, _ = _mlp_forward(params.value, state[None, :])
    return softmax(logits)[0], float(value[0, 0])


def sample_action(probs: np.ndarray, rng: np.random.Generator) -> tuple[ActionId, float]:
    """Categorical draw; returns the action and ln(probs[action])."""
    probs = np.asarray(probs, dtype=np.float64)
    total = float(probs.sum())
    if not np.all(np.isfinite(probs)) or np.any(probs < -1e-9) or abs(total - 1.0) > 1e-4:
        raise DegenerateDistribution(f"invalid action distribution {probs!r}")
    u = rng.random() * total
    cumulative = 0.0
    action = len(probs) - 1
    for i, p in enumerate(probs):
        cumulative += p
        if u < cumulative:
            action = i
            break
    return ActionId(action), float(np.log(probs[action]))


def compute_gae(
    rewards, values, dones, gamma: float, lam: float
) -> tuple[np.ndarray, np.ndarray]:
    """Generalized advantage estimation with terminal bootstrap value 0."""
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=np.float64)
    if not rewards.shape == values.shape == dones.shape:
        raise LengthMismatch("rewards, values and dones must be parallel arrays")
    n = len(rewards)
    advantages = np.zeros(n)
    gae = 0.0
    for t in range(n - 1, -1, -1):
        nonterminal = 1.0 - dones[t]
        next_value = values[t + 1] if t + 1 < n else 0.0
        delta = rewards[t] + gamma * next_value * nonterminal - values[t]
        gae = delta + gamma * lam * nonterminal * gae
        advantages[t] = gae
    return advantages, advantages + values


@dataclass
class Batch:
    """Parallel transition arrays with advantages normalized batch-wide."""

    states: np.ndarray
    actions: np.ndarray
    old_log_probs: np.ndarray
    rewards: np.ndarray
    values: np.ndarray
    dones: np.ndarray
    advantages: np.ndarray
    returns: np.ndarray

    def __post_init__(self):
        n = len(self.states)
        arrays = (
            self.actions, self.old_log_probs, self.rewards,
            self.values, self.dones, self.advantages, self.returns,
        )
        if any(len(a) != n for a in arrays):
            raise LengthMismatch("batch arrays must have equal length")

    def __len__(self) -> int:
        return len(self.states)

    def take(self, idx: np.ndarray) -> "Batch":
        return Batch(
            states=self.states[idx],
            actions=self.actions[idx],
            old_log_probs=self.old_log_probs[idx],
            rewards=self.rewards[idx],
            values=self.values[idx],
            dones=self.dones[idx],
            advantages=self.advantages[idx],
            returns=self.returns[idx],
        )

    @classmethod
    def from_transitions(
        cls, states, actions, log_probs, rewards, values, dones, cfg: PpoConfig
    ) -> "Batch":
        states = np.asarray(states, dtype=np.float64)
        rewards = np.asarray(rewards, dtype=np.float64)
        values = np.asarray(values, dtype=np.float64)
        dones = np.asarray(dones, dtype=np.float64)
        advantages, returns = compute_gae(rewards, values, dones, cfg.gamma, cfg.gae_lambda)
        if len(advantages) > 1:
            advantages = (advantages - advantages.mean()) / (advantages.std() + 1e-8)
        return cls(
            states=states,
            actions=np.asarray(actions, dtype=np.int64),
            old_log_probs=np.asarray(log_probs, dtype=np.float64),
            rewards=rewards,
            values=values,
            dones=dones,
            advantages=advantages,
            returns=returns,
        )


def clipped_surrogate(ratios: np.ndarray, advantages: np.ndarray, eps: float) -> np.ndarray:
    """Elementwise min(r*A, clip(r, 1-eps, 1+eps)*A) — never above the unclipped term."""
    unclipped = ratios * advantages
    clipped = np.clip(ratios, 1.0 - eps, 1.0 + eps) * advantages
    return np.minimum(unclipped, clipped)


def _loss_terms(params: PolicyParams, batch: Batch, cfg: PpoConfig):
    n = len(batch)
    logits, pol_cache = _mlp_forward(params.policy, batch.states)
    logp_all = _log_softmax(logits)
    probs = np.exp(logp_all)
    idx = np.arange(n)
    logp_taken = logp_all[idx, batch.actions]
    ratios = np.exp(logp_taken - batch.old_log_probs)

    surrogate = clipped_surrogate(ratios, batch.advantages, cfg.clip_epsilon)
    policy_loss = -surrogate.mean()

    v_out, val_cache = _mlp_forward(params.value, batch.states)
    v = v_out[:, 0]
    value_loss = np.mean((v - batch.returns) ** 2)

    entropy = -(probs * logp_all).sum(axis=1)
    mean_entropy = entropy.mean()

    loss = policy_loss + cfg.value_coef * value_loss - cfg.entropy_coef * mean_entropy
    components = {
        "policy": float(policy_loss),
        "value": float(value_loss),
        "entropy": float(mean_entropy),
    }
    internals = (logp_all, probs, ratios, entropy, v, pol_cache, val_cache, idx)
    return float(loss), components, internals


def ppo_loss(params: PolicyParams, batch: Batch, cfg: PpoConfig):
    """Clipped-surrogate PPO loss and its components.

    loss = policy + value_coef * value - entropy_coef * entropy, where the
    entropy component is the mean action entropy (maximized).
    """
    loss, components, _ = _loss_terms(params, batch, cfg)
    if not np.isfinite(loss):
        raise NonFiniteLoss(f"loss = {loss}")
    return loss, components


def _loss_and_grads(params: PolicyParams, batch: Batch, cfg: PpoConfig):
    loss, components, internals = _loss_terms(params, batch, cfg)
    if not np.isfinite(loss):
        raise NonFiniteLoss(f"loss = {loss}")
    logp_all, probs, ratios, entropy, v, pol_cache, val_cache, idx = internals
    n = len(batch)
    adv = batch.advantages

    unclipped = ratios * adv
    clipped = np.clip(ratios, 1.0 - cfg.clip_epsilon, 1.0 + cfg.clip_epsilon) * adv
    # d min(u, c)/d ratio: A on the unclipped branch; 0 where the clipped
    # branch is strictly lower (there the ratio sits outside the clip range).
    dmin_dratio = np.where(unclipped <= clipped, adv, 0.0)
    dloss_dlogp = -(1.0 / n) * dmin_dratio * ratios

    onehot = np.zeros_like(probs)
    onehot[idx, batch.actions] = 1.0
    g_logits = dloss_dlogp[:, None] * (onehot - probs)
    g_logits += (cfg.entropy_coef / n) * probs * (entropy[:, None] + logp_all)

    g_v = cfg.value_coef * 2.0 * (v - batch.returns) / n

    pol_grads = _mlp_backward(params.policy, pol_cache, g_logits)
    val_grads = _mlp_backward(params.value, val_cache, g_v[:, None])
    return loss, components, pol_grads, val_grads


def _global_clip(grads: list[np.ndarray], max_norm: float) -> None:
    total = float(np.sqrt(sum(float((g * g).sum()) for g in grads)))
    if total > max_norm:
        scale = max_norm / (total + 1e-12)
        for g in grads:
            g *= scale


def ppo_update(
    params: PolicyParams, batch: Batch, cfg: PpoConfig, rng: np.random.Generator
) -> PolicyParams:
    """One PPO update: shuffled minibatch Adam steps over several epochs.

    Returns new parameters; the input parameters are never mutated. A
    non-finite loss halves the learning rate and retries once from the
    original parameters before propagating.
    """
    if len(batch) < 1:
        raise ValueError("ppo_update needs at least one transition")
    lr = cfg.learning_rate
    for attempt in (0, 1):
        try:
            return _run_update(params, batch, cfg, rng, lr)
        except NonFiniteLoss:
            if attempt == 1:
                raise
            lr = lr / 2.0
    raise AssertionError("unreachable")


def _run_update(
    params: PolicyParams, batch: Batch, cfg: PpoConfig, rng: np.random.Generator, lr: float
) -> PolicyParams:
    work = deepcopy(params)
    tensors = work.tensors()
    moment1 = {name: np.zeros_like(t) for name, t in tensors}
    moment2 = {name: np.zeros_like(t) for name, t in tensors}
    step = 0
    n = len(batch)
    for _ in range(cfg.epochs_per_update):
        perm = rng.permutation(n)
        for start in range(0, n, cfg.minibatch_size):
            sub = batch.take(perm[start : start + cfg.minibatch_size])
            _, _, pol_grads, val_grads = _loss_and_grads(work, sub, cfg)
            named = [(f"policy.{n_}", g) for n_, g in pol_grads.tensors()] + [
                (f"value.{n_}", g) for n_, g in val_grads.tensors()
            ]
            _global_clip([g for _, g in named], cfg.max_grad_norm)
            step += 1
            bias1 = 1.0 - _ADAM_BETA1**step
            bias2 = 1.0 - _ADAM_BETA2**step
            for (name, tensor), (_, grad) in zip(work.tensors(), named):
                m = moment1[name]
                s = moment2[name]
                m *= _ADAM_BETA1
                m += (1.0 - _ADAM_BETA1) * grad
                s *= _ADAM_BETA2
                s += (1.0 - _ADAM_BETA2) * grad * grad
                tensor -= lr * (m / bias1) / (np.sqrt(s / bias2) + _ADAM_EPS)
    return work


def save_checkpoint(
    path: str | Path,
    params: PolicyParams,
    cfg: PpoConfig,
    rng_states: dict,
    episode_counter: int,
) -> None:
    """Versioned JSON checkpoint: parameters in row-major float64 lists plus
    RNG states and the episode counter. Round-trips bit-exactly."""
    blob = {
        "version": CHECKPOINT_VERSION,
        "dim": params.dim,
        "ppo_config": asdict(cfg),
        "policy": {n: t.tolist() for n, t in params.policy.tensors()},
        "value": {n: t.tolist() for n, t in params.value.tensors()},
        "rng_states": rng_states,
        "episode_counter": episode_counter,
    }
    Path(path).write_text(
        json.dumps(blob, sort_keys=True, separators=(",", ":")) + "\n", encoding="utf-8"
    )


@dataclass
class Checkpoint:
    params: PolicyParams
    ppo_config: PpoConfig
    rng_states: dict
    episode_counter: int


def load_checkpoint(path: str | Path) -> Checkpoint:
    blob = json.loads(Path(path).read_text(encoding="utf-8"))
    if blob.get("version") != CHECKPOINT_VERSION:
        raise CheckpointIncompatible(f"unsupported checkpoint version {blob.get('version')}")
    def mlp(section: dict) -> MlpParams:
        return MlpParams(**{n: np.asarray(v, dtype=np.float64) for n, v in section.items()})

    return Checkpoint(
        params=PolicyParams(dim=blob["dim"], policy=mlp(blob["policy"]), value=mlp(blob["value"])),
        ppo_config=PpoConfig(**blob["ppo_config"]),
        rng_states=blob["rng_states"],
        episode_counter=blob["episode_counter"],
    )
