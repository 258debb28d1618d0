"""Actor-critic network with explicit forward pass and analytic gradients.

Parameters are plain numpy arrays: a stack of hidden layers followed by a
policy head (one logit per ladder rate) and a scalar value head. Updates are
plain SGD so that averaging gradients across clients and stepping equals
stepping on the averaged gradient.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class NetError(ValueError):
    pass


class DivergenceError(FloatingPointError):
    """Non-finite value encountered; the caller should reduce the learning rate."""


@dataclass(frozen=True)
class LayerSpec:
    in_dim: int
    out_dim: int
    activation: str = "relu"  # "relu" | "identity"

    def __post_init__(self):
        if self.in_dim < 1 or self.out_dim < 1:
            raise NetError("layer dims must be >= 1")
        if self.activation not in ("relu", "identity"):
            raise NetError(f"unknown activation {self.activation!r}")


@dataclass
class ModelParams:
    """Weights/biases ordered hidden layers first, then policy head, then value head."""
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activations: list[str]  # per hidden layer

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def n_hidden(self) -> int:
        return len(self.activations)

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def ladder_size(self) -> int:
        return self.weights[-2].shape[0]

    def copy(self) -> "ModelParams":
        return ModelParams([w.copy() for w in self.weights],
                           [b.copy() for b in self.biases],
                           list(self.activations))


@dataclass
class Gradients:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def copy(self) -> "Gradients":
        return Gradients([w.copy() for w in self.weights], [b.copy() for b in self.biases])


@dataclass(frozen=True)
class FreezeMask:
    """Per-layer trainability flags; heads count as the last two layers."""
    trainable: tuple[bool, ...]


def all_trainable(params: ModelParams) -> FreezeMask:
    return FreezeMask((True,) * params.n_layers)


@dataclass(frozen=True)
class Trajectory:
    states: list[np.ndarray]
    actions: list[int]
    rewards: list[float]
    bootstrap_value: float

    def __post_init__(self):
        if not self.states:
            raise NetError("empty trajectory")
        if not len(self.states) == len(self.actions) == len(self.rewards):
            raise NetError("trajectory field lengths differ")
        if not all(np.isfinite(self.rewards)):
            raise NetError("non-finite reward in trajectory")


@dataclass(frozen=True)
class TrainHyper:
    gamma: float = 0.99
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    lr: float = 1e-3
    rollout_len: int = 16
    clip_norm: float = 40.0

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise NetError("gamma must be in (0, 1]")
        if self.lr <= 0:
            raise NetError("lr must be positive")


def init_params(arch: list[LayerSpec], ladder_size: int, seed: int) -> ModelParams:
    """Glorot-uniform weights (+-sqrt(6/(in+out))), zero biases; both heads on the last layer."""
    for prev, nxt in zip(arch, arch[1:]):
        if prev.out_dim != nxt.in_dim:
            raise NetError(f"incompatible dims: {prev.out_dim} -> {nxt.in_dim}")
    if ladder_size < 2:
        raise NetError("ladder_size must be >= 2")
    rng = np.random.default_rng(seed)
    weights, biases, acts = [], [], []
    for spec in arch:
        limit = np.sqrt(6.0 / (spec.in_dim + spec.out_dim))
        weights.append(rng.uniform(-limit, limit, size=(spec.out_dim, spec.in_dim)))
        biases.append(np.zeros(spec.out_dim))
        acts.append(spec.activation)
    feat = arch[-1].out_dim
    for out_dim in (ladder_size, 1):
        limit = np.sqrt(6.0 / (feat + out_dim))
        weights.append(rng.uniform(-limit, limit, size=(out_dim, feat)))
        biases.append(np.zeros(out_dim))
    return ModelParams(weights, biases, acts)


def _activate(z: np.ndarray, kind: str) -> np.ndarray:
    return np.maximum(z, 0.0) if kind == "relu" else z


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max()
    e = np.exp(z)
    return e / e.sum()


def _forward_full(params: ModelParams, x: np.ndarray):
    """Forward pass keeping intermediates for backprop."""
    pre, post = [], [x]
    h = x
    for i, act in enumerate(params.activations):
        z = params.weights[i] @ h + params.biases[i]
        pre.append(z)
        h = _activate(z, act)
        post.append(h)
    logits = params.weights[-2] @ h + params.biases[-2]
    value = float((params.weights[-1] @ h + params.biases[-1])[0])
    return pre, post, logits, _softmax(logits), value


def forward(params: ModelParams, state: np.ndarray) -> tuple[np.ndarray, float]:
    """Return (policy probabilities, value estimate) for one state."""
    state = np.asarray(state, dtype=float)
    if state.shape != (params.input_dim,):
        raise NetError(f"state shape {state.shape} != ({params.input_dim},)")
    if not np.all(np.isfinite(state)):
        raise NetError("non-finite state input")
    _, _, _, probs, value = _forward_full(params, state)
    return probs, value


def sample_action(probs: np.ndarray, rng: np.random.Generator) -> int:
    """Inverse-CDF sample from a categorical distribution."""
    r = rng.random()
    return int(min(np.searchsorted(np.cumsum(probs), r), len(probs) - 1))


def discounted_returns(rewards: list[float], bootstrap: float, gamma: float) -> np.ndarray:
    out = np.empty(len(rewards))
    acc = bootstrap
    for i in range(len(rewards) - 1, -1, -1):
        acc = rewards[i] + gamma * acc
        out[i] = acc
    return out


def a3c_loss(params: ModelParams, traj: Trajectory, hyper: TrainHyper,
             advantages: np.ndarray | None = None) -> float:
    """Rollout loss: -sum log pi(a)*A + c_v*(R-V)^2 - beta*H.

    `advantages` may be supplied externally (e.g. frozen at a base parameter
    point for finite-difference checks); by default they are recomputed from
    `params`, matching what a3c_gradients differentiates.
    """
    returns = discounted_returns(traj.rewards, traj.bootstrap_value, hyper.gamma)
    total = 0.0
    for t, (s, a) in enumerate(zip(traj.states, traj.actions)):
        probs, value = forward(params, s)
        adv = returns[t] - value if advantages is None else advantages[t]
        entropy = -float(np.sum(probs * np.log(probs)))
        total += (-np.log(probs[a]) * adv
                  + hyper.value_coef * (returns[t] - value) ** 2
                  - hyper.entropy_coef * entropy)
    return float(total)


def zero_gradients(params: ModelParams) -> Gradients:
    return Gradients([np.zeros_like(w) for w in params.weights],
                     [np.zeros_like(b) for b in params.biases])


def a3c_gradients(params: ModelParams, traj: Trajectory,
                  hyper: TrainHyper) -> tuple[Gradients, float]:
    """Analytic gradients of the rollout loss, with the advantage held constant
    in the policy term. Clips the global gradient norm at hyper.clip_norm."""
    returns = discounted_returns(traj.rewards, traj.bootstrap_value, hyper.gamma)
    grads = zero_gradients(params)
    n_hidden = params.n_hidden
    loss = 0.0
    for t, (s, a) in enumerate(zip(traj.states, traj.actions)):
        s = np.asarray(s, dtype=float)
        if s.shape != (params.input_dim,):
            raise NetError(f"state shape {s.shape} != ({params.input_dim},)")
        pre, post, logits, probs, value = _forward_full(params, s)
        feat = post[-1]
        adv = returns[t] - value
        entropy = -float(np.sum(probs * np.log(probs)))
        loss += (-np.log(probs[a]) * adv
                 + hyper.value_coef * (returns[t] - value) ** 2
                 - hyper.entropy_coef * entropy)

        # d/dlogits of the policy term (advantage constant) plus entropy term
        dlogits = adv * probs.copy()
        dlogits[a] -= adv
        dlogits += hyper.entropy_coef * probs * (np.log(probs) + entropy)
        dvalue = -2.0 * hyper.value_coef * (returns[t] - value)

        grads.weights[-2] += np.outer(dlogits, feat)
        grads.biases[-2] += dlogits
        grads.weights[-1] += dvalue * feat[None, :]
        grads.biases[-1] += dvalue
        dh = params.weights[-2].T @ dlogits + dvalue * params.weights[-1][0]
        for i in range(n_hidden - 1, -1, -1):
            dz = dh * (pre[i] > 0) if params.activations[i] == "relu" else dh
            grads.weights[i] += np.outer(dz, post[i])
            grads.biases[i] += dz
            if i > 0:
                dh = params.weights[i].T @ dz
    if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads.weights):
        raise DivergenceError("non-finite loss or gradient")
    _clip_global_norm(grads, hyper.clip_norm)
    return grads, float(loss)


def _clip_global_norm(grads: Gradients, max_norm: float) -> None:
    if max_norm <= 0:
        return
    total = np.sqrt(sum(float(np.sum(g * g)) for g in grads.weights)
                    + sum(float(np.sum(g * g)) for g in grads.biases))
    if total > max_norm:
        scale = max_norm / total
        for g in grads.weights:
            g *= scale
        for g in grads.biases:
            g *= scale


def apply_update(params: ModelParams, grads: Gradients, lr: float,
                 mask: FreezeMask) -> ModelParams:
    """SGD step on trainable layers; frozen layers are copied bit-identically."""
    if len(mask.trainable) != params.n_layers:
        raise NetError("mask length does not match layer count")
    if len(grads.weights) != params.n_layers:
        raise NetError("gradient shape mismatch")
    weights, biases = [], []
    for i in range(params.n_layers):
        if grads.weights[i].shape != params.weights[i].shape:
            raise NetError(f"gradient shape mismatch at layer {i}")
        if mask.trainable[i]:
            w = params.weights[i] - lr * grads.weights[i]
            b = params.biases[i] - lr * grads.biases[i]
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise DivergenceError(f"non-finite update at layer {i}")
            weights.append(w)
            biases.append(b)
        else:
            weights.append(params.weights[i].copy())
            biases.append(params.biases[i].copy())
    return ModelParams(weights, biases, list(params.activations))


def mean_gradients(grad_list: list[Gradients]) -> Gradients:
    if not grad_list:
        raise NetError("no gradients to average")
    out = grad_list[0].copy()
    for g in grad_list[1:]:
        for i in range(len(out.weights)):
            out.weights[i] += g.weights[i]
            out.biases[i] += g.biases[i]
    k = len(grad_list)
    for i in range(len(out.weights)):
        out.weights[i] /= k
        out.biases[i] /= k
    return out


def zero_frozen(grads: Gradients, mask: FreezeMask) -> Gradients:
    """Zero gradient entries of frozen layers (aggregation payloads carry zeros there)."""
    out = grads.copy()
    for i, trainable in enumerate(mask.trainable):
        if not trainable:
            out.weights[i][:] = 0.0
            out.biases[i][:] = 0.0
    return out


CHECKPOINT_VERSION = 1


def save_checkpoint(params: ModelParams, path: str | Path) -> None:
    arrays = {"version": np.array(CHECKPOINT_VERSION),
              "n_layers": np.array(params.n_layers),
              "activations": np.array(params.activations)}
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        arrays[f"w{i}"] = w
        arrays[f"b{i}"] = b
    np.savez(path, **arrays)


def load_checkpoint(path: str | Path) -> ModelParams:
    with np.load(path, allow_pickle=False) as data:
        if int(data["version"]) != CHECKPOINT_VERSION:
            raise NetError(f"unsupported checkpoint version {int(data['version'])}")
        n = int(data["n_layers"])
        weights = [data[f"w{i}"].copy() for i in range(n)]
        biases = [data[f"b{i}"].copy() for i in range(n)]
        activations = [str(a) for a in data["activations"]]
    return ModelParams(weights, biases, activations)


def params_close(a: ModelParams, b: ModelParams, tol: float = 0.0) -> bool:
    """Elementwise max |a-b| <= tol (tol 0 means bit-identical values)."""
    for wa, wb in zip(a.weights, b.weights):
        if wa.shape != wb.shape or np.max(np.abs(wa - wb), initial=0.0) > tol:
            return False
    for ba, bb in zip(a.biases, b.biases):
        if np.max(np.abs(ba - bb), initial=0.0) > tol:
            return False
    return True
