"""Single-layer GRU classifier with softmax head, BPTT, and Adam.

Implemented directly in numpy.  Sequences are left-aligned and end-padded;
a {0,1} mask marks valid steps, and padded steps leave the hidden state
untouched, so the state after the last step is each sequence's final valid
hidden state.  All arithmetic is double precision.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .encoding import EncodedSequence

PARAM_NAMES = ("Wz", "Uz", "bz", "Wr", "Ur", "br", "Wh", "Uh", "bh", "Wo", "bo")

GRADIENT_CLIP_NORM = 5.0


class NumericFaultError(RuntimeError):
    """Training produced non-finite values; the message names the culprits."""


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    ex = np.exp(shifted)
    return ex / ex.sum(axis=1, keepdims=True)


@dataclass
class Batch:
    """Padded mini-batch: inputs B x T x D, mask B x T, targets B.

    Mask rows must be a prefix of ones followed by zeros (left-aligned
    sequences).
    """

    inputs: np.ndarray
    mask: np.ndarray
    targets: np.ndarray

    def __post_init__(self) -> None:
        if np.any(self.mask[:, 1:] > self.mask[:, :-1]):
            raise ValueError("mask rows must be 1s followed by 0s")
        if not np.any(self.mask, axis=1).all():
            raise ValueError("every sequence needs at least one valid step")

    @classmethod
    def from_sequences(cls, sequences: Sequence[EncodedSequence]) -> "Batch":
        if not sequences:
            raise ValueError("cannot batch zero sequences")
        width = sequences[0].steps.shape[1]
        longest = max(s.steps.shape[0] for s in sequences)
        inputs = np.zeros((len(sequences), longest, width))
        mask = np.zeros((len(sequences), longest))
        targets = np.empty(len(sequences), dtype=np.intp)
        for i, seq in enumerate(sequences):
            steps = seq.steps.shape[0]
            inputs[i, :steps] = seq.steps
            mask[i, :steps] = 1.0
            targets[i] = seq.target
        return cls(inputs=inputs, mask=mask, targets=targets)

    @property
    def size(self) -> int:
        return self.inputs.shape[0]


class GruNetwork:
    """One-layer GRU with a softmax output head over C classes."""

    def __init__(self, input_dim: int, hidden_dim: int, output_dim: int,
                 params: Mapping[str, np.ndarray]):
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        self.output_dim = output_dim
        self.params = dict(params)

    @classmethod
    def initialize(cls, input_dim: int, hidden_dim: int, output_dim: int,
                   seed: int | np.random.Generator) -> "GruNetwork":
        """Scaled-uniform weight init (range 1/sqrt(H)), zero biases."""
        rng = np.random.default_rng(seed)
        scale = np.sqrt(1.0 / hidden_dim)

        def weights(rows: int, cols: int) -> np.ndarray:
            return rng.uniform(-scale, scale, size=(rows, cols))

        params = {}
        for gate in ("z", "r", "h"):
            params[f"W{gate}"] = weights(hidden_dim, input_dim)
            params[f"U{gate}"] = weights(hidden_dim, hidden_dim)
            params[f"b{gate}"] = np.zeros(hidden_dim)
        params["Wo"] = weights(output_dim, hidden_dim)
        params["bo"] = np.zeros(output_dim)
        return cls(input_dim, hidden_dim, output_dim, params)

    def copy_params(self) -> dict[str, np.ndarray]:
        return {name: tensor.copy() for name, tensor in self.params.items()}

    def load_params(self, params: Mapping[str, np.ndarray]) -> None:
        for name in PARAM_NAMES:
            self.params[name] = np.array(params[name], dtype=float)


def forward(net: GruNetwork, batch: Batch) -> tuple[np.ndarray, dict]:
    """Run the GRU over the batch; returns (probabilities, cache for BPTT)."""
    p = net.params
    batch_size, steps, _ = batch.inputs.shape
    hidden = np.zeros((batch_size, net.hidden_dim))
    cache = {
        "z": np.empty((steps, batch_size, net.hidden_dim)),
        "r": np.empty((steps, batch_size, net.hidden_dim)),
        "hc": np.empty((steps, batch_size, net.hidden_dim)),
        "h_prev": np.empty((steps, batch_size, net.hidden_dim)),
    }
    for t in range(steps):
        x_t = batch.inputs[:, t, :]
        m_t = batch.mask[:, t:t + 1]
        update = _sigmoid(x_t @ p["Wz"].T + hidden @ p["Uz"].T + p["bz"])
        reset = _sigmoid(x_t @ p["Wr"].T + hidden @ p["Ur"].T + p["br"])
        candidate = np.tanh(x_t @ p["Wh"].T + (reset * hidden) @ p["Uh"].T + p["bh"])
        cache["z"][t] = update
        cache["r"][t] = reset
        cache["hc"][t] = candidate
        cache["h_prev"][t] = hidden
        updated = (1.0 - update) * hidden + update * candidate
        hidden = m_t * updated + (1.0 - m_t) * hidden
    logits = hidden @ p["Wo"].T + p["bo"]
    # Non-finite values are detected below and raised as a NumericFaultError,
    # so the transient warnings softmax would emit are noise.
    with np.errstate(invalid="ignore", over="ignore"):
        probs = _softmax(logits)
    if not np.isfinite(probs).all():
        bad = [name for name in PARAM_NAMES if not np.isfinite(p[name]).all()]
        raise NumericFaultError(
            "non-finite network output; non-finite parameters: "
            + (", ".join(bad) if bad else "none (activation overflow)")
        )
    cache["h_last"] = hidden
    cache["logits"] = logits
    cache["probs"] = probs
    return probs, cache


def loss_and_gradients(net: GruNetwork, batch: Batch) -> tuple[float, dict[str, np.ndarray]]:
    """Mean cross-entropy of the batch and its gradients via BPTT.

    Gradients flow only through valid (unmasked) steps; padded steps are
    transparent in both directions.
    """
    p = net.params
    probs, cache = forward(net, batch)
    batch_size, steps, _ = batch.inputs.shape
    rows = np.arange(batch_size)

    logits = cache["logits"]
    shift = logits.max(axis=1)
    logsumexp = shift + np.log(np.exp(logits - shift[:, None]).sum(axis=1))
    loss = float((logsumexp - logits[rows, batch.targets]).mean())

    grads = {name: np.zeros_like(p[name]) for name in PARAM_NAMES}
    dlogits = probs.copy()
    dlogits[rows, batch.targets] -= 1.0
    dlogits /= batch_size
    grads["Wo"] = dlogits.T @ cache["h_last"]
    grads["bo"] = dlogits.sum(axis=0)
    dh = dlogits @ p["Wo"]

    for t in reversed(range(steps)):
        m_t = batch.mask[:, t:t + 1]
        x_t = batch.inputs[:, t, :]
        update = cache["z"][t]
        reset = cache["r"][t]
        candidate = cache["hc"][t]
        h_prev = cache["h_prev"][t]

        dh_step = dh * m_t
        dh_prev = dh * (1.0 - m_t)

        d_update = dh_step * (candidate - h_prev)
        d_candidate = dh_step * update
        dh_prev += dh_step * (1.0 - update)

        da_c = d_candidate * (1.0 - candidate * candidate)
        grads["Wh"] += da_c.T @ x_t
        grads["Uh"] += da_c.T @ (reset * h_prev)
        grads["bh"] += da_c.sum(axis=0)
        d_gated = da_c @ p["Uh"]
        d_reset = d_gated * h_prev
        dh_prev += d_gated * reset

        da_z = d_update * update * (1.0 - update)
        da_r = d_reset * reset * (1.0 - reset)
        grads["Wz"] += da_z.T @ x_t
        grads["Uz"] += da_z.T @ h_prev
        grads["bz"] += da_z.sum(axis=0)
        grads["Wr"] += da_r.T @ x_t
        grads["Ur"] += da_r.T @ h_prev
        grads["br"] += da_r.sum(axis=0)
        dh_prev += da_z @ p["Uz"] + da_r @ p["Ur"]
        dh = dh_prev
    return loss, grads


def clip_gradients(grads: Mapping[str, np.ndarray],
                   max_norm: float = GRADIENT_CLIP_NORM) -> float:
    """Scale gradients in place to a global norm of at most ``max_norm``."""
    total = np.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if total > max_norm:
        factor = max_norm / total
        for g in grads.values():
            g *= factor
    return total


@dataclass
class AdamState:
    """Adam moments and step counter for one parameter set."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0
    learning_rate: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: Mapping[str, np.ndarray],
                   learning_rate: float = 0.01) -> "AdamState":
        return cls(
            m={name: np.zeros_like(p) for name, p in params.items()},
            v={name: np.zeros_like(p) for name, p in params.items()},
            learning_rate=learning_rate,
        )


def adam_step(
    params: dict[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: AdamState,
) -> tuple[dict[str, np.ndarray], AdamState]:
    """One Adam update, in place: bias-corrected moments, p -= lr*m^/(sqrt(v^)+eps)."""
    state.t += 1
    correction1 = 1.0 - state.beta1 ** state.t
    correction2 = 1.0 - state.beta2 ** state.t
    for name, grad in grads.items():
        state.m[name] = state.beta1 * state.m[name] + (1.0 - state.beta1) * grad
        state.v[name] = state.beta2 * state.v[name] + (1.0 - state.beta2) * grad * grad
        m_hat = state.m[name] / correction1
        v_hat = state.v[name] / correction2
        params[name] -= state.learning_rate * m_hat / (np.sqrt(v_hat) + state.eps)
    return params, state


def predict(net: GruNetwork, sequence: EncodedSequence) -> tuple[int, np.ndarray]:
    """Most likely class for one encoded prefix; ties go to the lowest index."""
    batch = Batch.from_sequences([sequence])
    probs, _ = forward(net, batch)
    return int(probs[0].argmax()), probs[0]


def predict_batch(net: GruNetwork, batch: Batch) -> np.ndarray:
    probs, _ = forward(net, batch)
    return probs.argmax(axis=1)
