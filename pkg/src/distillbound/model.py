"""Two-layer ReLU network with fixed random output signs and symmetric init.

The network is f(x) = (1/sqrt(m)) * sum_j a_j * relu(w_j . x) with the output
signs a_j in {-1,+1} frozen at initialization. Symmetric initialization pairs
neuron j with neuron j+m/2: equal input weights, opposite output signs, so the
initial function is identically zero.

Activation pattern bits use w.x >= 0; the gradient indicator uses w.x > 0.
Both agree off the measure-zero tie set, and relu makes the forward value
independent of the choice.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class NetworkParams:
    """Weights of one network. weights is updated by training; init_weights
    stays at W(0) for projections, flip sets, and frozen-pattern baselines."""

    out_signs: np.ndarray    # (m,) entries +-1
    weights: np.ndarray      # (m, d)
    init_weights: np.ndarray # (m, d)

    @property
    def width(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    def copy(self) -> "NetworkParams":
        return NetworkParams(self.out_signs.copy(), self.weights.copy(),
                             self.init_weights.copy())


def init_symmetric(m: int, d: int, rng) -> NetworkParams:
    """Draw symmetric initialization: a_j = -a_{j+m/2}, W_j(0) = W_{j+m/2}(0).

    rng is a numpy Generator (or a seed accepted by default_rng). m must be
    even; the paired halves force a zero initial function.
    """
    if m % 2 != 0:
        raise ValueError("symmetric initialization requires even width")
    if m <= 0 or d <= 0:
        raise ValueError("width and dim must be positive")
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    half = m // 2
    a_half = rng.choice(np.array([-1.0, 1.0]), size=half)
    w_half = rng.standard_normal((half, d))
    out_signs = np.concatenate([a_half, -a_half])
    init_w = np.vstack([w_half, w_half])
    return NetworkParams(out_signs=out_signs, weights=init_w.copy(),
                         init_weights=init_w)


def _frozen_sum(bits, preact_eval, out_signs):
    # shared reduction so forward and frozen-forward are bit-identical when
    # the pattern comes from the evaluated weights themselves
    m = out_signs.shape[0]
    return ((preact_eval * bits) @ out_signs) / np.sqrt(m)


def forward(params: NetworkParams, x: np.ndarray) -> float:
    """Network output at a single input."""
    return float(forward_batch(params, np.asarray(x, dtype=np.float64)[None, :])[0])


def forward_batch(params: NetworkParams, xs: np.ndarray) -> np.ndarray:
    """Network outputs for a batch of inputs, shape (n,)."""
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 2 or xs.shape[1] != params.dim:
        raise ValueError(f"inputs must have shape (n, {params.dim})")
    preact = xs @ params.weights.T
    return _frozen_sum(preact >= 0.0, preact, params.out_signs)


def activation_pattern(params: NetworkParams, xs: np.ndarray) -> np.ndarray:
    """Boolean (n, m) pattern bits 1(w_j . x_i >= 0) at the current weights."""
    xs = np.asarray(xs, dtype=np.float64)
    return (xs @ params.weights.T) >= 0.0


def forward_frozen(bits: np.ndarray, eval_weights: np.ndarray,
                   out_signs: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Outputs with the activation pattern frozen to `bits` but the linear
    part taken from eval_weights. Linear in eval_weights by construction."""
    xs = np.asarray(xs, dtype=np.float64)
    if bits.shape != (xs.shape[0], eval_weights.shape[0]):
        raise ValueError("pattern bits shape does not match inputs/weights")
    return _frozen_sum(bits, xs @ eval_weights.T, out_signs)


def output_grad(params: NetworkParams, x: np.ndarray) -> np.ndarray:
    """Gradient of f(x) in the input weights, shape (m, d).

    Row j is (a_j/sqrt(m)) * 1(w_j . x > 0) * x. Its Frobenius norm is at
    most ||x||.
    """
    x = np.asarray(x, dtype=np.float64)
    act = (params.weights @ x > 0.0).astype(np.float64)
    scale = params.out_signs * act / np.sqrt(params.width)
    return scale[:, None] * x[None, :]


def flip_set(params: NetworkParams, x: np.ndarray) -> np.ndarray:
    """Indices j whose strict activation 1(w_j . x > 0) differs between the
    current weights and the initial weights."""
    x = np.asarray(x, dtype=np.float64)
    now = params.weights @ x > 0.0
    then = params.init_weights @ x > 0.0
    return np.nonzero(now != then)[0]


def flip_counts(weights: np.ndarray, init_weights: np.ndarray,
                xs: np.ndarray) -> np.ndarray:
    """Per-sample flip-set sizes |{j : sign bit changed}|, shape (n,)."""
    now = xs @ weights.T > 0.0
    then = xs @ init_weights.T > 0.0
    return np.sum(now != then, axis=1)


def save_checkpoint(params: NetworkParams, path) -> None:
    """Write (m, d, a, W, W0) to an .npz archive.

    Layout: arrays `out_signs` (m,), `weights` (m,d), `init_weights` (m,d),
    all float64. Round-trips bit-exactly via load_checkpoint.
    """
    np.savez(path, out_signs=params.out_signs, weights=params.weights,
             init_weights=params.init_weights)


def load_checkpoint(path) -> NetworkParams:
    with np.load(path) as z:
        return NetworkParams(out_signs=z["out_signs"], weights=z["weights"],
                             init_weights=z["init_weights"])
