"""Kernel teachers: logits from an expected ReLU-gate feature inner product.

The teacher logit at x is E_z[1(z . x > 0) * x . v(z)] over z ~ N(0, I). For
a constant response v(z) = u this integral is x . u / 2 exactly. The Monte
Carlo variant holds a finite table of sampled directions with one bounded
response row each and averages the gated inner products. A third variant
carries logits straight from a trained wide network, for distilling into
students.

Soft targets are p = sigmoid(z); hard targets stay the dataset labels.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
import warnings

import numpy as np
from scipy.special import expit

from . import losses, model
from .dataio import LabeledDataset
from .seeds import substream

MIN_MC_SAMPLES = 100


@dataclass
class ClosedFormLinear:
    """Constant response v(z) = u; logits are x . u / 2 exactly."""

    u: np.ndarray

    def validate(self):
        if np.linalg.norm(self.u) > 1.0 + 1e-12:
            raise ValueError("direction norm must be <= 1 for bounded responses")


@dataclass
class MonteCarloRKHS:
    """K sampled Gaussian directions with bounded response rows.

    v_table[k] is the response at directions[k]; rows must have norm <= 1.
    Fresh weight vectors look up their nearest sampled direction.
    """

    directions: np.ndarray  # (K, d)
    v_table: np.ndarray     # (K, d)
    sample_count: int
    seed: int

    def validate(self):
        if self.sample_count < MIN_MC_SAMPLES:
            raise ValueError(f"need at least {MIN_MC_SAMPLES} Monte Carlo samples")
        if self.directions.shape != self.v_table.shape:
            raise ValueError("directions and v_table shapes differ")
        if np.any(np.linalg.norm(self.v_table, axis=1) > 1.0 + 1e-12):
            raise ValueError("response rows must have norm <= 1")


@dataclass
class WideNetLogits:
    """Logits recorded from a trained wide network, keyed to a dataset."""

    logits: np.ndarray
    provenance: str = ""


def make_mc_constant(u: np.ndarray, d: int, sample_count: int, seed: int) -> MonteCarloRKHS:
    """Monte Carlo spec whose response table is the constant row u."""
    rng = substream(seed, "mc-teacher")
    dirs = rng.standard_normal((sample_count, d))
    table = np.tile(np.asarray(u, dtype=np.float64), (sample_count, 1))
    spec = MonteCarloRKHS(directions=dirs, v_table=table,
                          sample_count=sample_count, seed=seed)
    spec.validate()
    return spec


@dataclass(frozen=True)
class TeacherLabels:
    """Teacher outputs on one dataset: logits z, probs mu(z), margin min y z."""

    logits: np.ndarray
    probs: np.ndarray
    margin: float
    mc_stderr: np.ndarray | None = None


def teacher_logits(spec, ds: LabeledDataset):
    """Logits for every dataset sample; (z, stderr) with stderr None unless
    Monte Carlo."""
    if isinstance(spec, ClosedFormLinear):
        spec.validate()
        return 0.5 * (ds.inputs @ spec.u), None
    if isinstance(spec, MonteCarloRKHS):
        spec.validate()
        gates = ds.inputs @ spec.directions.T > 0.0        # (n, K)
        inner = ds.inputs @ spec.v_table.T                 # (n, K)
        terms = gates * inner
        z = terms.mean(axis=1)
        stderr = terms.std(axis=1, ddof=1) / np.sqrt(spec.sample_count)
        return z, stderr
    if isinstance(spec, WideNetLogits):
        if spec.logits.shape != (ds.n,):
            raise ValueError("recorded logits do not match this dataset")
        return spec.logits.copy(), None
    raise TypeError(f"unknown teacher spec {type(spec).__name__}")


def labels_from(spec, ds: LabeledDataset) -> TeacherLabels:
    """TeacherLabels for a dataset; warns when the teacher margin is <= 0."""
    z, stderr = teacher_logits(spec, ds)
    probs = expit(z)
    if np.any(probs <= 0.0) or np.any(probs >= 1.0):
        raise ValueError("teacher logits saturate the sigmoid; soft targets "
                         "must stay strictly inside (0,1)")
    margin = float(np.min(ds.labels * z))
    if margin <= 0.0:
        warnings.warn(f"teacher margin {margin:.4g} <= 0; margin-based bound "
                      "checks will be skipped", stacklevel=2)
    return TeacherLabels(logits=z, probs=probs, margin=margin, mc_stderr=stderr)


def estimate_margin(spec, ds: LabeledDataset) -> float:
    z, _ = teacher_logits(spec, ds)
    return float(np.min(ds.labels * z))


# ---------------------------------------------------------------------------
# reference weights: the teacher's response evaluated at the initial weights

@dataclass
class ReferenceWeights:
    """Rows U_j = (a_j/sqrt(m)) v(W_j(0)) and the shifted point W(0)+scale*U.

    Every row of U has norm <= 1/sqrt(m), so W(0)+scale*U lies inside the
    radius-scale projection ball.
    """

    u_rows: np.ndarray      # (m, d)
    shifted: np.ndarray     # (m, d)
    scale: float


def build_reference(params: model.NetworkParams, spec, scale: float = 1.0) -> ReferenceWeights:
    if isinstance(spec, ClosedFormLinear):
        spec.validate()
        v_at_init = np.tile(spec.u, (params.width, 1))
    elif isinstance(spec, MonteCarloRKHS):
        spec.validate()
        # nearest sampled direction, piecewise-constant response
        d2 = (np.sum(params.init_weights ** 2, axis=1, keepdims=True)
              - 2.0 * params.init_weights @ spec.directions.T
              + np.sum(spec.directions ** 2, axis=1)[None, :])
        v_at_init = spec.v_table[np.argmin(d2, axis=1)]
    elif isinstance(spec, WideNetLogits):
        raise TypeError("recorded logits carry no response function; "
                        "cannot build reference weights")
    else:
        raise TypeError(f"unknown teacher spec {type(spec).__name__}")
    u_rows = (params.out_signs / np.sqrt(params.width))[:, None] * v_at_init
    return ReferenceWeights(u_rows=u_rows,
                            shifted=params.init_weights + scale * u_rows,
                            scale=float(scale))


def subsample_outputs(params: model.NetworkParams, ref: ReferenceWeights,
                      xs: np.ndarray) -> np.ndarray:
    """Frozen-pattern outputs at U with the W(0) pattern: the finite-width
    stand-in for the teacher logits."""
    bits = (np.asarray(xs) @ params.init_weights.T) >= 0.0
    return model.forward_frozen(bits, ref.u_rows, params.out_signs, xs)


# ---------------------------------------------------------------------------
# wide-net teacher fitting (plain gradient descent, hard labels)

def train_wide_teacher(ds: LabeledDataset, width: int, epochs: int, eta: float,
                       seed: int):
    """Fit a width-`width` network to the hard labels with full-batch GD.

    Returns (WideNetLogits spec, final train accuracy). No projection; the
    teacher is free to move. Divergence aborts with the failing epoch named.
    """
    if epochs < 1 or eta <= 0.0:
        raise ValueError("need epochs >= 1 and eta > 0")
    params = model.init_symmetric(width, ds.d, substream(seed, "init"))
    xs, ys = ds.inputs, ds.labels
    inv = 1.0 / np.sqrt(width)
    for t in range(epochs):
        preact = xs @ params.weights.T
        fs = ((preact * (preact >= 0.0)) @ params.out_signs) * inv
        if not np.all(np.isfinite(fs)):
            raise RuntimeError(f"teacher training diverged at epoch {t}")
        e = losses.hard_grad(ys, fs) / ds.n
        gated = (preact > 0.0) * e[:, None]
        grad = (params.out_signs[:, None] * inv) * (gated.T @ xs)
        params.weights -= eta * grad
    fs = model.forward_batch(params, xs)
    acc = 1.0 - losses.class_error(ys, fs)
    spec = WideNetLogits(logits=fs, provenance=f"widenet(width={width},"
                         f"epochs={epochs},eta={eta},seed={seed})")
    return spec, float(acc)


# ---------------------------------------------------------------------------
# CSV export: header i,y,z,p

def write_labels_csv(ds: LabeledDataset, labels: TeacherLabels, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "y", "z", "p"])
        for i in range(ds.n):
            w.writerow([i, format(ds.labels[i], ".17g"),
                        format(labels.logits[i], ".17g"),
                        format(labels.probs[i], ".17g")])


def read_labels_csv(path) -> TeacherLabels:
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        if next(r, None) != ["i", "y", "z", "p"]:
            raise ValueError(f"{path}: expected header i,y,z,p")
        rows = [row for row in r if row]
    if not rows:
        raise ValueError(f"{path}: empty teacher labels")
    ys = np.array([float(row[1]) for row in rows])
    z = np.array([float(row[2]) for row in rows])
    p = np.array([float(row[3]) for row in rows])
    return TeacherLabels(logits=z, probs=p, margin=float(np.min(ys * z)))
