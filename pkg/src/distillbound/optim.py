"""Projected gradient descent on the empirical risk, with full trace recording.

Each step descends the full-batch risk gradient, then projects every weight
row back into the ball of radius B/sqrt(m) around its initial value. The trace
records, for every iteration t, the risks at W(t) before the step, the frozen
pattern risk of the reference weights under W(t)'s pattern, the Frobenius
deviation from the reference, the largest per-sample activation flip count
against W(0), and how many rows the projection clipped on the step to W(t+1).

Two engines produce traces:

* dense: the direct formulation, one (n, m) preactivation matrix per step.
  Reference for every deterministic inequality check, and the only engine
  that can record reference-weight quantities or drive an observer.
* cells: exact PGD for very wide nets. With projection radius B/sqrt(m) and
  unit-norm inputs, a row whose initial preactivation is farther than
  B/sqrt(m) from zero can never change activation sign, and rows sharing an
  initial sign pattern receive identical updates up to their output sign,
  which squares away. So rows evolve as per-pattern classes plus a small
  band of flip-capable rows that migrate to dense handling on their first
  flip. Semantics match dense PGD exactly; floating-point summation order
  differs, so cross-engine traces agree to tolerance rather than bitwise.

Either engine is bit-deterministic given (params, cfg) on one platform.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import losses, model

_CELLS_MIN_WORK = 1 << 21  # m*n above this and auto picks the cells engine


@dataclass
class TrainConfig:
    loss_kind: str               # "soft" or "hard"
    eta: float
    radius: float                # projection radius B; math.inf disables it
    iters: int
    seed: int = 0                # recorded in manifests; training is deterministic in params
    engine: str = "auto"         # "auto" | "dense" | "cells"

    def validate(self) -> None:
        if self.loss_kind not in ("soft", "hard"):
            raise ValueError("loss_kind must be 'soft' or 'hard'")
        if self.eta < 0.0:
            raise ValueError("eta must be >= 0")
        if self.iters < 1:
            raise ValueError("iters must be >= 1")
        if not (self.radius > 0.0):
            raise ValueError("radius must be positive (math.inf allowed)")
        if self.engine not in ("auto", "dense", "cells"):
            raise ValueError("engine must be auto, dense, or cells")


class TrainDivergence(RuntimeError):
    """Raised when the risk stops being finite; carries the trace so far."""

    def __init__(self, message, partial_trace):
        super().__init__(message)
        self.partial_trace = partial_trace


@dataclass
class TrainTrace:
    """Per-iteration records plus the final weights.

    Exactly cfg.iters rows. Row t holds quantities at W(t) before the step;
    final holds W(T). Proved pointwise inequalities (Pinsker sandwich, the
    gradient-entropy bound) are evaluated on every (p, f) pair the run
    touches and their worst slacks kept, so suites can assert them globally.
    """

    steps: np.ndarray
    r_kl: np.ndarray
    r_hard: np.ndarray
    r_class: np.ndarray
    r_kl_ref: np.ndarray
    frob_dev: np.ndarray
    max_flip: np.ndarray
    clipped_rows: np.ndarray
    final: model.NetworkParams
    eta: float
    radius: float
    loss_kind: str
    entropy_bar: float
    pinsker_lo_min: float = math.inf
    pinsker_hi_min: float = math.inf
    grad_bound_min: float = math.inf
    fbar_max: float = math.nan      # max |frozen-pattern reference output| seen

    @property
    def iters(self) -> int:
        return len(self.steps)


TRACE_HEADER = ["t", "r_kl", "r_hard", "r_class", "r_kl_ref", "frob_dev",
                "max_flip", "clipped_rows"]


def write_trace_csv(trace: TrainTrace, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_HEADER)
        for k in range(trace.iters):
            w.writerow([int(trace.steps[k])]
                       + [format(v[k], ".17g") for v in
                          (trace.r_kl, trace.r_hard, trace.r_class,
                           trace.r_kl_ref, trace.frob_dev)]
                       + [int(trace.max_flip[k]), int(trace.clipped_rows[k])])


def project_row(w: np.ndarray, w0: np.ndarray, bound: float) -> np.ndarray:
    """Euclidean projection of one row onto the ball ||w - w0|| <= bound.

    Rows already inside come back unchanged, no floating rescale.
    """
    dev = w - w0
    nrm = float(np.linalg.norm(dev))
    if nrm <= bound:
        return w.copy()
    return w0 + (bound / nrm) * dev


def _project_all(weights, init_weights, bound):
    """In-place row projection; returns how many rows were clipped."""
    dev = weights - init_weights
    nrm = np.linalg.norm(dev, axis=1)
    clip = nrm > bound
    if np.any(clip):
        weights[clip] = init_weights[clip] + (bound / nrm[clip])[:, None] * dev[clip]
    return int(np.count_nonzero(clip))


def risk_gradient(params: model.NetworkParams, xs, ys, probs, loss_kind):
    """Full-batch risk gradient in the weights, shape (m, d).

    Frobenius norm is at most max_i ||x_i|| because the per-sample loss
    gradients lie in [-1, 1].
    """
    fs = model.forward_batch(params, xs)
    e = _loss_grad(ys, probs, fs, loss_kind) / xs.shape[0]
    preact = xs @ params.weights.T
    gated = (preact > 0.0) * e[:, None]
    inv = 1.0 / np.sqrt(params.width)
    return (params.out_signs[:, None] * inv) * (gated.T @ xs)


def _loss_grad(ys, probs, fs, loss_kind):
    if loss_kind == "soft":
        if probs is None:
            raise ValueError("soft training requires teacher probabilities")
        return losses.kl_grad(probs, fs)
    return losses.hard_grad(ys, fs)


def pgd_step(params: model.NetworkParams, grad: np.ndarray, eta: float,
             radius: float) -> model.NetworkParams:
    """One descent-then-project step; returns updated params."""
    if grad.shape != params.weights.shape:
        raise ValueError("gradient shape mismatch")
    if not np.all(np.isfinite(grad)):
        j, col = np.argwhere(~np.isfinite(grad))[0]
        raise ValueError(f"non-finite gradient entry at row {j}, column {col}")
    new_w = params.weights - eta * grad
    if math.isfinite(radius):
        _project_all(new_w, params.init_weights, radius / np.sqrt(params.width))
    return model.NetworkParams(out_signs=params.out_signs, weights=new_w,
                               init_weights=params.init_weights)


def train(params: model.NetworkParams, ds, labels, cfg: TrainConfig,
          reference=None, observer=None) -> TrainTrace:
    """Run cfg.iters PGD steps from params; returns the full trace.

    labels is a TeacherLabels (required for soft runs, optional for hard);
    reference is a ReferenceWeights whose frozen-pattern risk and Frobenius
    distance get recorded each iteration; observer(t, preact, fs) is called
    with the dense preactivations before each step. The input weights are not
    mutated.
    """
    cfg.validate()
    probs = None if labels is None else labels.probs
    if cfg.loss_kind == "soft" and probs is None:
        raise ValueError("soft training requires teacher labels")
    engine = cfg.engine
    if engine == "auto":
        big = params.width * ds.n >= _CELLS_MIN_WORK
        engine = "cells" if (big and reference is None and observer is None
                             and math.isfinite(cfg.radius)
                             and ds.n <= 62) else "dense"
    if engine == "cells":
        if reference is not None or observer is not None:
            raise ValueError("cells engine records no reference and takes no observer")
        if not math.isfinite(cfg.radius):
            raise ValueError("cells engine requires a finite radius")
        if ds.n > 62:
            raise ValueError("cells engine packs patterns into 62 bits")
        return _train_cells(params, ds, probs, cfg)
    return _train_dense(params, ds, probs, cfg, reference, observer)


def _empty_columns(T):
    return dict(steps=np.arange(T),
                r_kl=np.full(T, np.nan), r_hard=np.full(T, np.nan),
                r_class=np.full(T, np.nan), r_kl_ref=np.full(T, np.nan),
                frob_dev=np.full(T, np.nan),
                max_flip=np.zeros(T, dtype=np.int64),
                clipped_rows=np.zeros(T, dtype=np.int64))


def _partial(cols, t, params, cfg, ent):
    cut = {k: v[:t] for k, v in cols.items()}
    return TrainTrace(final=params, eta=cfg.eta, radius=cfg.radius,
                      loss_kind=cfg.loss_kind, entropy_bar=ent, **cut)


class _SlackTracker:
    """Running minima of the proved pointwise inequalities along a run."""

    def __init__(self, probs):
        self.probs = probs
        self.pinsker_lo = math.inf
        self.pinsker_hi = math.inf
        self.grad_bound = math.inf

    def update(self, fs):
        if self.probs is None:
            return
        lo, hi = losses.pinsker_slacks(self.probs, fs)
        self.pinsker_lo = min(self.pinsker_lo, float(np.min(lo)))
        self.pinsker_hi = min(self.pinsker_hi, float(np.min(hi)))
        gb = losses.grad_bound_slack(self.probs, fs)
        self.grad_bound = min(self.grad_bound, float(np.min(gb)))


def _train_dense(params, ds, probs, cfg, reference, observer):
    xs, ys = ds.inputs, ds.labels
    n = ds.n
    w = params.weights.copy()
    w0 = params.init_weights
    a = params.out_signs
    inv = 1.0 / np.sqrt(params.width)
    bound = cfg.radius / np.sqrt(params.width) if math.isfinite(cfg.radius) else math.inf
    ent = float("nan") if probs is None else float(np.mean(losses.entropy(probs)))
    preact0_pos = (xs @ w0.T) > 0.0
    preact_ref = None if reference is None else xs @ reference.shifted.T
    cols = _empty_columns(cfg.iters)
    slacks = _SlackTracker(probs)
    fbar_max = math.nan if reference is None else 0.0

    cur = model.NetworkParams(out_signs=a, weights=w, init_weights=w0)
    for t in range(cfg.iters):
        preact = xs @ w.T
        bits_ge = preact >= 0.0
        fs = ((preact * bits_ge) @ a) * inv
        if not np.all(np.isfinite(fs)):
            raise TrainDivergence(f"non-finite outputs at iteration {t}",
                                  _partial(cols, t, cur.copy(), cfg, ent))
        fs_ref = None
        if preact_ref is not None:
            fs_ref = ((preact_ref * bits_ge) @ a) * inv
            fbar_max = max(fbar_max, float(np.max(np.abs(fs_ref))))
        snap = losses.batch_risks(ys, probs, fs, fs_ref)
        slacks.update(fs)
        cols["r_kl"][t] = snap.r_kl
        cols["r_hard"][t] = snap.r_hard
        cols["r_class"][t] = snap.r_class
        cols["r_kl_ref"][t] = snap.r_kl_at_ref
        if reference is not None:
            cols["frob_dev"][t] = np.linalg.norm(w - reference.shifted)
        cols["max_flip"][t] = int(np.max(np.sum((preact > 0.0) != preact0_pos,
                                                axis=1)))
        if observer is not None:
            observer(t, preact, fs)

        e = _loss_grad(ys, probs, fs, cfg.loss_kind) / n
        gated = (preact > 0.0) * e[:, None]
        grad = (a[:, None] * inv) * (gated.T @ xs)
        if not np.all(np.isfinite(grad)):
            j, col = np.argwhere(~np.isfinite(grad))[0]
            raise TrainDivergence(
                f"non-finite gradient at iteration {t}, row {j}, column {col}",
                _partial(cols, t, cur.copy(), cfg, ent))
        w -= cfg.eta * grad
        if math.isfinite(cfg.radius):
            cols["clipped_rows"][t] = _project_all(w, w0, bound)

    return TrainTrace(final=cur, eta=cfg.eta, radius=cfg.radius,
                      loss_kind=cfg.loss_kind, entropy_bar=ent,
                      pinsker_lo_min=slacks.pinsker_lo,
                      pinsker_hi_min=slacks.pinsker_hi,
                      grad_bound_min=slacks.grad_bound,
                      fbar_max=fbar_max, **cols)


# ---------------------------------------------------------------------------
# cells engine

def _train_cells(params, ds, probs, cfg):
    xs, ys = ds.inputs, ds.labels
    n, m = ds.n, params.width
    if np.any(np.linalg.norm(xs, axis=1) > 1.0 + 1e-9):
        raise ValueError("cells engine assumes input norms <= 1")
    a = params.out_signs
    w0 = params.init_weights
    inv = 1.0 / np.sqrt(m)
    bound = cfg.radius * inv
    ent = float("nan") if probs is None else float(np.mean(losses.entropy(probs)))

    p0 = xs @ w0.T                                   # (n, m), static
    codes = np.zeros(m, dtype=np.uint64)
    for i in range(n):
        codes |= (p0[i] > 0.0).astype(np.uint64) << np.uint64(i)
    ucodes, inv_idx, counts = np.unique(codes, return_inverse=True,
                                        return_counts=True)
    C = len(ucodes)
    bits_cls = ((ucodes[:, None] >> np.arange(n, dtype=np.uint64)[None, :])
                & np.uint64(1)).astype(np.float64)   # (C, n)
    # static per-class sums of a_j * p0_ij over members
    t0 = np.empty((C, n))
    for i in range(n):
        t0[:, i] = np.bincount(inv_idx, weights=a * p0[i], minlength=C)
    cnt = counts.astype(np.float64)
    dev = np.zeros((C, xs.shape[1]))                 # shared class deviation D_c

    # flip-capable band: only rows with |p0| <= bound can ever change sign
    band_i, band_j = np.nonzero(np.abs(p0) <= bound * (1.0 + 1e-9))
    band_p0 = p0[band_i, band_j]
    band_sign = a[band_j]
    band_cls = inv_idx[band_j]
    band_act0 = band_p0 > 0.0

    clean = np.ones(m, dtype=bool)
    d_idx = np.empty(0, dtype=np.int64)              # dirty rows, dense handling
    d_w = np.empty((0, xs.shape[1]))
    d_bits0 = np.empty((n, 0), dtype=bool)

    cols = _empty_columns(cfg.iters)
    slacks = _SlackTracker(probs)

    def migrate(new_rows):
        nonlocal d_idx, d_w, d_bits0, band_i, band_j, band_p0, band_sign, \
            band_cls, band_act0
        new_rows = np.unique(new_rows)
        for j in new_rows:
            c = inv_idx[j]
            cnt[c] -= 1.0
            t0[c] -= a[j] * p0[:, j]
        mat = w0[new_rows] + a[new_rows, None] * dev[inv_idx[new_rows]]
        d_idx = np.concatenate([d_idx, new_rows])
        d_w = np.vstack([d_w, mat])
        d_bits0 = np.hstack([d_bits0, p0[:, new_rows] > 0.0])
        clean[new_rows] = False
        keep = ~np.isin(band_j, new_rows)
        band_i, band_j = band_i[keep], band_j[keep]
        band_p0, band_sign = band_p0[keep], band_sign[keep]
        band_cls, band_act0 = band_cls[keep], band_act0[keep]

    for t in range(cfg.iters):
        q = dev @ xs.T                               # (C, n): x_i . D_c
        if band_j.size:
            act_now = band_p0 + band_sign * q[band_cls, band_i] > 0.0
            flipped = act_now != band_act0
            if np.any(flipped):
                migrate(band_j[flipped])

        fs = (bits_cls * (t0 + cnt[:, None] * q)).sum(axis=0) * inv
        if d_idx.size:
            pd = xs @ d_w.T                          # (n, nd)
            fs = fs + ((pd * (pd >= 0.0)) @ a[d_idx]) * inv
            cols["max_flip"][t] = int(np.max(np.sum((pd > 0.0) != d_bits0,
                                                    axis=1)))
        if not np.all(np.isfinite(fs)):
            final = _materialize(params, dev, inv_idx, clean, d_idx, d_w)
            raise TrainDivergence(f"non-finite outputs at iteration {t}",
                                  _partial(cols, t, final, cfg, ent))
        snap = losses.batch_risks(ys, probs, fs, None)
        slacks.update(fs)
        cols["r_kl"][t] = snap.r_kl
        cols["r_hard"][t] = snap.r_hard
        cols["r_class"][t] = snap.r_class

        e = _loss_grad(ys, probs, fs, cfg.loss_kind) / n
        mgrad = e[:, None] * xs                      # (n, d)
        dev -= (cfg.eta * inv) * (bits_cls @ mgrad)
        nrm = np.linalg.norm(dev, axis=1)
        clip = nrm > bound
        clipped = int(cnt[clip].sum())
        if np.any(clip):
            dev[clip] *= (bound / nrm[clip])[:, None]
        if d_idx.size:
            gated = (pd > 0.0) * e[:, None]
            d_w -= cfg.eta * ((a[d_idx, None] * inv) * (gated.T @ xs))
            clipped += _project_all(d_w, w0[d_idx], bound)
        cols["clipped_rows"][t] = clipped

    final = _materialize(params, dev, inv_idx, clean, d_idx, d_w)
    return TrainTrace(final=final, eta=cfg.eta, radius=cfg.radius,
                      loss_kind=cfg.loss_kind, entropy_bar=ent,
                      pinsker_lo_min=slacks.pinsker_lo,
                      pinsker_hi_min=slacks.pinsker_hi,
                      grad_bound_min=slacks.grad_bound, **cols)


def _materialize(params, dev, inv_idx, clean, d_idx, d_w):
    w = params.init_weights + params.out_signs[:, None] * dev[inv_idx]
    if d_idx.size:
        w[d_idx] = d_w
    return model.NetworkParams(out_signs=params.out_signs, weights=w,
                               init_weights=params.init_weights)
