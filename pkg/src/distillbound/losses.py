"""Per-sample losses, their gradients in the network output, and batch risks.

Soft targets are probabilities p in (0,1); the soft loss is the KL divergence
KL(p || mu(f)) between the target and the sigmoid of the network output. Hard
targets are signs y in {-1,+1} with the logistic loss ln(1+exp(-y f)).
Everything is computed through log1p/logaddexp so no input overflows for
|f| <= 700.

Closed forms used throughout (mu = sigmoid, sp(x) = ln(1+e^x)):

    kl_loss(p, f)  = p*log1p((p-q)/q) + (1-p)*log1p((q-p)/(1-q)),  q = mu(f)
                   = sp(f) - p*f - entropy(p)        (algebraically)
    kl_grad(p, f)  = mu(f) - p
    hard_loss(y,f) = sp(-y*f)
    hard_grad(y,f) = -y * mu(-y*f)

The log1p pairing keeps kl_loss accurate near p = mu(f) where the softplus
form cancels catastrophically.
"""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np
from scipy.special import expit, xlogy

LN2 = math.log(2.0)


def _check_prob_open(p, name="p"):
    p = np.asarray(p, dtype=np.float64)
    if np.any(p <= 0.0) or np.any(p >= 1.0):
        raise ValueError(f"{name} must lie strictly inside (0,1)")
    return p


def kl_loss(p, f):
    """KL(p || mu(f)) elementwise. Nonnegative, zero iff p = mu(f)."""
    p = _check_prob_open(p)
    f = np.asarray(f, dtype=np.float64)
    q = expit(f)
    # symmetric log1p form: each term is accurate to 1 ulp of itself, so the
    # sum stays accurate when the divergence is tiny
    with np.errstate(divide="ignore", invalid="ignore"):
        out = p * np.log1p((p - q) / q) + (1.0 - p) * np.log1p((q - p) / (1.0 - q))
    # once |f| saturates the sigmoid the pairing divides by zero, but p is then
    # far from q and the softplus form has no cancellation to fear
    sat = (q == 0.0) | (q == 1.0)
    if np.any(sat):
        fallback = np.logaddexp(0.0, f) - p * f - entropy(p)
        out = np.where(sat, fallback, out)
    return np.maximum(out, 0.0) if out.ndim else float(max(out, 0.0))


def kl_grad(p, f):
    """d/df KL(p || mu(f)) = mu(f) - p."""
    p = _check_prob_open(p)
    f = np.asarray(f, dtype=np.float64)
    out = expit(f) - p
    return out if out.ndim else float(out)


def hard_loss(y, f):
    """Logistic loss ln(1 + exp(-y f)) for labels y in {-1,+1}."""
    y = _check_sign(y)
    f = np.asarray(f, dtype=np.float64)
    out = np.logaddexp(0.0, -y * f)
    return out if out.ndim else float(out)


def hard_grad(y, f):
    """d/df ln(1+exp(-y f)) = -y / (1 + exp(y f))."""
    y = _check_sign(y)
    f = np.asarray(f, dtype=np.float64)
    out = -y * expit(-y * f)
    return out if out.ndim else float(out)


def _check_sign(y):
    y = np.asarray(y, dtype=np.float64)
    if not np.all(np.abs(y) == 1.0):
        raise ValueError("hard labels must be +1 or -1")
    return y


def entropy(p):
    """Binary entropy in nats; 0*log(0) = 0 at the endpoints. Max is ln 2."""
    p = np.asarray(p, dtype=np.float64)
    if np.any(p < 0.0) or np.any(p > 1.0):
        raise ValueError("p must lie in [0,1]")
    out = -xlogy(p, p) - xlogy(1.0 - p, 1.0 - p)
    return out if out.ndim else float(out)


def class_error(ys, fs):
    """Fraction of samples with y*f <= 0. Ties count as errors."""
    ys = _check_sign(ys)
    fs = np.asarray(fs, dtype=np.float64)
    if ys.shape != fs.shape:
        raise ValueError("label/output length mismatch")
    return float(np.mean(ys * fs <= 0.0))


# ---------------------------------------------------------------------------
# proved pointwise relations, exposed so verification can assert them on every
# (p, f) pair a run touches

def pinsker_slacks(p, f):
    """Slacks of 2(p-q)^2 <= KL(p||q) <= 2(p-q)^2/min(q,1-q) at q = mu(f).

    Returns (lower_slack, upper_slack); both are >= 0 up to float rounding
    whenever the inequalities hold.
    """
    p = np.asarray(p, dtype=np.float64)
    f = np.asarray(f, dtype=np.float64)
    q = expit(f)
    kl = kl_loss(p, f)
    tv2 = 2.0 * (p - q) ** 2
    with np.errstate(divide="ignore"):
        # min(q,1-q) = 0 at sigmoid saturation makes the upper bound vacuous
        # (+inf), which still satisfies the sandwich
        upper = tv2 / np.minimum(q, 1.0 - q) - kl
    return kl - tv2, upper


def grad_bound_slack(p, f):
    """Slack of |kl_grad| <= kl_loss + entropy(p); >= 0 when the bound holds."""
    return kl_loss(p, f) + entropy(p) - np.abs(kl_grad(p, f))


@dataclass(frozen=True)
class RiskSnapshot:
    """Batch risks at one set of network outputs.

    r_kl_at_ref is the soft risk of the frozen-pattern outputs at the
    reference weights; nan when no reference is being tracked. r_kl and
    entropy_bar are nan for hard-label runs with no teacher probabilities.
    """

    r_kl: float
    r_hard: float
    r_class: float
    r_kl_at_ref: float
    entropy_bar: float


def batch_risks(ys, probs, fs, fs_at_ref=None):
    """Average the per-sample losses into a RiskSnapshot.

    ys: hard labels. probs: soft targets or None. fs: network outputs.
    fs_at_ref: frozen-pattern outputs at the reference weights, or None.
    """
    fs = np.asarray(fs, dtype=np.float64)
    r_hard = float(np.mean(hard_loss(ys, fs)))
    r_class = class_error(ys, fs)
    if probs is None:
        r_kl = ent = ref = float("nan")
    else:
        r_kl = float(np.mean(kl_loss(probs, fs)))
        ent = float(np.mean(entropy(probs)))
        ref = float("nan") if fs_at_ref is None else float(np.mean(kl_loss(probs, fs_at_ref)))
    return RiskSnapshot(r_kl=r_kl, r_hard=r_hard, r_class=r_class,
                        r_kl_at_ref=ref, entropy_bar=ent)
