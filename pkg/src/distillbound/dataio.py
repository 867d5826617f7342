"""Datasets: synthetic margin-separated points, idx-format digit images, CSV io.

All loaders end with inputs of Euclidean norm at most 1 and record norm_floor,
the smallest input norm, which the width formulas consume as their norm
lower-bound parameter. Synthetic points are unit norm exactly (norm_floor 1).
"""

from __future__ import annotations

import csv
import struct
import warnings
from dataclasses import dataclass, field

import numpy as np

from .seeds import substream

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801

_REJECTION_ROUNDS = 64


@dataclass
class LabeledDataset:
    """Inputs (n, d), hard labels (n,) in {-1,+1}, norm_floor in (0, 1]."""

    inputs: np.ndarray
    labels: np.ndarray
    norm_floor: float
    name: str = ""

    @property
    def n(self) -> int:
        return self.inputs.shape[0]

    @property
    def d(self) -> int:
        return self.inputs.shape[1]

    def validate(self) -> None:
        if self.inputs.ndim != 2:
            raise ValueError("inputs must be 2-d")
        if self.labels.shape != (self.n,):
            raise ValueError("labels must be (n,)")
        if not np.all(np.abs(self.labels) == 1.0):
            raise ValueError("labels must be +-1")
        norms = np.linalg.norm(self.inputs, axis=1)
        if np.any(norms > 1.0 + 1e-12):
            raise ValueError("input norms must be <= 1")
        if not (0.0 < self.norm_floor <= 1.0 + 1e-12):
            raise ValueError("norm_floor must lie in (0, 1]")
        if np.any(norms < self.norm_floor - 1e-12):
            raise ValueError("norm_floor exceeds an observed input norm")


@dataclass
class SynthSpec:
    """Recipe for unit-norm points separated by a random unit direction.

    target_half_margin is the enforced lower bound on |x . u| / 2, which is
    exactly the margin the closed-form linear teacher realizes.
    """

    n: int
    d: int
    target_half_margin: float
    direction_seed: int
    sample_seed: int

    def validate(self) -> None:
        if self.n < 1 or self.d < 2:
            raise ValueError("need n >= 1 and d >= 2")
        if not 0.0 < self.target_half_margin <= 0.5:
            raise ValueError("target_half_margin must lie in (0, 0.5]")


def generate_synthetic(spec: SynthSpec):
    """Sample the dataset and return (LabeledDataset, direction u).

    Points are uniform on the unit sphere conditioned on |x . u| >= 2*margin,
    by rejection; points still failing after a fixed budget are reflected
    about the band edge (the component along u is pushed from |t| < 2g to
    4g - |t|, capped at 1, and the orthogonal part rescaled), which always
    terminates. Labels are sign(x . u).
    """
    spec.validate()
    g2 = 2.0 * spec.target_half_margin
    dir_rng = substream(spec.direction_seed, "synth-direction")
    u = dir_rng.standard_normal(spec.d)
    u /= np.linalg.norm(u)

    rng = substream(spec.sample_seed, "synth-samples")
    xs = _unit_rows(rng.standard_normal((spec.n, spec.d)))
    for _ in range(_REJECTION_ROUNDS):
        bad = np.abs(xs @ u) < g2
        if not np.any(bad):
            break
        xs[bad] = _unit_rows(rng.standard_normal((int(bad.sum()), spec.d)))
    bad = np.abs(xs @ u) < g2
    if np.any(bad):
        xs[bad] = _reflect_past_band(xs[bad], u, g2)
    if np.any(np.abs(xs @ u) < g2 * (1.0 - 1e-12)):
        raise RuntimeError("margin enforcement failed; margin infeasible for d")

    labels = np.where(xs @ u >= 0.0, 1.0, -1.0)
    ds = LabeledDataset(inputs=xs, labels=labels, norm_floor=1.0,
                        name=f"synth(n={spec.n},d={spec.d},margin={spec.target_half_margin})")
    ds.validate()
    return ds, u


def _unit_rows(xs):
    return xs / np.linalg.norm(xs, axis=1, keepdims=True)


def _reflect_past_band(xs, u, g2):
    t = xs @ u
    sign = np.where(t >= 0.0, 1.0, -1.0)
    # reflect about the band edge: |t| < g2 maps to 2*g2 - |t|, capped at 1
    t_new = sign * np.minimum(2.0 * g2 - np.abs(t), 1.0)
    perp = xs - t[:, None] * u[None, :]
    pnorm = np.linalg.norm(perp, axis=1)
    out = np.empty_like(xs)
    for k in range(xs.shape[0]):
        if pnorm[k] < 1e-12 or abs(t_new[k]) >= 1.0:
            out[k] = np.sign(t_new[k]) * u
        else:
            scale = np.sqrt(max(0.0, 1.0 - t_new[k] ** 2)) / pnorm[k]
            out[k] = t_new[k] * u + scale * perp[k]
    return out


# ---------------------------------------------------------------------------
# idx-format digit images

def _read_exact(fh, nbytes, path, what):
    buf = fh.read(nbytes)
    if len(buf) != nbytes:
        raise ValueError(f"{path}: truncated {what} at byte offset {fh.tell() - len(buf)}")
    return buf


def _read_idx_images(path):
    with open(path, "rb") as fh:
        magic, = struct.unpack(">l", _read_exact(fh, 4, path, "header"))
        if magic != IMAGES_MAGIC:
            raise ValueError(f"{path}: bad images magic {magic:#010x} at byte offset 0, "
                             f"expected {IMAGES_MAGIC:#010x}")
        count, rows, cols = struct.unpack(">lll", _read_exact(fh, 12, path, "header"))
        data = _read_exact(fh, count * rows * cols, path, "pixel payload")
    pixels = np.frombuffer(data, dtype=np.uint8).reshape(count, rows * cols)
    return pixels


def _read_idx_labels(path):
    with open(path, "rb") as fh:
        magic, = struct.unpack(">l", _read_exact(fh, 4, path, "header"))
        if magic != LABELS_MAGIC:
            raise ValueError(f"{path}: bad labels magic {magic:#010x} at byte offset 0, "
                             f"expected {LABELS_MAGIC:#010x}")
        count, = struct.unpack(">l", _read_exact(fh, 4, path, "header"))
        data = _read_exact(fh, count, path, "label payload")
    return np.frombuffer(data, dtype=np.uint8)


def write_idx_images(path, images: np.ndarray) -> None:
    """Write uint8 images (n, rows, cols) in idx3 format. Inverse of the reader."""
    images = np.ascontiguousarray(images, dtype=np.uint8)
    n, rows, cols = images.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack(">llll", IMAGES_MAGIC, n, rows, cols))
        fh.write(images.tobytes())


def write_idx_labels(path, labels: np.ndarray) -> None:
    labels = np.ascontiguousarray(labels, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(struct.pack(">ll", LABELS_MAGIC, labels.shape[0]))
        fh.write(labels.tobytes())


def load_digits_binary(images_path, labels_path, exclude_digits=(),
                       max_n=None) -> LabeledDataset:
    """Load idx images/labels into a binary task: label +1 iff digit > 4.

    Digits in exclude_digits are dropped before anything else; at most max_n
    samples are then retained in file order. The retained images are divided
    by their maximum Euclidean norm, so max ||x_i|| = 1 and norm_floor is the
    smallest post-scaling norm. Duplicate or parallel inputs are permitted but
    trigger a warning since the margin assumption needs no two inputs parallel.
    """
    pixels = _read_idx_images(images_path)
    digits = _read_idx_labels(labels_path)
    if pixels.shape[0] != digits.shape[0]:
        raise ValueError(f"image/label count mismatch: {pixels.shape[0]} images vs "
                         f"{digits.shape[0]} labels")
    keep = ~np.isin(digits, np.asarray(list(exclude_digits), dtype=np.uint8))
    pixels, digits = pixels[keep], digits[keep]
    if max_n is not None:
        pixels, digits = pixels[:max_n], digits[:max_n]
    if pixels.shape[0] == 0:
        raise ValueError("no samples retained after exclusion/truncation")

    xs = pixels.astype(np.float64)
    norms = np.linalg.norm(xs, axis=1)
    max_norm = norms.max()
    if max_norm == 0.0:
        raise ValueError("all retained images are blank")
    xs /= max_norm
    norms = norms / max_norm
    if norms.min() == 0.0:
        raise ValueError("a retained image has zero norm; norm_floor would be 0")

    _warn_on_parallel(xs)
    labels = np.where(digits > 4, 1.0, -1.0)
    ds = LabeledDataset(inputs=xs, labels=labels, norm_floor=float(norms.min()),
                        name=f"digits(n={xs.shape[0]},d={xs.shape[1]})")
    ds.validate()
    return ds


def _warn_on_parallel(xs):
    # hash direction vectors; exact duplicates after normalization are the
    # realistic parallel case for pixel data
    units = xs / np.linalg.norm(xs, axis=1, keepdims=True)
    keys = np.round(units, 12)
    _, counts = np.unique(keys, axis=0, return_counts=True)
    dup = int(np.sum(counts > 1))
    if dup:
        warnings.warn(f"{dup} groups of parallel inputs; margin assumption "
                      "requires no two inputs parallel", stacklevel=3)


def add_gaussian_noise(ds: LabeledDataset, sigma: float, seed: int) -> LabeledDataset:
    """Corrupt inputs with N(0, sigma^2 I) noise, then rescale to max norm 1.

    sigma = 0 returns an identical copy without touching the RNG. Labels are
    kept. A corrupted input landing exactly at 0 is rejected with an error
    since norm_floor would vanish.
    """
    if sigma < 0.0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0.0:
        return LabeledDataset(ds.inputs.copy(), ds.labels.copy(),
                              ds.norm_floor, ds.name)
    rng = substream(seed, "input-noise")
    xs = ds.inputs + sigma * rng.standard_normal(ds.inputs.shape)
    norms = np.linalg.norm(xs, axis=1)
    if norms.min() == 0.0:
        raise ValueError("noise produced a zero input; norm_floor would be 0")
    xs = xs / norms.max()
    ds2 = LabeledDataset(inputs=xs, labels=ds.labels.copy(),
                         norm_floor=float(norms.min() / norms.max()),
                         name=f"{ds.name}+noise({sigma})")
    ds2.validate()
    return ds2


# ---------------------------------------------------------------------------
# CSV io: header y,x0,...,x{d-1}; floats with 17 significant digits

def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def write_dataset_csv(ds: LabeledDataset, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["y"] + [f"x{k}" for k in range(ds.d)])
        for y, x in zip(ds.labels, ds.inputs):
            w.writerow([_fmt(y)] + [_fmt(v) for v in x])


def read_dataset_csv(path) -> LabeledDataset:
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r, None)
        if not header or header[0] != "y" or any(
                h != f"x{k}" for k, h in enumerate(header[1:])):
            raise ValueError(f"{path}: expected header y,x0,...,x{{d-1}}")
        rows = [[float(v) for v in row] for row in r if row]
    if not rows:
        raise ValueError(f"{path}: empty dataset")
    arr = np.asarray(rows, dtype=np.float64)
    norms = np.linalg.norm(arr[:, 1:], axis=1)
    ds = LabeledDataset(inputs=arr[:, 1:], labels=arr[:, 0],
                        norm_floor=float(norms.min()), name=str(path))
    ds.validate()
    return ds


def write_direction_csv(u: np.ndarray, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["u"])
        for v in u:
            w.writerow([_fmt(v)])


def read_direction_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r, None)
        if header != ["u"]:
            raise ValueError(f"{path}: expected single-column header u")
        vals = [float(row[0]) for row in r if row]
    if not vals:
        raise ValueError(f"{path}: empty direction file")
    return np.asarray(vals, dtype=np.float64)
