"""Command-line interface: data preparation, training, bound verification,
the width sweep, and the digit-table experiment.

Every command resolves its configuration (flags win over an optional TOML
config file, which wins over built-in defaults), writes a flat key=value run
manifest BEFORE computing anything, then produces its outputs. `rerun
--manifest FILE` replays a manifest after re-verifying the recorded input
digests; byte-identical outputs are the determinism contract.

Exit codes: 0 ok; 1 usage error; 2 a proved (deterministic) inequality was
violated; 3 runtime failure. Probabilistic checks that merely miss their
rate target report pass=False but still exit 0 — only proved statements are
hard failures.
"""

from __future__ import annotations

import argparse
import hashlib
import math
import os
import sys

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:                  # Python 3.10
    import tomli as tomllib

from . import __version__, dataio, model, optim, teacher, verify
from .seeds import substream

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CHECK = 2
EXIT_RUNTIME = 3

PINSKER_TOL = 1e-11   # proved pointwise inequalities must hold to this slack
FBAR_CAP = 2.0        # reference outputs along soft traces stay in [-2, 2]


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# option kinds: one parser/formatter pair per value shape, shared by CLI
# strings, TOML values, and manifest round-trips

def _bool_from(s):
    low = s.strip().lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise UsageError(f"expected a boolean, got {s!r}")


def _radius_from(s):
    val = math.inf if s.strip().lower() in ("inf", "infinity") else _float_from(s)
    if not val > 0.0:
        raise UsageError(f"radius must be positive, got {s!r}")
    return val


def _float_from(s):
    try:
        return float(s)
    except ValueError:
        raise UsageError(f"expected a number, got {s!r}") from None


def _int_from(s):
    try:
        return int(s, 10)
    except ValueError:
        raise UsageError(f"expected an integer, got {s!r}") from None


def _int_list_from(s):
    s = s.strip()
    return tuple(_int_from(tok) for tok in s.split(",") if tok) if s else ()


def _float_list_from(s):
    s = s.strip()
    return tuple(_float_from(tok) for tok in s.split(",") if tok) if s else ()


def _m_grid_from(s):
    """Either `2,4,8` or the doubling form `2:256:x2`."""
    s = s.strip()
    if ":" in s:
        parts = s.split(":")
        if len(parts) != 3 or parts[2] != "x2":
            raise UsageError(f"grid must be `lo:hi:x2` or a comma list, got {s!r}")
        lo, hi = _int_from(parts[0]), _int_from(parts[1])
        if lo < 2 or hi < lo:
            raise UsageError(f"bad grid range {s!r}")
        grid = []
        m = lo
        while m <= hi:
            grid.append(m)
            m *= 2
        return tuple(grid)
    return _int_list_from(s)


def _opt_from(inner):
    return lambda s: None if s.strip() == "" else inner(s)


def _fmt(val):
    if val is None:
        return ""
    if isinstance(val, bool):
        return "true" if val else "false"
    if isinstance(val, float):
        return "inf" if math.isinf(val) else repr(val)
    if isinstance(val, tuple):
        return ",".join(_fmt(v) for v in val)
    return str(val)


KINDS = {
    "int": _int_from,
    "float": _float_from,
    "str": lambda s: s,
    "bool": _bool_from,
    "radius": _radius_from,
    "int_list": _int_list_from,
    "float_list": _float_list_from,
    "m_grid": _m_grid_from,
    "opt_int": _opt_from(_int_from),
    "opt_float": _opt_from(_float_from),
    "opt_str": _opt_from(lambda s: s),
}


def _coerce_toml(kind, value):
    if isinstance(value, str):
        return KINDS[kind](value)
    if kind in ("int_list", "float_list", "m_grid") and isinstance(value, list):
        return tuple(value)
    if kind == "bool" and isinstance(value, bool):
        return value
    if kind in ("float", "radius", "opt_float") and isinstance(value, (int, float)):
        return float(value)
    if kind in ("int", "opt_int") and isinstance(value, int):
        return value
    raise UsageError(f"config value {value!r} does not fit a {kind} option")


class Opt:
    def __init__(self, flag, kind, default=None, help="", required=False,
                 choices=None):
        self.flag = flag
        self.kind = kind
        self.default = default
        self.help = help
        self.required = required
        self.choices = choices
        self.dest = flag.lstrip("-").replace("-", "_")


COMMON = [Opt("--config", "opt_str", help="TOML config file; flags win"),
          Opt("--manifest", "opt_str", help="manifest path (default: derived)")]


class Command:
    name = ""
    options = ()
    describe = ""
    takes_common = True

    def all_options(self):
        return list(self.options) + (COMMON if self.takes_common else [])

    def run(self, cfg):
        raise NotImplementedError


# ---------------------------------------------------------------------------
# manifests

def _file_digest(path):
    h = hashlib.sha256()
    try:
        with open(path, "rb") as fh:
            for chunk in iter(lambda: fh.read(1 << 20), b""):
                h.update(chunk)
    except OSError as exc:
        raise UsageError(f"cannot read input {path}: {exc}") from None
    return h.hexdigest()


def write_manifest(path, command_name, cmd, cfg, inputs, outputs):
    """Flat key=value run record, written before any computation starts."""
    lines = [f"command={command_name}", f"version={__version__}"]
    for opt in sorted(cmd.options, key=lambda o: o.dest):
        lines.append(f"config.{opt.dest}={_fmt(cfg[opt.dest])}")
    for k, p in enumerate(inputs):
        lines.append(f"input_path.{k}={p}")
        lines.append(f"input_sha256.{k}={_file_digest(p)}")
    for name in sorted(outputs):
        lines.append(f"output.{name}={outputs[name]}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _read_manifest(path):
    entries = {}
    try:
        with open(path) as fh:
            for ln, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if not line:
                    continue
                if "=" not in line:
                    raise UsageError(f"{path}:{ln}: expected key=value")
                key, val = line.split("=", 1)
                entries[key] = val
    except OSError as exc:
        raise UsageError(f"cannot read manifest {path}: {exc}") from None
    return entries


def _default_manifest(cfg, fallback):
    return cfg.get("manifest") or fallback


def _sibling(path, suffix):
    stem, _ = os.path.splitext(path)
    return stem + suffix


# ---------------------------------------------------------------------------
# commands

class DataSynth(Command):
    name = "data synth"
    describe = "generate a margin-separated synthetic dataset"
    options = (
        Opt("--n", "int", required=True, help="sample count"),
        Opt("--d", "int", required=True, help="input dimension"),
        Opt("--gamma", "float", required=True,
            help="enforced teacher margin (0, 0.5]"),
        Opt("--seed", "int", 0, help="base seed"),
        Opt("--out", "str", required=True, help="dataset CSV path"),
        Opt("--direction-out", "opt_str",
            help="direction CSV (default: <out>.direction.csv)"),
    )

    def run(self, cfg):
        if cfg["n"] < 1 or cfg["d"] < 1:
            raise UsageError("--n and --d must be positive")
        if not 0.0 < cfg["gamma"] <= 0.5:
            raise UsageError("--gamma must lie in (0, 0.5]")
        direction_out = cfg["direction_out"] or _sibling(cfg["out"],
                                                         ".direction.csv")
        manifest = _default_manifest(cfg, cfg["out"] + ".manifest")
        write_manifest(manifest, self.name, self, cfg, [],
                       {"dataset": cfg["out"], "direction": direction_out})
        spec = dataio.SynthSpec(n=cfg["n"], d=cfg["d"],
                                target_half_margin=cfg["gamma"],
                                direction_seed=cfg["seed"],
                                sample_seed=cfg["seed"])
        ds, u = dataio.generate_synthetic(spec)
        dataio.write_dataset_csv(ds, cfg["out"])
        dataio.write_direction_csv(u, direction_out)
        print(f"wrote {ds.n} samples (d={ds.d}) to {cfg['out']}")
        return EXIT_OK


class DataMnist(Command):
    name = "data mnist"
    describe = "load idx digit files into the dataset CSV schema"
    options = (
        Opt("--images", "str", required=True, help="idx images file"),
        Opt("--labels", "str", required=True, help="idx labels file"),
        Opt("--exclude", "int_list", (), help="digits to drop, e.g. 1,4,7,9"),
        Opt("--max-n", "opt_int", help="keep at most this many samples"),
        Opt("--noise", "float", 0.0, help="Gaussian input noise sigma"),
        Opt("--seed", "int", 0, help="noise seed"),
        Opt("--out", "str", required=True, help="dataset CSV path"),
    )

    def run(self, cfg):
        manifest = _default_manifest(cfg, cfg["out"] + ".manifest")
        write_manifest(manifest, self.name, self, cfg,
                       [cfg["images"], cfg["labels"]], {"dataset": cfg["out"]})
        ds = dataio.load_digits_binary(cfg["images"], cfg["labels"],
                                       exclude_digits=cfg["exclude"],
                                       max_n=cfg["max_n"])
        if cfg["noise"] > 0.0:
            ds = dataio.add_gaussian_noise(ds, cfg["noise"], cfg["seed"])
        dataio.write_dataset_csv(ds, cfg["out"])
        print(f"wrote {ds.n} samples (d={ds.d}) to {cfg['out']}")
        return EXIT_OK


class Train(Command):
    name = "train"
    describe = "projected gradient descent on a dataset CSV"
    options = (
        Opt("--data", "str", required=True, help="dataset CSV"),
        Opt("--labels", "str", required=True, choices=("soft", "hard"),
            help="training loss"),
        Opt("--teacher", "str", "closed-form",
            choices=("closed-form", "mc", "widenet"),
            help="soft-label source"),
        Opt("--direction", "opt_str",
            help="direction CSV (closed-form and mc teachers)"),
        Opt("--teacher-logits", "opt_str",
            help="teacher labels CSV (widenet teacher)"),
        Opt("--mc-samples", "int", 1000, help="Monte Carlo teacher samples"),
        Opt("--m", "int", required=True, help="student width (even)"),
        Opt("--eta", "float", required=True, help="step size"),
        Opt("--B", "radius", 1.0, help="projection radius; `inf` disables"),
        Opt("--T", "int", required=True, help="iterations"),
        Opt("--seed", "int", 0, help="base seed"),
        Opt("--engine", "str", "auto", choices=("auto", "dense", "cells"),
            help="training engine"),
        Opt("--trace", "str", required=True, help="trace CSV path"),
        Opt("--checkpoint", "opt_str",
            help="final checkpoint path (default: <trace>.npz)"),
    )

    def run(self, cfg):
        if cfg["m"] < 2 or cfg["m"] % 2:
            raise UsageError("--m must be an even integer >= 2")
        if cfg["eta"] <= 0.0 or cfg["T"] < 1:
            raise UsageError("--eta must be positive and --T at least 1")
        checkpoint = cfg["checkpoint"] or _sibling(cfg["trace"], ".npz")
        inputs = [cfg["data"]]
        if cfg["labels"] == "soft":
            if cfg["teacher"] == "widenet":
                if not cfg["teacher_logits"]:
                    raise UsageError("widenet teacher needs --teacher-logits")
                inputs.append(cfg["teacher_logits"])
            else:
                if not cfg["direction"]:
                    raise UsageError(f"{cfg['teacher']} teacher needs --direction")
                inputs.append(cfg["direction"])
        manifest = _default_manifest(cfg, cfg["trace"] + ".manifest")
        write_manifest(manifest, self.name, self, cfg, inputs,
                       {"trace": cfg["trace"], "checkpoint": checkpoint})
        ds = dataio.read_dataset_csv(cfg["data"])
        labels = None
        if cfg["labels"] == "soft":
            if cfg["teacher"] == "widenet":
                labels = teacher.read_labels_csv(cfg["teacher_logits"])
                if len(labels.probs) != ds.n:
                    raise UsageError("teacher labels row count does not match "
                                     "the dataset")
                if np.any(labels.probs <= 0.0) or np.any(labels.probs >= 1.0):
                    raise UsageError("teacher probabilities must lie strictly "
                                     "inside (0, 1)")
            else:
                u = dataio.read_direction_csv(cfg["direction"])
                if len(u) != ds.d:
                    raise UsageError("direction dimension does not match "
                                     "the dataset")
                if cfg["teacher"] == "mc":
                    spec = teacher.make_mc_constant(u, ds.d,
                                                    cfg["mc_samples"],
                                                    cfg["seed"])
                else:
                    spec = teacher.ClosedFormLinear(u)
                labels = teacher.labels_from(spec, ds)
        params = model.init_symmetric(cfg["m"], ds.d,
                                      substream(cfg["seed"], "init"))
        tc = optim.TrainConfig(loss_kind=cfg["labels"], eta=cfg["eta"],
                               radius=cfg["B"], iters=cfg["T"],
                               seed=cfg["seed"], engine=cfg["engine"])
        trace = optim.train(params, ds, labels, tc)
        optim.write_trace_csv(trace, cfg["trace"])
        model.save_checkpoint(trace.final, checkpoint)
        last = trace.iters - 1
        print(f"trained {trace.iters} iterations; final r_class="
              f"{trace.r_class[last]:.6g} r_hard={trace.r_hard[last]:.6g}")
        return EXIT_OK


def _synth_for_check(cfg):
    spec = dataio.SynthSpec(n=cfg["n"], d=cfg["d"],
                            target_half_margin=cfg["gamma"],
                            direction_seed=cfg["seed"],
                            sample_seed=cfg["seed"])
    return dataio.generate_synthetic(spec)


class _VerifyCommand(Command):
    """Shared plumbing: manifest, report CSV, summary, exit code."""

    def finish(self, cfg, report, deterministic_failed):
        if cfg["report"]:
            verify.write_report_csv(report, cfg["report"])
        print(report.summary_text())
        return EXIT_CHECK if deterministic_failed else EXIT_OK

    def manifest_first(self, cfg, inputs=()):
        slug = self.name.replace(" ", "-")
        manifest = _default_manifest(cfg, f"{slug}.manifest")
        outputs = {"report": cfg["report"]} if cfg["report"] else {}
        write_manifest(manifest, self.name, self, cfg, list(inputs), outputs)

    def proved_slacks_ok(self, report):
        notes = report.notes
        return (notes.get("pinsker_lo_min", math.inf) >= -PINSKER_TOL
                and notes.get("pinsker_hi_min", math.inf) >= -PINSKER_TOL
                and notes.get("grad_bound_min", math.inf) >= -PINSKER_TOL)


class VerifyDescent(_VerifyCommand):
    name = "verify descent"
    describe = "proved per-step descent inequality on a fresh soft run"
    options = (
        Opt("--n", "int", 32), Opt("--d", "int", 10),
        Opt("--gamma", "float", 0.25, help="synthetic margin"),
        Opt("--m", "int", 64, help="student width (even)"),
        Opt("--T", "int", 200, help="iterations"),
        Opt("--eta", "float", 0.1, help="step size"),
        Opt("--seed", "int", 0),
        Opt("--tolerance", "float", 1e-8, help="residual tolerance"),
        Opt("--report", "opt_str", help="per-step report CSV"),
    )

    def run(self, cfg):
        if cfg["m"] < 2 or cfg["m"] % 2:
            raise UsageError("--m must be an even integer >= 2")
        self.manifest_first(cfg)
        ds, u = _synth_for_check(cfg)
        tspec = teacher.ClosedFormLinear(u)
        labels = teacher.labels_from(tspec, ds)
        params = model.init_symmetric(cfg["m"], cfg["d"],
                                      substream(cfg["seed"], "init"))
        ref = teacher.build_reference(params, tspec)
        tc = optim.TrainConfig(loss_kind="soft", eta=cfg["eta"], radius=1.0,
                               iters=cfg["T"], engine="dense")
        trace = optim.train(params, ds, labels, tc, reference=ref)
        report = verify.check_descent_inequality(trace, ref, cfg["tolerance"])
        return self.finish(cfg, report, not report.passed)


class VerifySubsample(_VerifyCommand):
    name = "verify subsample"
    describe = "sub-sample concentration of reference outputs at init"
    options = (
        Opt("--n", "int", 20), Opt("--d", "int", 10),
        Opt("--gamma", "float", 0.25),
        Opt("--m", "int", 1024), Opt("--delta", "float", 0.1),
        Opt("--trials", "int", 500), Opt("--seed", "int", 0),
        Opt("--report", "opt_str"),
    )

    def run(self, cfg):
        self.manifest_first(cfg)
        ds, u = _synth_for_check(cfg)
        report = verify.check_subsample_concentration(
            ds, teacher.ClosedFormLinear(u), cfg["m"], cfg["delta"],
            cfg["trials"], cfg["seed"])
        return self.finish(cfg, report, False)


class VerifyFlips(_VerifyCommand):
    name = "verify flips"
    describe = "flip-set cardinality and frozen-pattern drift bounds"
    options = (
        Opt("--n", "int", 20), Opt("--d", "int", 10),
        Opt("--gamma", "float", 0.25),
        Opt("--m", "int", 1024), Opt("--B", "radius", 1.0),
        Opt("--delta", "float", 0.1), Opt("--trials", "int", 200),
        Opt("--T", "int", 100), Opt("--eta", "float", 0.5),
        Opt("--seed", "int", 0), Opt("--report", "opt_str"),
    )

    def run(self, cfg):
        self.manifest_first(cfg)
        ds, u = _synth_for_check(cfg)
        report = verify.check_flip_bounds(
            ds, teacher.ClosedFormLinear(u), cfg["m"], cfg["B"],
            cfg["delta"], cfg["trials"], cfg["T"], eta=cfg["eta"],
            seed=cfg["seed"])
        return self.finish(cfg, report, False)


class VerifySoftRisk(_VerifyCommand):
    name = "verify soft-risk"
    describe = "soft-label surrogate-risk regime run"
    options = (
        Opt("--beta", "float", 0.5), Opt("--delta", "float", 0.1),
        Opt("--gamma", "float", 0.25),
        Opt("--n", "int", 20), Opt("--d", "int", 10),
        Opt("--seeds", "int", 100), Opt("--seed", "int", 0),
        Opt("--entropy-aware", "bool",
            help="use the entropy-aware step size and iteration count"),
        Opt("--engine", "str", "dense", choices=("auto", "dense")),
        Opt("--report", "opt_str"),
    )

    def run(self, cfg):
        self.manifest_first(cfg)
        report = verify.run_soft_risk_check(
            cfg["beta"], cfg["delta"], cfg["gamma"], n=cfg["n"], d=cfg["d"],
            seeds=cfg["seeds"], seed=cfg["seed"],
            use_entropy_aware=bool(cfg["entropy_aware"]),
            engine=cfg["engine"])
        det_fail = (report.notes["fbar_max"] > FBAR_CAP + 1e-9
                    or not self.proved_slacks_ok(report))
        return self.finish(cfg, report, det_fail)


class VerifySoftError(_VerifyCommand):
    name = "verify soft-error"
    describe = "soft-label classification-error regime run"
    options = (
        Opt("--epsilon", "float", 0.3), Opt("--delta", "float", 0.1),
        Opt("--gamma", "float", 0.4),
        Opt("--n", "int", 10), Opt("--d", "int", 3),
        Opt("--seeds", "int", 50), Opt("--seed", "int", 0),
        Opt("--engine", "str", "cells", choices=("auto", "dense", "cells")),
        Opt("--report", "opt_str"),
    )

    def run(self, cfg):
        self.manifest_first(cfg)
        report = verify.run_soft_error_check(
            cfg["epsilon"], cfg["delta"], cfg["gamma"], n=cfg["n"],
            d=cfg["d"], seeds=cfg["seeds"], seed=cfg["seed"],
            engine=cfg["engine"])
        det_fail = (report.notes["margin_relation_violations"] > 0
                    or not self.proved_slacks_ok(report))
        return self.finish(cfg, report, det_fail)


class VerifyHardRisk(_VerifyCommand):
    name = "verify hard-risk"
    describe = "hard-label logistic-risk regime run"
    options = (
        Opt("--beta", "float", 0.5), Opt("--delta", "float", 0.1),
        Opt("--gamma", "float", 0.4), Opt("--eta", "float", 1.0),
        Opt("--n", "int", 20), Opt("--d", "int", 3),
        Opt("--seeds", "int", 50), Opt("--seed", "int", 0),
        Opt("--budget-seconds", "opt_float",
            help="wall-clock budget; seeds past it are reported untested"),
        Opt("--engine", "str", "dense", choices=("auto", "dense", "cells")),
        Opt("--report", "opt_str"),
    )

    def run(self, cfg):
        self.manifest_first(cfg)
        report = verify.run_hard_risk_check(
            cfg["beta"], cfg["delta"], cfg["gamma"], eta=cfg["eta"],
            n=cfg["n"], d=cfg["d"], seeds=cfg["seeds"], seed=cfg["seed"],
            budget_seconds=cfg["budget_seconds"], engine=cfg["engine"])
        det_fail = report.notes["class_vs_log_violations"] > 0
        return self.finish(cfg, report, det_fail)


class Sweep(Command):
    name = "sweep"
    describe = "smallest width reaching the error target, soft vs hard"
    options = (
        Opt("--gammas", "float_list", (0.4, 0.2, 0.1, 0.05)),
        Opt("--epsilon", "float", 0.1),
        Opt("--m-grid", "m_grid", (2, 4, 8, 16, 32, 64, 128, 256),
            help="comma list or `2:256:x2`"),
        Opt("--seeds", "int", 3), Opt("--n", "int", 20), Opt("--d", "int", 3),
        Opt("--seed", "int", 0),
        Opt("--budget-iters", "int", 20000,
            help="cap on iterations per run; step size rescaled to match"),
        Opt("--jobs", "int", 1, help="parallel sweep cells"),
        Opt("--out", "str", required=True, help="sweep CSV path"),
    )

    def run(self, cfg):
        manifest = _default_manifest(cfg, cfg["out"] + ".manifest")
        write_manifest(manifest, self.name, self, cfg, [],
                       {"sweep": cfg["out"]})
        result = verify.sweep_min_neurons(
            cfg["gammas"], cfg["epsilon"], m_grid=cfg["m_grid"],
            seeds=cfg["seeds"], n=cfg["n"], d=cfg["d"], seed=cfg["seed"],
            budget_iters=cfg["budget_iters"], jobs=cfg["jobs"])
        result.to_csv(cfg["out"])
        print(result.summary_text())
        return EXIT_OK


class Table1(Command):
    name = "table1"
    describe = "small-student soft vs hard comparison on digit data"
    options = (
        Opt("--images", "str", required=True, help="idx images file"),
        Opt("--labels", "str", required=True, help="idx labels file"),
        Opt("--train-n", "int", 2000),
        Opt("--teacher-width", "int", 512),
        Opt("--teacher-epochs", "int", 3000),
        Opt("--teacher-eta", "float", 50.0),
        Opt("--m-list", "int_list", (4,), help="student widths"),
        Opt("--student-iters", "int", 10000),
        Opt("--student-eta", "float", 1.0),
        Opt("--student-radius", "radius", 8.0,
            help="projection ball for the students"),
        Opt("--logit-cap", "float", 1.0,
            help="clip teacher logits to +-cap before the sigmoid"),
        Opt("--student-seeds", "int", 5),
        Opt("--seed", "int", 0),
        Opt("--out", "str", required=True, help="results CSV path"),
    )

    def run(self, cfg):
        manifest = _default_manifest(cfg, cfg["out"] + ".manifest")
        write_manifest(manifest, self.name, self, cfg,
                       [cfg["images"], cfg["labels"]], {"table": cfg["out"]})
        result = verify.digit_table(
            cfg["images"], cfg["labels"], train_n=cfg["train_n"],
            teacher_width=cfg["teacher_width"],
            teacher_epochs=cfg["teacher_epochs"],
            teacher_eta=cfg["teacher_eta"], student_widths=cfg["m_list"],
            student_iters=cfg["student_iters"],
            student_eta=cfg["student_eta"],
            student_radius=cfg["student_radius"],
            logit_cap=cfg["logit_cap"],
            student_seeds=cfg["student_seeds"], seed=cfg["seed"])
        result.to_csv(cfg["out"])
        print(result.summary_text())
        return EXIT_OK


class Rerun(Command):
    name = "rerun"
    describe = "replay a recorded manifest after verifying input digests"
    takes_common = False
    options = (Opt("--manifest", "str", required=True,
                   help="manifest to replay"),)

    def run(self, cfg):
        entries = _read_manifest(cfg["manifest"])
        target = entries.get("command")
        cmd = _COMMAND_INDEX.get(target or "")
        if cmd is None:
            raise UsageError(f"manifest names unknown command {target!r}")
        sub_cfg = {}
        for opt in cmd.options:
            key = f"config.{opt.dest}"
            if key not in entries:
                raise UsageError(f"manifest lacks {key}")
            sub_cfg[opt.dest] = KINDS[opt.kind](entries[key])
        sub_cfg["config"] = None
        sub_cfg["manifest"] = cfg["manifest"]
        k = 0
        while f"input_path.{k}" in entries:
            path = entries[f"input_path.{k}"]
            want = entries[f"input_sha256.{k}"]
            got = _file_digest(path)
            if got != want:
                raise RuntimeError(f"input {path} changed since the manifest "
                                   f"was written (sha256 {got} != {want})")
            k += 1
        return cmd.run(sub_cfg)


COMMANDS = [DataSynth(), DataMnist(), Train(), VerifyDescent(),
            VerifySubsample(), VerifyFlips(), VerifySoftRisk(),
            VerifySoftError(), VerifyHardRisk(), Sweep(), Table1(), Rerun()]
_COMMAND_INDEX = {c.name: c for c in COMMANDS}


# ---------------------------------------------------------------------------
# parser assembly and dispatch

def _add_command(sub, cmd):
    leaf = sub.add_parser(cmd.name.split()[-1], help=cmd.describe)
    for opt in cmd.all_options():
        if opt.kind == "bool":
            leaf.add_argument(opt.flag, dest=opt.dest, action="store_const",
                              const="true", default=None, help=opt.help)
        else:
            leaf.add_argument(opt.flag, dest=opt.dest, default=None,
                              metavar="V", help=opt.help)
    leaf.set_defaults(_command=cmd)


def build_parser():
    top = argparse.ArgumentParser(
        prog="distillbound",
        description="soft vs hard label training bounds workbench")
    top.add_argument("--version", action="version", version=__version__)
    subs = top.add_subparsers(dest="_group")
    groups = {}
    for cmd in COMMANDS:
        words = cmd.name.split()
        if len(words) == 1:
            _add_command(subs, cmd)
        else:
            if words[0] not in groups:
                parent = subs.add_parser(words[0], help=f"{words[0]} commands")
                groups[words[0]] = parent.add_subparsers(dest="_subgroup")
            _add_command(groups[words[0]], cmd)
    return top


def _resolve(cmd, ns):
    toml_cfg = {}
    config_path = getattr(ns, "config", None)
    if config_path:
        try:
            with open(config_path, "rb") as fh:
                raw = tomllib.load(fh)
        except OSError as exc:
            raise UsageError(f"cannot read config {config_path}: {exc}") from None
        except tomllib.TOMLDecodeError as exc:
            raise UsageError(f"bad TOML in {config_path}: {exc}") from None
        toml_cfg = {str(k).replace("-", "_"): v for k, v in raw.items()}
    cfg = {}
    for opt in cmd.all_options():
        raw = getattr(ns, opt.dest, None)
        if raw is not None:
            val = KINDS[opt.kind](raw)
        elif opt.dest in toml_cfg:
            val = _coerce_toml(opt.kind, toml_cfg[opt.dest])
        else:
            val = opt.default
        if val is None and opt.required:
            raise UsageError(f"missing required option {opt.flag}")
        if opt.choices is not None and val not in opt.choices:
            raise UsageError(f"{opt.flag} must be one of "
                             f"{', '.join(opt.choices)}; got {val!r}")
        cfg[opt.dest] = val
    return cfg


def main(argv=None):
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        code = exc.code if isinstance(exc.code, int) else 1
        return EXIT_OK if code == 0 else EXIT_USAGE
    cmd = getattr(ns, "_command", None)
    if cmd is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        cfg = _resolve(cmd, ns)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return cmd.run(cfg)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except optim.TrainDivergence as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ValueError, TypeError, KeyError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
