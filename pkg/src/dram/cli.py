"""Command-line entry point: ``dram {synth,train,eval,gradcheck,experiment}``.

Every run is driven by one JSON config file (a previous run's
``manifest.json`` is accepted too) and writes a manifest that is enough to
re-execute it. Exit codes: 0 success, 1 invalid configuration or inputs,
2 runtime failure. ``DRAM_LOG_LEVEL`` sets log verbosity.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import os
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .backbones import ConfigError
from .gradcheck import OPS, format_table, run_gradcheck
from .metrics import REPORT_COLUMNS, SIGMA_GRID, MetricsReport, write_attention_trace
from .model import CheckpointError, ForecastModel, Variant, load_checkpoint, save_checkpoint
from .pose import default_topology, load_topology
from .synth import (DatasetFormatError, SynthConfig, SynthConfigError, generate_corpus, make_split, read_dataset,
                    read_dataset_header, write_dataset)
from .training import TrainerConfig, TrainingDiverged, delta_event_contrast, evaluate, train

log = logging.getLogger("dram")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2
LOG_ENV = "DRAM_LOG_LEVEL"


class ValidationError(ValueError):
    """Config or input problems; ``fields`` names every offending entry."""

    def __init__(self, problems: list[str]):
        self.fields = problems
        super().__init__("invalid configuration: " + "; ".join(problems))


# run configuration -------------------------------------------------------------------------

_SECTIONS = {"seed", "dataset", "model", "trainer", "eval", "experiment", "gradcheck"}
_DATASET_KEYS = {"path", "synth", "n_sequences", "split"}
_MODEL_KEYS = {"variant", "backbone", "backbone_config", "a", "p", "k", "topology", "monadic_buffer",
               "detach_delta"}
_EVAL_KEYS = {"sigmas", "frames", "checkpoint", "output_dir"}
_EXPERIMENT_KEYS = {"variants", "seeds"}
_GRADCHECK_KEYS = {"seeds"}


@dataclass
class RunConfig:
    seed: int = 0
    dataset: dict = field(default_factory=dict)
    model: dict = field(default_factory=dict)
    trainer: dict = field(default_factory=dict)
    eval: dict = field(default_factory=dict)
    experiment: dict = field(default_factory=dict)
    gradcheck: dict = field(default_factory=dict)
    base_dir: Path = field(default=Path("."), repr=False)

    # resolved views ----------------------------------------------------------------
    def resolve_path(self, value: str) -> Path:
        p = Path(value)
        return p if p.is_absolute() else self.base_dir / p

    def synth_config(self) -> SynthConfig:
        kw = dict(self.dataset.get("synth") or {})
        kw.setdefault("seed", self.seed)
        if "event_kinds" in kw:
            kw["event_kinds"] = tuple(kw["event_kinds"])
        if kw.get("topology"):
            kw["topology"] = str(self.resolve_path(kw["topology"]))
        return SynthConfig(**kw)

    def trainer_config(self, seed: int | None = None) -> TrainerConfig:
        kw = dict(self.trainer)
        kw["seed"] = self.seed if seed is None else seed
        return TrainerConfig(**kw)

    def topology(self):
        topo = self.model.get("topology") or (self.dataset.get("synth") or {}).get("topology")
        return load_topology(self.resolve_path(topo)) if topo else default_topology()

    def build_model(self, variant: str | None = None, seed: int | None = None) -> ForecastModel:
        m = self.model
        hyper = {k: tuple(v) if isinstance(v, list) else v for k, v in (m.get("backbone_config") or {}).items()}
        return ForecastModel(
            Variant.parse(variant or m.get("variant", "dram")), int(m.get("a", 23)), int(m.get("p", 48)),
            int(m.get("k", 32)), backbone_kind=m.get("backbone", "tcn"), backbone_hyper=hyper,
            seed=self.seed if seed is None else seed, detach_delta=bool(m.get("detach_delta", False)),
            monadic_buffer=m.get("monadic_buffer", "current"))

    def sigmas(self) -> tuple[float, ...]:
        return tuple(float(s) for s in self.eval.get("sigmas", SIGMA_GRID))

    def to_dict(self) -> dict:
        return {"seed": self.seed, "dataset": self.dataset, "model": self.model, "trainer": self.trainer,
                "eval": self.eval, "experiment": self.experiment, "gradcheck": self.gradcheck}


def load_config(path: str | Path | None, seed_override: int | None = None) -> RunConfig:
    if path is None:
        raw: dict = {}
        base = Path(".")
    else:
        path = Path(path)
        if not path.is_file():
            raise ValidationError([f"config: file not found: {path}"])
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ValidationError([f"config: not valid JSON ({exc})"]) from None
        if not isinstance(raw, dict):
            raise ValidationError(["config: top level must be an object"])
        if "tool" in raw and "config" in raw:   # a run manifest
            raw = raw["config"]
        base = path.parent
    unknown = sorted(set(raw) - _SECTIONS)
    if unknown:
        raise ValidationError([f"{k}: unknown section" for k in unknown])
    for key in _SECTIONS - {"seed"}:
        if key in raw and not isinstance(raw[key], dict):
            raise ValidationError([f"{key}: must be an object"])
    cfg = RunConfig(**{k: v for k, v in raw.items()}, base_dir=base)
    if seed_override is not None:
        cfg.seed = seed_override
    if not isinstance(cfg.seed, int) or isinstance(cfg.seed, bool) or cfg.seed < 0:
        raise ValidationError([f"seed: must be a non-negative integer, got {cfg.seed!r}"])
    return cfg


def _unknown(section: str, given: dict, allowed: set[str]) -> list[str]:
    return [f"{section}.{k}: unknown field" for k in sorted(set(given) - allowed)]


def _try(problems: list[str], label: str, fn):
    try:
        return fn()
    except (ValueError, TypeError, KeyError, OSError) as exc:
        msg = str(exc).strip("'\"")
        problems.append(f"{label}: {msg}")
        return None


def validate(cfg: RunConfig, command: str) -> dict:
    """Check everything a command needs before any output is touched.

    Returns resolved pieces (synth config, dataset header, model, ...) so the
    command does not need to re-parse them.
    """
    problems: list[str] = []
    out: dict = {}
    needs_data = command in ("synth", "train", "eval", "experiment")
    needs_model = command in ("train", "experiment")

    problems += _unknown("dataset", cfg.dataset, _DATASET_KEYS)
    problems += _unknown("model", cfg.model, _MODEL_KEYS)
    problems += _unknown("eval", cfg.eval, _EVAL_KEYS)
    problems += _unknown("experiment", cfg.experiment, _EXPERIMENT_KEYS)
    problems += _unknown("gradcheck", cfg.gradcheck, _GRADCHECK_KEYS)
    trainer_fields = {f.name for f in dataclasses.fields(TrainerConfig)} - {"seed"}
    problems += _unknown("trainer", cfg.trainer, trainer_fields)

    if needs_data:
        has_path, has_synth = "path" in cfg.dataset, "synth" in cfg.dataset
        if command == "synth" and not has_synth:
            problems.append("dataset.synth: required by the synth command")
        elif command != "synth" and has_path == has_synth:
            problems.append("dataset: give exactly one of dataset.path or dataset.synth")
        if has_synth and (command == "synth" or not has_path):
            if not isinstance(cfg.dataset["synth"], dict):
                problems.append("dataset.synth: must be an object")
            else:
                synth_fields = {f.name for f in dataclasses.fields(SynthConfig)}
                bad = _unknown("dataset.synth", cfg.dataset["synth"], synth_fields)
                problems += bad
                if not bad:
                    out["synth"] = _try(problems, "dataset.synth", cfg.synth_config)
            n = cfg.dataset.get("n_sequences", 30)
            if not isinstance(n, int) or isinstance(n, bool) or n < 1:
                problems.append(f"dataset.n_sequences: must be a positive integer, got {n!r}")
            if out.get("synth") is not None:
                out["header"] = {"a": out["synth"].a, "p": out["synth"].p}
        if has_path and command != "synth":
            path = cfg.resolve_path(cfg.dataset["path"])
            if not path.is_file():
                problems.append(f"dataset.path: file not found: {path}")
            else:
                out["header"] = _try(problems, "dataset.path", lambda: read_dataset_header(path))
                out["dataset_path"] = path
        split = cfg.dataset.get("split", [0.8, 0.1, 0.1])
        if (not isinstance(split, list) or len(split) != 3 or not all(isinstance(r, (int, float)) for r in split)
                or min(split) <= 0 or abs(sum(split) - 1.0) > 1e-9):
            problems.append(f"dataset.split: must be three positive ratios summing to 1, got {split!r}")

    topo = _try(problems, "model.topology", cfg.topology)
    if needs_model:
        variants = cfg.experiment.get("variants") if command == "experiment" else [cfg.model.get("variant", "dram")]
        if command == "experiment" and variants is None:
            variants = [v.value for v in Variant]
        if not isinstance(variants, list) or not variants:
            problems.append("experiment.variants: must be a non-empty list")
            variants = []
        for v in variants:
            _try(problems, "model.variant" if command == "train" else "experiment.variants",
                 lambda v=v: Variant.parse(v))
        if cfg.model.get("backbone", "tcn") not in ("tcn", "lstm"):
            problems.append(f"model.backbone: unknown backbone {cfg.model.get('backbone')!r} (tcn or lstm)")
        elif not problems:
            out["model"] = _try(problems, "model", lambda: cfg.build_model(variants[0]))
        out["trainer"] = _try(problems, "trainer", cfg.trainer_config)
        if command == "experiment":
            seeds = cfg.experiment.get("seeds", [cfg.seed])
            if (not isinstance(seeds, list) or not seeds
                    or not all(isinstance(s, int) and not isinstance(s, bool) and s >= 0 for s in seeds)):
                problems.append(f"experiment.seeds: must be a non-empty list of non-negative integers, got {seeds!r}")
            out["variants"] = variants
            out["seeds"] = seeds

    header = out.get("header")
    if header and topo is not None:
        if header["p"] != topo.pose_dim:
            problems.append(f"dataset: pose dim p={header['p']} does not match topology pose dim {topo.pose_dim}")
        if needs_model:
            for key in ("a", "p"):
                if key in cfg.model and cfg.model[key] != header[key]:
                    problems.append(f"model.{key}: {cfg.model[key]} does not match dataset {key}={header[key]}")

    if command == "eval":
        ck = cfg.eval.get("checkpoint")
        if ck is None:
            problems.append("eval.checkpoint: required by the eval command")
        else:
            path = cfg.resolve_path(ck)
            if not path.is_file():
                problems.append(f"eval.checkpoint: file not found: {path}")
            else:
                loaded = _try(problems, "eval.checkpoint", lambda: load_checkpoint(path))
                if loaded is not None:
                    out["model"] = loaded[0]
                    out["checkpoint_path"] = path
                    m = loaded[0]
                    if header:
                        for key in ("a", "p"):
                            if getattr(m, key) != header[key]:
                                problems.append(f"eval.checkpoint: checkpoint {key}={getattr(m, key)} does not "
                                                f"match dataset {key}={header[key]}")

    if command in ("eval", "train", "experiment"):
        sig = cfg.eval.get("sigmas", list(SIGMA_GRID))
        if not isinstance(sig, list) or not sig or not all(isinstance(s, (int, float)) and s > 0 for s in sig):
            problems.append(f"eval.sigmas: must be a non-empty list of positive numbers, got {sig!r}")
        frames = cfg.eval.get("frames")
        if frames is not None and (not isinstance(frames, int) or frames < 1):
            problems.append(f"eval.frames: must be a positive integer or null, got {frames!r}")

    if command == "gradcheck":
        s = cfg.gradcheck.get("seeds", 20)
        if not isinstance(s, int) or isinstance(s, bool) or s < 1:
            problems.append(f"gradcheck.seeds: must be a positive integer, got {s!r}")

    if problems:
        raise ValidationError(problems)
    out["topology"] = topo
    return out


# manifests --------------------------------------------------------------------------------

def sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _atomic_write(path: Path, data: bytes) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@dataclass
class RunManifest:
    command: str
    config: dict
    seeds: dict
    inputs: dict[str, str] = field(default_factory=dict)
    artifacts: dict[str, str] = field(default_factory=dict)
    tool: str = "dram"
    version: str = __version__

    def write(self, out_dir: Path) -> Path:
        body = {"tool": self.tool, "version": self.version, "command": self.command, "config": self.config,
                "seeds": self.seeds, "inputs": self.inputs, "artifacts": self.artifacts,
                "numpy": np.__version__}
        path = out_dir / "manifest.json"
        _atomic_write(path, (json.dumps(body, indent=2, sort_keys=True) + "\n").encode())
        return path


def _artifacts(out_dir: Path, paths: list[Path]) -> dict[str, str]:
    return {str(p.relative_to(out_dir)): sha256(p) for p in paths}


def _snapshot(cfg: RunConfig) -> dict:
    """Config with input paths made absolute so the manifest re-runs from anywhere."""
    snap = json.loads(json.dumps(cfg.to_dict()))
    if "path" in snap["dataset"]:
        snap["dataset"]["path"] = str(cfg.resolve_path(snap["dataset"]["path"]).resolve())
    if "checkpoint" in snap["eval"]:
        snap["eval"]["checkpoint"] = str(cfg.resolve_path(snap["eval"]["checkpoint"]).resolve())
    for section in (snap["model"], snap["dataset"].get("synth") or {}):
        if section.get("topology"):
            section["topology"] = str(cfg.resolve_path(section["topology"]).resolve())
    return snap


# shared pieces ----------------------------------------------------------------------------

def _load_sequences(cfg: RunConfig, resolved: dict):
    if "dataset_path" in resolved:
        seqs, _ = read_dataset(resolved["dataset_path"])
        return seqs
    return generate_corpus(resolved["synth"], cfg.dataset.get("n_sequences", 30))


def _split(cfg: RunConfig, seqs):
    return make_split(seqs, tuple(cfg.dataset.get("split", [0.8, 0.1, 0.1])), seed=cfg.seed)


def _inputs(resolved: dict) -> dict[str, str]:
    out = {}
    for key in ("dataset_path", "checkpoint_path"):
        if key in resolved:
            out[str(Path(resolved[key]).resolve())] = sha256(resolved[key])
    return out


def format_grid(rows: list[tuple[str, list[float]]]) -> str:
    """Variant x joint-group APE table."""
    width = max([len("Model")] + [len(name) for name, _ in rows]) + 2
    lines = ["Model".ljust(width) + "".join(f"{c:>8}" for c in REPORT_COLUMNS)]
    for name, vals in rows:
        lines.append(name.ljust(width) + "".join(f"{v:>8.3f}" for v in vals))
    return "\n".join(lines)


def format_pck(rows: list[tuple[str, dict[float, float]]]) -> str:
    sigmas = list(rows[0][1]) if rows else []
    width = max([len("Model")] + [len(name) for name, _ in rows]) + 2
    lines = ["Model".ljust(width) + "".join(f"{'PCK@' + format(s, 'g'):>9}" for s in sigmas)]
    for name, curve in rows:
        lines.append(name.ljust(width) + "".join(f"{curve[s]:>9.4f}" for s in sigmas))
    return "\n".join(lines)


def _write_curves(path: Path, history: list[dict]) -> None:
    lines = ["epoch,loss,val_ape,teacher_ratio"]
    lines += [f"{h['epoch']},{h['loss']!r},{h['val_ape']!r},{h['teacher_ratio']!r}" for h in history]
    path.write_text("\n".join(lines) + "\n")


# commands ---------------------------------------------------------------------------------

def cmd_synth(cfg: RunConfig, out_dir: Path) -> int:
    resolved = validate(cfg, "synth")
    synth = resolved["synth"]
    seqs = generate_corpus(synth, cfg.dataset.get("n_sequences", 30))
    out_dir.mkdir(parents=True, exist_ok=True)
    data = out_dir / "dataset.dyad"
    write_dataset(data, seqs)
    RunManifest("synth", _snapshot(cfg), {"global": cfg.seed, "synth": synth.seed},
                artifacts=_artifacts(out_dir, [data])).write(out_dir)
    print(f"wrote {len(seqs)} sequences to {data}")
    return EXIT_OK


def cmd_train(cfg: RunConfig, out_dir: Path) -> int:
    resolved = validate(cfg, "train")
    seqs = _load_sequences(cfg, resolved)
    split = _split(cfg, seqs)
    model, tcfg, topo = resolved["model"], resolved["trainer"], resolved["topology"]
    out_dir.mkdir(parents=True, exist_ok=True)
    result = train(model, split.train, split.val, tcfg, topo)
    ckpt, curves = out_dir / "model.ckpt", out_dir / "curves.csv"
    save_checkpoint(model, ckpt, extra={"best_epoch": result.best_epoch})
    _write_curves(curves, result.history)
    RunManifest("train", _snapshot(cfg), {"global": cfg.seed, "model": model.seed, "trainer": tcfg.seed},
                inputs=_inputs(resolved), artifacts=_artifacts(out_dir, [ckpt, curves])).write(out_dir)
    print(f"best epoch {result.best_epoch}, validation APE {result.best_val_ape:.4f}; checkpoint {ckpt}")
    return EXIT_OK


def cmd_eval(cfg: RunConfig, out_dir: Path) -> int:
    resolved = validate(cfg, "eval")
    seqs = _load_sequences(cfg, resolved)
    test = _split(cfg, seqs).test if len(seqs) >= 3 else seqs
    model, topo = resolved["model"], resolved["topology"]
    ev = evaluate(model, test, topo, cfg.sigmas(), cfg.eval.get("frames"))
    report = ev.report
    if model.variant is Variant.DRAM:
        report.extra.update(delta_event_contrast(ev.rollouts, test))
    out_dir.mkdir(parents=True, exist_ok=True)
    rep_path = out_dir / "metrics.txt"
    report.write(rep_path)
    written = [rep_path]
    if model.variant is Variant.DRAM:
        trace = out_dir / "attention.csv"
        write_attention_trace(trace, ev.rollouts[0].delta)
        written.append(trace)
    RunManifest("eval", _snapshot(cfg), {"global": cfg.seed}, inputs=_inputs(resolved),
                artifacts=_artifacts(out_dir, written)).write(out_dir)
    print(format_grid([(model.variant.label, report.row())]))
    return EXIT_OK


def cmd_gradcheck(cfg: RunConfig, out_dir: Path | None, ops=None) -> int:
    validate(cfg, "gradcheck")
    rows = run_gradcheck(ops if ops is not None else OPS, seeds=cfg.gradcheck.get("seeds", 20), base_seed=cfg.seed)
    table = format_table(rows)
    print(table)
    ok = all(r.passed for r in rows)
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / "gradcheck.txt"
        path.write_text(table + "\n")
        RunManifest("gradcheck", _snapshot(cfg), {"global": cfg.seed},
                    artifacts=_artifacts(out_dir, [path])).write(out_dir)
    return EXIT_OK if ok else EXIT_RUNTIME


@dataclass
class ExperimentResult:
    reports: dict[str, list[MetricsReport]]
    delta: dict[str, float]

    def mean_row(self, variant: str) -> list[float]:
        return list(np.mean([r.row() for r in self.reports[variant]], axis=0))

    def mean_pck(self, variant: str) -> dict[float, float]:
        reps = self.reports[variant]
        return {s: float(np.mean([r.pck[s] for r in reps])) for s in reps[0].pck}


def run_experiment(cfg: RunConfig, resolved: dict, out_dir: Path | None = None) -> ExperimentResult:
    seqs = _load_sequences(cfg, resolved)
    split = _split(cfg, seqs)
    topo = resolved["topology"]
    reports: dict[str, list[MetricsReport]] = {}
    deltas = []
    for v in resolved["variants"]:
        name = Variant.parse(v).value
        for seed in resolved["seeds"]:
            model = cfg.build_model(name, seed)
            train(model, split.train, split.val, cfg.trainer_config(seed), topo)
            ev = evaluate(model, split.test, topo, cfg.sigmas(), cfg.eval.get("frames"))
            reports.setdefault(name, []).append(ev.report)
            if model.variant is Variant.DRAM:
                deltas.append(delta_event_contrast(ev.rollouts, split.test))
            if out_dir is not None:
                save_checkpoint(model, out_dir / "runs" / f"{name}_seed{seed}.ckpt")
            log.info("%s seed %d: APE %.4f", name, seed, ev.report.ape_avg)
    delta = {k: float(np.mean([d[k] for d in deltas])) for k in deltas[0]} if deltas else {}
    return ExperimentResult(reports, delta)


def cmd_experiment(cfg: RunConfig, out_dir: Path) -> int:
    resolved = validate(cfg, "experiment")
    (out_dir / "runs").mkdir(parents=True, exist_ok=True)
    res = run_experiment(cfg, resolved, out_dir)
    names = list(res.reports)
    text = [f"Test APE (cm), mean over seeds {resolved['seeds']}", format_grid(
        [(Variant.parse(n).label, res.mean_row(n)) for n in names]), "",
        "PCK", format_pck([(Variant.parse(n).label, res.mean_pck(n)) for n in names])]
    if res.delta:
        text += ["", "Attention (DRAM): mean delta inside events {delta_in:.4f}, outside {delta_out:.4f}, "
                 "overall {delta_mean:.4f}".format(**res.delta)]
    report = "\n".join(text) + "\n"
    print(report, end="")
    rep_path = out_dir / "experiment.txt"
    rep_path.write_text(report)
    summary = out_dir / "experiment.json"
    summary.write_text(json.dumps({
        "columns": list(REPORT_COLUMNS),
        "ape": {n: res.mean_row(n) for n in names},
        "ape_per_seed": {n: [r.row() for r in res.reports[n]] for n in names},
        "pck": {n: {format(s, "g"): v for s, v in res.mean_pck(n).items()} for n in names},
        "delta": res.delta,
    }, indent=2, sort_keys=True) + "\n")
    runs = sorted((out_dir / "runs").glob("*.ckpt"))
    RunManifest("experiment", _snapshot(cfg), {"global": cfg.seed, "runs": resolved["seeds"]},
                inputs=_inputs(resolved), artifacts=_artifacts(out_dir, [rep_path, summary] + runs)).write(out_dir)
    return EXIT_OK


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "eval": cmd_eval, "gradcheck": cmd_gradcheck,
            "experiment": cmd_experiment}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dram", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, required=name != "gradcheck", help="JSON run config or manifest")
        p.add_argument("--out", type=Path, required=name != "gradcheck", help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the config's global seed")
    return parser


def _setup_logging() -> None:
    level = os.environ.get(LOG_ENV, "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.seed)
        return COMMANDS[args.command](cfg, args.out)
    except (ValidationError, ConfigError, SynthConfigError, CheckpointError, DatasetFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except TrainingDiverged as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - any other failure is a runtime error
        log.debug("runtime failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
