"""Command-line entry point: ``h2oformer <subcommand> [flags]``.

Subcommands share one configuration path.  A config file is JSON with up to
four sections::

    {"topology": "micro6",            # built-in name, file path, or inline object
     "model": {...}, "train": {...}, "synth": {...}}

``--override section.key=value`` pairs are applied after the file is parsed;
values are read as JSON when they parse, else kept as strings.  The fully
resolved configuration is written to ``config.json`` in every run
directory, so ``--config run/config.json`` replays the run.

Every command writes into one run directory (``--out``, or a fresh
directory under ``$H2OFORMER_RUNS``, default ``./runs``).  The directory is
assembled under a temporary name and renamed into place when the command
ends.

Exit codes: 0 success, 1 invalid input or configuration, 2 numeric failure
(non-finite loss, failed gradient check).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import os
import shutil
import sys
import tempfile
import time
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from .data import (DataError, DatasetManifest, SynthSpec, class_balance, generate_synthetic, load_jsonl,
                   oracle_agreement, split_by_subject, write_jsonl)
from .het import ConfigError
from .model import H2OFormer, ModelConfig
from .numerics import finite_diff_check, load_checkpoint, save_checkpoint
from .topology import Topology, TopologyError, load_topology, topology_from_dict
from .training import (VARIANTS, TrainConfig, TrainingAborted, apply_variant, checkpoint_header, combined_loss,
                       evaluate, loss_cls, loss_rec, run_ablation_matrix, train)

log = logging.getLogger("h2oformer")

RUNS_ENV = "H2OFORMER_RUNS"
EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 1, 2
DTYPE_FLAGS = {"f32": "float32", "f64": "float64"}
SECTIONS = ("topology", "model", "train", "synth")


class UsageError(ValueError):
    """Bad flags, paths, or overrides."""


# -- configuration -----------------------------------------------------------------

@dataclass
class RunConfig:
    topology: Topology
    topology_source: object
    model: ModelConfig
    train: TrainConfig
    synth: SynthSpec

    def to_dict(self) -> dict:
        return {"topology": self.topology.to_dict(), "model": self.model.to_dict(),
                "train": self.train.to_dict(), "synth": self.synth.to_dict()}


def parse_override(text: str) -> tuple[list[str], object]:
    key, sep, raw = text.partition("=")
    if not sep or not key.strip():
        raise UsageError(f"override {text!r} is not of the form section.key=value")
    path = key.strip().split(".")
    if path[0] not in SECTIONS:
        raise UsageError(f"override {text!r}: unknown section {path[0]!r}; expected one of {list(SECTIONS)}")
    if path[0] != "topology" and len(path) < 2:
        raise UsageError(f"override {text!r} must name a key inside section {path[0]!r}")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return path, value


def apply_overrides(raw: dict, overrides) -> dict:
    out = json.loads(json.dumps(raw))
    for text in overrides or ():
        path, value = parse_override(text)
        if len(path) == 1:
            out[path[0]] = value
            continue
        node = out.setdefault(path[0], {})
        if not isinstance(node, dict):
            raise UsageError(f"override {text!r}: section {path[0]!r} is not an object")
        for part in path[1:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise UsageError(f"override {text!r}: {part!r} is not an object")
        node[path[-1]] = value
    return out


def _resolve_topology(source) -> Topology:
    if isinstance(source, dict):
        return topology_from_dict(source)
    if isinstance(source, str):
        return load_topology(source)
    raise ConfigError(f"topology must be a name, a path, or an object; got {type(source).__name__}")


def build_config(raw: dict, *, seed: int | None = None, dtype: str | None = None,
                 variant: str | None = None, seed_target: str = "train") -> RunConfig:
    """Validate a parsed config dict.  Raises before any compute happens."""
    unknown = sorted(set(raw) - set(SECTIONS))
    if unknown:
        raise ConfigError(f"unknown config sections: {unknown}; expected {list(SECTIONS)}")
    for name in ("model", "train", "synth"):
        if not isinstance(raw.get(name, {}), dict):
            raise ConfigError(f"config section {name!r} must be an object")
    source = raw.get("topology", "imigue22")
    topology = _resolve_topology(source)

    model_d = dict(raw.get("model", {}))
    model_d.setdefault("num_joints", topology.num_vertices)
    model_d.setdefault("topology", topology.name)
    if dtype is not None:
        model_d["dtype"] = DTYPE_FLAGS[dtype]
    model = ModelConfig.from_dict(model_d)
    if model.num_joints != topology.num_vertices:
        raise ConfigError(f"model.num_joints={model.num_joints} but topology {topology.name!r} "
                          f"has {topology.num_vertices} joints")

    train_d = dict(raw.get("train", {}))
    synth_d = dict(raw.get("synth", {}))
    synth_d.setdefault("length", model.temporal_len)
    if seed is not None:
        (synth_d if seed_target == "synth" else train_d)["seed"] = seed
    if variant is not None:
        train_d["variant"] = variant
    tcfg = TrainConfig.from_dict(train_d)
    synth = SynthSpec.from_dict(synth_d)
    if tcfg.variant is not None:
        # idempotent, so a snapshot written after this step replays unchanged
        model, tcfg = apply_variant(model, tcfg, tcfg.variant)
    return RunConfig(topology, source, model, tcfg, synth)


def load_config(path: str | None, overrides=(), **kw) -> RunConfig:
    raw: dict = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise UsageError(f"config file not found: {p}")
        try:
            raw = json.loads(p.read_text("utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{p}: invalid JSON ({exc})") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"{p}: top level must be a JSON object")
    return build_config(apply_overrides(raw, overrides), **kw)


# -- run directories -----------------------------------------------------------------

@contextmanager
def run_directory(out: str | None, command: str):
    """Yield a staging directory that is renamed to the final run directory at exit."""
    if out is None:
        root = Path(os.environ.get(RUNS_ENV, "runs"))
        final = root / f"{command}-{time.strftime('%Y%m%d-%H%M%S')}"
        k = 1
        while final.exists():
            k += 1
            final = root / f"{command}-{time.strftime('%Y%m%d-%H%M%S')}-{k}"
    else:
        final = Path(out)
    if final.exists() and (not final.is_dir() or any(final.iterdir())):
        raise UsageError(f"output directory {final} already exists and is not empty")
    final.parent.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix=f".{final.name}.", dir=final.parent))
    try:
        yield staging
    except TrainingAborted as exc:
        _publish(staging, final)
        if exc.checkpoint is None:
            raise
        raise TrainingAborted(exc.epoch, exc.batch, final / exc.checkpoint.name) from None
    except BaseException:
        _publish(staging, final)
        raise
    _publish(staging, final)


def _publish(staging: Path, final: Path) -> None:
    if not any(staging.iterdir()):
        shutil.rmtree(staging)
        return
    if final.exists():
        final.rmdir()
    os.replace(staging, final)
    log.info("run directory: %s", final)


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n", "utf-8")


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _write_csv(path: Path, rows: list[dict]) -> None:
    if not rows:
        path.write_text("", "utf-8")
        return
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)


def _snapshot(run: Path, cfg: RunConfig, command: str, data: str | None = None) -> None:
    snap = cfg.to_dict()
    meta = {"command": command, "data": data, "backend": _kernels.BACKEND}
    _write_json(run / "config.json", snap)
    _write_json(run / "run.json", meta)


# -- data -------------------------------------------------------------------------------

def _manifest(cfg: RunConfig, data: str | None) -> DatasetManifest:
    if data is None:
        log.info("no --data given; generating the synthetic set from the synth section")
        manifest = generate_synthetic(cfg.synth, cfg.topology)
    else:
        p = Path(data)
        if not p.is_file():
            raise UsageError(f"dataset file not found: {p}")
        manifest = load_jsonl(p, cfg.topology)
    if not manifest.split:
        manifest = split_by_subject(manifest, cfg.train.train_fraction, cfg.train.seed)
    return manifest


def _arrays(cfg: RunConfig, manifest: DatasetManifest):
    t = cfg.model.temporal_len
    train_part = manifest.subset("train")
    test_part = manifest.subset("test")
    if not len(train_part):
        raise DataError("training split is empty")
    x, y = train_part.to_arrays(t, cfg.topology)
    val = test_part.to_arrays(t, cfg.topology) if len(test_part) else None
    return x, y, val


def _model_from_checkpoint(path: str | None) -> tuple[H2OFormer, dict]:
    if path is None:
        raise UsageError("--checkpoint is required for this command")
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"checkpoint not found: {p}")
    arrays, header = load_checkpoint(p)
    topology = topology_from_dict(header["topology"])
    model = H2OFormer(ModelConfig.from_dict(header["model"]), topology, seed=header.get("seed", 0))
    model.load_state_dict(arrays)
    return model, header


# -- commands ---------------------------------------------------------------------------

def cmd_gen_data(args) -> int:
    cfg = load_config(args.config, args.override, seed=args.seed, seed_target="synth")
    with run_directory(args.out, "gen-data") as run:
        manifest = generate_synthetic(cfg.synth, cfg.topology)
        manifest = split_by_subject(manifest, cfg.train.train_fraction, cfg.synth.seed)
        write_jsonl(manifest, run / "dataset.jsonl")
        pos, neg = class_balance(manifest)
        agree = oracle_agreement(manifest, cfg.topology, cfg.synth)
        summary = {"sequences": len(manifest), "positive": pos, "negative": neg,
                   "oracle_agreement": agree, "subjects": manifest.subjects, "split": manifest.split,
                   "topology": cfg.topology.name}
        _snapshot(run, cfg, "gen-data")
        _write_json(run / "summary.json", summary)
    print(f"{len(manifest)} sequences, {pos}/{neg}, oracle {agree:.0%}")
    return EXIT_OK


def _train_report(result, elapsed: float) -> dict:
    return {
        "status": "ok",
        "elapsed_seconds": elapsed,
        "steps": len(result.step_losses),
        "first_step_losses": result.step_losses[:3],
        "initial_loss_rec": result.initial_loss_rec,
        "final_train": result.final_train.to_dict() if result.final_train else None,
        "final_test": result.final_val.to_dict() if result.final_val else None,
        "loss_weight_suggestion": result.loss_weight_suggestion,
    }


def cmd_train(args) -> int:
    cfg = load_config(args.config, args.override, seed=args.seed, dtype=args.dtype, variant=args.variant)
    manifest = _manifest(cfg, args.data)
    x, y, val = _arrays(cfg, manifest)
    with run_directory(args.out, "train") as run:
        _snapshot(run, cfg, "train", args.data)
        model = H2OFormer(cfg.model, cfg.topology, seed=cfg.train.seed)
        rows = []

        def on_epoch(rec):
            rows.append(rec.row())
            log.info("epoch %d [%s] L=%.5g", rec.epoch, rec.stage, rec.loss)

        t0 = time.perf_counter()
        try:
            with np.errstate(all="ignore"):     # non-finite losses are caught and reported by train()
                _, result = train(model, x, y, cfg.train, val=val, run_dir=run, on_epoch=on_epoch)
        except TrainingAborted as exc:
            _write_csv(run / "metrics.csv", rows)
            _write_json(run / "report.json", {"status": "aborted", "error": str(exc),
                                              "epoch": exc.epoch, "batch": exc.batch})
            raise
        _write_csv(run / "metrics.csv", rows)
        save_checkpoint(run / "final.npz", model.state_dict(), checkpoint_header(model, cfg.train.epochs))
        report = _train_report(result, time.perf_counter() - t0)
        _write_json(run / "report.json", report)
    tr = result.final_train
    msg = f"train accuracy {tr.accuracy:.4f}"
    if result.final_val:
        msg += f", test accuracy {result.final_val.accuracy:.4f} F1 {result.final_val.f1_micro:.4f}"
    print(msg)
    return EXIT_OK


def cmd_eval(args) -> int:
    model, header = _model_from_checkpoint(args.checkpoint)
    raw = {"topology": header["topology"], "model": header["model"]}
    cfg = load_config(args.config, args.override, seed=args.seed)
    cfg = build_config({**cfg.to_dict(), **raw})
    manifest = _manifest(cfg, args.data)
    with run_directory(args.out, "eval") as run:
        _snapshot(run, cfg, "eval", args.data)
        report = {}
        for part in ("train", "test"):
            sub = manifest.subset(part)
            if len(sub):
                x, y = sub.to_arrays(cfg.model.temporal_len, cfg.topology)
                report[part] = evaluate(model, x, y, cfg.train.batch_size).to_dict()
        report["checkpoint"] = str(args.checkpoint)
        _write_json(run / "report.json", report)
    for part in ("train", "test"):
        if part in report:
            print(f"{part}: accuracy {report[part]['accuracy']:.4f} F1 {report[part]['f1_micro']:.4f}")
    return EXIT_OK


def gradcheck_model(cfg: RunConfig, batch: int = 2, samples: int = 32, epsilon: float = 1e-5,
                    tolerance: float = 1e-4):
    """Finite-difference check of ``lambda_rec L_rec + lambda_cls L_cls`` in float64."""
    mcfg = dataclasses.replace(cfg.model, dtype="float64", masking_rate=0.0)
    model = H2OFormer(mcfg, cfg.topology, seed=cfg.train.seed)
    synth = dataclasses.replace(cfg.synth, num_subjects=1, sequences_per_subject=batch, length=mcfg.temporal_len)
    manifest = generate_synthetic(synth, cfg.topology)
    x, y = manifest.to_arrays(mcfg.temporal_len, cfg.topology)
    model.train()
    lam_rec = cfg.train.lambda_rec if model.decoder else 0.0

    def loss_fn():
        out = model(x)
        l_rec = loss_rec(out.reconstruction, x) if model.decoder else None
        return combined_loss(l_rec, loss_cls(out.probability, y), lam_rec, cfg.train.lambda_cls)

    # batch statistics make every call deterministic, but running stats drift; restore them
    saved = {k: (s.mean.copy(), s.var.copy()) for k, s in model.named_norm_states().items()}
    report = finite_diff_check(loss_fn, model.parameters(), epsilon=epsilon, tolerance=tolerance,
                               samples=samples, seed=cfg.train.seed)
    for k, s in model.named_norm_states().items():
        s.mean, s.var = saved[k]
    return report


def cmd_gradcheck(args) -> int:
    cfg = load_config(args.config, args.override, seed=args.seed, dtype="f64", variant=args.variant)
    with run_directory(args.out, "gradcheck") as run:
        _snapshot(run, cfg, "gradcheck")
        t0 = time.perf_counter()
        report = gradcheck_model(cfg, samples=args.samples, epsilon=args.epsilon, tolerance=args.tolerance)
        elapsed = time.perf_counter() - t0
        _write_csv(run / "gradcheck.csv", [
            {"parameter": e.name, "shape": "x".join(map(str, e.shape)), "checked": e.checked,
             "worst_relative_error": e.worst_error, "index": "/".join(map(str, e.worst_index)),
             "analytic": e.analytic, "numeric": e.numeric} for e in report.entries])
        _write_json(run / "report.json", {
            "passed": report.passed, "tolerance": report.tolerance, "epsilon": report.epsilon,
            "elapsed_seconds": elapsed, "failures": [e.name for e in report.failures()],
            "worst": report.worst.name if report.worst else None,
            "worst_error": report.worst.worst_error if report.worst else None})
    print(report.format_table())
    if report.passed:
        print(f"gradcheck passed: {len(report.entries)} tensors within {report.tolerance:g}")
        return EXIT_OK
    names = ", ".join(e.name for e in report.failures())
    print(f"gradcheck FAILED for: {names}", file=sys.stderr)
    return EXIT_NUMERIC


ABLATION_FLAGS = (("HG", "hypergraph"), ("EH", "enhanced_hyperedge"), ("DB", "decoder_branch"),
                  ("One-stage", "one_stage"))


def ablation_markdown(rows: list[dict], seeds: list[int], split: str) -> str:
    head = ["Variant"] + [f for f, _ in ABLATION_FLAGS] + ["Accuracy", "F1", "F1 (positive)", "F1 (macro)"]
    lines = ["| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
    for r in rows:
        cells = [r["variant"]] + ["x" if r[k] else "" for _, k in ABLATION_FLAGS]
        for key in ("accuracy", "f1_micro", "f1_positive", "f1_macro"):
            v = r.get(f"{split}_{key}")
            cells.append("n/a" if v is None else f"{v:.4f}")
        lines.append("| " + " | ".join(cells) + " |")
    uniq = sorted(set(seeds))
    lines.append("")
    lines.append(f"Metrics on the {split} split. Seeds: {', '.join(map(str, seeds))} "
                 f"({'identical across rows' if len(uniq) == 1 else 'differ across rows'}).")
    return "\n".join(lines) + "\n"


def cmd_ablate(args) -> int:
    cfg = load_config(args.config, args.override, seed=args.seed, dtype=args.dtype)
    manifest = _manifest(cfg, args.data)
    x, y, val = _arrays(cfg, manifest)
    variants = tuple(args.variant.split(",")) if args.variant else tuple(VARIANTS)
    for v in variants:
        if v not in VARIANTS:
            raise ConfigError(f"unknown variant {v!r}; expected one of {list(VARIANTS)}")
    with run_directory(args.out, "ablate") as run:
        _snapshot(run, cfg, "ablate", args.data)
        t0 = time.perf_counter()
        with np.errstate(all="ignore"):
            results = run_ablation_matrix(x, y, cfg.model, cfg.train, cfg.topology, val=val,
                                          variants=variants, run_dir=run)
        rows = [r.as_dict() for r in results]
        for r in results:
            sub = run / r.variant.id.replace("+", "_")
            _write_csv(sub / "metrics.csv", [e.row() for e in r.result.epochs])
        seeds = [r.seed for r in results]
        split = "test" if val is not None else "train"
        table = ablation_markdown(rows, seeds, split)
        (run / "ablation.md").write_text(table, "utf-8")
        _write_csv(run / "ablation.csv", [{**r, "seed": s} for r, s in zip(rows, seeds)])
        _write_json(run / "report.json", {"rows": rows, "seeds": seeds,
                                          "elapsed_seconds": time.perf_counter() - t0})
    print(table, end="")
    return EXIT_OK


def selected_blocks(n: int) -> list[int]:
    """First, middle, and last block indices (deduplicated)."""
    return sorted({0, n // 2, n - 1})


def cmd_inspect(args) -> int:
    model, header = _model_from_checkpoint(args.checkpoint)
    cfg = load_config(args.config, args.override, seed=args.seed)
    cfg = build_config({**cfg.to_dict(), "topology": header["topology"], "model": header["model"]})
    manifest = _manifest(cfg, args.data)
    if not 0 <= args.sample < len(manifest):
        raise UsageError(f"--sample {args.sample} outside [0, {len(manifest)})")
    t = cfg.model.temporal_len
    x, _ = DatasetManifest([manifest.sequences[args.sample]], manifest.topology_name).to_arrays(t, cfg.topology)
    model.eval()
    out = model(x, record=True)
    diags = out.diagnostics
    n_enc = len(model.encoder)
    names = [f"encoder{i + 1}" for i in range(n_enc)] + [f"decoder{i + 1}" for i in range(len(model.decoder))]
    frames = sorted({int(f) for f in args.frames.split(",")}) if args.frames else sorted({0, t // 2, t - 1})
    for f in frames:
        if not 0 <= f < t:
            raise UsageError(f"frame {f} outside [0, {t})")
    with run_directory(args.out, "inspect") as run:
        _snapshot(run, cfg, "inspect", args.data)
        written = []
        for b in selected_blocks(n_enc):
            d = diags[b]
            parts = {**d.parts, "combined": d.combined}
            rows_path = run / f"attention_{names[b]}.csv"
            with open(rows_path, "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh)
                w.writerow(["block", "frame", "head", "part", "i", "j", "value"])
                for f in frames:
                    for part, arr in parts.items():
                        a = arr[0, f]                                   # heads, V, V
                        for h in range(a.shape[0]):
                            for i in range(a.shape[1]):
                                for j in range(a.shape[2]):
                                    w.writerow([names[b], f, h, part, i, j, repr(float(a[h, i, j]))])
            written.append(rows_path.name)
            if d.hyperedges is not None:
                e_path = run / f"hyperedges_{names[b]}.csv"
                with open(e_path, "w", newline="", encoding="utf-8") as fh:
                    w = csv.writer(fh)
                    w.writerow(["block", "frame", "joint", "channel", "value"])
                    for f in frames:
                        e = d.hyperedges[0, f]
                        for i in range(e.shape[0]):
                            for c in range(e.shape[1]):
                                w.writerow([names[b], f, i, c, repr(float(e[i, c]))])
                written.append(e_path.name)
        _write_json(run / "report.json", {"checkpoint": str(args.checkpoint), "sample": args.sample,
                                          "frames": frames, "files": written,
                                          "label": manifest.sequences[args.sample].label,
                                          "probability": float(out.probability.data[0])})
    print("\n".join(written))
    return EXIT_OK


COMMANDS = {"gen-data": cmd_gen_data, "train": cmd_train, "eval": cmd_eval, "gradcheck": cmd_gradcheck,
            "ablate": cmd_ablate, "inspect": cmd_inspect}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="h2oformer", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--out", help=f"run directory (default: a new directory under ${RUNS_ENV} or ./runs)")
        p.add_argument("--seed", type=int)
        p.add_argument("--override", action="append", default=[], metavar="K=V",
                       help="dotted-key override, e.g. train.epochs=1 (repeatable)")
        if name in ("train", "eval", "ablate", "inspect"):
            p.add_argument("--data", help="JSONL dataset (default: synthesize from the synth section)")
        if name in ("train", "ablate"):
            p.add_argument("--dtype", choices=sorted(DTYPE_FLAGS))
        if name in ("train", "gradcheck", "ablate"):
            p.add_argument("--variant", help="ablation variant" + (" list, comma separated" if name == "ablate" else ""))
        if name in ("eval", "inspect"):
            p.add_argument("--checkpoint", help=".npz checkpoint written by train")
        if name == "inspect":
            p.add_argument("--sample", type=int, default=0, help="sequence index in the dataset")
            p.add_argument("--frames", help="comma separated frame indices (default: first, middle, last)")
        if name == "gradcheck":
            p.add_argument("--samples", type=int, default=32, help="entries probed per tensor")
            p.add_argument("--epsilon", type=float, default=1e-5)
            p.add_argument("--tolerance", type=float, default=1e-4)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except TrainingAborted as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (UsageError, ConfigError, DataError, TopologyError, FileNotFoundError, TypeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
