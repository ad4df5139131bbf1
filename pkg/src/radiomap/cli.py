"""Command-line entry point: ``radiomap <command> [flags]``.

Parameters resolve as defaults < ``--config`` JSON file < explicit flags. The
resolved set is written as ``run_config.json`` next to the outputs and can be
passed back through ``--config`` to repeat a run. Failures print a single JSON
line ``{"error": ..., "message": ..., "command": ...}`` on stderr.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .dataset import generate_dataset, load_manifest, load_split, sample_input, worker_count
from .dpm import DEFAULT_RX_HEIGHTS, SimConfig
from .geometry import Environment, rasterize, write_pgm
from .metrics import evaluate, inference_time_per_km2, measure_throughput
from .net import VARIANTS, ModelSpec, build_model, count_macs, count_params, layer_records, parse_plan
from .tensor import load_tensor, save_tensor
from .training import Checkpoint, TrainConfig, infer, model_from_checkpoint, predict, train

SNAPSHOT = "run_config.json"
EXIT_USAGE, EXIT_FAILURE = 2, 1

DEFAULTS = {
    "gen-dataset": {"out": None, "seed": 0, "n_envs": 200, "tx_per_env": 16, "resolution": 256,
                    "heights": list(DEFAULT_RX_HEIGHTS), "split_ratios": [8, 1, 1]},
    "train": {"out": None, "seed": 0, "manifest": None, "variant": "in", "plan": None, "epochs": 50, "lr": 1e-4,
              "batch": 2, "eval_batch": 8, "resume": None, "ablation": False},
    "eval": {"out": None, "seed": 0, "checkpoint": None, "manifest": None, "split": "test", "reference": False,
             "batch": 8, "repeats": 3},
    "infer": {"out": None, "seed": 0, "checkpoint": None, "image": None, "tx": 0},
    "export-image": {"out": None, "seed": 0, "tensor": None, "plane": 0},
    "count": {"out": None, "seed": 0, "variant": "in", "plan": None, "resolution": 256,
              "heights": list(DEFAULT_RX_HEIGHTS), "in_channels": 3, "layers": True},
}
REQUIRED = {
    "gen-dataset": ("out",), "train": ("out", "manifest"), "eval": ("out", "checkpoint", "manifest"),
    "infer": ("out", "checkpoint", "image"), "export-image": ("out", "tensor"), "count": (),
}


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _heights(text: str) -> list:
    try:
        hs = [float(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"heights must be comma-separated numbers, got {text!r}") from None
    if not hs:
        raise argparse.ArgumentTypeError("need at least one receiver height")
    return hs


def _ratios(text: str) -> list:
    return [float(p) for p in text.split(",")]


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="JSON file of parameters (flags override it)")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory (file for export-image)")

    p = _Parser(prog="radiomap", description="Synthetic indoor 3D radio maps and estimation networks.")
    p.add_argument("--version", action="version", version=f"radiomap {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-dataset", parents=[common], argument_default=argparse.SUPPRESS,
                       help="generate scenes and simulate their radio maps")
    g.add_argument("--n-envs", type=int)
    g.add_argument("--tx-per-env", type=int)
    g.add_argument("--resolution", type=int)
    g.add_argument("--heights", type=_heights, help="receiver heights in m, e.g. 0.5,1.0,1.5")
    g.add_argument("--split-ratios", type=_ratios, help="train,val,test environment ratios")

    t = sub.add_parser("train", parents=[common], argument_default=argparse.SUPPRESS, help="train a model")
    t.add_argument("--manifest")
    t.add_argument("--variant", choices=VARIANTS)
    t.add_argument("--plan", help="in, out, reduced or six comma-separated widths")
    t.add_argument("--epochs", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--batch", type=int)
    t.add_argument("--eval-batch", type=int)
    t.add_argument("--resume", help="checkpoint to continue from")
    t.add_argument("--ablation", action="store_true", help="plain encoder, no dropout (In variant only)")

    e = sub.add_parser("eval", parents=[common], argument_default=argparse.SUPPRESS,
                       help="evaluate a checkpoint on a dataset split")
    e.add_argument("--checkpoint")
    e.add_argument("--manifest")
    e.add_argument("--split", choices=("train", "val", "test"))
    e.add_argument("--reference", action="store_true", help="score the ground truth against itself")
    e.add_argument("--batch", type=int)
    e.add_argument("--repeats", type=int, help="timed forwards for the throughput figure")

    i = sub.add_parser("infer", parents=[common], argument_default=argparse.SUPPRESS,
                       help="estimate a radio map for one scene")
    i.add_argument("--checkpoint")
    i.add_argument("--image", help="scene JSON, or .rmt image stack")
    i.add_argument("--tx", type=int, help="transmitter index")

    x = sub.add_parser("export-image", parents=[common], argument_default=argparse.SUPPRESS,
                       help="write one tensor plane as an 8-bit PGM")
    x.add_argument("--tensor")
    x.add_argument("--plane", type=int)

    c = sub.add_parser("count", parents=[common], argument_default=argparse.SUPPRESS,
                       help="parameter and MAC counts")
    c.add_argument("--variant", choices=VARIANTS)
    c.add_argument("--plan")
    c.add_argument("--resolution", type=int)
    c.add_argument("--heights", type=_heights, help="receiver heights (sets the output channel count)")
    c.add_argument("--in-channels", type=int)
    c.add_argument("--no-layers", dest="layers", action="store_false", help="totals only")
    return p


def _load_config_file(path, command: str) -> dict:
    data = json.loads(Path(path).read_text())
    if not isinstance(data, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    if "config" in data and "command" in data:  # a run_config.json snapshot
        if data["command"] != command:
            raise ValueError(f"{path}: snapshot is for {data['command']!r}, not {command!r}")
        data = data["config"]
    elif command in data and isinstance(data[command], dict):
        data = data[command]
    return {k.replace("-", "_"): v for k, v in data.items()}


def resolve_config(command: str, flags: dict) -> dict:
    """defaults < config file < flags; unknown keys and missing requirements are errors."""
    cfg = dict(DEFAULTS[command])
    flags = dict(flags)
    path = flags.pop("config", None)
    if path is not None:
        from_file = _load_config_file(path, command)
        unknown = sorted(set(from_file) - set(cfg))
        if unknown:
            raise UsageError(f"unknown {command} config keys: {', '.join(unknown)}")
        cfg.update(from_file)
    cfg.update(flags)
    missing = [k for k in REQUIRED[command] if cfg.get(k) is None]
    if missing:
        raise UsageError(f"{command} needs " + ", ".join("--" + k.replace("_", "-") for k in missing))
    return cfg


def write_snapshot(path, command: str, cfg: dict) -> None:
    snap = {"command": command, "config": cfg, "version": __version__}
    Path(path).write_text(json.dumps(snap, indent=1, sort_keys=True) + "\n")


def _out_dir(cfg: dict, command: str) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    write_snapshot(out / SNAPSHOT, command, cfg)
    return out


def _plan_for(variant: str, plan: str | None, c_in: int, c_out: int):
    default = "out" if variant == "out" else "in"
    return parse_plan(plan or default, c_in=c_in, c_out=c_out)


def cmd_gen_dataset(cfg: dict) -> dict:
    out = _out_dir(cfg, "gen-dataset")
    sim = SimConfig(rx_heights=tuple(cfg["heights"]))

    def progress(done, total):
        print(f"simulated {done}/{total} environments", file=sys.stderr, flush=True)

    m = generate_dataset(out, cfg["n_envs"], cfg["tx_per_env"], seed=cfg["seed"], resolution=cfg["resolution"],
                         sim=sim, ratios=tuple(cfg["split_ratios"]), progress=progress)
    print(json.dumps({"manifest": str(out / "manifest.json"), "samples": len(m["samples"]), "m1_db": m["m1_db"]}))
    return m


def cmd_train(cfg: dict) -> Checkpoint:
    manifest = load_manifest(cfg["manifest"])
    out = _out_dir(cfg, "train")
    train_data, val_data = load_split(manifest, "train"), load_split(manifest, "val")
    c_in, c_out, res = train_data.inputs.shape[1], train_data.targets.shape[1], train_data.inputs.shape[-1]
    tc = TrainConfig(lr=cfg["lr"], epochs=cfg["epochs"], batch_size=cfg["batch"], seed=cfg["seed"],
                     eval_batch_size=cfg["eval_batch"])
    resume = None
    if cfg["resume"] is not None:
        resume = Checkpoint.load(cfg["resume"])
        spec = resume.spec
    else:
        spec = ModelSpec(cfg["variant"], _plan_for(cfg["variant"], cfg["plan"], c_in, c_out), res,
                         ablation=cfg["ablation"])
    model = build_model(spec, seed=cfg["seed"])

    def report(rec):
        print(json.dumps(rec), flush=True)

    ckpt = train(model, train_data, val_data, tc, resume=resume, checkpoint_dir=out,
                 log_path=out / "metrics.json", on_epoch=report)
    return ckpt


def cmd_eval(cfg: dict):
    manifest = load_manifest(cfg["manifest"])
    out = _out_dir(cfg, "eval")
    data = load_split(manifest, cfg["split"])
    ckpt = Checkpoint.load(cfg["checkpoint"])
    model = model_from_checkpoint(ckpt)
    if data.inputs.shape[1] != ckpt.spec.plan.c_in or data.targets.shape[1] != ckpt.spec.plan.c_out:
        raise ValueError(f"checkpoint expects {ckpt.spec.plan.c_in} -> {ckpt.spec.plan.c_out} channels, "
                         f"split has {data.inputs.shape[1]} -> {data.targets.shape[1]}")
    est = data.targets if cfg["reference"] else predict(model, data.inputs, cfg["batch"])
    shape = (1, *data.inputs.shape[1:])
    tp = measure_throughput(model, shape, repeats=cfg["repeats"])
    extent = manifest["extent_m"]
    report = evaluate(est, data.targets, model="reference" if cfg["reference"] else ckpt.spec.variant,
                      params=count_params(model), macs=count_macs(model, shape), throughput=tp,
                      time_per_km2=inference_time_per_km2(tp, extent * extent))
    (out / "report.json").write_text(report.to_json())
    (out / "report.txt").write_text(report.to_table())
    print(report.to_table(), end="")
    return report


def _load_image(path: Path, tx: int) -> np.ndarray:
    if path.suffix == ".json":
        return rasterize(Environment.load(path), tx_index=tx)
    stack = load_tensor(path)
    if stack.ndim != 3:
        raise ValueError(f"{path}: expected a (C, N, N) image stack, got shape {stack.shape}")
    if stack.shape[0] > 3 or tx != 0:
        if not 0 <= tx < stack.shape[0] - 2:
            raise ValueError(f"{path}: transmitter {tx} not in stack of {stack.shape[0] - 2}")
        return sample_input(stack, tx)
    return stack


def cmd_infer(cfg: dict) -> np.ndarray:
    ckpt = Checkpoint.load(cfg["checkpoint"])
    image = _load_image(Path(cfg["image"]), cfg["tx"])
    out = _out_dir(cfg, "infer")
    est = infer(ckpt, image)
    save_tensor(out / "map.rmt", est)
    for k, plane in enumerate(est):
        write_pgm(out / f"plane_{k:02d}.pgm", plane)
    print(json.dumps({"map": str(out / "map.rmt"), "shape": list(est.shape)}))
    return est


def cmd_export_image(cfg: dict) -> Path:
    arr = load_tensor(cfg["tensor"])
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3:
        raise ValueError(f"expected a 2-D plane or (C, N, N) stack, got shape {arr.shape}")
    k = cfg["plane"]
    if not 0 <= k < arr.shape[0]:
        raise ValueError(f"plane {k} out of range for {arr.shape[0]} planes")
    out = Path(cfg["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    write_pgm(out, arr[k])
    write_snapshot(out.with_name(out.name + "." + SNAPSHOT), "export-image", cfg)
    return out


def count_table(spec: ModelSpec, layers: bool = True) -> tuple:
    model = build_model(spec, seed=0)
    shape = (1, spec.plan.c_in, spec.resolution, spec.resolution)
    recs = layer_records(model, shape)
    params, macs = count_params(model), int(sum(r.macs for r in recs))
    lines = []
    if layers:
        w = max(len(r.name) for r in recs)
        lines.append(f"{'layer'.ljust(w)}  {'kind':<16}{'params':>12}{'MACs':>16}  output")
        for r in recs:
            lines.append(f"{r.name.ljust(w)}  {r.kind:<16}{r.params:>12}{r.macs:>16}  {list(r.out_shape)}")
    lines.append(f"variant {spec.variant}  resolution {spec.resolution}  params {params} ({params / 1e6:.2f}M)  "
                 f"MACs {macs} ({macs / 1e9:.2f}G)")
    summary = {"variant": spec.variant, "plan": json.loads(spec.to_json())["plan"], "resolution": spec.resolution,
               "params": params, "macs": macs}
    return "\n".join(lines) + "\n", summary


def cmd_count(cfg: dict) -> dict:
    plan = _plan_for(cfg["variant"], cfg["plan"], cfg["in_channels"], len(cfg["heights"]))
    text, summary = count_table(ModelSpec(cfg["variant"], plan, cfg["resolution"]), cfg["layers"])
    print(text, end="")
    if cfg["out"] is not None:
        out = _out_dir(cfg, "count")
        (out / "count.txt").write_text(text)
        (out / "count.json").write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")
    return summary


COMMANDS = {"gen-dataset": cmd_gen_dataset, "train": cmd_train, "eval": cmd_eval, "infer": cmd_infer,
            "export-image": cmd_export_image, "count": cmd_count}


def _fail(kind: str, message: str, command, code: int) -> int:
    print(json.dumps({"error": kind, "message": message, "command": command}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    command = None
    try:
        args = vars(build_parser().parse_args(argv))
        command = args.pop("command")
        cfg = resolve_config(command, args)
        worker_count()  # validate RMAP_THREADS up front
    except UsageError as exc:
        return _fail("usage", str(exc), command, EXIT_USAGE)
    except (OSError, ValueError) as exc:
        return _fail(type(exc).__name__, str(exc), command, EXIT_USAGE)
    try:
        COMMANDS[command](cfg)
    except KeyboardInterrupt:
        return _fail("interrupted", "interrupted", command, 130)
    except Exception as exc:  # noqa: BLE001 - every failure becomes one JSON line
        return _fail(type(exc).__name__, str(exc).replace("\n", " "), command, EXIT_FAILURE)
    return 0


if __name__ == "__main__":
    sys.exit(main())
