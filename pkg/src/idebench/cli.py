"""Command line: ``idebench {gen,train,eval,sweep,ab-compare,heatmap,saliency}``.

Artifacts live under a run root (``--run-root``, ``$IDEBENCH_RUN_ROOT`` or
``runs/``), in directories named by a hash of the configuration that produced
them, so later commands can find the inputs they depend on.

Exit codes: 0 success, 2 usage, 3 I/O, 4 numerical failure.
Evaluation commands print ``accuracy=<float> n=<int> ci99=[<lo>,<hi>]``.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import datagen as dg
from .baseline import BaselineSelector, ClipToyModel, train_baseline
from .config import ConfigError, RunConfig, digest, load_config, to_dict
from .evalkit import (build_tasks, evaluate, export_heatmap, rotation_sweep, setting_ab_compare,
                      write_sweep_csv)
from .fileio import ParseError, read_jsonl, read_ppm, write_gray_ppm, write_jsonl, write_ppm
from .gradcore import NumericalError, atomic_write_text, make_rng
from .ide import DensityModel, IDESelector, train_ide
from .vision import NoObjectError, VaeModel, extract_patch, locate, saliency, train_vae
from .vision.pipeline import PipelineSelector, scene_examples

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4
DATASETS = ("toy", "babyai", "ai2thor", "scenes")


class UsageFailure(Exception):
    pass


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def write_manifest(out_dir: Path, command: str, cfg: RunConfig, started: str,
                   inputs=(), outputs=(), metrics=None) -> None:
    doc = {
        "command": command,
        "tool_version": __version__,
        "config": to_dict(cfg),
        "config_hash": digest(to_dict(cfg)),
        "seed": cfg.seed,
        "inputs": {str(p): sha256_file(p) for p in inputs},
        "outputs": {str(p): sha256_file(p) for p in outputs},
        "metrics": metrics or {},
        "started": started,
        "finished": _now(),
    }
    atomic_write_text(out_dir / "manifest.json", json.dumps(doc, sort_keys=True, indent=2) + "\n")


# -- dataset bookkeeping ------------------------------------------------------

def data_dir(cfg: RunConfig, dataset: str) -> Path:
    return cfg.run_root / "data" / f"{dataset}-{digest(cfg.seed, to_dict(cfg)['data'], dataset)}"


def generate(cfg: RunConfig, dataset: str):
    rng = make_rng(cfg.seed, "data", dataset)
    d = cfg.data
    if dataset == "toy":
        return dg.gen_toy(rng, d.toy_per_combo, d.toy_noise)
    if dataset == "babyai":
        return dg.gen_babyai(rng, d.babyai_n)
    if dataset == "ai2thor":
        return dg.gen_ai2thor(rng, d.ai2thor_n)
    if dataset == "scenes":
        return dg.gen_scenes(rng, d.scenes_per_description, d.scene_size, d.scene_noise)
    raise UsageFailure(f"unknown dataset {dataset!r}")


def cmd_gen(cfg: RunConfig, dataset: str) -> dg.Split:
    started = _now()
    split = dg.apply_leave_out(generate(cfg, dataset), dg.DEFAULT_HOLDOUT[dataset])
    out = data_dir(cfg, dataset)
    out.mkdir(parents=True, exist_ok=True)
    outputs = []
    if dataset == "scenes":
        index = {"train": [], "holdout": [], "holdout_keys": sorted(split.holdout_keys)}
        for part in ("train", "holdout"):
            for i, scene in enumerate(getattr(split, part)):
                name = f"{part}_{i:04d}_{scene.truth['color']}_{scene.truth['shape']}.ppm"
                write_ppm(scene, out / "scenes" / name)
                index[part].append(f"scenes/{name}")
        atomic_write_text(out / "index.json", json.dumps(index, indent=2) + "\n")
        outputs.append(out / "index.json")
        print(f"scenes={len(split.train) + len(split.holdout)} train={len(split.train)} "
              f"holdout={len(split.holdout)} dir={out}")
    else:
        write_jsonl(split, out / "dataset.jsonl")
        outputs.append(out / "dataset.jsonl")
        print(f"examples={len(split.train) + len(split.holdout)} train={len(split.train)} "
              f"holdout={len(split.holdout)} dir={out}")
    write_manifest(out, f"gen {dataset}", cfg, started, outputs=outputs,
                   metrics={"n_train": len(split.train), "n_holdout": len(split.holdout)})
    return split


def load_dataset(cfg: RunConfig, dataset: str) -> tuple[dg.Split, list[Path]]:
    src = data_dir(cfg, dataset)
    if dataset == "scenes":
        index_path = src / "index.json"
        if not index_path.exists():
            raise FileNotFoundError(f"dataset not generated: {index_path} (run `gen scenes`)")
        index = json.loads(index_path.read_text())
        train = [read_ppm(src / p) for p in index["train"]]
        holdout = [read_ppm(src / p) for p in index["holdout"]]
        return dg.Split(train, holdout, frozenset(index["holdout_keys"])), [index_path]
    path = src / "dataset.jsonl"
    if not path.exists():
        raise FileNotFoundError(f"dataset not generated: {path} (run `gen {dataset}`)")
    return read_jsonl(path), [path]


# -- model bookkeeping --------------------------------------------------------

def model_dir(cfg: RunConfig, kind: str, dataset: str) -> Path:
    c = to_dict(cfg)
    parts = [cfg.seed, c["data"], dataset, kind]
    if kind == "ide":
        parts.append(c["ide"])
        if dataset == "scenes":
            parts += [c["vae"], c["vision"]]
    elif kind == "vae":
        parts += [c["vae"], c["vision"]]
    elif kind == "baseline":
        parts.append(c["baseline"])
    return cfg.run_root / "models" / f"{kind}-{dataset}-{digest(*parts)}"


def checkpoint_path(cfg: RunConfig, kind: str, dataset: str) -> Path:
    return model_dir(cfg, kind, dataset) / "checkpoint.json"


def require(path: Path, hint: str) -> Path:
    if not path.exists():
        raise FileNotFoundError(f"missing {path} ({hint})")
    return path


def scene_patches(cfg: RunConfig, scenes) -> np.ndarray:
    v = cfg.vision
    return np.stack([extract_patch(s, v.saliency_base, v.saliency_threshold, cfg.vae.patch_size)
                     for s in scenes])


def cmd_train(cfg: RunConfig, kind: str, dataset: str):
    started = _now()
    split, inputs = load_dataset(cfg, dataset)
    out = model_dir(cfg, kind, dataset)
    ckpt = out / "checkpoint.json"
    if kind == "vae":
        if dataset != "scenes":
            raise UsageFailure("the VAE trains on image datasets only (--dataset scenes)")
        model = train_vae(scene_patches(cfg, split.train), cfg.vae)
    elif kind == "ide":
        train = split.train
        if dataset == "scenes":
            vae_path = require(checkpoint_path(cfg, "vae", dataset), "run `train vae` first")
            inputs.append(vae_path)
            train = scene_examples(VaeModel.load(vae_path), split.train,
                                   cfg.vision.saliency_base, cfg.vision.saliency_threshold)
        model = train_ide(train, cfg.ide)
    elif kind == "baseline":
        if dataset == "scenes":
            raise UsageFailure("the baseline trains on feature datasets only")
        model = train_baseline(split.train, cfg.baseline)
    else:
        raise UsageFailure(f"unknown model kind {kind!r}")
    model.save(ckpt)
    final = model.loss_history[-1] if model.loss_history else float("nan")
    write_manifest(out, f"train {kind} {dataset}", cfg, started, inputs=inputs, outputs=[ckpt],
                   metrics={"final_loss": final, "epochs": len(model.loss_history)})
    print(f"final_loss={final:.10g} checkpoint={ckpt}")
    return model


def eval_dir(cfg: RunConfig, kind: str, dataset: str) -> Path:
    c = to_dict(cfg)
    model = model_dir(cfg, "ide" if kind == "pipeline" else kind, dataset)
    tag = digest(str(model), c["eval"], c["inference"], c["vision"])
    return cfg.run_root / "eval" / f"{kind}-{dataset}-{tag}"


def cmd_eval(cfg: RunConfig, kind: str, dataset: str):
    started = _now()
    split, inputs = load_dataset(cfg, dataset)
    inf = cfg.inference
    tasks_rng = make_rng(cfg.seed, "eval-tasks", dataset)
    out = eval_dir(cfg, kind, dataset)
    extra = {}
    if kind == "pipeline":
        if dataset != "scenes":
            raise UsageFailure("pipeline evaluation needs --dataset scenes")
        vae_path = require(checkpoint_path(cfg, "vae", dataset), "run `train vae` first")
        ide_path = require(checkpoint_path(cfg, "ide", dataset), "run `train ide --dataset scenes`")
        inputs += [vae_path, ide_path]
        selector = PipelineSelector(VaeModel.load(vae_path), DensityModel.load(ide_path),
                                    cfg.vision.saliency_base, cfg.vision.saliency_threshold,
                                    inf.base_entropy, inf.tau)
        selector.prime(list(split.train) + list(split.holdout))
        tasks = build_tasks(split, cfg.eval.n_tasks, tasks_rng, raw=True)
        train_tasks = build_tasks(split.train, cfg.eval.n_tasks,
                                  make_rng(cfg.seed, "eval-train-tasks", dataset), raw=True)
        train_report = evaluate(selector, train_tasks, to_dict(cfg))
        extra["train"] = json.loads(train_report.to_json())
    else:
        if dataset == "scenes":
            raise UsageFailure("raw scenes are evaluated with `eval pipeline --dataset scenes`")
        path = require(checkpoint_path(cfg, kind, dataset), f"run `train {kind}` first")
        inputs.append(path)
        if kind == "ide":
            selector = IDESelector(DensityModel.load(path), inf.base_entropy, inf.tau)
        elif kind == "baseline":
            selector = BaselineSelector(ClipToyModel.load(path))
        else:
            raise UsageFailure(f"unknown evaluator {kind!r}")
        tasks = build_tasks(split, cfg.eval.n_tasks, tasks_rng)
    report = evaluate(selector, tasks, to_dict(cfg))
    report.wall_clock = 0.0  # keep report bytes reproducible; timing lives in the manifest
    doc = json.loads(report.to_json())
    doc.update(extra)
    out.mkdir(parents=True, exist_ok=True)
    atomic_write_text(out / "report.json", json.dumps(doc, sort_keys=True, indent=2) + "\n")
    metrics = {"accuracy": report.accuracy}
    if extra:
        metrics["train_accuracy"] = extra["train"]["accuracy"]
        print(f"train_{train_report.summary_line()}")
    write_manifest(out, f"eval {kind} {dataset}", cfg, started, inputs=inputs,
                   outputs=[out / "report.json"], metrics=metrics)
    print(report.summary_line())
    return report


def cmd_sweep(cfg: RunConfig):
    started = _now()
    split, inputs = load_dataset(cfg, "toy")
    planes = [tuple(p) for p in cfg.eval.planes]
    out = cfg.run_root / "sweep" / digest(str(data_dir(cfg, "toy")), to_dict(cfg)["ide"],
                                          to_dict(cfg)["eval"], to_dict(cfg)["inference"])

    def show(p):
        print(f"theta={p.theta:g} accuracy={p.accuracy:.6f} ci99=[{p.ci_low:.6f},{p.ci_high:.6f}]",
              flush=True)
    points = rotation_sweep(split, cfg.eval.angles, planes, cfg.ide, cfg.eval.n_tasks, cfg.seed,
                            cfg.inference.base_entropy, cfg.inference.tau, on_point=show)
    write_sweep_csv(points, out / "sweep.csv")
    write_manifest(out, "sweep", cfg, started, inputs=inputs, outputs=[out / "sweep.csv"],
                   metrics={"curve": [[p.theta, p.accuracy] for p in points]})
    print(f"rows={len(points)} csv={out / 'sweep.csv'}")
    return points


def cmd_ab(cfg: RunConfig):
    started = _now()
    split, inputs = load_dataset(cfg, "toy")
    res = setting_ab_compare(split, cfg.ide, cfg.eval.n_tasks, cfg.seed,
                             cfg.inference.base_entropy, cfg.inference.tau)
    out = cfg.run_root / "ab" / digest(str(data_dir(cfg, "toy")), to_dict(cfg)["ide"],
                                       to_dict(cfg)["eval"], to_dict(cfg)["inference"])
    doc = {"acc_a": res.acc_a, "acc_b": res.acc_b, "ci99_a": list(res.report_a.ci99),
           "ci99_b": list(res.report_b.ci99), "n": res.report_a.n_tasks}
    atomic_write_text(out / "ab.json", json.dumps(doc, sort_keys=True, indent=2) + "\n")
    write_manifest(out, "ab-compare", cfg, started, inputs=inputs, outputs=[out / "ab.json"],
                   metrics=doc)
    print(f"acc_a={res.acc_a:.6f} acc_b={res.acc_b:.6f} n={res.report_a.n_tasks}")
    return res


def cmd_heatmap(cfg: RunConfig, dataset: str = "toy"):
    started = _now()
    path = require(checkpoint_path(cfg, "ide", dataset), f"run `train ide --dataset {dataset}`")
    model = DensityModel.load(path)
    out = model_dir(cfg, "ide", dataset) / "heatmap"
    info = export_heatmap(model, None, cfg.inference.base_entropy, out / "gain.csv")
    write_manifest(out, f"heatmap {dataset}", cfg, started, inputs=[path],
                   outputs=[out / "gain.csv", out / "gain.ppm"],
                   metrics={"lo": info["lo"], "hi": info["hi"]})
    print(f"rows={len(info['rows'])} csv={info['csv']} ppm={info['ppm']}")
    return info


def cmd_saliency(cfg: RunConfig, image_path: str, out_dir: str | None = None):
    image = read_ppm(image_path)
    v = cfg.vision
    smap = saliency(image.pixels, v.saliency_base)
    out = Path(out_dir) if out_dir else cfg.run_root / "saliency" / Path(image_path).stem
    mapping = write_gray_ppm(smap.values, out / "saliency.ppm")
    atomic_write_text(out / "saliency.json", json.dumps(mapping, sort_keys=True, indent=2) + "\n")
    try:
        box = locate(smap, v.saliency_threshold)
        doc = {"status": "ok", "bbox": box.as_list(),
               "order": ["row_min", "row_max", "col_min", "col_max"]}
    except NoObjectError:
        doc = {"status": "no object", "bbox": None}
    doc.update({"base": v.saliency_base, "threshold": v.saliency_threshold})
    atomic_write_text(out / "bbox.json", json.dumps(doc, sort_keys=True, indent=2) + "\n")
    print(f"status={doc['status'].replace(' ', '_')} bbox={doc['bbox']} dir={out}")
    return doc


# -- argument parsing ---------------------------------------------------------

def _csv_floats(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def _planes(text: str) -> list[list[int]]:
    return [[int(a), int(b)] for a, b in (p.split(":") for p in text.split(",") if p.strip())]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file overlaid on the defaults")
    common.add_argument("--run-root", help="artifact directory (overrides $IDEBENCH_RUN_ROOT)")
    common.add_argument("--seed", type=int)
    common.add_argument("--epochs", type=int)
    common.add_argument("--batch", type=int)
    common.add_argument("--lr", type=float)
    common.add_argument("--n-tasks", type=int)
    common.add_argument("--tau", type=float)
    common.add_argument("--base-entropy", type=float)
    common.add_argument("--saliency-base", type=float)
    common.add_argument("--saliency-threshold", type=float)
    common.add_argument("--patch-size", type=int)
    common.add_argument("--latent-dim", type=int)

    parser = argparse.ArgumentParser(prog="idebench", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parents=[common], help="generate a dataset and its leave-out split")
    p.add_argument("dataset", choices=DATASETS)

    p = sub.add_parser("train", parents=[common], help="train a model")
    p.add_argument("kind", choices=("ide", "vae", "baseline"))
    p.add_argument("--dataset", choices=DATASETS, default="toy")

    p = sub.add_parser("eval", parents=[common], help="evaluate object selection")
    p.add_argument("kind", choices=("ide", "baseline", "pipeline"))
    p.add_argument("--dataset", choices=DATASETS, default="toy")

    p = sub.add_parser("sweep", parents=[common], help="rotation sweep on the toy dataset")
    p.add_argument("--angles", type=_csv_floats)
    p.add_argument("--planes", type=_planes, help="e.g. 3:4 or 0:1,3:4")

    sub.add_parser("ab-compare", parents=[common], help="full vs partial descriptions")

    p = sub.add_parser("heatmap", parents=[common], help="export the information-gain matrix")
    p.add_argument("--dataset", choices=DATASETS, default="toy")

    p = sub.add_parser("saliency", parents=[common], help="saliency map and bbox for a PPM")
    p.add_argument("image")
    p.add_argument("--out", help="output directory")
    return parser


def overrides_from_args(args) -> dict:
    o: dict = {}

    def put(section, key, value):
        if value is not None:
            o.setdefault(section, {})[key] = value
    if args.seed is not None:
        o["seed"] = args.seed
    if args.run_root is not None:
        put("paths", "run_root", args.run_root)
    section = {"ide": "ide", "baseline": "baseline", "vae": "vae"}.get(getattr(args, "kind", ""),
                                                                      "ide")
    put(section, "epochs", args.epochs)
    put(section, "batch", args.batch)
    put(section, "lr", args.lr)
    put("eval", "n_tasks", args.n_tasks)
    put("inference", "tau", args.tau)
    put("inference", "base_entropy", args.base_entropy)
    put("vision", "saliency_base", args.saliency_base)
    put("vision", "saliency_threshold", args.saliency_threshold)
    put("vae", "patch_size", args.patch_size)
    put("vae", "latent_dim", args.latent_dim)
    put("eval", "angles", getattr(args, "angles", None))
    put("eval", "planes", getattr(args, "planes", None))
    return o


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config, overrides_from_args(args))
        if args.command == "gen":
            cmd_gen(cfg, args.dataset)
        elif args.command == "train":
            cmd_train(cfg, args.kind, args.dataset)
        elif args.command == "eval":
            cmd_eval(cfg, args.kind, args.dataset)
        elif args.command == "sweep":
            cmd_sweep(cfg)
        elif args.command == "ab-compare":
            cmd_ab(cfg)
        elif args.command == "heatmap":
            cmd_heatmap(cfg, args.dataset)
        elif args.command == "saliency":
            cmd_saliency(cfg, args.image, args.out)
    except (ConfigError, UsageFailure, dg.ConfigError) as err:
        print(f"usage error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, ParseError) as err:
        print(f"io error: {err}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
