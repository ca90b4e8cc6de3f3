"""Command-line entry point: ``hanm {infer,cluster,bench,simulate,rerun}``.

Each command resolves its flags into a plain configuration dict, writes it
as ``manifest.json`` next to the report, and runs from that dict alone, so
``hanm rerun <manifest>`` replays a run exactly.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import data, mcvcc, mcvci, metrics, report
from .errors import ConfigError, HanmError
from .mcvae import MixtureCvaeConfig
from .mcvcc import ClusterConfig
from .mcvci import InferenceConfig, Verdict

COMMANDS = ("infer", "cluster", "bench", "simulate")
THREADS_ENV = "HANM_THREADS"


def derive_seed(seed: int, index: int) -> int:
    """Independent 32-bit seed for item ``index`` of a run seeded by ``seed``."""
    return int(np.random.SeedSequence([int(seed), int(index)]).generate_state(1)[0])


def parse_k_grid(text: str) -> list[int]:
    text = str(text).replace(" ", "")
    if not text:
        raise ConfigError("--k-grid is empty")
    try:
        grid = [int(v) for v in text.split(",")]
    except ValueError:
        raise ConfigError(f"--k-grid must be comma-separated integers, got {text!r}") from None
    if min(grid) < 1:
        raise ConfigError(f"--k-grid entries must be positive, got {text!r}")
    return grid


def _inference_dict(args) -> dict:
    model = MixtureCvaeConfig(seed=args.seed, **({"epochs": args.epochs} if args.epochs else {}))
    cfg = InferenceConfig(model=model, split=args.split, alpha=args.alpha,
                          k_grid=tuple(parse_k_grid(args.k_grid)), seed=args.seed)
    return cfg.to_dict()


def _with_seed(inference: dict, seed: int) -> InferenceConfig:
    cfg = InferenceConfig.from_dict(inference)
    return dataclasses.replace(cfg, seed=seed, model=dataclasses.replace(cfg.model, seed=seed))


def _load_input(path: str, x_col: str, y_col: str, label_col: str | None = None) -> data.BivariateDataset:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"cannot read input {path}")
    if p.suffix.lower() == ".csv":
        return data.load_csv(p, x_col, y_col, label_col)
    # bare whitespace table: first column is x, second is y
    ds = data.load_pair_file(p, data.PairMeta(0, (1, 1), (2, 2), 1.0))
    return dataclasses.replace(ds, name=p.stem, ground_truth=None)


# command runners: (resolved config, output set) -> report payload -----------

def run_infer(cfg: dict, out: report.OutputSet) -> dict:
    ds = _load_input(cfg["input"], cfg["x_col"], cfg["y_col"])
    decision = mcvci.decide(ds, None, InferenceConfig.from_dict(cfg["inference"]))
    payload = {"input": cfg["input"], "n_samples": len(ds), "dropped_rows": ds.dropped_rows}
    payload.update(decision.to_dict())
    return payload


def run_cluster(cfg: dict, out: report.OutputSet) -> dict:
    ds = _load_input(cfg["input"], cfg["x_col"], cfg["y_col"], cfg.get("label_col"))
    result = mcvcc.cluster(ds, None, ClusterConfig(**cfg["clustering"]),
                           InferenceConfig.from_dict(cfg["inference"]))
    out.write_rows("labels.csv", ["index", "x", "y", "residual", "label"],
                   ([i, ds.x[i], ds.y[i], result.residuals[i], int(result.labels[i])]
                    for i in range(len(ds))))
    if cfg.get("svg", True):
        out.write_text("scatter.svg", report.svg_scatter(
            ds.x, ds.y, result.labels, title=f"{ds.name}: {len(result.centers)} clusters"))
    payload = {"input": cfg["input"], "n_samples": len(ds), "dropped_rows": ds.dropped_rows}
    payload.update(result.to_dict())
    if result.ari is None:
        payload.pop("ari")
        payload.pop("nmi")
    return payload


def _bench_one(task):
    pair_dir, meta, inference, seed = task
    ds = data.load_pair_file(data.pair_path(pair_dir, meta.pair_id), meta)
    decision = mcvci.decide(ds, None, _with_seed(inference, seed))
    return ds.ground_truth.value, decision.to_dict()


def _bench_threads() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        threads = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if threads < 1:
        raise ConfigError(f"{THREADS_ENV} must be >= 1, got {threads}")
    return min(threads, os.cpu_count() or 1)


def run_bench(cfg: dict, out: report.OutputSet) -> dict:
    pair_dir = Path(cfg["pairs_dir"])
    meta_path = Path(cfg["meta"])
    if not meta_path.is_file():
        raise ConfigError(f"missing meta file {meta_path}")
    excluded, tasks = [], []
    for meta in sorted(data.parse_meta(meta_path), key=lambda m: m.pair_id):
        if meta.pair_id in data.EXCLUDED_PAIRS:
            excluded.append({"pair_id": meta.pair_id, "reason": "on the benchmark exclusion list"})
        elif meta.cause_cols[0] != meta.cause_cols[1] or meta.effect_cols[0] != meta.effect_cols[1]:
            excluded.append({"pair_id": meta.pair_id, "reason": "multi-dimensional cause or effect"})
        elif not data.pair_path(pair_dir, meta.pair_id).is_file():
            excluded.append({"pair_id": meta.pair_id, "reason": "pair file not found"})
        else:
            tasks.append((pair_dir, meta, cfg["inference"], derive_seed(cfg["seed"], meta.pair_id)))
    if not tasks:
        raise ConfigError(f"no usable pairs under {pair_dir}")

    threads = _bench_threads()
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(_bench_one, tasks))
    else:
        outcomes = [_bench_one(task) for task in tasks]

    rows = []
    for (_, meta, _, seed), outcome in zip(tasks, outcomes):
        truth, decision = outcome
        rows.append({"pair_id": meta.pair_id, "weight": meta.weight, "seed": seed, "truth": truth,
                     "correct": decision["verdict"] == truth, **decision})
    accuracy = metrics.direction_accuracy([r["verdict"] for r in rows], [r["truth"] for r in rows],
                                          [r["weight"] for r in rows])
    decided = [(r["tau"], r["correct"]) for r in rows
               if r["verdict"] in (Verdict.X_TO_Y.value, Verdict.Y_TO_X.value)]
    curve = mcvci.decision_rate_curve(decided) if decided else []
    out.write_rows("decisions.csv",
                   ["pair_id", "weight", "truth", "verdict", "tau", "l_forward", "l_backward",
                    "k_forward", "k_backward", "correct"],
                   ([r["pair_id"], r["weight"], r["truth"], r["verdict"], r["tau"],
                     None if r["l_forward"] is None else r["l_forward"]["total"],
                     None if r["l_backward"] is None else r["l_backward"]["total"],
                     None if r["l_forward"] is None else r["l_forward"]["k"],
                     None if r["l_backward"] is None else r["l_backward"]["k"],
                     int(r["correct"])] for r in rows))
    out.write_rows("curve.csv", ["top_percent", "accuracy"], curve)
    return {"pairs_dir": str(pair_dir), "n_pairs": len(rows), "weighted_accuracy": accuracy,
            "curve": [{"top_percent": k, "accuracy": a} for k, a in curve],
            "excluded": excluded, "decisions": rows}


def _spec_datasets(spec: dict) -> list[dict]:
    if not isinstance(spec, dict) or not isinstance(spec.get("datasets"), list) or not spec["datasets"]:
        raise ConfigError("simulation spec needs a non-empty 'datasets' list")
    resolved = []
    for i, entry in enumerate(spec["datasets"]):
        if not isinstance(entry, dict):
            raise ConfigError(f"dataset entry {i} is not an object")
        name = str(entry.get("name", f"dataset{i}"))
        if "mechanisms" in entry:
            mechanisms = [data.MechanismSpec(**m) for m in entry["mechanisms"]]
        elif "family" in entry:
            mechanisms = data.default_specs(entry["family"], float(entry.get("sigma", 0.05)),
                                            int(entry.get("n_samples", 100)))
        else:
            raise ConfigError(f"dataset {name!r} needs 'mechanisms' or 'family'")
        resolved.append({"name": name, "mechanisms": [dataclasses.asdict(m) for m in mechanisms]})
    names = [d["name"] for d in resolved]
    if len(set(names)) != len(names):
        raise ConfigError("dataset names must be unique")
    return resolved


def run_simulate(cfg: dict, out: report.OutputSet) -> dict:
    files = []
    for i, entry in enumerate(cfg["datasets"]):
        specs = [data.MechanismSpec(**m) for m in entry["mechanisms"]]
        ds = data.gen_mechanism_mixture(specs, derive_seed(cfg["seed"], i), name=entry["name"])
        path = out.path(f"{entry['name']}.csv")
        data.write_csv(ds, path)
        files.append({"name": entry["name"], "file": path.name, "rows": len(ds),
                      "classes": len(specs)})
    return {"datasets": files}


RUNNERS = {"infer": run_infer, "cluster": run_cluster, "bench": run_bench, "simulate": run_simulate}
TABLE_KEYS = {"bench": "decisions", "simulate": "datasets"}


def execute(command: str, cfg: dict, out_dir, fmt: str = "json") -> dict:
    """Run ``command`` from a resolved configuration and write its outputs."""
    if command not in RUNNERS:
        raise ConfigError(f"unknown command {command!r}")
    if fmt not in ("json", "csv"):
        raise ConfigError(f"--format must be json or csv, got {fmt!r}")
    with report.OutputSet(out_dir) as out:
        start = time.perf_counter()
        payload = {"command": command, "seed": cfg["seed"]}
        payload.update(RUNNERS[command](cfg, out))
        payload = report.to_jsonable(payload)
        out.write_json("manifest.json", {**report.manifest(command, cfg, cfg["seed"]), "format": fmt})
        timing = {"wall_clock_seconds": round(time.perf_counter() - start, 3)}
        if fmt == "json":
            out.write_json("report.json", {**payload, **timing})
        else:
            table_key = TABLE_KEYS.get(command)
            summary = {k: v for k, v in payload.items() if k != table_key}
            flat = report.flatten({**summary, **timing})
            out.write_rows("report.csv", list(flat), [list(flat.values())])
    return payload


def load_manifest(path) -> dict:
    try:
        manifest = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read manifest {path}: {exc}") from None
    version = manifest.get("schema_version")
    if version != report.MANIFEST_SCHEMA_VERSION:
        raise ConfigError(f"unsupported manifest schema version {version!r}")
    if manifest.get("command") not in RUNNERS:
        raise ConfigError(f"manifest names unknown command {manifest.get('command')!r}")
    return manifest


# argument parsing ------------------------------------------------------------

def _common(parser: argparse.ArgumentParser, inference: bool = True) -> None:
    parser.add_argument("--seed", type=int, default=0, help="global seed (default 0)")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--format", choices=("json", "csv"), default="json", help="report format")
    if inference:
        parser.add_argument("--k-grid", default="1,2,3", help="candidate component counts, e.g. 1,2,3")
        parser.add_argument("--epochs", type=int, default=None, help="training epochs per model")
        parser.add_argument("--alpha", type=float, default=0.05, help="correlation gate level")
        parser.add_argument("--split", type=float, default=0.8, help="train fraction of the train/test split")


def _columns(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("input", help="CSV with a header, or a whitespace table (x in column 1, y in column 2)")
    parser.add_argument("--x-col", default="x")
    parser.add_argument("--y-col", default="y")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hanm", description="Causal direction inference and "
                                     "mechanism clustering with mixture conditional VAEs.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("infer", help="decide the causal direction of one pair")
    _columns(p)
    _common(p)

    p = sub.add_parser("cluster", help="cluster samples by generating mechanism")
    _columns(p)
    p.add_argument("--label-col", default=None, help="ground-truth label column (adds ARI/NMI)")
    p.add_argument("--clusters", type=int, default=2, help="number of mechanisms C")
    p.add_argument("--no-svg", action="store_true", help="skip the scatter plot")
    _common(p)

    p = sub.add_parser("bench", help="run direction inference over a directory of pair files")
    p.add_argument("pairs_dir")
    p.add_argument("--meta", default=None, help="meta table (default <pairs_dir>/pairmeta.txt)")
    _common(p)

    p = sub.add_parser("simulate", help="generate mechanism-mixture datasets as CSV")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--spec", help="JSON simulation spec")
    src.add_argument("--family", choices=sorted(data.MECHANISMS), help="two-class default spec for one family")
    _common(p, inference=False)

    p = sub.add_parser("rerun", help="replay a run from its manifest")
    p.add_argument("manifest")
    p.add_argument("--out", required=True, help="output directory")
    return parser


def resolve(args) -> tuple[str, dict, str]:
    """Turn parsed flags into ``(command, config, format)``."""
    if args.command == "rerun":
        manifest = load_manifest(args.manifest)
        return manifest["command"], manifest["config"], manifest.get("format", "json")
    cfg: dict = {"seed": args.seed}
    if args.command in ("infer", "cluster"):
        cfg.update(input=str(Path(args.input).resolve()), x_col=args.x_col, y_col=args.y_col,
                   inference=_inference_dict(args))
    if args.command == "cluster":
        clustering = ClusterConfig(n_clusters=args.clusters, seed=args.seed)
        cfg.update(label_col=args.label_col, svg=not args.no_svg,
                   clustering=dataclasses.asdict(clustering))
    elif args.command == "bench":
        pairs = Path(args.pairs_dir).resolve()
        meta = Path(args.meta).resolve() if args.meta else pairs / "pairmeta.txt"
        cfg.update(pairs_dir=str(pairs), meta=str(meta), inference=_inference_dict(args))
    elif args.command == "simulate":
        if args.spec:
            try:
                spec = json.loads(Path(args.spec).read_text(encoding="utf-8"))
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read spec {args.spec}: {exc}") from None
        else:
            spec = {"datasets": [{"name": args.family, "family": args.family}]}
        cfg["datasets"] = _spec_datasets(spec)
    return args.command, cfg, args.format


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        command, cfg, fmt = resolve(args)
        payload = execute(command, cfg, args.out, fmt)
    except (HanmError, OSError, ValueError) as exc:
        print(f"hanm: error: {exc}", file=sys.stderr)
        return 1
    summary = {k: payload[k] for k in ("verdict", "tau", "weighted_accuracy", "ari", "nmi") if k in payload}
    print(json.dumps({"command": command, "out": str(args.out), **summary}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
