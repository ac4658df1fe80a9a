"""Command line interface: ``ewginn <subcommand> --help``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .experiment import GridSpec, RunSpec, evaluate, export_plane, run_experiment, run_one
from .flownet import generate_dataset, load_dataset, orient_network, save_dataset
from .graph import Graph, barabasi_albert, erdos_renyi
from .model import ModelConfig
from .train import TrainConfig


def _load_json(path: str | None) -> dict:
    return json.loads(Path(path).read_text()) if path else {}


def _overrides(args: argparse.Namespace, names: list[str]) -> dict:
    return {n: getattr(args, n) for n in names if getattr(args, n, None) is not None}


def _parse_rows(text: str | None):
    if not text:
        return None
    start, _, stop = text.partition(":")
    return range(int(start or 0), int(stop))


def cmd_gen_graph(args: argparse.Namespace) -> None:
    if args.kind == "ba":
        g = barabasi_albert(args.n, args.m_attach, args.seed)
    else:
        p = args.p if args.p is not None else min(1.0, 4.0 / (args.n - 1))
        g = erdos_renyi(args.n, p, args.seed, require_connected=True)
    Path(args.out).write_text(json.dumps(g.to_dict()))
    print(f"wrote {args.out}: n={g.n}, |E|={g.n_edges}")


def cmd_gen_dataset(args: argparse.Namespace) -> None:
    g = Graph.from_dict(_load_json(args.graph))
    net = orient_network(g)
    data = generate_dataset(net, args.n_samples, args.seed)
    save_dataset(data, args.out)
    print(f"wrote {args.out}: {len(data)} samples, {net.n_edges} edges, m={net.m}")


def _train_config(args: argparse.Namespace) -> TrainConfig:
    cfg = TrainConfig.from_dict(_load_json(args.train_config))
    cfg = replace(cfg, **_overrides(args, ["lr", "max_epochs", "batch_size", "es_patience", "es_start_epoch"]))
    if args.no_early_stop:
        cfg = replace(cfg, early_stopping=False)
    return cfg


def cmd_train(args: argparse.Namespace) -> None:
    data = load_dataset(args.dataset)
    model = _load_json(args.model_config)
    model.update(_overrides(args, ["layer_kind", "depth", "features", "activation", "pool"]))
    model["seed"] = args.seed
    if "pool" not in model:
        model["pool"] = "none" if model.get("features", 1) == 1 else "reduce_mean"
    run = RunSpec(ModelConfig(**model), args.seed)
    record = run_one(run, data, _train_config(args), args.out, args.n_train, args.n_test)
    print(json.dumps(record, indent=1, sort_keys=True))


def cmd_grid(args: argparse.Namespace) -> None:
    spec_data = _load_json(args.spec)
    if args.style:
        spec_data["style"] = args.style
    spec_data.update(
        {k: v for k, v in _overrides(args, ["seeds", "layer_kinds", "features"]).items()}
    )
    spec = GridSpec.from_dict(spec_data)
    manifest = run_experiment(
        args.dataset,
        spec,
        _train_config(args),
        args.out,
        n_train=args.n_train,
        n_test=args.n_test,
        workers=args.workers,
    )
    ok = sum(r["status"] == "ok" for r in manifest["runs"])
    print(f"{ok}/{len(manifest['runs'])} runs ok; manifest at {Path(args.out) / 'manifest.json'}")


def cmd_eval(args: argparse.Namespace) -> None:
    data = load_dataset(args.dataset)
    point = evaluate(args.checkpoint, data, _parse_rows(args.rows))
    text = json.dumps(point.to_dict(), indent=1, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text)
    print(text)


def cmd_export_plane(args: argparse.Namespace) -> None:
    n = export_plane(args.manifest, args.out)
    print(f"wrote {n} rows to {args.out}")


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dataset", required=True)
    p.add_argument("--train-config", help="JSON file with TrainConfig fields")
    p.add_argument("--lr", type=float)
    p.add_argument("--max-epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--es-patience", type=int)
    p.add_argument("--es-start-epoch", type=int)
    p.add_argument("--no-early-stop", action="store_true")
    p.add_argument("--n-train", type=int, default=500)
    p.add_argument("--n-test", type=int, default=3000)
    p.add_argument("--out", required=True, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ewginn", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-graph", help="generate a BA or ER graph as JSON")
    p.add_argument("--kind", choices=["ba", "er"], required=True)
    p.add_argument("--n", type=int, default=20)
    p.add_argument("--m-attach", type=int, default=2)
    p.add_argument("--p", type=float, help="ER edge probability (default 4/(n-1))")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_graph)

    p = sub.add_parser("gen-dataset", help="orient a graph and sample max-flow data")
    p.add_argument("--graph", required=True)
    p.add_argument("--n-samples", type=int, default=3500)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_dataset)

    p = sub.add_parser("train", help="train and evaluate a single model")
    _add_train_flags(p)
    p.add_argument("--model-config", help="JSON file with ModelConfig fields")
    p.add_argument("--layer-kind", choices=["gi", "ewgi"])
    p.add_argument("--depth", type=int)
    p.add_argument("--features", type=int)
    p.add_argument("--activation", choices=["elu", "swish", "softplus"])
    p.add_argument("--pool", choices=["reduce_max", "reduce_mean", "none"])
    p.add_argument("--seed", type=int, required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("grid", help="run the configuration grid over several seeds")
    _add_train_flags(p)
    p.add_argument("--spec", help="JSON file with GridSpec fields")
    p.add_argument("--style", choices=["ba", "er"], help="depth set of the grid")
    p.add_argument("--seeds", type=int, nargs="+")
    p.add_argument("--layer-kinds", nargs="+", choices=["gi", "ewgi"])
    p.add_argument("--features", type=int, nargs="+")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("eval", help="evaluate a checkpoint on dataset rows")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--rows", help="start:stop row range (default: all rows)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("export-plane", help="write the error-plane CSV of a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_plane)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
