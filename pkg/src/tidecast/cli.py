"""Command-line interface.

Subcommands: synth, train, eval, forecast, query (area|route), serve, params,
ablate. Run `tidecast <command> --help` for per-command options.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from tidecast import gsf
from tidecast.dataset import (
    FloodDataset,
    load_dataset,
    pick_split,
    split_chronological,
    synthesize_dataset,
)
from tidecast.encoder import ABLATIONS, standardize_elevation
from tidecast.evaluation import evaluate_model
from tidecast.grid import standardize_window
from tidecast.model import Forecaster, ModelConfig, load_model, save_checkpoint
from tidecast.query import (
    PatchLayout,
    QueryPolygon,
    area_flood_probability,
    read_polygon_file,
    route_flood_probability,
)
from tidecast.sampling import rollout
from tidecast.synth import SynthConfig
from tidecast.training import (
    TrainConfig,
    checkpoint_from_fit,
    fit,
    parse_config_file,
    write_history_csv,
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tidecast", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic tide-driven dataset")
    p.add_argument("--config", help="flat key = value file mirroring SynthConfig")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a forecaster")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--config", help="flat key = value file mirroring TrainConfig")
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--ablation", choices=ABLATIONS)
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--split", help="train,val,test step counts (default auto)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a chronological split")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test", choices=["train", "val", "test"])
    p.add_argument("--split-steps", help="train,val,test step counts (default auto)")
    p.add_argument("--scenarios", type=int, default=8)
    p.add_argument("--horizon", type=int, default=12)
    p.add_argument("--stride", type=int, help="window stride (default: horizon)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write the report JSON here (default: stdout)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("forecast", help="sample a forecast ensemble for one patch")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--patch", required=True)
    p.add_argument("--start", required=True, help="ISO-8601 first forecast hour")
    p.add_argument("--horizon", type=int, default=12)
    p.add_argument("--scenarios", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="ensemble output file (.ens.gsf)")
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("query", help="flood-probability queries over ensembles")
    qsub = p.add_subparsers(dest="kind", required=True)
    for kind in ("area", "route"):
        q = qsub.add_parser(kind)
        q.add_argument("--polygon", required=True, help="file with one 'x y' vertex per line")
        if kind == "area":
            q.add_argument("--d", type=float, required=True, help="threshold in feet")
        q.add_argument("--horizon", type=int, default=12)
        q.add_argument("--data", required=True, help="dataset directory (patch layout)")
        q.add_argument("--ensemble", action="append", default=[],
                       help="ensemble file; repeat per patch (else forecast on demand)")
        q.add_argument("--ckpt", help="checkpoint for on-demand forecasting")
        q.add_argument("--start", help="ISO-8601 first forecast hour (on-demand)")
        q.add_argument("--scenarios", type=int, default=8)
        q.add_argument("--seed", type=int, default=0)
        q.add_argument("--json", action="store_true", help="print the full JSON result")
        q.set_defaults(func=cmd_query, kind=kind)

    p = sub.add_parser("serve", help="run the HTTP forecast service")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("params", help="report the model parameter count")
    p.add_argument("--ckpt")
    p.add_argument("--data", help="dataset directory (for grid size)")
    p.add_argument("--grid-size", type=int)
    p.add_argument("--ablation", choices=ABLATIONS, default="all")
    p.set_defaults(func=cmd_params)

    p = sub.add_parser("ablate", help="train and evaluate all four context configurations")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="output directory for checkpoints and table")
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--scenarios", type=int, default=8)
    p.add_argument("--horizon", type=int, default=12)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split", help="train,val,test step counts (default auto)")
    p.set_defaults(func=cmd_ablate)

    return parser


def _parse_split(text: str | None) -> tuple[int, int, int] | None:
    if text is None:
        return None
    parts = [int(v) for v in text.split(",")]
    if len(parts) != 3:
        raise SystemExit(f"--split must be 'train,val,test', got {text!r}")
    return (parts[0], parts[1], parts[2])


def _split_dataset(data: FloodDataset, requested) -> tuple[FloodDataset, FloodDataset, FloodDataset]:
    steps = pick_split(data, requested)
    return split_chronological(data, *steps)


def cmd_synth(args) -> int:
    cfg = parse_config_file(args.config, SynthConfig) if args.config else SynthConfig()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    data = synthesize_dataset(cfg, args.out)
    print(f"wrote {len(data.patches)} patches x {data.num_steps} steps (D={data.grid_size}) to {args.out}")
    return 0


def cmd_train(args) -> int:
    cfg = parse_config_file(args.config, TrainConfig) if args.config else TrainConfig()
    if args.ablation:
        cfg = replace(cfg, ablation=args.ablation)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.epochs is not None:
        cfg = replace(cfg, epochs=args.epochs)
    data = load_dataset(args.data)
    train, val, _ = _split_dataset(data, _parse_split(args.split))
    result = fit(train, val, cfg)
    out = Path(args.out)
    save_checkpoint(out, checkpoint_from_fit(result, cfg, use_best=False))
    if result.best_params is not None:
        save_checkpoint(out.with_suffix(out.suffix + ".best"), checkpoint_from_fit(result, cfg, use_best=True))
    write_history_csv(out.with_suffix(out.suffix + ".history.csv"), result.history)
    last = result.history[-1]
    print(f"trained {cfg.epochs} epochs: loss {last.loss:.6f}, val NACRPS {last.val_nacrps:.6f}")
    print(f"checkpoint: {out}")
    return 0


def cmd_eval(args) -> int:
    model, ckpt = load_model(args.ckpt)
    data = load_dataset(args.data)
    train, val, test = _split_dataset(data, _parse_split(args.split_steps))
    part = {"train": train, "val": val, "test": test}[args.split]
    out = evaluate_model(
        model, part, scenarios=args.scenarios, horizon=args.horizon,
        seed=args.seed, stride=args.stride,
    )
    payload = out.report.to_json_dict()
    payload["split"] = args.split
    payload["checkpoint_id"] = ckpt.checkpoint_id
    payload["baselines"] = {
        "persistence": out.persistence.to_json_dict(),
        "climatology": out.climatology.to_json_dict(),
    }
    text = json.dumps(payload, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
        print(f"wrote {args.out}")
    else:
        print(text)
    return 0


def _window_for_start(model, patch, start: np.datetime64):
    """Standardized context window whose first forecast hour is `start`.

    The target slot is a placeholder (rollout consumes only the context);
    `start` may be any hour with c hours of history, including the hour right
    after the series ends.
    """
    from tidecast.grid import Window
    from tidecast.sampling import advance_covariates

    c = model.config.context_length
    times = patch.series.timestamps
    matches = np.nonzero(times == start)[0]
    if matches.size:
        idx = int(matches[0])
    elif start == times[-1] + np.timedelta64(1, "h"):
        idx = len(times)  # forecast immediately after the series
    else:
        raise ValueError(f"start {start} outside series {times[0]}..{times[-1]} + 1h")
    if idx < c:
        raise ValueError(f"insufficient history: start {start} needs {c} hours before it")
    cov = patch.covariates.slice_steps(idx - c, idx)
    window = Window(
        patch_id=patch.patch_id,
        context=patch.series.values[idx - c : idx],
        target=patch.series.values[idx - 1 : idx],
        context_covariates=cov,
        target_covariates=advance_covariates(cov, 1).slice_steps(c - 1, c),
    )
    return standardize_window(window)


def _forecast_ensemble(model, ckpt, data, patch_id, start, horizon, scenarios, seed):
    patch = data.patch(patch_id)
    window = _window_for_start(model, patch, np.datetime64(start, "s"))
    elev = standardize_elevation(patch.elevation) if model.config.encoder.in_channels == 2 else None
    return rollout(
        model, window, elev, horizon=horizon, num_scenarios=scenarios,
        seed=seed, checkpoint_id=ckpt.checkpoint_id,
    )


def cmd_forecast(args) -> int:
    model, ckpt = load_model(args.ckpt)
    data = load_dataset(args.data)
    ens = _forecast_ensemble(
        model, ckpt, data, args.patch, args.start, args.horizon, args.scenarios, args.seed
    )
    gsf.write_ensemble(args.out, ens)
    print(
        f"wrote {ens.num_members} scenarios x {ens.horizon} hours for {args.patch} "
        f"starting {args.start} to {args.out}"
    )
    return 0


def dataset_layout(data: FloodDataset) -> list[PatchLayout]:
    return [
        PatchLayout(p.patch_id, p.series.origin, p.series.grid_size) for p in data.patches
    ]


def cmd_query(args) -> int:
    data = load_dataset(args.data)
    layout = dataset_layout(data)
    vertices = read_polygon_file(args.polygon)
    polygon = QueryPolygon(tuple(vertices), kind=args.kind)
    ensembles: dict[str, np.ndarray] = {}
    for path in args.ensemble:
        ens = gsf.read_ensemble(path)
        ensembles[ens.patch_id] = ens.members
    if not ensembles:
        if not (args.ckpt and args.start):
            raise SystemExit("query needs --ensemble files or --ckpt/--start for on-demand forecasts")
        model, ckpt = load_model(args.ckpt)
        from tidecast.query import cells_overlapping

        needed = cells_overlapping(polygon, layout)
        for patch_id in needed:
            ens = _forecast_ensemble(
                model, ckpt, data, patch_id, args.start, args.horizon, args.scenarios, args.seed
            )
            ensembles[patch_id] = ens.members
    if args.kind == "area":
        result = area_flood_probability(polygon, args.d, args.horizon, ensembles, layout)
        print(json.dumps(result.to_json_dict(), indent=2) if args.json
              else f"probability_above: {result.probability_above:.17g}")
    else:
        result = route_flood_probability(polygon, args.horizon, ensembles, layout)
        print(json.dumps(result.to_json_dict(), indent=2) if args.json
              else f"not_flooded: {result.not_flooded:.17g}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from tidecast.service import create_app

    app = create_app(args.ckpt, args.data)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def cmd_params(args) -> int:
    if args.ckpt:
        model, ckpt = load_model(args.ckpt)
        count = model.parameter_count()
        print(f"checkpoint {ckpt.checkpoint_id}: D={model.config.grid_size}, "
              f"ablation={model.config.ablation}, parameters {count}")
        return 0
    if args.data:
        grid = load_dataset(args.data).grid_size
    elif args.grid_size:
        grid = args.grid_size
    else:
        raise SystemExit("params needs --ckpt, --data, or --grid-size")
    model = Forecaster(ModelConfig(grid_size=grid, ablation=args.ablation))
    print(f"D={grid}, ablation={args.ablation}, parameters {model.parameter_count()}")
    return 0


def cmd_ablate(args) -> int:
    data = load_dataset(args.data)
    train, val, test = _split_dataset(data, _parse_split(args.split))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for ablation in ABLATIONS:
        cfg = TrainConfig(epochs=args.epochs, ablation=ablation, seed=args.seed)
        result = fit(train, val, cfg)
        ckpt = checkpoint_from_fit(result, cfg)
        save_checkpoint(out_dir / f"{ablation}.ckpt", ckpt)
        write_history_csv(out_dir / f"{ablation}.history.csv", result.history)
        scores = evaluate_model(
            result.model, test, scenarios=args.scenarios, horizon=args.horizon, seed=args.seed
        )
        rows.append((ablation, scores.report.nrmse, scores.report.nacrps))
    header = f"{'config':<12} {'nrmse':>10} {'nacrps':>10}"
    lines = [header, "-" * len(header)]
    for name, nr, na in rows:
        lines.append(f"{name:<12} {nr:>10.4f} {na:>10.4f}")
    best = min(rows, key=lambda r: r[2])
    lines.append(f"best NACRPS: {best[0]}")
    table = "\n".join(lines)
    print(table)
    (out_dir / "ablation_table.txt").write_text(table + "\n")
    with open(out_dir / "ablation_table.csv", "w") as fh:
        fh.write("config,nrmse,nacrps\n")
        for name, nr, na in rows:
            fh.write(f"{name},{nr!r},{na!r}\n")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
