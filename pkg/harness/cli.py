"""Command line: generate, train, eval, rollout, equicheck, gradcheck."""
import argparse
import json
import logging
import sys
from dataclasses import asdict, replace
from pathlib import Path

from data.primitives import mesh_from_source
from data.trajectory_io import write_trajectory
from geometry.roughness import perturb_roughness
from harness.config import load_run_config, parse_run_config
from harness.dataset import SPLITS, generate, load_dataset
from harness.errors import ShapeMismatchError
from harness.evaluation import (
    MeanFieldPredictor,
    ModelPredictor,
    PersistencePredictor,
    equivariance_check,
    evaluate,
    rollout,
)
from harness.reporting import write_curve, write_metrics
from harness.seeding import derive_seed, resolve_root_seed
from harness.training import model_grad_check, train_seeds
from models.builder import build_model
from models.checkpoint import load_checkpoint
from models.graph import MeshGraph

logger = logging.getLogger(__name__)


def _print(payload: dict) -> None:
    print(json.dumps(payload, indent=2, default=str))


def cmd_generate(args) -> None:
    config = load_run_config(args.config)
    dataset = generate(config.dataset, args.out, root_seed=config.seed, workers=args.workers)
    _print({"dataset": str(dataset.root), "trajectories": len(dataset.entries), "root_seed": dataset.root_seed})


def cmd_train(args) -> None:
    config = load_run_config(args.config)
    dataset = load_dataset(args.data)
    results = train_seeds(config, dataset, args.out)
    _print(
        {
            "checkpoints": [str(r.checkpoint) for r in results],
            "final_loss": [float(r.log["loss"].iloc[-1]) if len(r.log) else None for r in results],
        }
    )


def cmd_eval(args) -> None:
    dataset = load_dataset(args.data)
    mesh_override = mesh_from_source(args.mesh) if args.mesh else None
    roughness = None
    if args.roughness is not None:
        if mesh_override is not None:
            mesh_override = perturb_roughness(mesh_override, args.roughness, args.roughness_seed)
        else:
            roughness = (args.roughness, args.roughness_seed)
    reports = [
        evaluate(path, dataset, args.split, scale_1e3=args.scale_1e3, mesh_override=mesh_override, roughness=roughness)
        for path in args.checkpoint
    ]
    paths = write_metrics(reports, args.out)
    _print({"metrics": {k: str(v) for k, v in paths.items()}, "reports": [r.to_dict() for r in reports]})


def cmd_rollout(args) -> None:
    dataset = load_dataset(args.data)
    entries = dataset.entries_for(args.split)
    if not 0 <= args.trajectory < len(entries):
        raise ShapeMismatchError(f"Split {args.split} has {len(entries)} trajectories, asked for #{args.trajectory}")
    entry = entries[args.trajectory]
    reference = dataset.load(entry)
    graph = MeshGraph.from_mesh(reference.mesh)
    if args.baseline == "persistence":
        predictor, history = PersistencePredictor(), dataset.spec.history
    elif args.baseline == "mean_field":
        predictor, history = MeanFieldPredictor(), dataset.spec.history
    else:
        model, params, _ = load_checkpoint(args.checkpoint)
        predictor, history = ModelPredictor(model, params), model.arch.history
    length = min(history + args.steps, reference.n_frames)
    result = rollout(predictor, graph, reference, history, length)
    out = Path(args.out)
    write_trajectory(out / "rollout.gmt", result.trajectory, entry.mesh, notes={"reference": entry.file})
    write_curve(result.curve, out / "rollout_curve.csv", flagged=result.flagged)
    _print({"steps": len(result.curve), "flagged": result.flagged, "final_rmse": result.curve[-1] if result.curve else None})


def _model_and_params(args):
    if args.checkpoint:
        model, params, _ = load_checkpoint(args.checkpoint)
        if args.samples is not None:
            model = build_model(replace(model.arch, n_samples=args.samples))
        return model, params
    config = load_run_config(args.config) if args.config else parse_run_config({})
    arch = config.model if args.samples is None else replace(config.model, n_samples=args.samples)
    model = build_model(arch)
    return model, model.init_params(derive_seed(resolve_root_seed(config.seed), "init", args.seed))


def cmd_equicheck(args) -> None:
    model, params = _model_and_params(args)
    mesh = mesh_from_source(args.mesh)
    defect = equivariance_check(model, params, mesh, trials=args.trials, seed=args.seed)
    _print({"defect": defect, "n_samples": model.arch.n_samples, "trials": args.trials})


def cmd_gradcheck(args) -> int:
    model, params = _model_and_params(args)
    graph = MeshGraph.from_mesh(mesh_from_source(args.mesh))
    result = model_grad_check(model, params, graph, seed=args.seed, max_entries=args.entries)
    _print(
        {
            **asdict(result),
            "parameters": len(params),
            "entries_per_parameter": args.entries,
        }
    )
    return 0 if result.passed else 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gaugemesh", description="Gauge-equivariant mesh PDE surrogates")
    parser.add_argument("--log-level", default="INFO", help="Root logging level")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="Simulate a dataset")
    p.add_argument("--config", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="Train one model per configured seed")
    p.add_argument("--config", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="One-step RMSE per split")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--checkpoint", type=Path, nargs="+", required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--split", nargs="+", choices=SPLITS, default=["test_time", "test_init", "test_mesh"])
    p.add_argument("--scale-1e3", action="store_true", help="Report RMSE in units of 1e-3")
    p.add_argument("--mesh", default=None, help="Score on this mesh instead of the dataset's")
    p.add_argument("--roughness", type=float, default=None, help="Jitter each trajectory mesh by this scale")
    p.add_argument("--roughness-seed", type=int, default=0)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("rollout", help="Autoregressive rollout against a reference trajectory")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--checkpoint", type=Path, default=None)
    p.add_argument("--baseline", choices=["model", "persistence", "mean_field"], default="model")
    p.add_argument("--split", choices=SPLITS, default="test_init")
    p.add_argument("--trajectory", type=int, default=0)
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_rollout)

    for name, func, help_text in (
        ("equicheck", cmd_equicheck, "Gauge-change defect of a model"),
        ("gradcheck", cmd_gradcheck, "Finite-difference check of the training loss gradient"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--checkpoint", type=Path, default=None)
        p.add_argument("--config", type=Path, default=None)
        p.add_argument("--mesh", default="icosphere:1")
        p.add_argument("--samples", type=int, default=None, help="Override the nonlinearity sample count")
        p.add_argument("--seed", type=int, default=0)
        if name == "equicheck":
            p.add_argument("--trials", type=int, default=3)
        else:
            p.add_argument("--entries", type=int, default=5, help="Entries checked per parameter")
        p.set_defaults(func=func)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    if args.command == "rollout" and args.baseline == "model" and args.checkpoint is None:
        parser.error("rollout needs --checkpoint unless a baseline is chosen")
    try:
        code = args.func(args)
    except (ValueError, OSError) as exc:
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return 1
    return code or 0


if __name__ == "__main__":
    sys.exit(main())
