"""Truncated backpropagation through short autoregressive rollouts."""
import logging
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np
import pandas as pd

from autodiff import ops
from autodiff.gradcheck import grad_check, relu_margin
from autodiff.optim import adam_init, adam_step, cosine_lr
from autodiff.tensor import Tape, Tensor
from harness.config import RunConfig
from harness.dataset import Dataset, Sample
from harness.errors import DatasetError, NonFiniteLossError, ShapeMismatchError
from harness.seeding import derive_rng, derive_seed, resolve_root_seed
from models.builder import GaugeModel, build_model
from models.checkpoint import save_checkpoint
from models.graph import MeshGraph

logger = logging.getLogger(__name__)

CHECKPOINT = "checkpoint.json"
TRAIN_LOG = "train_log.csv"

GRADCHECK_STEP = 1e-5
GRADCHECK_TOLERANCE = 1e-5
# ReLU inputs must clear the finite-difference step by this factor
KINK_FACTOR = 10.0
# gradients below this fraction of the largest one are judged on absolute error
RELATIVE_FLOOR = 1e-3


@dataclass
class TrainResult:
    checkpoint: Path
    params: dict[str, np.ndarray]
    log: pd.DataFrame
    seed: int


def rollout_loss(model: GaugeModel, graph: MeshGraph, params: Mapping, sample: Sample) -> Tensor:
    """Mean RMSE over len(sample.targets) autoregressive predictions.

    Each prediction is appended to the input window and the oldest frame dropped, so
    gradients flow through the whole rollout.
    """
    window = ops.constant(np.ascontiguousarray(sample.inputs.T))
    total = None
    for target in sample.targets:
        pred = model.forward(graph, params, window)
        loss = ops.rmse(pred, target[:, None])
        total = loss if total is None else ops.add(total, loss)
        window = ops.concat([ops.take_slice(window, (slice(None), slice(1, None))), pred], axis=1)
    return ops.scale(total, 1.0 / len(sample.targets))


@dataclass
class GradCheckResult:
    """Outcome of `model_grad_check`.

    Attributes:
        max_relative_error: Worst entry of `grad_check`
        relu_margin: Smallest |ReLU input| of the accepted draw
        attempts: 1-based index of the draw that was checked
        passed: max_relative_error <= tolerance
    """

    max_relative_error: float
    relu_margin: float
    attempts: int
    tolerance: float
    passed: bool


def model_grad_check(
    model: GaugeModel,
    params: Mapping[str, np.ndarray],
    graph: MeshGraph,
    seed: int = 0,
    max_entries: int | None = None,
    h: float = GRADCHECK_STEP,
    tolerance: float = GRADCHECK_TOLERANCE,
    attempts: int = 50,
) -> GradCheckResult:
    """Finite-difference check of the rollout loss on random frames.

    Frames are redrawn until every ReLU input sits at least KINK_FACTOR * h from
    zero; after `attempts` draws the one with the widest margin is used. Entries
    whose gradient is far below the largest one are compared absolutely.
    """
    rng = np.random.default_rng(seed)
    names = list(params)
    values = [params[n] for n in names]
    history = model.arch.history

    def loss_for(sample: Sample):
        return lambda tensors: rollout_loss(model, graph, dict(zip(names, tensors)), sample)

    best = None
    for attempt in range(1, attempts + 1):
        frames = rng.standard_normal((history + 1, graph.n_vertices))
        sample = Sample(trajectory=0, t=history - 1, inputs=frames[:history], targets=frames[history:])
        margin, largest = relu_margin(loss_for(sample), values)
        if best is None or margin > best[1]:
            best = (sample, margin, largest, attempt)
        if margin >= KINK_FACTOR * h:
            break
    else:
        logger.warning("No draw cleared the ReLU kinks in %d attempts; margin %.3g", attempts, best[1])
    sample, margin, largest, attempt = best
    floor = max(1e-8, RELATIVE_FLOOR * largest)
    error = grad_check(loss_for(sample), values, h=h, floor=floor, max_entries=max_entries, seed=seed)
    logger.info("Gradient check: max relative error %.3g (margin %.3g, draw %d)", error, margin, attempt)
    return GradCheckResult(error, margin, attempt, tolerance, error <= tolerance)


def check_compatible(model: GaugeModel, dataset: Dataset) -> None:
    if model.arch.history != dataset.spec.history:
        raise ShapeMismatchError(
            f"Model expects {model.arch.history} input frames, dataset provides {dataset.spec.history}"
        )


def train(config: RunConfig, dataset: Dataset, out_dir: str | Path, seed: int = 0) -> TrainResult:
    """Train one model on the dataset's train split and checkpoint it.

    Args:
        config: Validated run configuration
        dataset: Generated dataset
        out_dir: Directory receiving checkpoint.json, checkpoint.bin and train_log.csv
        seed: Training seed; initialization and sample order derive from it and the root seed

    Returns:
        TrainResult with the final parameters and the per-epoch log

    Raises:
        ShapeMismatchError: If model and dataset disagree on the history length
        NonFiniteLossError: On the first non-finite loss
    """
    out_dir = Path(out_dir)
    root = resolve_root_seed(config.seed)
    model = build_model(config.model)
    check_compatible(model, dataset)
    samples = dataset.samples("train")
    if not samples and config.optim.epochs > 0:
        raise DatasetError(f"Dataset {dataset.root} has no training samples")
    graphs = {source: MeshGraph.from_mesh(dataset.mesh(source)) for source in {e.mesh for e, _ in samples}}
    mean_degree = float(np.mean([g.mean_degree for g in graphs.values()])) if graphs else 6.0
    params = model.init_params(derive_seed(root, "init", seed), mean_degree)
    names = list(params)

    optim = config.optim
    state = adam_init([params[n] for n in names], lr=optim.lr, weight_decay=optim.weight_decay)
    batches_per_epoch = math.ceil(len(samples) / optim.batch_size)
    total_steps = optim.epochs * batches_per_epoch
    rows = []
    step = 0
    for epoch in range(optim.epochs):
        started = time.perf_counter()
        order = derive_rng(root, "order", seed, epoch).permutation(len(samples))
        losses = []
        lr = optim.lr
        for b in range(batches_per_epoch):
            batch = order[b * optim.batch_size : (b + 1) * optim.batch_size]
            summed = {n: np.zeros_like(params[n]) for n in names}
            for i in batch:
                entry, sample = samples[i]
                tape = Tape()
                tracked = {n: tape.variable(params[n]) for n in names}
                loss = rollout_loss(model, graphs[entry.mesh], tracked, sample)
                value = loss.item()
                if not np.isfinite(value):
                    raise NonFiniteLossError(
                        f"Non-finite loss at epoch {epoch + 1}, step {step + 1} ({entry.file}, t={sample.t})",
                        epoch=epoch + 1,
                        step=step + 1,
                    )
                grads = tape.backward(loss)
                for n in names:
                    summed[n] += grads[tracked[n]]
                losses.append(value)
            lr = cosine_lr(optim.lr, step, total_steps) if optim.schedule == "cosine" else optim.lr
            updated, state = adam_step(
                [params[n] for n in names], [summed[n] / len(batch) for n in names], state, lr=lr
            )
            params = dict(zip(names, updated))
            step += 1
        mean_loss = float(np.mean(losses))
        rows.append({"epoch": epoch + 1, "loss": mean_loss, "lr": lr, "seconds": time.perf_counter() - started})
        logger.info("Seed %d epoch %d/%d: loss %.6g", seed, epoch + 1, optim.epochs, mean_loss)

    log = pd.DataFrame(rows, columns=["epoch", "loss", "lr", "seconds"])
    out_dir.mkdir(parents=True, exist_ok=True)
    log.to_csv(out_dir / TRAIN_LOG, index=False)
    checkpoint = save_checkpoint(
        out_dir / CHECKPOINT,
        model,
        params,
        seed,
        extra={
            "config_hash": config.hash,
            "dataset": str(dataset.root),
            "root_seed": root,
            "epochs": optim.epochs,
            "samples": len(samples),
        },
    )
    return TrainResult(checkpoint=checkpoint, params=params, log=log, seed=seed)


def train_seeds(config: RunConfig, dataset: Dataset, out_dir: str | Path) -> list[TrainResult]:
    """One training run per configured seed, each under `<out_dir>/seed_<s>`."""
    return [train(config, dataset, Path(out_dir) / f"seed_{s}", seed=s) for s in config.optim.seeds]
