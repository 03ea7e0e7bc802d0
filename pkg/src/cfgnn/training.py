"""Training loop, threshold sweep and the sparsity/performance score.

Training maximises mean sum SE by gradient descent on its negative, with
Adam, shuffled mini-batches, per-epoch evaluation on held-out samples and
early stopping on the best test score.  The joint model trains both task
branches on paired batches under the alpha-weighted loss.

The threshold sweep retrains the sparsified model per candidate threshold,
scores each against a dense reference with the harmonic sparsity/retention
score, and reports the trade-off curve.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import rng
from .datasets import Dataset
from .errors import ConfigError, DivergenceError, DomainError
from .metrics import batch_sum_se
from .model import (
    GnnModel,
    JointModel,
    ModelSpec,
    infer,
    init_model,
    joint_loss,
    model_forward,
    count_flops,
    se_loss,
)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 64
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    patience: int = 20
    seed: int = 0
    eval_batch_size: int = 256
    # Optional one-step rate decay: epochs after ``decay_epoch`` run at
    # ``learning_rate * decay_factor``; 0 disables. Useful for a
    # prune-then-recover schedule on the sparsified variants.
    decay_epoch: int = 0
    decay_factor: float = 1.0

    def validate(self) -> None:
        if self.epochs < 1 or self.batch_size < 1 or self.eval_batch_size < 1:
            raise ConfigError("epochs and batch sizes must be positive")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning rate must be positive, got {self.learning_rate}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("Adam betas must be in [0, 1)")
        if self.adam_eps <= 0:
            raise ConfigError("Adam epsilon must be positive")
        if self.patience < 1:
            raise ConfigError(f"patience must be positive, got {self.patience}")
        if self.decay_epoch < 0:
            raise ConfigError(f"decay epoch must be >= 0, got {self.decay_epoch}")
        if not 0.0 < self.decay_factor <= 1.0:
            raise ConfigError(f"decay factor must be in (0, 1], got {self.decay_factor}")


class Adam:
    """Standard Adam with bias correction, updating parameters in place."""

    def __init__(self, params: dict[str, np.ndarray], config: TrainConfig):
        self.params = params
        self.config = config
        self.learning_rate = config.learning_rate
        self.step_count = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads: dict[str, np.ndarray]) -> None:
        c = self.config
        self.step_count += 1
        t = self.step_count
        correction = np.sqrt(1.0 - c.beta2**t) / (1.0 - c.beta1**t)
        for name, p in self.params.items():
            g = grads[name]
            m = self.m[name]
            v = self.v[name]
            m *= c.beta1
            m += (1.0 - c.beta1) * g
            v *= c.beta2
            v += (1.0 - c.beta2) * np.square(g)
            p -= self.learning_rate * correction * m / (np.sqrt(v) + c.adam_eps)


@dataclass
class TrainResult:
    model: GnnModel | JointModel
    history: list[dict]
    best_epoch: int
    best_test_se: float
    steps: int
    seconds: float


def _budgets(dataset: Dataset) -> tuple[float, float]:
    return dataset.config.max_power_mw, dataset.config.noise_power_mw


def _eval_mean_se(model: GnnModel, dataset: Dataset, batch_size: int) -> float:
    p_max, noise = _budgets(dataset)
    gains = dataset.gains_f64()
    totals = []
    for start in range(0, gains.shape[0], batch_size):
        chunk = gains[start : start + batch_size]
        f = infer(model, chunk, p_max)
        totals.append(batch_sum_se(chunk, f, noise))
    return float(np.concatenate(totals).mean())


def _leaf_grads(tape: ad.Tape, grads) -> dict[str, np.ndarray]:
    out = {}
    for node in tape.nodes:
        if node.trainable and node.name is not None:
            out[node.name] = grads[ad.Tensor(tape, node.uid)]
    return out


def _check_pairing(model, train_data, test_data):
    if isinstance(model, JointModel):
        for pair, label in ((train_data, "training"), (test_data, "test")):
            pc, pr = pair
            if pc.sample_count != pr.sample_count:
                raise ConfigError(
                    f"joint {label} datasets must pair up: "
                    f"{pc.sample_count} power-control vs {pr.sample_count} precoding samples"
                )
            if pc.sample_count == 0:
                raise ConfigError(f"joint {label} datasets are empty")
    else:
        for ds, label in ((train_data, "training"), (test_data, "test")):
            if ds.sample_count == 0:
                raise ConfigError(f"{label} dataset is empty")


def train(
    model: GnnModel | JointModel,
    train_data,
    test_data,
    config: TrainConfig,
    progress=None,
) -> TrainResult:
    """Train in place and return the model restored to its best epoch.

    ``train_data``/``test_data`` are Datasets for a single-task model or
    (power-control, precoding) pairs for a joint model.  ``progress`` is an
    optional callback (epoch, total_epochs, last_history_row).
    """
    config.validate()
    _check_pairing(model, train_data, test_data)
    joint = isinstance(model, JointModel)
    if joint:
        pc_train, pr_train = train_data
        gains_pc = pc_train.gains_f64()
        gains_pr = pr_train.gains_f64()
        sample_count = pc_train.sample_count
        budget_pc = _budgets(pc_train)
        budget_pr = _budgets(pr_train)
    else:
        gains = train_data.gains_f64()
        sample_count = train_data.sample_count
        p_max, noise = _budgets(train_data)

    params = model.parameters()
    optimizer = Adam(params, config)
    history: list[dict] = []
    best_se = -np.inf
    best_epoch = 0
    best_params: dict[str, np.ndarray] | None = None
    start_time = time.perf_counter()

    for epoch in range(1, config.epochs + 1):
        if config.decay_epoch and epoch > config.decay_epoch:
            optimizer.learning_rate = config.learning_rate * config.decay_factor
        order = rng.stream(config.seed, rng.TRAIN_TAG, epoch).permutation(sample_count)
        batch_losses = []
        for start in range(0, sample_count, config.batch_size):
            idx = order[start : start + config.batch_size]
            tape = ad.Tape()
            if joint:
                loss, _ = joint_loss(
                    tape, model, gains_pc[idx], gains_pr[idx], budget_pc, budget_pr
                )
            else:
                f = model_forward(tape, model, gains[idx], p_max)
                loss, _ = se_loss(tape, f, gains[idx], noise)
            loss_value = float(loss.value)
            if not np.isfinite(loss_value):
                raise DivergenceError(
                    f"non-finite loss at step {optimizer.step_count + 1}",
                    step=optimizer.step_count + 1,
                )
            optimizer.step(_leaf_grads(tape, tape.backward(loss)))
            batch_losses.append(loss_value)

        if joint:
            se_pc = _eval_mean_se(model.power, test_data[0], config.eval_batch_size)
            se_pr = _eval_mean_se(model.precoding, test_data[1], config.eval_batch_size)
            test_se = model.alpha * se_pc + (1.0 - model.alpha) * se_pr
            row = {
                "epoch": epoch,
                "loss": float(np.mean(batch_losses)),
                "test_se": test_se,
                "power_se": se_pc,
                "precoding_se": se_pr,
            }
        else:
            test_se = _eval_mean_se(model, test_data, config.eval_batch_size)
            row = {"epoch": epoch, "loss": float(np.mean(batch_losses)), "test_se": test_se}
        history.append(row)
        if progress is not None:
            progress(epoch, config.epochs, row)

        if test_se > best_se:
            best_se = test_se
            best_epoch = epoch
            best_params = {k: v.copy() for k, v in params.items()}
        elif epoch - best_epoch >= config.patience:
            break

    if best_params is not None:
        for name, value in params.items():
            value[...] = best_params[name]
    return TrainResult(
        model=model,
        history=history,
        best_epoch=best_epoch,
        best_test_se=float(best_se),
        steps=optimizer.step_count,
        seconds=time.perf_counter() - start_time,
    )


def write_history_csv(path: str | Path, history: list[dict]) -> None:
    if not history:
        raise ConfigError("empty training history")
    fields = list(history[0].keys())
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        writer.writerows(history)


def write_history_json(path: str | Path, history: list[dict]) -> None:
    Path(path).write_text(json.dumps(history, indent=2))


def harmonic_score(sparsity: float, retention: float) -> float:
    """Harmonic mean of pruned fraction and performance retention.

    Both inputs live in [0, 1]; the score is 0 when both are 0 (the harmonic
    mean's continuous limit) and balances the two objectives otherwise.
    """
    if not (0.0 <= sparsity <= 1.0 and 0.0 <= retention <= 1.0):
        raise DomainError(
            f"harmonic_score arguments must be in [0, 1], got S={sparsity} P={retention}"
        )
    if sparsity + retention == 0.0:
        return 0.0
    return 2.0 * sparsity * retention / (sparsity + retention)


def time_inference(
    model: GnnModel, channels: np.ndarray, max_power_mw: float,
    batch_size: int = 64, repeats: int = 3,
) -> float:
    """Median-of-repeats wall-clock seconds per sample, single worker."""
    n = channels.shape[0]
    infer(model, channels[: min(batch_size, n)], max_power_mw)  # warm up
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        for lo in range(0, n, batch_size):
            infer(model, channels[lo : lo + batch_size], max_power_mw)
        times.append(time.perf_counter() - start)
    return float(np.median(times)) / n


@dataclass
class SweepResult:
    tau: float
    sparsity: float  # pruned fraction of links after training
    retention: float  # SE ratio against the dense reference, clamped to [0, 1]
    harmonic: float
    mean_sum_se: float
    seconds_per_sample: float
    flops_per_sample: int
    best_epoch: int


def sweep_threshold(
    template: ModelSpec,
    train_ds: Dataset,
    test_ds: Dataset,
    taus,
    config: TrainConfig,
    progress=None,
) -> tuple[list[SweepResult], dict]:
    """Retrain the sparsified model per threshold and score the trade-off.

    The dense reference (same dimensions, no sparsification layer) trains
    first with the same seed and schedule.  Returns (per-threshold results
    sorted by threshold, dense reference summary).
    """
    taus = sorted(float(t) for t in taus)
    if not taus:
        raise ConfigError("no thresholds to sweep")
    for t in taus:
        if not 0.0 <= t < 1.0:
            raise ConfigError(f"threshold {t} outside [0, 1)")

    p_max = train_ds.config.max_power_mw
    gains_test = test_ds.gains_f64()

    dense_spec = replace(template, variant="mdgnn", tau=0.0)
    dense_model = init_model(dense_spec, config.seed)
    dense_result = train(dense_model, train_ds, test_ds, config)
    dense_se = dense_result.best_test_se
    dense_time = time_inference(dense_model, gains_test, p_max)
    dense_info = {
        "mean_sum_se": dense_se,
        "seconds_per_sample": dense_time,
        "flops_per_sample": count_flops(dense_model),
        "best_epoch": dense_result.best_epoch,
    }
    if progress is not None:
        progress("dense", dense_info)

    results = []
    for tau in taus:
        spec = replace(template, variant="sp-mdgnn", tau=tau)
        model = init_model(spec, config.seed)
        outcome = train(model, train_ds, test_ds, config)
        sparsity = 1.0 - model.sparse.retained_fraction()
        retention = min(max(outcome.best_test_se / dense_se, 0.0), 1.0) if dense_se > 0 else 0.0
        entry = SweepResult(
            tau=tau,
            sparsity=sparsity,
            retention=retention,
            harmonic=harmonic_score(sparsity, retention),
            mean_sum_se=outcome.best_test_se,
            seconds_per_sample=time_inference(model, gains_test, p_max),
            flops_per_sample=count_flops(model),
            best_epoch=outcome.best_epoch,
        )
        results.append(entry)
        if progress is not None:
            progress(tau, entry)
    return results, dense_info


def write_sweep_csv(path: str | Path, results: list[SweepResult]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["tau", "sparsity", "retention", "harmonic", "mean_sum_se",
             "seconds_per_sample", "flops_per_sample", "best_epoch"]
        )
        for r in results:
            writer.writerow(
                [r.tau, r.sparsity, r.retention, r.harmonic, r.mean_sum_se,
                 r.seconds_per_sample, r.flops_per_sample, r.best_epoch]
            )
