"""Side-by-side SE and complexity benchmarking of solvers on shared samples.

Every method sees exactly the same channel realisations.  SE statistics are
deterministic; wall-clock timings are measured single-worker and reported as
seconds per sample (excluded from determinism guarantees).
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .datasets import POWER_CONTROL, Dataset
from .errors import ConfigError
from .metrics import batch_sum_se
from .model import GnnModel, JointModel, count_flops, infer
from .wmmse import WmmseOptions, wmmse_solve

WMMSE_METHOD = "wmmse"


@dataclass
class BenchEntry:
    name: str
    model: GnnModel | JointModel | None = None  # None means the WMMSE baseline


def _branch_for(entry: BenchEntry, dataset: Dataset) -> GnnModel | None:
    if entry.model is None:
        return None
    if isinstance(entry.model, JointModel):
        return entry.model.power if dataset.kind == POWER_CONTROL else entry.model.precoding
    if (entry.model.spec.task == "power-control") != (dataset.kind == POWER_CONTROL):
        raise ConfigError(
            f"method {entry.name!r} solves {entry.model.spec.task}, "
            f"dataset holds {dataset.kind}"
        )
    return entry.model


def _bench_wmmse(dataset: Dataset, options: WmmseOptions) -> tuple[np.ndarray, float]:
    gains = dataset.gains_f64()
    p_max, noise = dataset.config.max_power_mw, dataset.config.noise_power_mw
    se = np.empty(gains.shape[0])
    start = time.perf_counter()
    for i in range(gains.shape[0]):
        precoder, _ = wmmse_solve(gains[i], p_max, noise, options)
        se[i] = batch_sum_se(gains[None, i], precoder.gains[None], noise)[0]
    elapsed = time.perf_counter() - start
    return se, elapsed / gains.shape[0]


def _bench_model(model: GnnModel, dataset: Dataset, batch_size: int) -> tuple[np.ndarray, float]:
    gains = dataset.gains_f64()
    p_max, noise = dataset.config.max_power_mw, dataset.config.noise_power_mw
    n = gains.shape[0]
    infer(model, gains[: min(batch_size, n)], p_max)  # warm up
    se_chunks = []
    start = time.perf_counter()
    for lo in range(0, n, batch_size):
        chunk = gains[lo : lo + batch_size]
        f = infer(model, chunk, p_max)
        se_chunks.append(batch_sum_se(chunk, f, noise))
    elapsed = time.perf_counter() - start
    return np.concatenate(se_chunks), elapsed / n


def run_bench(
    entries: list[BenchEntry],
    datasets: list[Dataset],
    sample_count: int | None = None,
    wmmse_options: WmmseOptions | None = None,
    batch_size: int = 64,
    reference: str = "mdgnn",
) -> dict:
    """Benchmark all entries on all datasets; returns the report dict.

    The report carries per-method, per-task SE summaries, per-sample SE lists
    (for CDF export), timing, and analytic multiply-add counts; plus ratios
    against ``reference`` when that method is present.
    """
    if not entries:
        raise ConfigError("no methods to benchmark")
    if not datasets:
        raise ConfigError("no datasets to benchmark on")
    wmmse_options = wmmse_options or WmmseOptions()
    used = []
    for ds in datasets:
        trimmed = ds.subset(min(sample_count, ds.sample_count)) if sample_count else ds
        if trimmed.sample_count == 0:
            raise ConfigError(f"dataset of kind {ds.kind} has no samples")
        used.append(trimmed)

    report: dict = {"sample_counts": {ds.kind: ds.sample_count for ds in used}, "methods": {}}
    for entry in entries:
        # Iterative solvers trade time for SE; their wall clock scales with the
        # iteration budget, unlike the fixed-cost forward passes.
        method: dict = {"tasks": {}, "iterative": entry.model is None}
        for ds in used:
            branch = _branch_for(entry, ds)
            if branch is None:
                se, per_sample_s = _bench_wmmse(ds, wmmse_options)
                flops = None
            else:
                se, per_sample_s = _bench_model(branch, ds, batch_size)
                flops = count_flops(branch)
            method["tasks"][ds.kind] = {
                "mean_sum_se": float(se.mean()),
                "median_sum_se": float(np.median(se)),
                "p05_sum_se": float(np.percentile(se, 5)),
                "seconds_per_sample": per_sample_s,
                "flops_per_sample": flops,
                "per_sample_sum_se": se.tolist(),
            }
        task_means = [t["mean_sum_se"] for t in method["tasks"].values()]
        method["mean_sum_se"] = float(np.mean(task_means))
        method["seconds_per_sample"] = float(
            np.sum([t["seconds_per_sample"] for t in method["tasks"].values()])
        )
        report["methods"][entry.name] = method

    if reference in report["methods"]:
        ref = report["methods"][reference]
        for name, method in report["methods"].items():
            ratios = {}
            for kind, task in method["tasks"].items():
                ref_task = ref["tasks"][kind]
                ratios[kind] = {
                    "se_ratio": task["mean_sum_se"] / ref_task["mean_sum_se"]
                    if ref_task["mean_sum_se"]
                    else None,
                    "time_ratio": task["seconds_per_sample"]
                    / ref_task["seconds_per_sample"],
                }
            method["versus_" + reference] = ratios
    return report


def strip_per_sample(report: dict) -> dict:
    """Copy of the report without the bulky per-sample lists (for JSON)."""
    out = {k: v for k, v in report.items() if k != "methods"}
    out["methods"] = {}
    for name, method in report["methods"].items():
        slim = {k: v for k, v in method.items() if k != "tasks"}
        slim["tasks"] = {
            kind: {k: v for k, v in task.items() if k != "per_sample_sum_se"}
            for kind, task in method["tasks"].items()
        }
        out["methods"][name] = slim
    return out
