"""HTTP service over the core library.

``create_app(workspace)`` builds a FastAPI application whose artifacts live
under one workspace directory:

* ``datasets/<name>/``: channel datasets (manifest + binary payload),
* ``checkpoints/<name>/``: trained models (manifest + parameter blob).

Quick synchronous work (generation, evaluation, direct solves) answers in the
request; training, sweeps and benchmarks run as FIFO jobs polled by id.
Domain errors map to JSON ``{"error": code, "message": ...}`` responses.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..bench import BenchEntry, run_bench
from ..checkpoint import load_model, save_model
from ..datasets import (
    MANIFEST_NAME,
    PAYLOAD_NAME,
    POWER_CONTROL,
    Dataset,
    generate_power_control,
    generate_precoding,
    read_dataset,
    write_dataset,
)
from ..errors import CfgnnError, ConfigError, MissingArtifactError
from ..metrics import batch_sum_se, power_violations, summarize
from ..model import JointModel, ModelSpec, count_flops, infer, init_joint, init_model
from ..training import TrainConfig, time_inference, train, sweep_threshold, write_history_csv
from ..wmmse import WmmseOptions, wmmse_solve
from . import schemas
from .jobs import JobRegistry

HTTP_STATUS = {"missing-artifact": 404}


class Workspace:
    """Filesystem layout shared by every endpoint."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.datasets = self.root / "datasets"
        self.checkpoints = self.root / "checkpoints"
        for directory in (self.datasets, self.checkpoints):
            directory.mkdir(parents=True, exist_ok=True)

    def dataset(self, name: str) -> Dataset:
        return read_dataset(self.datasets / name)

    def dataset_summary(self, name: str) -> dict:
        path = self.datasets / name
        manifest_path = path / MANIFEST_NAME
        if not manifest_path.is_file():
            raise MissingArtifactError(f"no dataset named {name!r}")
        manifest = json.loads(manifest_path.read_text())
        return {
            "name": name,
            "kind": manifest["kind"],
            "samples": manifest["sample_count"],
            "seed": manifest["seed"],
            "sample_shape": manifest["sample_shape"],
            "size_bytes": (path / PAYLOAD_NAME).stat().st_size,
        }

    def list_datasets(self) -> list[dict]:
        if not self.datasets.is_dir():
            return []
        return [
            self.dataset_summary(p.name)
            for p in sorted(self.datasets.iterdir())
            if (p / MANIFEST_NAME).is_file()
        ]

    def model(self, name: str):
        return load_model(self.checkpoints / name)

    def list_checkpoints(self) -> list[dict]:
        out = []
        for path in sorted(self.checkpoints.iterdir()) if self.checkpoints.is_dir() else []:
            manifest_path = path / "manifest.json"
            if not manifest_path.is_file():
                continue
            manifest = json.loads(manifest_path.read_text())
            out.append(
                {
                    "name": path.name,
                    "kind": manifest["kind"],
                    "seed": manifest["seed"],
                    "training_step": manifest["training_step"],
                }
            )
        return out


def _spec_for(
    dataset: Dataset, method: str, tau: float, settings: schemas.ModelSettings
) -> ModelSpec:
    task = "power-control" if dataset.kind == POWER_CONTROL else "precoding"
    return ModelSpec(
        task=task,
        link_shape=dataset.sample_shape,
        hidden=settings.hidden,
        num_layers=settings.num_layers,
        variant=method,
        # The dense variants take no threshold; only the sparsified one does.
        tau=tau if method == "sp-mdgnn" else 0.0,
        score_dim=settings.score_dim,
    )


def _require_kind(dataset: Dataset, kind: str, name: str) -> Dataset:
    if dataset.kind != kind:
        raise ConfigError(f"dataset {name!r} holds {dataset.kind}, expected {kind}")
    return dataset


def _train_config(settings: schemas.TrainingSettings, seed: int) -> TrainConfig:
    return TrainConfig(seed=seed, **settings.model_dump())


def _sparsity_report(model) -> dict:
    out = {}
    branches = (
        {"power": model.power, "precoding": model.precoding}
        if isinstance(model, JointModel)
        else {"model": model}
    )
    for label, branch in branches.items():
        if branch.sparse is not None:
            retained = branch.sparse.retained_fraction()
            out[label] = {"retained_fraction": retained, "sparsity": 1.0 - retained}
    return out


def _run_train(workspace: Workspace, req: schemas.TrainRequest) -> dict:
    train_ds = workspace.dataset(req.train_dataset)
    test_ds = workspace.dataset(req.test_dataset)
    if req.joint is None:
        spec = _spec_for(train_ds, req.method, req.tau, req.model)
        model = init_model(spec, req.seed)
        train_pair = (train_ds, test_ds)
    else:
        pc_train = _require_kind(train_ds, POWER_CONTROL, req.train_dataset)
        pc_test = _require_kind(test_ds, POWER_CONTROL, req.test_dataset)
        pr_train = _require_kind(
            workspace.dataset(req.joint.train_dataset), "precoding", req.joint.train_dataset
        )
        pr_test = _require_kind(
            workspace.dataset(req.joint.test_dataset), "precoding", req.joint.test_dataset
        )
        spec_pc = _spec_for(pc_train, req.method, req.tau, req.model)
        spec_pr = _spec_for(pr_train, req.method, req.joint.tau, req.model)
        model = init_joint(spec_pc, spec_pr, req.joint.alpha, req.seed)
        train_pair = ((pc_train, pr_train), (pc_test, pr_test))

    result = train(model, train_pair[0], train_pair[1], _train_config(req.training, req.seed))
    directory = save_model(
        model, workspace.checkpoints / req.checkpoint, seed=req.seed,
        training_step=result.steps,
    )
    write_history_csv(directory / "history.csv", result.history)
    report = {
        "checkpoint": req.checkpoint,
        "best_epoch": result.best_epoch,
        "best_test_se": result.best_test_se,
        "epochs_run": len(result.history),
        "steps": result.steps,
        "seconds": result.seconds,
        "history": result.history,
        "sparsity": _sparsity_report(model),
    }
    if not isinstance(model, JointModel):
        report["flops_per_sample"] = count_flops(model)
    return report


def _run_sweep(workspace: Workspace, req: schemas.SweepRequest) -> dict:
    train_ds = workspace.dataset(req.train_dataset)
    test_ds = workspace.dataset(req.test_dataset)
    template = _spec_for(train_ds, "sp-mdgnn", 0.0, req.model)
    results, dense = sweep_threshold(
        template, train_ds, test_ds, req.taus, _train_config(req.training, req.seed)
    )
    rows = [asdict(r) for r in results]
    best = max(rows, key=lambda r: r["harmonic"])
    return {
        "dense": dense,
        "results": rows,
        "selected_tau": best["tau"],
        "selected_harmonic": best["harmonic"],
    }


def _run_bench(workspace: Workspace, req: schemas.BenchRequest) -> dict:
    datasets = [workspace.dataset(name) for name in req.datasets]
    entries = []
    if req.include_wmmse:
        entries.append(BenchEntry(name="wmmse"))
    for name in req.checkpoints:
        model, _ = workspace.model(name)
        entries.append(BenchEntry(name=name, model=model))
    model_names = [e.name for e in entries if e.model is not None]
    reference = "mdgnn" if "mdgnn" in model_names else (model_names[0] if model_names else "mdgnn")
    return run_bench(
        entries,
        datasets,
        sample_count=req.sample_count,
        wmmse_options=WmmseOptions(**req.wmmse.model_dump()),
        batch_size=req.batch_size,
        reference=reference,
    )


def _run_eval(workspace: Workspace, req: schemas.EvalRequest) -> dict:
    model, manifest = workspace.model(req.checkpoint)
    dataset = workspace.dataset(req.dataset)
    if req.sample_count:
        dataset = dataset.subset(min(req.sample_count, dataset.sample_count))
    branch = _branch(model, dataset, req.checkpoint)
    gains = dataset.gains_f64()
    p_max, noise = dataset.config.max_power_mw, dataset.config.noise_power_mw
    chunks = [
        batch_sum_se(gains[lo : lo + req.batch_size],
                     infer(branch, gains[lo : lo + req.batch_size], p_max), noise)
        for lo in range(0, gains.shape[0], req.batch_size)
    ]
    per_sample = np.concatenate(chunks)
    return {
        "checkpoint": req.checkpoint,
        "dataset": req.dataset,
        "kind": dataset.kind,
        "summary": summarize(per_sample),
        "per_sample_sum_se": per_sample.tolist(),
        "seconds_per_sample": time_inference(branch, gains, p_max, req.batch_size),
        "flops_per_sample": count_flops(branch),
        "sparsity": _sparsity_report(branch),
        "training_step": manifest["training_step"],
    }


def _branch(model, dataset: Dataset, name: str):
    if isinstance(model, JointModel):
        return model.power if dataset.kind == POWER_CONTROL else model.precoding
    task = "power-control" if dataset.kind == POWER_CONTROL else "precoding"
    if model.spec.task != task:
        raise ConfigError(f"checkpoint {name!r} solves {model.spec.task}, dataset holds {dataset.kind}")
    return model


def _run_wmmse(workspace: Workspace, req: schemas.WmmseRequest) -> dict:
    dataset = workspace.dataset(req.dataset)
    if req.sample_count:
        dataset = dataset.subset(min(req.sample_count, dataset.sample_count))
    options = WmmseOptions(**req.options.model_dump())
    gains = dataset.gains_f64()
    p_max, noise = dataset.config.max_power_mw, dataset.config.noise_power_mw
    per_sample = np.empty(gains.shape[0])
    iterations = np.empty(gains.shape[0], dtype=int)
    infeasible = 0
    start = time.perf_counter()
    for i in range(gains.shape[0]):
        precoder, trace = wmmse_solve(gains[i], p_max, noise, options)
        per_sample[i] = trace[-1]
        iterations[i] = len(trace) - 1
        infeasible += int(power_violations(precoder.gains, p_max).any())
    elapsed = time.perf_counter() - start
    return {
        "dataset": req.dataset,
        "kind": dataset.kind,
        "summary": summarize(per_sample),
        "per_sample_sum_se": per_sample.tolist(),
        "mean_iterations": float(iterations.mean()),
        "infeasible_solutions": infeasible,
        "seconds_per_sample": elapsed / gains.shape[0],
        "iterative": True,
    }


def create_app(workspace: str | Path) -> FastAPI:
    ws = Workspace(workspace)
    registry = JobRegistry()
    app = FastAPI(title="cfgnn", version=__version__)
    app.state.workspace = ws
    app.state.jobs = registry

    @app.exception_handler(CfgnnError)
    async def _domain_error(_: Request, exc: CfgnnError):
        status = HTTP_STATUS.get(exc.code, 400)
        return JSONResponse(status_code=status, content={"error": exc.code, "message": str(exc)})

    @app.get("/health", response_model=schemas.HealthResponse)
    def health():
        return {"status": "ok", "version": __version__}

    @app.post("/datasets/generate", response_model=schemas.GenerateResponse)
    def generate(req: schemas.GenerateRequest):
        config = schemas.scenario_config(req.kind, req.scenario)
        total = req.samples + req.test_samples
        if req.kind == POWER_CONTROL:
            full = generate_power_control(config, total, req.seed, req.workers)
        else:
            full = generate_precoding(config, total, req.seed, req.workers)
        if req.test_samples:
            train_ds, test_ds = full.split(req.samples)
        else:
            train_ds, test_ds = full, None
        write_dataset(train_ds, ws.datasets / f"{req.name}-train")
        response = {"train": ws.dataset_summary(f"{req.name}-train"), "test": None}
        if test_ds is not None:
            write_dataset(test_ds, ws.datasets / f"{req.name}-test")
            response["test"] = ws.dataset_summary(f"{req.name}-test")
        return response

    @app.get("/datasets")
    def list_datasets():
        return {"datasets": ws.list_datasets()}

    @app.get("/checkpoints")
    def list_checkpoints():
        return {"checkpoints": ws.list_checkpoints()}

    @app.post("/jobs/train", response_model=schemas.JobSubmitted, status_code=202)
    def submit_train(req: schemas.TrainRequest):
        job = registry.submit("train", req.model_dump(), lambda: _run_train(ws, req))
        return {"job_id": job.job_id, "kind": job.kind, "state": job.state}

    @app.post("/jobs/sweep", response_model=schemas.JobSubmitted, status_code=202)
    def submit_sweep(req: schemas.SweepRequest):
        job = registry.submit("sweep", req.model_dump(), lambda: _run_sweep(ws, req))
        return {"job_id": job.job_id, "kind": job.kind, "state": job.state}

    @app.post("/jobs/bench", response_model=schemas.JobSubmitted, status_code=202)
    def submit_bench(req: schemas.BenchRequest):
        job = registry.submit("bench", req.model_dump(), lambda: _run_bench(ws, req))
        return {"job_id": job.job_id, "kind": job.kind, "state": job.state}

    @app.get("/jobs")
    def list_jobs():
        return {"jobs": registry.list()}

    @app.get("/jobs/{job_id}", response_model=schemas.JobStatus)
    def job_status(job_id: str):
        return registry.get(job_id).status()

    @app.post("/eval")
    def evaluate(req: schemas.EvalRequest):
        return _run_eval(ws, req)

    @app.post("/wmmse")
    def wmmse(req: schemas.WmmseRequest):
        return _run_wmmse(ws, req)

    return app
