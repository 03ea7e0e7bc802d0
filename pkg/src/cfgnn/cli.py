"""Command-line entry point, a thin client over the service.

Subcommands: ``gen``, ``train``, ``sweep``, ``bench``, ``wmmse``, ``eval``
and ``serve``.  Every command resolves its configuration from defaults, an
optional JSON config file and explicit flags (flags win), validates it
against the request schema, runs it through the client, writes its result
files plus a ``<command>-run.json`` manifest echoing the fully resolved
request, and exits 0.  Failures print ``{"error": code, "message": ...}`` to
stderr and exit nonzero.

By default commands run in-process against ``--workspace``; ``--server URL``
sends them to a remote instance instead (artifacts then live server-side).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import httpx
import numpy as np
from pydantic import ValidationError

from . import __version__
from .bench import strip_per_sample
from .client import Client
from .errors import CfgnnError
from .metrics import write_cdf_csv
from .service import schemas
from .training import write_history_csv

DEFAULT_WORKSPACE = "cfgnn-workspace"


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    text = Path(path).read_text()
    config = json.loads(text)
    if not isinstance(config, dict):
        raise ValueError(f"config file {path} must hold a JSON object")
    return config


def _merge(config: dict, flags: dict) -> dict:
    """Config-file values first, then explicitly passed flags on top."""
    merged = dict(config)
    merged.update({k: v for k, v in flags.items() if v is not None})
    return merged


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2))


class _Run:
    """Collects output files and the run manifest for one command."""

    def __init__(self, command: str, out_dir: str, target: dict):
        self.command = command
        self.out = Path(out_dir or ".")
        self.out.mkdir(parents=True, exist_ok=True)
        self.target = target  # workspace or server coordinates
        self.outputs: list[str] = []

    def path(self, name: str) -> Path:
        path = self.out / name
        self.outputs.append(str(path))
        return path

    def finish(self, request: dict, extra: dict | None = None) -> None:
        manifest = {
            "command": self.command,
            "version": __version__,
            **self.target,
            "request": request,
            "outputs": self.outputs,
        }
        if extra:
            manifest.update(extra)
        _write_json(self.out / f"{self.command}-run.json", manifest)


def _cdf_name(method: str, kind: str) -> str:
    return f"cdf-{method}-{kind}.csv"


def cmd_gen(client: Client, args, config: dict, run: _Run) -> None:
    flags = {
        "name": args.name,
        "kind": args.kind,
        "samples": args.samples,
        "test_samples": args.test_samples,
        "seed": args.seed,
        "workers": args.workers,
    }
    merged = _merge(config, flags)
    merged.setdefault("name", "pc" if merged.get("kind", "power-control") == "power-control" else "prec")
    request = schemas.GenerateRequest(**merged).model_dump()
    response = client.generate(request)
    run.finish(request, {"datasets": response})
    train, test = response["train"], response.get("test")
    print(f"wrote dataset {train['name']}: {train['samples']} samples of shape "
          f"{tuple(train['sample_shape'])}")
    if test:
        print(f"wrote dataset {test['name']}: {test['samples']} samples")


def cmd_train(client: Client, args, config: dict, run: _Run) -> None:
    flags = {
        "train_dataset": args.train,
        "test_dataset": args.test,
        "checkpoint": args.name,
        "method": args.method,
        "tau": args.tau,
        "seed": args.seed,
    }
    merged = _merge(config, flags)
    merged.setdefault("checkpoint", "model")
    joint_flags = {
        "train_dataset": args.precoding_train,
        "test_dataset": args.precoding_test,
        "tau": args.precoding_tau,
        "alpha": args.alpha,
    }
    if any(v is not None for v in joint_flags.values()) or "joint" in merged:
        merged["joint"] = _merge(merged.get("joint") or {}, joint_flags)
    request = schemas.TrainRequest(**merged).model_dump()
    result = client.run_job("train", request)
    write_history_csv(run.path("history.csv"), result["history"])
    _write_json(run.path("history.json"), result["history"])
    summary = {k: v for k, v in result.items() if k != "history"}
    run.finish(request, {"result": summary})
    print(f"trained checkpoint {result['checkpoint']}: best test SE "
          f"{result['best_test_se']:.4f} bits/s/Hz at epoch {result['best_epoch']} "
          f"({result['seconds']:.1f}s, {result['steps']} steps)")
    for branch, stats in result.get("sparsity", {}).items():
        print(f"  {branch}: {stats['sparsity']:.1%} of links pruned")


def cmd_sweep(client: Client, args, config: dict, run: _Run) -> None:
    flags = {
        "train_dataset": args.train,
        "test_dataset": args.test,
        "seed": args.seed,
    }
    if args.taus is not None:
        flags["taus"] = [float(t) for t in args.taus.split(",") if t.strip()]
    merged = _merge(config, flags)
    request = schemas.SweepRequest(**merged).model_dump()
    result = client.run_job("sweep", request)
    rows = result["results"]
    with open(run.path("sweep.csv"), "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
    _write_json(run.path("sweep.json"), result)
    run.finish(request, {"selected_tau": result["selected_tau"]})
    print(f"swept {len(rows)} thresholds: best harmonic score "
          f"{result['selected_harmonic']:.4f} at tau={result['selected_tau']}")
    for row in rows:
        print(f"  tau={row['tau']:.2f} sparsity={row['sparsity']:.3f} "
              f"retention={row['retention']:.3f} harmonic={row['harmonic']:.4f}")


def cmd_bench(client: Client, args, config: dict, run: _Run) -> None:
    flags = {
        "datasets": args.datasets,
        "checkpoints": args.checkpoints,
        "sample_count": args.samples,
        "batch_size": args.batch_size,
    }
    if args.no_wmmse:
        flags["include_wmmse"] = False
    merged = _merge(config, flags)
    request = schemas.BenchRequest(**merged).model_dump()
    report = client.run_job("bench", request)
    for name, method in report["methods"].items():
        for kind, task in method["tasks"].items():
            write_cdf_csv(run.path(_cdf_name(name, kind)), np.asarray(task["per_sample_sum_se"]))
    _write_json(run.path("bench.json"), strip_per_sample(report))
    run.finish(request)
    print(f"benchmarked {len(report['methods'])} methods on "
          f"{', '.join(f'{k} ({n} samples)' for k, n in report['sample_counts'].items())}")
    for name, method in report["methods"].items():
        rate = method["mean_sum_se"]
        secs = method["seconds_per_sample"]
        print(f"  {name}: mean sum SE {rate:.3f} bits/s/Hz, {secs * 1e3:.2f} ms/sample")


def cmd_wmmse(client: Client, args, config: dict, run: _Run) -> None:
    flags = {"dataset": args.dataset, "sample_count": args.samples}
    merged = _merge(config, flags)
    if args.seed is not None:
        merged.setdefault("options", {})["seed"] = args.seed
    request = schemas.WmmseRequest(**merged).model_dump()
    result = client.wmmse(request)
    write_cdf_csv(run.path(_cdf_name("wmmse", result["kind"])),
                  np.asarray(result["per_sample_sum_se"]))
    slim = {k: v for k, v in result.items() if k != "per_sample_sum_se"}
    _write_json(run.path("wmmse.json"), slim)
    run.finish(request, {"result": slim})
    s = result["summary"]
    print(f"wmmse on {result['dataset']}: mean sum SE {s['mean']:.3f} bits/s/Hz "
          f"over {s['count']} samples ({result['seconds_per_sample'] * 1e3:.1f} ms/sample, "
          f"{result['mean_iterations']:.1f} iterations on average)")


def cmd_eval(client: Client, args, config: dict, run: _Run) -> None:
    flags = {
        "checkpoint": args.checkpoint,
        "dataset": args.dataset,
        "sample_count": args.samples,
        "batch_size": args.batch_size,
    }
    merged = _merge(config, flags)
    request = schemas.EvalRequest(**merged).model_dump()
    result = client.evaluate(request)
    write_cdf_csv(run.path(_cdf_name(result["checkpoint"], result["kind"])),
                  np.asarray(result["per_sample_sum_se"]))
    slim = {k: v for k, v in result.items() if k != "per_sample_sum_se"}
    _write_json(run.path("eval.json"), slim)
    run.finish(request, {"result": slim})
    s = result["summary"]
    print(f"evaluated {result['checkpoint']} on {result['dataset']}: mean sum SE "
          f"{s['mean']:.3f} bits/s/Hz over {s['count']} samples "
          f"({result['seconds_per_sample'] * 1e3:.2f} ms/sample)")


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(args.workspace), host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cfgnn",
        description="Cell-free MIMO power control and precoding: datasets, "
        "GNN training, WMMSE baseline and benchmarks.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, seed: bool = True) -> None:
        target = p.add_mutually_exclusive_group()
        target.add_argument("--workspace", default=DEFAULT_WORKSPACE,
                            help="artifact directory for in-process runs")
        target.add_argument("--server", help="URL of a running service")
        p.add_argument("--config", help="JSON file with request defaults")
        p.add_argument("--out", default=".", help="directory for result files")
        if seed:
            p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("gen", help="generate train/test channel datasets")
    common(p)
    p.add_argument("--kind", choices=["power-control", "precoding"], default=None)
    p.add_argument("--name", default=None, help="dataset base name")
    p.add_argument("--samples", type=int, default=None, help="training sample count")
    p.add_argument("--test-samples", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(handler=cmd_gen)

    p = sub.add_parser("train", help="train a model and save its checkpoint")
    common(p)
    p.add_argument("--train", default=None, help="training dataset name")
    p.add_argument("--test", default=None, help="test dataset name")
    p.add_argument("--name", default=None, help="checkpoint name")
    p.add_argument("--method", choices=["mdgnn", "sp-mdgnn", "a-mdgnn"], default=None)
    p.add_argument("--tau", type=float, default=None, help="pruning threshold")
    p.add_argument("--alpha", type=float, default=None,
                   help="power-control loss weight; enables joint training")
    p.add_argument("--precoding-train", default=None)
    p.add_argument("--precoding-test", default=None)
    p.add_argument("--precoding-tau", type=float, default=None)
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("sweep", help="retrain per threshold and score trade-offs")
    common(p)
    p.add_argument("--train", default=None)
    p.add_argument("--test", default=None)
    p.add_argument("--taus", default=None, help="comma-separated thresholds")
    p.set_defaults(handler=cmd_sweep)

    p = sub.add_parser("bench", help="compare methods on shared samples")
    common(p, seed=False)
    p.add_argument("--datasets", nargs="+", default=None)
    p.add_argument("--checkpoints", nargs="*", default=None)
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--no-wmmse", action="store_true")
    p.set_defaults(handler=cmd_bench)

    p = sub.add_parser("wmmse", help="run the iterative baseline on a dataset")
    common(p)
    p.add_argument("--dataset", default=None)
    p.add_argument("--samples", type=int, default=None)
    p.set_defaults(handler=cmd_wmmse)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    common(p, seed=False)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--dataset", default=None)
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--workspace", default=DEFAULT_WORKSPACE)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(handler=None)

    return parser


def _fail(code: str, message: str, exit_code: int) -> int:
    print(json.dumps({"error": code, "message": message}), file=sys.stderr)
    return exit_code


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "serve":
        return cmd_serve(args)
    try:
        config = _load_config(args.config)
    except (OSError, ValueError) as exc:
        return _fail("config-error", f"cannot read config file: {exc}", 2)
    target = {"server": args.server} if args.server else {"workspace": str(args.workspace)}
    run = _Run(args.command, args.out, target)
    try:
        with Client(workspace=None if args.server else args.workspace,
                    server=args.server) as client:
            args.handler(client, args, config, run)
    except ValidationError as exc:
        return _fail("request-invalid", str(exc), 2)
    except CfgnnError as exc:
        return _fail(exc.code, exc.message, 1)
    except httpx.HTTPError as exc:
        return _fail("connection-error", str(exc), 1)
    return 0


if __name__ == "__main__":
    sys.exit(main())
