"""In-process job queue: one daemon worker, strict FIFO order.

Long-running work (training, sweeps, benchmarks) is submitted as a job and
polled by id.  A single worker keeps runs sequential, so results stay
reproducible and the numerics never contend for the CPU.
"""

from __future__ import annotations

import queue
import threading
import traceback
from dataclasses import dataclass, field
from typing import Callable

from ..errors import CfgnnError, MissingArtifactError

QUEUED = "queued"
RUNNING = "running"
DONE = "done"
FAILED = "failed"


@dataclass
class Job:
    job_id: str
    kind: str
    request: dict
    run: Callable[[], dict]
    state: str = QUEUED
    result: dict | None = None
    error: dict | None = None
    progress: list = field(default_factory=list)

    def status(self) -> dict:
        return {
            "job_id": self.job_id,
            "kind": self.kind,
            "state": self.state,
            "request": self.request,
            "result": self.result,
            "error": self.error,
        }


class JobRegistry:
    """Submits jobs to a lazily started daemon worker and tracks them by id."""

    def __init__(self):
        self._jobs: dict[str, Job] = {}
        self._queue: queue.Queue[Job] = queue.Queue()
        self._lock = threading.Lock()
        self._worker: threading.Thread | None = None
        self._counter = 0

    def _ensure_worker(self) -> None:
        if self._worker is None or not self._worker.is_alive():
            self._worker = threading.Thread(target=self._drain, daemon=True)
            self._worker.start()

    def _drain(self) -> None:
        while True:
            job = self._queue.get()
            job.state = RUNNING
            try:
                job.result = job.run()
                job.state = DONE
            except CfgnnError as exc:
                job.error = {"error": exc.code, "message": str(exc)}
                job.state = FAILED
            except Exception as exc:  # noqa: BLE001 - fail the job, keep the worker
                job.error = {
                    "error": "internal-error",
                    "message": f"{type(exc).__name__}: {exc}",
                    "traceback": traceback.format_exc(),
                }
                job.state = FAILED
            finally:
                self._queue.task_done()

    def submit(self, kind: str, request: dict, run: Callable[[], dict]) -> Job:
        with self._lock:
            self._counter += 1
            job_id = f"{kind}-{self._counter:04d}"
            job = Job(job_id=job_id, kind=kind, request=request, run=run)
            self._jobs[job_id] = job
            self._ensure_worker()
        self._queue.put(job)
        return job

    def get(self, job_id: str) -> Job:
        job = self._jobs.get(job_id)
        if job is None:
            raise MissingArtifactError(f"no job named {job_id!r}")
        return job

    def list(self) -> list[dict]:
        with self._lock:
            jobs = list(self._jobs.values())
        return [
            {"job_id": j.job_id, "kind": j.kind, "state": j.state} for j in jobs
        ]

    def wait_all(self, timeout: float | None = None) -> None:
        """Block until the queue drains (used by tests and shutdown)."""
        if timeout is None:
            self._queue.join()
            return
        waiter = threading.Thread(target=self._queue.join, daemon=True)
        waiter.start()
        waiter.join(timeout)
