"""Synchronous client for the service, in-process by default.

Without a server URL the client mounts the application directly over an ASGI
transport, so commands run in this process against a local workspace with no
socket involved.  With a URL it speaks plain HTTP to a remote instance.  Both
paths expose the same blocking call surface, which keeps the CLI a thin shell
around request/response dictionaries.
"""

from __future__ import annotations

import asyncio
import time
from pathlib import Path

import httpx

from .errors import CfgnnError, JobError

POLL_SECONDS = 0.05


class RemoteError(CfgnnError):
    """An error payload returned by the service, re-raised client-side."""

    code = "remote-error"

    def __init__(self, code: str, message: str, status: int):
        super().__init__(message)
        self.code = code
        self.status = status


def _raise_for(status: int, payload) -> None:
    if status < 400:
        return
    if isinstance(payload, dict) and "error" in payload:
        raise RemoteError(payload["error"], payload.get("message", ""), status)
    raise RemoteError("request-invalid", str(payload), status)


class Client:
    """Blocking facade over the HTTP API."""

    def __init__(self, workspace: str | Path | None = None, server: str | None = None):
        if (workspace is None) == (server is None):
            raise JobError("pass exactly one of workspace (in-process) or server (remote)")
        self.workspace = Path(workspace) if workspace is not None else None
        if server is not None:
            self._mode = "remote"
            self._sync = httpx.Client(base_url=server.rstrip("/"), timeout=None)
        else:
            from .service import create_app

            self._mode = "in-process"
            self._loop = asyncio.new_event_loop()
            transport = httpx.ASGITransport(app=create_app(workspace))
            self._async = httpx.AsyncClient(
                transport=transport, base_url="http://cfgnn.local", timeout=None
            )

    def close(self) -> None:
        if self._mode == "remote":
            self._sync.close()
        else:
            self._loop.run_until_complete(self._async.aclose())
            self._loop.close()

    def __enter__(self) -> "Client":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()

    def _request(self, method: str, path: str, body: dict | None = None) -> dict:
        if self._mode == "remote":
            response = self._sync.request(method, path, json=body)
        else:
            response = self._loop.run_until_complete(
                self._async.request(method, path, json=body)
            )
        try:
            payload = response.json()
        except ValueError:
            payload = {"raw": response.text}
        _raise_for(response.status_code, payload)
        return payload

    # Direct endpoints.

    def health(self) -> dict:
        return self._request("GET", "/health")

    def generate(self, request: dict) -> dict:
        return self._request("POST", "/datasets/generate", request)

    def datasets(self) -> list[dict]:
        return self._request("GET", "/datasets")["datasets"]

    def checkpoints(self) -> list[dict]:
        return self._request("GET", "/checkpoints")["checkpoints"]

    def evaluate(self, request: dict) -> dict:
        return self._request("POST", "/eval", request)

    def wmmse(self, request: dict) -> dict:
        return self._request("POST", "/wmmse", request)

    # Jobs.

    def submit(self, kind: str, request: dict) -> str:
        return self._request("POST", f"/jobs/{kind}", request)["job_id"]

    def job(self, job_id: str) -> dict:
        return self._request("GET", f"/jobs/{job_id}")

    def wait(self, job_id: str, progress=None) -> dict:
        """Poll until the job settles; returns its result or raises its error."""
        while True:
            status = self.job(job_id)
            if progress is not None:
                progress(status)
            if status["state"] == "done":
                return status["result"]
            if status["state"] == "failed":
                error = status["error"] or {}
                raise RemoteError(
                    error.get("error", "job-failed"), error.get("message", ""), 500
                )
            time.sleep(POLL_SECONDS)

    def run_job(self, kind: str, request: dict, progress=None) -> dict:
        return self.wait(self.submit(kind, request), progress)
