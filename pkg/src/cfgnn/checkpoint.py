"""Model checkpoints: a JSON manifest plus a flat float32 parameter blob.

The manifest records the architecture (task, link shape, width, depth,
variant, threshold), the loss weight for joint models, the training seed and
step, and the ordered list of parameter names and shapes.  ``params.bin``
concatenates the parameters in that order as little-endian float32, protected
by a CRC-32.
"""

from __future__ import annotations

import json
import zlib
from pathlib import Path

import numpy as np

from .errors import (
    ChecksumError,
    FormatVersionError,
    MissingArtifactError,
    TruncatedPayloadError,
)
from .model import GnnModel, JointModel, ModelSpec, init_model

FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.json"
PARAMS_NAME = "params.bin"


def _spec_to_json(spec: ModelSpec) -> dict:
    return {
        "task": spec.task,
        "link_shape": list(spec.link_shape),
        "hidden": spec.hidden,
        "num_layers": spec.num_layers,
        "variant": spec.variant,
        "tau": spec.tau,
        "score_dim": spec.score_dim,
    }


def _spec_from_json(obj: dict) -> ModelSpec:
    return ModelSpec(
        task=obj["task"],
        link_shape=tuple(obj["link_shape"]),
        hidden=int(obj["hidden"]),
        num_layers=int(obj["num_layers"]),
        variant=obj["variant"],
        tau=float(obj["tau"]),
        score_dim=int(obj.get("score_dim", 16)),
    )


def save_model(
    model: GnnModel | JointModel,
    directory: str | Path,
    seed: int = 0,
    training_step: int = 0,
) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    joint = isinstance(model, JointModel)
    params = model.parameters()
    payload = b"".join(
        np.ascontiguousarray(v, dtype="<f4").tobytes() for v in params.values()
    )
    manifest = {
        "format_version": FORMAT_VERSION,
        "kind": "joint" if joint else "single",
        "alpha": model.alpha if joint else None,
        "seed": seed,
        "training_step": training_step,
        "specs": (
            {"power": _spec_to_json(model.power.spec), "precoding": _spec_to_json(model.precoding.spec)}
            if joint
            else {"single": _spec_to_json(model.spec)}
        ),
        "params": [{"name": k, "shape": list(v.shape)} for k, v in params.items()],
        "dtype": "float32-le",
        "checksum_crc32": zlib.crc32(payload),
    }
    (directory / PARAMS_NAME).write_bytes(payload)
    (directory / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2))
    return directory


def _fill_parameters(model: GnnModel | JointModel, manifest: dict, payload: bytes) -> None:
    params = model.parameters()
    declared = manifest["params"]
    names = [entry["name"] for entry in declared]
    if names != list(params.keys()):
        raise FormatVersionError(
            "checkpoint parameter list does not match the declared architecture"
        )
    offset = 0
    for entry in declared:
        shape = tuple(int(s) for s in entry["shape"])
        target = params[entry["name"]]
        if target.shape != shape:
            raise FormatVersionError(
                f"parameter {entry['name']} has shape {shape}, expected {target.shape}"
            )
        nbytes = int(np.prod(shape)) * 4
        chunk = payload[offset : offset + nbytes]
        target[...] = np.frombuffer(chunk, dtype="<f4").reshape(shape).astype(np.float64)
        offset += nbytes


def load_model(directory: str | Path) -> tuple[GnnModel | JointModel, dict]:
    """Load a checkpoint; returns (model, manifest)."""
    directory = Path(directory)
    manifest_path = directory / MANIFEST_NAME
    params_path = directory / PARAMS_NAME
    if not manifest_path.is_file() or not params_path.is_file():
        raise MissingArtifactError(f"no checkpoint at {directory}")
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("format_version") != FORMAT_VERSION:
        raise FormatVersionError(
            f"unsupported checkpoint format version {manifest.get('format_version')!r}"
        )
    payload = params_path.read_bytes()
    expected = sum(int(np.prod(e["shape"])) * 4 for e in manifest["params"])
    if len(payload) != expected:
        raise TruncatedPayloadError(
            f"parameter blob is {len(payload)} bytes, manifest implies {expected}"
        )
    checksum = zlib.crc32(payload)
    if checksum != manifest["checksum_crc32"]:
        raise ChecksumError(
            f"parameter checksum {checksum} does not match manifest "
            f"{manifest['checksum_crc32']}"
        )
    if manifest["kind"] == "joint":
        model: GnnModel | JointModel = JointModel(
            power=init_model(_spec_from_json(manifest["specs"]["power"]), seed=0),
            precoding=init_model(_spec_from_json(manifest["specs"]["precoding"]), seed=0),
            alpha=float(manifest["alpha"]),
        )
    elif manifest["kind"] == "single":
        model = init_model(_spec_from_json(manifest["specs"]["single"]), seed=0)
    else:
        raise FormatVersionError(f"unknown checkpoint kind {manifest['kind']!r}")
    _fill_parameters(model, manifest, payload)
    return model, manifest
