"""``.srj`` artifacts: JSON envelopes around reservoirs, readouts and
trajectories.

Doubles are written with Python's shortest round-trip ``repr`` so a reload
is bitwise identical. The envelope carries a 64-bit blake2b checksum of the
canonical payload text.
"""

import hashlib
import json
import os
import tempfile
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Dict, Final, Union

import numpy as np

from strange_reservoir.embedding.reservoir import (
    RHO_TOL,
    ReservoirSystem,
    StateTrajectory,
)
from strange_reservoir.learning.readout import (
    FeatureMap,
    MlpModel,
    RidgeModel,
    TrainingHistory,
)
from strange_reservoir.numerics.linalg import (
    SpectralRadiusNotConverged,
    spectral_radius,
)

FORMAT_VERSION: Final = 1
EXTENSION: Final = ".srj"
RHO_RELOAD_TOL: Final = 1e-9

Artifact = Union[ReservoirSystem, RidgeModel, MlpModel, StateTrajectory]
Payload = Dict[str, Any]


class PersistenceError(ValueError):
    """Base class of artifact read errors."""


class VersionMismatchError(PersistenceError):
    pass


class ChecksumMismatchError(PersistenceError):
    pass


class InvariantViolationError(PersistenceError):
    """Raised when a decoded artifact fails the checks of its type."""


class ArtifactKind(str, Enum):
    RESERVOIR = "reservoir"
    RIDGE = "ridge"
    MLP = "mlp"
    TRAJECTORY = "trajectory"


def canonical_json(payload: Payload) -> str:
    return json.dumps(
        payload, sort_keys=True, separators=(",", ":"), allow_nan=False
    )


def checksum(payload: Payload) -> str:
    digest = hashlib.blake2b(
        canonical_json(payload).encode("utf-8"), digest_size=8
    )
    return digest.hexdigest()


def _encode_reservoir(res: ReservoirSystem) -> Payload:
    return {
        "a": res.a.tolist(),
        "c": res.c.tolist(),
        "rho_hat": res.rho_hat,
        "seed": res.seed,
        "recipe": res.recipe.value,
        "scale": res.scale,
    }


def _decode_reservoir(p: Payload) -> ReservoirSystem:
    res = ReservoirSystem(
        a=np.array(p["a"], dtype=float),
        c=np.array(p["c"], dtype=float),
        rho_hat=float(p["rho_hat"]),
        seed=p["seed"],
        recipe=p["recipe"],
        scale=p["scale"],
    )
    try:
        rho = spectral_radius(res.a, RHO_TOL)
    except SpectralRadiusNotConverged as e:
        raise InvariantViolationError(str(e)) from e
    if abs(rho - res.rho_hat) > RHO_RELOAD_TOL:
        raise InvariantViolationError(
            f"stored spectral radius {res.rho_hat!r} but A has {rho!r}"
        )
    return res


def _encode_ridge(model: RidgeModel) -> Payload:
    fm = model.feature_map
    return {
        "feature_map": {
            "kind": fm.kind.value,
            "input_dim": fm.input_dim,
            "degree": fm.degree,
        },
        "weights": model.weights.tolist(),
        "lam": model.lam,
        "train_mse": model.train_mse,
    }


def _decode_ridge(p: Payload) -> RidgeModel:
    return RidgeModel(
        feature_map=FeatureMap(**p["feature_map"]),
        weights=np.array(p["weights"], dtype=float),
        lam=float(p["lam"]),
        train_mse=float(p["train_mse"]),
    )


def _encode_mlp(model: MlpModel) -> Payload:
    history = None
    if model.history is not None:
        h = model.history
        history = {
            "epoch": list(h.epoch),
            "stage": list(h.stage),
            "train_mse": list(h.train_mse),
            "val_mse": list(h.val_mse),
        }
    return {
        "layer_sizes": list(model.layer_sizes),
        "weights": [w.tolist() for w in model.weights],
        "biases": [b.tolist() for b in model.biases],
        "z_min": model.z_min,
        "z_max": model.z_max,
        "history": history,
    }


def _decode_mlp(p: Payload) -> MlpModel:
    history = p.get("history")
    return MlpModel(
        layer_sizes=p["layer_sizes"],
        weights=[np.array(w, dtype=float) for w in p["weights"]],
        biases=[np.array(b, dtype=float) for b in p["biases"]],
        z_min=float(p["z_min"]),
        z_max=float(p["z_max"]),
        history=None if history is None else TrainingHistory(**history),
    )


def _encode_trajectory(traj: StateTrajectory) -> Payload:
    return {
        "states": traj.states.tolist(),
        "inputs": traj.inputs.tolist(),
        "washout_len": traj.washout_len,
        "dt": traj.dt,
        "x0": None if traj.x0 is None else traj.x0.tolist(),
    }


def _decode_trajectory(p: Payload) -> StateTrajectory:
    x0 = p["x0"]
    return StateTrajectory(
        states=np.array(p["states"], dtype=float),
        inputs=np.array(p["inputs"], dtype=float),
        washout_len=int(p["washout_len"]),
        dt=float(p["dt"]),
        x0=None if x0 is None else np.array(x0, dtype=float),
    )


_ENCODERS: Final = {
    ReservoirSystem: (ArtifactKind.RESERVOIR, _encode_reservoir),
    RidgeModel: (ArtifactKind.RIDGE, _encode_ridge),
    MlpModel: (ArtifactKind.MLP, _encode_mlp),
    StateTrajectory: (ArtifactKind.TRAJECTORY, _encode_trajectory),
}

_DECODERS: Final[Dict[ArtifactKind, Callable[[Payload], Artifact]]] = {
    ArtifactKind.RESERVOIR: _decode_reservoir,
    ArtifactKind.RIDGE: _decode_ridge,
    ArtifactKind.MLP: _decode_mlp,
    ArtifactKind.TRAJECTORY: _decode_trajectory,
}


def to_envelope(obj: Artifact) -> Payload:
    try:
        kind, encode = _ENCODERS[type(obj)]
    except KeyError:
        raise TypeError(f"cannot persist {type(obj).__name__}") from None
    payload = encode(obj)
    return {
        "format_version": FORMAT_VERSION,
        "kind": kind.value,
        "payload": payload,
        "checksum": checksum(payload),
    }


def from_envelope(envelope: Payload) -> Artifact:
    missing = {"format_version", "kind", "payload", "checksum"} - set(
        envelope
    )
    if missing:
        raise PersistenceError(f"envelope lacks {sorted(missing)}")
    version = envelope["format_version"]
    if version != FORMAT_VERSION:
        raise VersionMismatchError(
            f"format version {version!r} is not supported"
            f" (expected {FORMAT_VERSION})"
        )
    try:
        kind = ArtifactKind(envelope["kind"])
    except ValueError:
        raise PersistenceError(
            f"unknown artifact kind {envelope['kind']!r}"
        ) from None
    payload = envelope["payload"]
    if checksum(payload) != envelope["checksum"]:
        raise ChecksumMismatchError(
            f"checksum {envelope['checksum']!r} does not match the payload"
        )
    try:
        return _DECODERS[kind](payload)
    except PersistenceError:
        raise
    except (KeyError, TypeError, ValueError) as e:
        raise InvariantViolationError(
            f"invalid {kind.value} payload: {e}"
        ) from e


def save(obj: Artifact, path: Union[str, Path]) -> Path:
    """Write ``obj`` atomically; ``.srj`` is appended when missing."""
    path = Path(path)
    if path.suffix != EXTENSION:
        path = path.with_name(path.name + EXTENSION)
    text = json.dumps(to_envelope(obj), indent=1, allow_nan=False)
    path.parent.mkdir(parents=True, exist_ok=True)
    with tempfile.NamedTemporaryFile(
        mode="w",
        prefix="srj_",
        suffix=".tmp",
        dir=path.parent,
        delete=False,
        encoding="utf-8",
    ) as f:
        f.write(text)
        f.flush()
        os.fsync(f.fileno())
    os.replace(f.name, path)
    return path


def load(path: Union[str, Path]) -> Artifact:
    path = Path(path)
    try:
        envelope = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise PersistenceError(f"{path} is not valid JSON: {e}") from e
    if not isinstance(envelope, dict):
        raise PersistenceError(f"{path} does not hold an artifact envelope")
    return from_envelope(envelope)
