"""Checkpoint directories: a JSON manifest plus one binary file per matrix.

Binary matrix layout: magic ``OGM1``, u64 little-endian rows and cols, then a
row-major little-endian float64 payload. Vectors are stored as (n, 1).

Posterior scores are kept exactly: the collected layer-1 factors are stacked
side by side (``post_theta`` is U x S*K, ``post_phi`` is I x S*K) so that
``post_theta @ post_phi.T / S`` is the posterior-mean rate matrix.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import ordinal
from .dataio import IdMap, read_dense_triples, write_triples
from .deep import DeepState
from .errors import MissingCheckpoint, ParseError
from .ogfa import Hyper, OgfaState
from .sparse import OrdinalMatrix, build_ordinal

MAGIC = b"OGM1"
MANIFEST = "manifest.json"


def write_matrix(path, arr) -> None:
    arr = np.asarray(arr, dtype="<f8")
    if arr.ndim == 1:
        arr = arr[:, None]
    rows, cols = arr.shape
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<QQ", rows, cols))
        fh.write(np.ascontiguousarray(arr).tobytes(order="C"))


def read_matrix(path) -> np.ndarray:
    with open(path, "rb") as fh:
        head = fh.read(20)
        if len(head) < 20 or head[:4] != MAGIC:
            raise ParseError("not an OGM1 matrix file", path)
        rows, cols = struct.unpack("<QQ", head[4:])
        payload = fh.read()
    if len(payload) != rows * cols * 8:
        raise ParseError("truncated matrix payload", path)
    return np.frombuffer(payload, dtype="<f8").reshape(rows, cols).astype(np.float64)


@dataclass
class Checkpoint:
    manifest: dict
    state: object                 # OgfaState or DeepState (last full state)
    post_theta: np.ndarray
    post_phi: np.ndarray
    n_stacked: int
    phi_means: list
    Y_train: OrdinalMatrix
    users: IdMap
    items: IdMap

    @property
    def model(self) -> str:
        return self.manifest["model"]

    @property
    def V(self) -> int:
        return int(self.manifest["V"])

    def score_rows(self, users) -> np.ndarray:
        users = np.asarray(users, dtype=np.int64)
        return self.post_theta[users] @ self.post_phi.T / self.n_stacked


def _layer_files(state) -> list[dict]:
    if isinstance(state, OgfaState):
        state = DeepState.from_ogfa(state)
    return [
        {"theta": state.thetas[t], "phi": state.phis[t], "scales": state.scales[t],
         "rates": state.rates[t]}
        for t in range(state.T)
    ]


def save_checkpoint(path, model: str, state, collected, phi_means, Y_train: OrdinalMatrix,
                    users: IdMap, items: IdMap, extra: dict | None = None,
                    compact: bool = False) -> Path:
    """Write a checkpoint; ``collected`` is a list of layer-1 (theta, phi) pairs."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    if not collected:
        collected = [(state.theta, state.phi)]
    if compact:
        post_theta = np.mean([c[0] for c in collected], axis=0)
        post_phi = np.mean([c[1] for c in collected], axis=0)
        n_stack = 1
    else:
        post_theta = np.concatenate([c[0] for c in collected], axis=1)
        post_phi = np.concatenate([c[1] for c in collected], axis=1)
        n_stack = len(collected)
    layers = []
    for t, mats in enumerate(_layer_files(state), start=1):
        entry = {"layer": t, "K": int(mats["theta"].shape[1])}
        for name, arr in mats.items():
            fname = f"{name}_{t}.bin"
            write_matrix(path / fname, arr)
            entry[name] = fname
        fname = f"phi_mean_{t}.bin"
        write_matrix(path / fname, phi_means[t - 1])
        entry["phi_mean"] = fname
        layers.append(entry)
    write_matrix(path / "post_theta.bin", post_theta)
    write_matrix(path / "post_phi.bin", post_phi)
    write_triples(path / "train.tsv", Y_train.triples())
    users.write(path / "users.txt")
    items.write(path / "items.txt")
    manifest = {
        "format": "ordgraph-checkpoint",
        "version": 1,
        "model": model,
        "n_users": int(Y_train.n_users),
        "n_items": int(Y_train.n_items),
        "V": int(state.tm.V),
        "widths": [entry["K"] for entry in layers],
        "hyper": asdict(state.hyper),
        "sweep": int(state.sweep),
        "deltas": [float(d) for d in state.tm.delta],
        "n_collected": len(collected),
        "n_stacked": n_stack,
        "compact": bool(compact),
        "layers": layers,
        "posterior": {"theta": "post_theta.bin", "phi": "post_phi.bin"},
    }
    if extra:
        manifest["extra"] = extra
    with open(path / MANIFEST, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    if not (path / MANIFEST).is_file():
        raise MissingCheckpoint(f"no checkpoint manifest under {path}")
    with open(path / MANIFEST, encoding="utf-8") as fh:
        manifest = json.load(fh)
    hyper = Hyper(**manifest["hyper"])
    tm = ordinal.from_deltas(manifest["deltas"])
    thetas, phis, scales, rates, phi_means = [], [], [], [], []
    for entry in manifest["layers"]:
        thetas.append(read_matrix(path / entry["theta"]))
        phis.append(read_matrix(path / entry["phi"]))
        scales.append(read_matrix(path / entry["scales"])[:, 0])
        rates.append(read_matrix(path / entry["rates"])[:, 0])
        phi_means.append(read_matrix(path / entry["phi_mean"]))
    deep = DeepState(thetas, phis, scales, rates, tm, hyper, int(manifest["sweep"]))
    state = deep.to_ogfa() if manifest["model"] == "ogfa" else deep
    train = read_dense_triples(path / "train.tsv")
    Y = build_ordinal(train, manifest["n_users"], manifest["n_items"], manifest["V"])
    return Checkpoint(
        manifest=manifest,
        state=state,
        post_theta=read_matrix(path / manifest["posterior"]["theta"]),
        post_phi=read_matrix(path / manifest["posterior"]["phi"]),
        n_stacked=int(manifest["n_stacked"]),
        phi_means=phi_means,
        Y_train=Y,
        users=IdMap.read(path / "users.txt"),
        items=IdMap.read(path / "items.txt"),
    )


def checkpoint_digest(path) -> str:
    """SHA-256 over every file (relative name and bytes) in a checkpoint directory."""
    path = Path(path)
    h = hashlib.sha256()
    for f in sorted(p for p in path.rglob("*") if p.is_file()):
        h.update(f.relative_to(path).as_posix().encode())
        h.update(b"\0")
        h.update(f.read_bytes())
    return h.hexdigest()
