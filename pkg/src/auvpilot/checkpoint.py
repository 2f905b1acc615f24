"""Versioned policy checkpoint files.

Layout: one magic/version line, one JSON metadata line (architecture, sizes,
activation, format version, training config hash, tensor manifest), a blank
separator line, then the raw little-endian float32 parameter blocks in
manifest order. Parameters live in float32 in memory, so save -> load is
bit-identical.
"""

from __future__ import annotations

import json

import numpy as np

from .nets import ActorCritic

MAGIC = "AUVPILOT-POLICY"
FORMAT_VERSION = 1


def save_checkpoint(path, ac: ActorCritic, config_hash: str = "") -> None:
    named = ac.named_parameters()
    meta = {
        "format_version": FORMAT_VERSION,
        "obs_dim": ac.obs_dim,
        "act_dim": ac.act_dim,
        "hidden": list(ac.hidden),
        "activation": "elu",
        "config_hash": config_hash,
        "tensors": [{"name": n, "shape": list(p.shape)} for n, p in named],
    }
    with open(path, "wb") as f:
        f.write(f"{MAGIC} {FORMAT_VERSION}\n".encode())
        f.write((json.dumps(meta, sort_keys=True) + "\n\n").encode())
        for _, p in named:
            f.write(np.ascontiguousarray(p, dtype="<f4").tobytes())


def load_checkpoint(path):
    """Load a checkpoint; returns (ActorCritic, metadata dict).

    Raises ValueError on a bad magic line, unsupported version, or a tensor
    manifest inconsistent with the declared architecture.
    """
    with open(path, "rb") as f:
        blob = f.read()
    head, _, rest = blob.partition(b"\n")
    parts = head.decode(errors="replace").split()
    if len(parts) != 2 or parts[0] != MAGIC:
        raise ValueError("not a policy checkpoint (bad magic line)")
    if int(parts[1]) != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format version {parts[1]}")
    meta_line, _, rest = rest.partition(b"\n")
    meta = json.loads(meta_line.decode())
    blank, _, payload = rest.partition(b"\n")
    if blank != b"":
        raise ValueError("malformed checkpoint header (missing separator)")

    ac = ActorCritic(
        obs_dim=int(meta["obs_dim"]),
        act_dim=int(meta["act_dim"]),
        hidden=tuple(meta["hidden"]),
        rng=np.random.default_rng(0),
    )
    named = dict(ac.named_parameters())
    if [t["name"] for t in meta["tensors"]] != [n for n, _ in ac.named_parameters()]:
        raise ValueError("checkpoint tensor manifest does not match architecture")

    offset = 0
    for entry in meta["tensors"]:
        target = named[entry["name"]]
        if list(target.shape) != list(entry["shape"]):
            raise ValueError(f"tensor {entry['name']} has shape {entry['shape']}, expected {list(target.shape)}")
        count = int(np.prod(entry["shape"], dtype=np.int64)) if entry["shape"] else 1
        nbytes = count * 4
        if offset + nbytes > len(payload):
            raise ValueError("checkpoint payload truncated")
        target[...] = np.frombuffer(payload, dtype="<f4", count=count, offset=offset).reshape(target.shape)
        offset += nbytes
    if offset != len(payload):
        raise ValueError("checkpoint payload has trailing bytes")
    return ac, meta
