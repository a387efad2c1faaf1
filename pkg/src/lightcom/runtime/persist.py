"""Cluster state kept between command-line invocations.

Sealed data lives in the UnS file.  Everything that would, in a real
deployment, sit inside the enclaves or with the request user (key shares,
the user's private key, id kinds) goes to a JSON sidecar next to it.  The
sidecar is a simulation convenience: it holds secrets in the clear.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

from .. import pcdd
from ..errors import ConfigurationError
from .cluster import Cluster, RequestUser, UserContext, derive_rng
from .store import UnS

STATE_VERSION = 1


def state_path(uns_path) -> Path:
    p = Path(uns_path)
    return p.with_name(p.name + ".state.json")


def save_state(cluster: Cluster, users: dict[str, RequestUser], uns_path) -> Path:
    out = {
        "version": STATE_VERSION,
        "parties": cluster.P,
        "seed": cluster.seed,
        "scheduler": cluster.scheduler,
        "generation": cluster.generation,
        "default_user": cluster.default_user,
        "users": {},
    }
    for uid, uctx in cluster.users.items():
        shares = [p.key_shares[uid] for p in cluster.parties]
        ru = users.get(uid)
        key = pcdd.serialize_key(uctx.pk, ru.sk if ru else None, shares)
        out["users"][uid] = {"key": key.hex(), "kinds": uctx.kinds, "counter": uctx.counter}
    path = state_path(uns_path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    with os.fdopen(fd, "w") as fh:
        json.dump(out, fh, indent=1, sort_keys=True)
    os.replace(tmp, path)
    cluster.uns.save()
    return path


def load_state(uns_path, scheduler: str | None = None) -> tuple[Cluster, dict[str, RequestUser]]:
    """Rebuild a cluster; parties move to the next deterministic randomness generation."""
    path = state_path(uns_path)
    if not path.exists():
        raise ConfigurationError(f"no cluster state at {path}; run keygen first")
    data = json.loads(path.read_text())
    if data.get("version") != STATE_VERSION:
        raise ConfigurationError("unsupported state file version")
    cluster = Cluster(data["parties"], seed=data["seed"], scheduler=scheduler or data["scheduler"],
                      uns=UnS(uns_path))
    generation = data["generation"] + 1
    cluster.reseed(generation)
    users = {}
    for uid, entry in data["users"].items():
        rec = pcdd.deserialize_key(bytes.fromhex(entry["key"]))
        if len(rec.shares) != cluster.P:
            raise ConfigurationError(f"user {uid!r} has {len(rec.shares)} key shares for {cluster.P} parties")
        uctx = UserContext(uid, rec.pk, dict(entry["kinds"]), counter=entry["counter"])
        cluster.users[uid] = uctx
        for party, ks in zip(cluster.parties, rec.shares):
            party.key_shares[uid] = ks
        if rec.sk is not None:
            users[uid] = RequestUser(uid, rec.pk, rec.sk, cluster.P,
                                     derive_rng(data["seed"], "ru-rng", uid, generation))
    cluster.default_user = data["default_user"]
    return cluster, users
