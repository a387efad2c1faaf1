"""Simulated enclave parties, channels, untrusted storage and orchestration."""

from .cluster import (
    Cluster,
    RequestUser,
    SelectionVector,
    Snapshot,
    UserContext,
    compromise,
    derive_rng,
    init_system,
    refresh_data_shares,
    refresh_key_shares,
    register_user,
    retrieve,
    sdd,
    seal,
    unseal,
    upload,
)
from .context import Consumable, PartyContext, Pool
from .network import RU, Message
from .store import SealedRecord, UnS, decode_id, encode_id

__all__ = [
    "Cluster", "Consumable", "Message", "PartyContext", "Pool", "RU", "RequestUser",
    "SealedRecord", "SelectionVector", "Snapshot", "UnS", "UserContext", "compromise",
    "decode_id", "derive_rng", "encode_id", "init_system", "refresh_data_shares",
    "refresh_key_shares", "register_user", "retrieve", "sdd", "seal", "unseal", "upload",
]
