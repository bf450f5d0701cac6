from .client import Duplicate, QueryResult, TeamClient, decode_column, decode_matches, local_dedup
from .node import ComputeNode, NodeConfig, QueryFailed
from .store import ShareStore, StoreError

__all__ = [
    "ComputeNode",
    "Duplicate",
    "NodeConfig",
    "QueryFailed",
    "QueryResult",
    "ShareStore",
    "StoreError",
    "TeamClient",
    "decode_column",
    "decode_matches",
    "local_dedup",
]
