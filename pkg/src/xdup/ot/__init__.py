from .base import OtBatchSpec, OtError, OtRole, OtStats, RandomOtBackend, check_choices
from .dealer import DealerOT, LedgerEntry
from .group import GroupOT
from .session import OtReceiver, OtSender, expand_seeds

__all__ = [
    "DealerOT",
    "GroupOT",
    "LedgerEntry",
    "OtBatchSpec",
    "OtError",
    "OtReceiver",
    "OtRole",
    "OtSender",
    "OtStats",
    "RandomOtBackend",
    "check_choices",
    "expand_seeds",
]
