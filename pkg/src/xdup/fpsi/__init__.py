from .common import (
    BatchingNotApplicable,
    FpsiParams,
    MatchMatrix,
    ParamsMismatch,
    RunReport,
    reconstruct_matches,
    threshold_table,
)
from .plain import otfpsi_run
from .shared import otfpsi_ss_run, share_set

__all__ = [
    "BatchingNotApplicable",
    "FpsiParams",
    "MatchMatrix",
    "ParamsMismatch",
    "RunReport",
    "otfpsi_run",
    "otfpsi_ss_run",
    "reconstruct_matches",
    "share_set",
    "threshold_table",
]
