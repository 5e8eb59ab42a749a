"""Rank-(L,L,1) block-term tensor decomposition.

Tensors are numpy arrays indexed ``[i, j, k]`` with ``k`` the streaming
(third) mode. Factor matrices follow the block layout of the C++ library:
block ``r`` of ``A`` and ``B`` is columns ``r*L:(r+1)*L``.
"""

from ._btd import (
    BatchConfig,
    BatchResult,
    Factors,
    NumericalError,
    OnlineConfig,
    OnlineSolver,
    RankEstimate,
    StepMetrics,
    SweepOrder,
    add_noise,
    btd_irls,
    estimate_ranks,
    generate,
    hungarian,
    khatri_rao,
    nmse_blocks,
    objective,
    prune,
    reconstruct,
    relative_error,
    unfold,
)

__all__ = [
    "BatchConfig",
    "BatchResult",
    "Factors",
    "NumericalError",
    "OnlineConfig",
    "OnlineSolver",
    "RankEstimate",
    "StepMetrics",
    "SweepOrder",
    "add_noise",
    "btd_irls",
    "estimate_ranks",
    "generate",
    "hungarian",
    "khatri_rao",
    "nmse_blocks",
    "objective",
    "prune",
    "reconstruct",
    "relative_error",
    "unfold",
]
