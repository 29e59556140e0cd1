import logging
from dataclasses import dataclass

import numpy as np

from src.core.errors import ExposureOverflowError, InputDataError
from src.core.graph import InfluenceGraph, SourceVector

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ExposureTensor:
    """Row n-1 holds the n-hop log-exposure s^(n)_i(Z) for every vertex."""

    s: np.ndarray

    def __post_init__(self):
        if self.s.ndim != 2 or self.s.shape[0] < 1:
            raise InputDataError("Exposure tensor needs shape (n_hops >= 1, N)")

    @property
    def n_hops(self) -> int:
        return self.s.shape[0]

    @property
    def n_vertices(self) -> int:
        return self.s.shape[1]

    def hop(self, n: int) -> np.ndarray:
        """s^(n), 1-based."""
        return self.s[n - 1]


def exposure_profile(g: InfluenceGraph, z: SourceVector, n_hops: int) -> ExposureTensor:
    """
    Multi-hop log-exposure s^(n) = log((A^T)^n Z + 1), n = 1..n_hops.

    Uses repeated sparse products w^(n) = A^T w^(n-1) starting from w^(0) = Z.
    """
    if len(z) != g.n_vertices:
        raise InputDataError(f"Source vector length {len(z)} does not match {g.n_vertices} vertices")
    if n_hops < 1:
        raise InputDataError(f"n_hops must be >= 1, got {n_hops}")

    transposed = g.influence.T.tocsr()
    w = z.z.astype(float)
    s = np.empty((n_hops, g.n_vertices))
    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(n_hops):
            w = transposed @ w
            if not np.isfinite(w).all():
                raise ExposureOverflowError(f"Exposure overflowed at hop {n + 1}", hop=n + 1)
            s[n] = np.log1p(w)
    return ExposureTensor(s=s)


def exposure_rows(tensor: ExposureTensor, vertex_ids: tuple[str, ...]) -> list[tuple[int, str, float]]:
    """Long-format rows (hop, vertex_id, exposure) for CSV dumps."""
    return [
        (n + 1, vid, float(tensor.s[n, i]))
        for n in range(tensor.n_hops)
        for i, vid in enumerate(vertex_ids)
    ]
