"""One-shot randomized block Lanczos factorization.

Given a (sparse) matrix M, builds the Krylov block matrix

    K = [M P, (M M^T) M P, ..., (M M^T)^q M P],    P ~ N(0, I) of size d x r,

orthonormalizes it, and reads the top-r singular triples of M off the small
projected matrix Q^T M. With q = ceil(log(d) / sqrt(eps')) the factors carry
the gap-free guarantee ||M - U S V^T||_2 <= (1 + eps') sigma_{r+1}(M) with
probability at least 9/10.

Randomness comes from numpy's PCG64 generator (64-bit streams, seedable and
stable across platforms), so identical inputs give bitwise-identical factors.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .linalg import SparseMatrix, dense_svd, thin_qr

__all__ = [
    "SketchConfig",
    "LowRankFactors",
    "block_lanczos",
    "per_vector_error_stat",
    "save_factors",
    "load_factors",
]

_MAGIC = b"CLRF1"


@dataclass(frozen=True)
class SketchConfig:
    """Inputs of the sketch: target rank, target precision, optional depth."""

    r: int
    eps_prime: float = 0.5
    q_override: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.r < 1:
            raise ValueError("target rank r must be >= 1")
        if not (0.0 < self.eps_prime < 1.0):
            raise ValueError("eps_prime must lie in (0, 1)")
        if self.q_override is not None and self.q_override < 0:
            raise ValueError("q_override must be >= 0")

    def depth(self, d: int) -> int:
        """Krylov depth q = ceil(log d / sqrt(eps')) unless overridden."""
        if self.q_override is not None:
            return self.q_override
        return max(1, math.ceil(math.log(max(d, 2)) / math.sqrt(self.eps_prime)))


@dataclass(frozen=True)
class LowRankFactors:
    """Top-r factors: U (n x r), Sigma (r, nonincreasing), V (d x r).

    ``deficient`` is set when the Krylov block ran out of numerical rank
    before reaching the target, in which case fewer than r columns are
    returned.
    """

    U: np.ndarray
    Sigma: np.ndarray
    V: np.ndarray
    deficient: bool = False

    def __post_init__(self):
        r = len(self.Sigma)
        if self.U.shape[1] != r or self.V.shape[1] != r:
            raise ValueError("U, Sigma, V must agree on the number of columns")
        if np.any(np.diff(self.Sigma) > 1e-12 * max(1.0, self.Sigma[0] if r else 1.0)):
            raise ValueError("Sigma must be nonincreasing")
        if r and self.Sigma[-1] < 0:
            raise ValueError("Sigma must be nonnegative")

    @property
    def rank(self) -> int:
        return len(self.Sigma)


def block_lanczos(M: SparseMatrix, cfg: SketchConfig) -> LowRankFactors:
    """Randomized block Lanczos factorization of ``M``.

    ``M M^T`` is never materialized; each Krylov block is produced by two
    sparse products and re-orthonormalized against all previous blocks before
    being appended (raw Krylov blocks are numerically collinear, and without
    this the basis collapses for deep recursions).
    """
    if M.nnz == 0:
        raise ValueError("block_lanczos requires a nonzero matrix")
    n, d = M.shape
    r = cfg.r
    if r > min(n, d):
        raise ValueError(f"target rank {r} exceeds min(n, d) = {min(n, d)}")
    q = cfg.depth(d)
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    # Drawn column-by-column so that growing r extends the same probe matrix
    # (keeps the Krylov subspaces nested across target ranks for a fixed seed).
    Pi = rng.standard_normal((r, d)).T

    Msp = M._scipy()
    blocks: list[np.ndarray] = []
    raw = Msp @ Pi
    for _ in range(q + 1):
        scale = float(np.linalg.norm(raw, axis=0).max())
        work = raw.copy()
        for _pass in range(2):
            for Qb in blocks:
                work -= Qb @ (Qb.T @ work)
        # drop threshold is relative to the pre-deflation scale: content the
        # deflation leaves behind at machine precision is noise, not rank
        Qj = thin_qr(work, ref_scale=scale)
        if Qj.shape[1] == 0:
            break  # Krylov space exhausted
        blocks.append(Qj)
        raw = Msp @ (Msp.T @ Qj)
    if not blocks:
        raise ValueError("Krylov block collapsed immediately; matrix is numerically zero")
    Q = thin_qr(np.hstack(blocks))

    B = (Msp.T @ Q).T  # (cols x d), dense
    W, S, V = dense_svd(np.ascontiguousarray(B))
    avail = min(r, Q.shape[1], len(S))
    U = Q @ W[:, :avail]
    return LowRankFactors(U, S[:avail].copy(), V[:, :avail], deficient=avail < r)


def per_vector_error_stat(
    M: SparseMatrix, factors: LowRankFactors, reference_svd
) -> np.ndarray:
    """Per-vector Rayleigh-quotient gaps |u_i^T M M^T u_i - ubar_i^T M M^T ubar_i|.

    ``reference_svd`` is the (U, S, V) triple of an exact dense SVD; this is
    a test-time statistic for the per-vector guarantee of the sketch.
    """
    U_ref = reference_svd[0]
    Msp = M._scipy()
    gaps = np.empty(factors.rank)
    for i in range(factors.rank):
        u = factors.U[:, i]
        ub = U_ref[:, i]
        rq = np.dot(Msp.T @ u, Msp.T @ u)
        rq_ref = np.dot(Msp.T @ ub, Msp.T @ ub)
        gaps[i] = abs(rq - rq_ref)
    return gaps


def save_factors(factors: LowRankFactors, path: str) -> None:
    """Serialize factors to a flat binary file.

    Layout: magic ``CLRF1``, then little-endian u64 (n, d, r, deficient
    flag), then the f64 payloads of U (row-major), Sigma, V (row-major).
    """
    n = factors.U.shape[0]
    d = factors.V.shape[0]
    r = factors.rank
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<QQQQ", n, d, r, int(factors.deficient)))
        fh.write(np.ascontiguousarray(factors.U, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(factors.Sigma, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(factors.V, dtype="<f8").tobytes())


def load_factors(path: str) -> LowRankFactors:
    with open(path, "rb") as fh:
        magic = fh.read(5)
        if magic != _MAGIC:
            raise ValueError(f"not a factors file (magic {magic!r})")
        n, d, r, flag = struct.unpack("<QQQQ", fh.read(32))
        U = np.frombuffer(fh.read(8 * n * r), dtype="<f8").reshape(n, r).copy()
        Sigma = np.frombuffer(fh.read(8 * r), dtype="<f8").copy()
        V = np.frombuffer(fh.read(8 * d * r), dtype="<f8").reshape(d, r).copy()
    return LowRankFactors(U, Sigma, V, deficient=bool(flag))
