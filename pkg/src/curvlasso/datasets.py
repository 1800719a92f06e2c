"""Problem construction: LIBSVM text parsing, synthetic generators, scaling.

A :class:`Problem` bundles the design matrix, targets, and the two
regularization weights of the composite objective

    (1/2n) ||A x - b||^2 + (gamma2/2) ||x||^2 + gamma1 ||x||_1.
"""

from __future__ import annotations

import bz2
import gzip
import io
import math
import os
import urllib.request
from dataclasses import dataclass

import numpy as np

from .linalg import SparseMatrix, dense_svd, thin_qr

__all__ = [
    "Problem",
    "SyntheticSpec",
    "ParseError",
    "parse_libsvm",
    "serialize_libsvm",
    "load_libsvm",
    "generate_synthetic",
    "column_scale",
    "data_dir",
    "dataset_path",
    "fetch_dataset",
    "load_dataset",
    "DATASET_URLS",
]


class ParseError(ValueError):
    """Malformed LIBSVM input; message carries the 1-based line number."""


@dataclass(frozen=True)
class Problem:
    """Elastic-net problem instance."""

    A: SparseMatrix
    b: np.ndarray
    gamma1: float
    gamma2: float

    def __post_init__(self):
        object.__setattr__(self, "b", np.asarray(self.b, dtype=np.float64))
        if self.b.shape != (self.A.n_rows,):
            raise ValueError("b must have length A.n_rows")
        if self.gamma1 < 0:
            raise ValueError("gamma1 must be >= 0")
        if self.gamma2 <= 0:
            raise ValueError("gamma2 must be > 0 (strongly convex ridge loss required)")

    @property
    def n(self) -> int:
        return self.A.n_rows

    @property
    def d(self) -> int:
        return self.A.n_cols


@dataclass(frozen=True)
class SyntheticSpec:
    """Synthetic problem with a prescribed singular spectrum of A/sqrt(n)."""

    n: int
    d: int
    spectrum: np.ndarray
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "spectrum", np.asarray(self.spectrum, dtype=np.float64))
        s = self.spectrum
        if s.ndim != 1 or len(s) != self.d:
            raise ValueError("spectrum must be a 1-d array of length d")
        if self.d > self.n:
            raise ValueError("need d <= n")
        if np.any(s < 0) or np.any(np.diff(s) > 0):
            raise ValueError("spectrum must be nonnegative and nonincreasing")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")


def parse_libsvm(source) -> tuple[SparseMatrix, np.ndarray]:
    """Parse LIBSVM text into ``(A, b)``.

    Each data line is ``label idx:val idx:val ...`` with 1-based, strictly
    increasing feature indices. Blank lines and lines starting with ``#`` are
    skipped. The feature count is the largest index seen.

    Parameters
    ----------
    source : iterable of str, text stream, or str
        Lines of LIBSVM text (a plain string is split on newlines).

    Raises
    ------
    ParseError
        On non-numeric tokens or non-increasing indices, with line number.
    """
    if isinstance(source, str):
        source = io.StringIO(source)
    labels: list[float] = []
    row_ptr = [0]
    col_idx: list[int] = []
    values: list[float] = []
    d = 0
    for lineno, raw in enumerate(source, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tokens = line.split()
        try:
            labels.append(float(tokens[0]))
        except ValueError:
            raise ParseError(f"line {lineno}: bad label {tokens[0]!r}") from None
        prev = 0
        for tok in tokens[1:]:
            try:
                idx_s, val_s = tok.split(":", 1)
                idx = int(idx_s)
                val = float(val_s)
            except ValueError:
                raise ParseError(f"line {lineno}: bad feature token {tok!r}") from None
            if idx <= prev:
                raise ParseError(
                    f"line {lineno}: indices must be strictly increasing (got {idx} after {prev})"
                )
            prev = idx
            col_idx.append(idx - 1)
            values.append(val)
        d = max(d, prev)
        row_ptr.append(len(values))
    A = SparseMatrix(
        len(labels), d, np.asarray(row_ptr), np.asarray(col_idx, dtype=np.int64), np.asarray(values)
    )
    return A, np.asarray(labels, dtype=np.float64)


def serialize_libsvm(A: SparseMatrix, b: np.ndarray) -> str:
    """Inverse of :func:`parse_libsvm`; values printed with 17 significant digits."""
    out = []
    for i in range(A.n_rows):
        idx, vals = A.row(i)
        parts = [f"{b[i]:.17g}"]
        parts += [f"{j + 1}:{v:.17g}" for j, v in zip(idx, vals)]
        out.append(" ".join(parts))
    return "\n".join(out) + ("\n" if out else "")


def load_libsvm(path, force_d: int | None = None) -> tuple[SparseMatrix, np.ndarray]:
    """Read a LIBSVM file; gzip input detected by magic bytes 0x1f 0x8b.

    ``force_d`` pads the feature count (LIBSVM files omit trailing all-zero
    features); it must not be smaller than the largest index in the file.
    """
    with open(path, "rb") as fh:
        magic = fh.read(2)
    opener = gzip.open if magic == b"\x1f\x8b" else open
    with opener(path, "rt") as fh:
        A, b = parse_libsvm(fh)
    if force_d is not None:
        if force_d < A.n_cols:
            raise ValueError(f"force_d={force_d} smaller than observed feature count {A.n_cols}")
        A = SparseMatrix(A.n_rows, force_d, A.row_ptr, A.col_idx, A.values)
    return A, b


def generate_synthetic(
    spec: SyntheticSpec, gamma1: float = 1e-3, gamma2: float = 1e-3
) -> Problem:
    """Random problem whose correlation matrix has a prescribed spectrum.

    Draws random orthonormal U (n x d) and V (d x d) from seeded Gaussians,
    sets ``A = sqrt(n) * U @ diag(spectrum) @ V.T``, plants a 10%-dense
    Gaussian ground truth and observes ``b = A x_true + noise``. Deterministic
    given ``spec.seed`` (PCG64).
    """
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    n, d = spec.n, spec.d
    U = thin_qr(rng.standard_normal((n, d)))
    V = thin_qr(rng.standard_normal((d, d)))
    if U.shape[1] < d or V.shape[1] < d:
        raise ValueError("random basis came out rank deficient; change the seed")
    A = math.sqrt(n) * (U * spec.spectrum) @ V.T
    x_true = np.zeros(d)
    k = max(1, int(round(0.1 * d)))
    support = rng.choice(d, size=k, replace=False)
    x_true[support] = rng.standard_normal(k)
    b = A @ x_true
    if spec.noise_sigma > 0:
        b = b + spec.noise_sigma * rng.standard_normal(n)
    return Problem(SparseMatrix.from_dense(A), b, gamma1, gamma2)


def column_scale(A: SparseMatrix, mode: str) -> SparseMatrix:
    """Column scaling: ``none`` is the identity, ``unit_norm`` divides every
    nonzero column by its 2-norm (zero columns are left untouched)."""
    if mode == "none":
        return A
    if mode != "unit_norm":
        raise ValueError(f"unknown mode {mode!r}")
    norms = np.zeros(A.n_cols)
    np.add.at(norms, A.col_idx, A.values**2)
    norms = np.sqrt(norms)
    scale = np.ones(A.n_cols)
    nz = norms > 0
    scale[nz] = 1.0 / norms[nz]
    return SparseMatrix(A.n_rows, A.n_cols, A.row_ptr, A.col_idx, A.values * scale[A.col_idx])


# -- dataset cache ----------------------------------------------------------

# LIBSVM binary collection (Chang & Lin) plus the Causality-Workbench cina0
# mirror. gisette/real-sim ship bzip2-compressed and are decompressed into
# the cache.
_LIBSVM = "https://www.csie.ntu.edu.tw/~cjlin/libsvmtools/datasets/binary/"
DATASET_URLS = {
    "australian": _LIBSVM + "australian",
    "gisette-scale": _LIBSVM + "gisette_scale.bz2",
    "real-sim": _LIBSVM + "real-sim.bz2",
    "cina0": "https://www.causality.inf.ethz.ch/data/CINA.html",  # landing page; see fetch notes
}


def data_dir() -> str:
    """Dataset cache directory: $CURVLASSO_DATA, default ./data."""
    return os.environ.get("CURVLASSO_DATA", os.path.join(os.getcwd(), "data"))


def dataset_path(name: str, directory: str | None = None) -> str:
    return os.path.join(directory or data_dir(), f"{name}.libsvm")


def fetch_dataset(name: str, directory: str | None = None, timeout: float = 60.0) -> str:
    """Download a named dataset into the cache, decompressing if needed.

    Returns the path of the cached LIBSVM text file. Already-cached files are
    not re-downloaded. cina0 has no direct LIBSVM URL; place a converted
    ``cina0.libsvm`` in the cache by hand.
    """
    if name not in DATASET_URLS:
        raise ValueError(f"unknown dataset {name!r}; known: {sorted(DATASET_URLS)}")
    path = dataset_path(name, directory)
    if os.path.exists(path):
        return path
    if name == "cina0":
        raise RuntimeError(
            "cina0 is distributed via the Causality Workbench and needs manual "
            f"conversion; place the LIBSVM text at {path}"
        )
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with urllib.request.urlopen(DATASET_URLS[name], timeout=timeout) as resp:
        blob = resp.read()
    if blob[:3] == b"BZh":
        blob = bz2.decompress(blob)
    elif blob[:2] == b"\x1f\x8b":
        blob = gzip.decompress(blob)
    tmp = path + ".part"
    with open(tmp, "wb") as fh:
        fh.write(blob)
    os.replace(tmp, path)
    return path


def load_dataset(
    name: str,
    gamma1: float,
    gamma2: float,
    directory: str | None = None,
    force_d: int | None = None,
    fetch: bool = False,
) -> Problem:
    """Load a cached dataset as a :class:`Problem`; optionally fetch it first."""
    path = dataset_path(name, directory)
    if not os.path.exists(path) and fetch:
        path = fetch_dataset(name, directory)
    A, b = load_libsvm(path, force_d=force_d)
    return Problem(A, b, gamma1, gamma2)


def top_singular_value(problem: Problem) -> float:
    """sigma_1(A/sqrt(n)) computed densely; test helper for small problems."""
    _, S, _ = dense_svd(problem.A.toarray() / math.sqrt(problem.n))
    return float(S[0])
