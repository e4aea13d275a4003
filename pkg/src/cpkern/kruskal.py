"""Kruskal tensors: weight vector plus one factor matrix per mode.

A Kruskal tensor of rank R over shape (I_1, ..., I_d) is
M(i_1, ..., i_d) = sum_j lambda_j * prod_m A_m(i_m, j).  Factor matrices are
row-major float64 with R columns; weights are nonnegative.
"""

from __future__ import annotations

import numpy as np

from .dtensor import DenseTensor, check_dims, num_elements
from .errors import FormatError, IndexRangeError, ShapeError

KTEN_MAGIC = "KTEN"


def _as_factor(a, what="factor") -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise ShapeError(f"{what} must be a 2-D matrix with at least one row and column")
    return a


class KruskalTensor:
    """Rank-R factored tensor: weights ``lam`` (R,) and factors A_m (I_m, R)."""

    __slots__ = ("weights", "factors")

    def __init__(self, weights, factors, validate=True):
        self.factors = [_as_factor(a, f"factor {m + 1}") for m, a in enumerate(factors)]
        if not self.factors:
            raise ShapeError("need at least one factor matrix")
        self.weights = np.ascontiguousarray(weights, dtype=np.float64).ravel()
        if validate:
            r = self.factors[0].shape[1]
            for m, a in enumerate(self.factors):
                if a.shape[1] != r:
                    raise ShapeError(f"factor {m + 1} has {a.shape[1]} columns, expected {r}")
            if self.weights.shape != (r,):
                raise ShapeError(f"weights must have shape ({r},), got {self.weights.shape}")
            if not np.all(np.isfinite(self.weights)) or np.any(self.weights < 0):
                raise ShapeError("weights must be finite and nonnegative")
            for m, a in enumerate(self.factors):
                if not np.all(np.isfinite(a)):
                    raise ShapeError(f"factor {m + 1} has non-finite entries")

    @property
    def rank(self) -> int:
        return self.factors[0].shape[1]

    @property
    def ndim(self) -> int:
        return len(self.factors)

    @property
    def dims(self) -> tuple:
        return tuple(a.shape[0] for a in self.factors)

    def full(self) -> DenseTensor:
        """Expand to a dense tensor, one rank-one term at a time."""
        n = num_elements(self.dims)
        data = np.zeros(n)
        for j in range(self.rank):
            # Build the rank-one term flat: processing modes d-1 .. 0 with a
            # C-order outer/ravel leaves mode 0 fastest, matching the package
            # linearization.
            acc = self.weights[j] * self.factors[-1][:, j]
            for m in range(self.ndim - 2, -1, -1):
                acc = np.outer(acc, self.factors[m][:, j]).ravel()
            data += acc
        return DenseTensor(self.dims, data)

    def hadamard_gram(self, skip=None) -> np.ndarray:
        """Element-wise product of the factor Grams, optionally skipping one mode."""
        if skip is not None and not 0 <= int(skip) < self.ndim:
            raise IndexRangeError(f"mode {skip} out of range [0, {self.ndim - 1}]")
        out = np.ones((self.rank, self.rank))
        for m, a in enumerate(self.factors):
            if skip is not None and m == int(skip):
                continue
            out *= gram(a)
        return out

    def norm_squared(self) -> float:
        """||M||_F^2 = lam^T (hadamard of all Grams) lam, no dense expansion."""
        h = self.hadamard_gram()
        return float(self.weights @ h @ self.weights)

    def normalize_columns(self) -> "KruskalTensor":
        """Scale each factor column to unit 2-norm, folding the norms into the weights.

        Zero columns are left in place with weight 0.
        """
        lam = self.weights.copy()
        factors = []
        for a in self.factors:
            a = a.copy()
            nrm = np.linalg.norm(a, axis=0)
            nz = nrm > 0
            a[:, nz] /= nrm[nz]
            lam *= np.where(nz, nrm, 0.0)
            factors.append(a)
        return KruskalTensor(lam, factors, validate=False)

    def __repr__(self):
        return f"KruskalTensor(rank={self.rank}, dims={self.dims})"


def gram(a: np.ndarray) -> np.ndarray:
    """A^T A, symmetrized exactly (upper triangle mirrored)."""
    a = _as_factor(a)
    g = a.T @ a
    return np.triu(g) + np.triu(g, 1).T


def inner_product(y: DenseTensor, m: KruskalTensor, g: np.ndarray, mode: int) -> float:
    """<Y, M> given g = mode-``mode`` MTTKRP of Y against M (weights folded in).

    The identity <Y, M> = sum(g * A_mode) avoids expanding M.
    """
    if y.dims != m.dims:
        raise ShapeError(f"tensor dims {y.dims} do not match model dims {m.dims}")
    if not 0 <= int(mode) < m.ndim:
        raise IndexRangeError(f"mode {mode} out of range [0, {m.ndim - 1}]")
    g = np.asarray(g, dtype=np.float64)
    a = m.factors[int(mode)]
    if g.shape != a.shape:
        raise ShapeError(f"mttkrp result shape {g.shape} does not match factor shape {a.shape}")
    return float(np.sum(g * a))


def save_kten(path, m: KruskalTensor) -> None:
    """Write the text interchange form: header, weights, then each factor."""
    with open(path, "w", encoding="ascii") as f:
        f.write(f"{KTEN_MAGIC} {m.rank} {m.ndim}\n")
        f.write(" ".join(f"{w:.17g}" for w in m.weights) + "\n")
        for a in m.factors:
            f.write(f"{a.shape[0]} {a.shape[1]}\n")
            for row in a:
                f.write(" ".join(f"{v:.17g}" for v in row) + "\n")


def load_kten(path) -> KruskalTensor:
    with open(path, "r", encoding="ascii") as f:
        tokens = f.read().split()
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(tokens):
            raise FormatError("truncated KTEN file")
        out = tokens[pos : pos + n]
        pos += n
        return out

    magic = take(1)[0]
    if magic != KTEN_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {KTEN_MAGIC!r}")
    try:
        r, d = (int(x) for x in take(2))
        if r < 1 or d < 1:
            raise FormatError(f"bad rank/order {r}/{d}")
        weights = np.array([float(x) for x in take(r)])
        factors = []
        for _ in range(d):
            rows, cols = (int(x) for x in take(2))
            if cols != r:
                raise FormatError(f"factor declares {cols} columns, header says {r}")
            vals = np.array([float(x) for x in take(rows * cols)])
            factors.append(vals.reshape(rows, cols))
    except ValueError as exc:
        raise FormatError(f"malformed KTEN token: {exc}") from exc
    if pos != len(tokens):
        raise FormatError(f"{len(tokens) - pos} trailing tokens after KTEN payload")
    check_dims([a.shape[0] for a in factors])
    return KruskalTensor(weights, factors)
