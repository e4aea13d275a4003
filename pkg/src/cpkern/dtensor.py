"""Dense d-way tensors stored flat in first-mode-fastest (column-major) order.

The linearization convention is fixed package-wide: element (i_1, ..., i_d)
lives at flat position i_1 + (i_2 - 1) I_1 + (i_3 - 1) I_1 I_2 + ... when
indices are 1-based.  The ``sub2ind`` / ``ind2sub`` / ``slice_ind2sub`` trio
follows that 1-based convention; everything else in the package (mode
numbers, tile geometry, array access) is 0-based as usual in Python.

All element data is float64.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import FormatError, IndexRangeError, ShapeError

DTEN_MAGIC = b"DTEN"
DTEN_VERSION = 1
DTEN_FLOAT64 = 1  # the only element-type code defined by format version 1

# Slice-offset enumeration switches from a precomputed table to on-the-fly
# arithmetic above this many entries (the table would cost N_S * d * 8 bytes).
OFFSET_TABLE_MAX = 1 << 20


def check_dims(dims) -> tuple:
    """Validate a shape and return it as a tuple of Python ints."""
    try:
        out = tuple(int(x) for x in dims)
    except (TypeError, ValueError) as exc:
        raise ShapeError(f"shape must be a sequence of integers, got {dims!r}") from exc
    if len(out) < 1:
        raise ShapeError("shape needs at least one mode")
    if any(x < 1 for x in out):
        raise ShapeError(f"every extent must be >= 1, got {out}")
    n = 1
    for x in out:
        n *= x
    if n >= 2 ** 63:
        raise ShapeError(f"volume {n} does not fit in a signed 64-bit index")
    return out


def num_elements(dims) -> int:
    n = 1
    for x in dims:
        n *= int(x)
    return n


def col_major_strides(dims) -> tuple:
    """Flat-index stride of each mode; stride of mode 0 is 1."""
    strides = []
    s = 1
    for x in dims:
        strides.append(s)
        s *= int(x)
    return tuple(strides)


def sub2ind(dims, subs) -> int:
    """Linear index (1-based) of the 1-based multi-index ``subs``.

    The first mode varies fastest: sub2ind((3, 4), (1, 2)) == 4.
    """
    dims = check_dims(dims)
    subs = tuple(int(s) for s in subs)
    if len(subs) != len(dims):
        raise ShapeError(f"multi-index has {len(subs)} entries for a {len(dims)}-way shape")
    for m, (s, e) in enumerate(zip(subs, dims)):
        if not 1 <= s <= e:
            raise IndexRangeError(f"index {s} out of range [1, {e}] in mode {m + 1}")
    i = 0
    for s, stride in zip(subs, col_major_strides(dims)):
        i += (s - 1) * stride
    return i + 1


def ind2sub(dims, i) -> tuple:
    """1-based multi-index of the 1-based linear index ``i``.  Inverse of sub2ind."""
    dims = check_dims(dims)
    i = int(i)
    n = num_elements(dims)
    if not 1 <= i <= n:
        raise IndexRangeError(f"linear index {i} out of range [1, {n}]")
    rem = i - 1
    subs = []
    for e in dims:
        subs.append(rem % e + 1)
        rem //= e
    return tuple(subs)


def slice_ind2sub(dims, k, n, ii) -> tuple:
    """1-based multi-index of in-slice offset ``ii`` within mode-``k`` slice ``n``.

    Slice n of mode k is the set of elements with i_k = n; its N/I_k elements
    are enumerated in the same first-mode-fastest order with mode k removed.
    All of ``k``, ``n``, ``ii`` are 1-based.
    """
    dims = check_dims(dims)
    d = len(dims)
    k = int(k)
    if not 1 <= k <= d:
        raise IndexRangeError(f"mode {k} out of range [1, {d}]")
    if not 1 <= int(n) <= dims[k - 1]:
        raise IndexRangeError(f"slice {n} out of range [1, {dims[k - 1]}]")
    ns = num_elements(dims) // dims[k - 1]
    if not 1 <= int(ii) <= ns:
        raise IndexRangeError(f"in-slice offset {ii} out of range [1, {ns}]")
    rem = int(ii) - 1
    subs = []
    for m, e in enumerate(dims):
        if m == k - 1:
            subs.append(int(n))
        else:
            subs.append(rem % e + 1)
            rem //= e
    return tuple(subs)


def slice_offsets_table(dims, mode) -> np.ndarray:
    """(N_S, d) int64 table of 0-based multi-index offsets for one mode-``mode`` slice.

    Row ii is the multi-index of in-slice offset ii with the mode-``mode``
    coordinate fixed at 0.  Mode is 0-based here.
    """
    dims = check_dims(dims)
    d = len(dims)
    rest = tuple(dims[m] for m in range(d) if m != mode)
    ns = num_elements(rest) if rest else 1
    table = np.zeros((ns, d), dtype=np.int64)
    if rest:
        coords = np.unravel_index(np.arange(ns), rest, order="F")
        j = 0
        for m in range(d):
            if m == mode:
                continue
            table[:, m] = coords[j]
            j += 1
    return table


def slice_offsets_odometer(dims, mode):
    """Yield the same rows as :func:`slice_offsets_table`, one tuple at a time.

    Incremental odometer: each step increments the lowest non-``mode`` digit
    and carries.  Constant memory, used where the table would be too large.
    """
    dims = check_dims(dims)
    d = len(dims)
    ns = num_elements(dims) // dims[mode]
    dig = [0] * d
    for _ in range(ns):
        yield tuple(dig)
        for m in range(d):
            if m == mode:
                continue
            dig[m] += 1
            if dig[m] < dims[m]:
                break
            dig[m] = 0


class TileGeometry:
    """Partition of the mode-``mode`` slices into tiles of ``tile_volume`` offsets.

    A slice holds N_S = N / I_mode elements; tiles cover in-slice offsets
    [t * N_T, min((t+1) * N_T, N_S)), so the last tile may be ragged.
    Mode and all offsets are 0-based.
    """

    def __init__(self, dims, mode, tile_volume):
        from .errors import ParameterError

        self.dims = check_dims(dims)
        d = len(self.dims)
        mode = int(mode)
        if not 0 <= mode < d:
            raise IndexRangeError(f"mode {mode} out of range [0, {d - 1}]")
        self.mode = mode
        self.slice_volume = num_elements(self.dims) // self.dims[mode]
        tile_volume = int(tile_volume)
        if not 1 <= tile_volume <= self.slice_volume:
            raise ParameterError(
                f"tile volume {tile_volume} out of range [1, {self.slice_volume}]"
            )
        self.tile_volume = tile_volume
        self.tiles_per_slice = -(-self.slice_volume // tile_volume)
        self._table = None

    def tile_bounds(self, t) -> tuple:
        """(start, length) of tile ``t`` in in-slice offsets."""
        t = int(t)
        if not 0 <= t < self.tiles_per_slice:
            raise IndexRangeError(f"tile {t} out of range [0, {self.tiles_per_slice - 1}]")
        start = t * self.tile_volume
        return start, min(self.tile_volume, self.slice_volume - start)

    def offset_subs(self, n, ii) -> tuple:
        """0-based multi-index of in-slice offset ``ii`` in slice ``n``."""
        if not 0 <= int(n) < self.dims[self.mode]:
            raise IndexRangeError(f"slice {n} out of range [0, {self.dims[self.mode] - 1}]")
        if not 0 <= int(ii) < self.slice_volume:
            raise IndexRangeError(f"offset {ii} out of range [0, {self.slice_volume - 1}]")
        if self.slice_volume <= OFFSET_TABLE_MAX:
            if self._table is None:
                self._table = slice_offsets_table(self.dims, self.mode)
            subs = list(self._table[int(ii)])
        else:
            rem = int(ii)
            subs = []
            for m, e in enumerate(self.dims):
                if m == self.mode:
                    subs.append(0)
                else:
                    subs.append(rem % e)
                    rem //= e
        subs[self.mode] = int(n)
        return tuple(int(s) for s in subs)


class DenseTensor:
    """Dense tensor backed by one flat float64 array in first-mode-fastest order."""

    __slots__ = ("dims", "data")

    def __init__(self, dims, data, copy=False):
        self.dims = check_dims(dims)
        arr = np.asarray(data, dtype=np.float64)
        arr = (arr.copy() if copy else arr).ravel()
        if arr.size != num_elements(self.dims):
            raise ShapeError(
                f"data has {arr.size} elements, shape {self.dims} needs {num_elements(self.dims)}"
            )
        self.data = arr

    @classmethod
    def zeros(cls, dims) -> "DenseTensor":
        dims = check_dims(dims)
        return cls(dims, np.zeros(num_elements(dims)))

    @classmethod
    def from_ndarray(cls, arr) -> "DenseTensor":
        """Copy a numpy array; axis 0 becomes the fastest-varying mode."""
        arr = np.asarray(arr, dtype=np.float64)
        return cls(arr.shape, arr.ravel(order="F"))

    @property
    def ndim(self) -> int:
        return len(self.dims)

    @property
    def size(self) -> int:
        return self.data.size

    def to_ndarray(self) -> np.ndarray:
        """View of the data as a numpy array (no copy; shares the buffer)."""
        return self.data.reshape(self.dims, order="F")

    def reshape(self, new_dims) -> "DenseTensor":
        """Same flat data under a new shape of equal volume (buffer is shared)."""
        new_dims = check_dims(new_dims)
        if num_elements(new_dims) != self.size:
            raise ShapeError(f"cannot reshape volume {self.size} to {new_dims}")
        return DenseTensor(new_dims, self.data)

    def copy(self) -> "DenseTensor":
        return DenseTensor(self.dims, self.data, copy=True)

    def norm(self) -> float:
        return float(np.linalg.norm(self.data))

    def __repr__(self):
        return f"DenseTensor(dims={self.dims})"


def matricize(t: DenseTensor, mode: int) -> np.ndarray:
    """Mode-``mode`` unfolding: I_k x (N / I_k), columns enumerate the other
    modes with the lowest-numbered one fastest.  Mode is 0-based."""
    d = t.ndim
    if not 0 <= mode < d:
        raise IndexRangeError(f"mode {mode} out of range [0, {d - 1}]")
    arr = t.to_ndarray()
    return np.moveaxis(arr, mode, 0).reshape((t.dims[mode], -1), order="F")


def dematricize(mat: np.ndarray, mode: int, dims) -> DenseTensor:
    """Inverse of :func:`matricize` for the given full shape."""
    dims = check_dims(dims)
    d = len(dims)
    if not 0 <= mode < d:
        raise IndexRangeError(f"mode {mode} out of range [0, {d - 1}]")
    mat = np.asarray(mat, dtype=np.float64)
    rest = tuple(dims[m] for m in range(d) if m != mode)
    if mat.shape != (dims[mode], num_elements(rest)):
        raise ShapeError(f"unfolding shape {mat.shape} does not match dims {dims} mode {mode}")
    arr = np.moveaxis(mat.reshape((dims[mode],) + rest, order="F"), 0, mode)
    return DenseTensor.from_ndarray(arr)


def khatri_rao(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Column-wise Kronecker product; column j is kron(a[:, j], b[:, j]).

    The first factor varies slowest: row alpha*n + beta (0-based) of the
    result is a[alpha] * b[beta] for b with n rows.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError("khatri_rao needs two matrices")
    if a.shape[1] != b.shape[1]:
        raise ShapeError(f"column counts differ: {a.shape[1]} vs {b.shape[1]}")
    m, p = a.shape
    n = b.shape[0]
    return (a[:, None, :] * b[None, :, :]).reshape(m * n, p)


def khatri_rao_chain(mats) -> np.ndarray:
    """Left-associated Khatri-Rao product of a sequence of matrices."""
    mats = list(mats)
    if not mats:
        raise ShapeError("khatri_rao_chain needs at least one matrix")
    # always a fresh buffer: callers scale the result in place
    out = np.array(mats[0], dtype=np.float64)
    for mat in mats[1:]:
        out = khatri_rao(out, mat)
    return out


def write_dten(path, t: DenseTensor) -> None:
    """Write a tensor as a DTEN v1 file (little-endian, float64 payload)."""
    with open(path, "wb") as f:
        f.write(struct.pack("<4sII", DTEN_MAGIC, DTEN_VERSION, t.ndim))
        f.write(struct.pack(f"<{t.ndim}Q", *t.dims))
        f.write(struct.pack("<I", DTEN_FLOAT64))
        f.write(np.ascontiguousarray(t.data, dtype="<f8").tobytes())


def read_dten_header(path) -> tuple:
    """Shape recorded in a DTEN file, without reading the payload."""
    with open(path, "rb") as f:
        dims, _ = _read_dten_meta(f)
    return dims


def read_dten(path) -> DenseTensor:
    with open(path, "rb") as f:
        dims, n = _read_dten_meta(f)
        payload = f.read()
    if len(payload) != 8 * n:
        raise FormatError(f"payload holds {len(payload)} bytes, shape {dims} needs {8 * n}")
    data = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    return DenseTensor(dims, data)


def _read_dten_meta(f):
    head = f.read(12)
    if len(head) != 12:
        raise FormatError("truncated DTEN header")
    magic, version, d = struct.unpack("<4sII", head)
    if magic != DTEN_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {DTEN_MAGIC!r}")
    if version != DTEN_VERSION:
        raise FormatError(f"unsupported DTEN version {version}")
    if not 1 <= d <= 64:
        raise FormatError(f"implausible mode count {d}")
    raw = f.read(8 * d + 4)
    if len(raw) != 8 * d + 4:
        raise FormatError("truncated DTEN dimension block")
    dims = struct.unpack(f"<{d}Q", raw[: 8 * d])
    (etype,) = struct.unpack("<I", raw[8 * d :])
    if etype != DTEN_FLOAT64:
        raise FormatError(f"unsupported element-type code {etype}")
    try:
        dims = check_dims(dims)
    except ShapeError as exc:
        raise FormatError(f"bad shape in DTEN header: {exc}") from exc
    return dims, num_elements(dims)
