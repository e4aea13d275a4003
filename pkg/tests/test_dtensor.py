import itertools
import struct

import numpy as np
import pytest

import cpkern as ck
from cpkern.dtensor import (
    TileGeometry,
    slice_offsets_odometer,
    slice_offsets_table,
)
from conftest import rng_for

# ---------------------------------------------------------------- oracles


def enum_indices(dims):
    """Every 1-based multi-index in first-mode-fastest order (independent
    enumeration oracle: itertools walks the reversed shape so the first
    coordinate spins fastest)."""
    ranges = [range(1, e + 1) for e in reversed(dims)]
    return [tuple(reversed(t)) for t in itertools.product(*ranges)]


def enum_slice_offsets(dims, mode):
    """0-based offset rows for one slice of ``mode`` (0-based), oracle form."""
    rest = [dims[m] for m in range(len(dims)) if m != mode]
    rows = []
    for t in itertools.product(*[range(e) for e in reversed(rest)]):
        t = list(reversed(t))
        row = []
        j = 0
        for m in range(len(dims)):
            if m == mode:
                row.append(0)
            else:
                row.append(t[j])
                j += 1
        rows.append(tuple(row))
    return rows


SHAPES = [(2, 3, 2), (7,), (3, 1, 4), (2, 2, 2, 2, 2), (5, 4), (4, 5, 3, 2)]


# ---------------------------------------------------------------- index trio


def test_sub2ind_corners():
    assert ck.sub2ind((3, 4), (1, 1)) == 1
    assert ck.sub2ind((3, 4), (3, 4)) == 12
    assert ck.sub2ind((3, 4), (1, 2)) == 4  # first mode fastest


def test_sub2ind_pinned_example():
    order = enum_indices((2, 3, 2))
    assert order.index((2, 3, 1)) + 1 == 6  # oracle agrees with the frozen value
    assert ck.sub2ind((2, 3, 2), (2, 3, 1)) == 6


@pytest.mark.parametrize("dims", SHAPES)
def test_sub2ind_matches_enumeration(dims):
    for pos, subs in enumerate(enum_indices(dims), start=1):
        assert ck.sub2ind(dims, subs) == pos


@pytest.mark.parametrize("dims", SHAPES + [(47, 43), (17, 19, 31)])
def test_ind2sub_roundtrip_exhaustive(dims):
    n = int(np.prod(dims))
    for i in range(1, n + 1):
        assert ck.sub2ind(dims, ck.ind2sub(dims, i)) == i


def test_ind2sub_pinned_example():
    assert ck.ind2sub((2, 3, 2), 6) == (2, 3, 1)


def test_index_range_errors():
    with pytest.raises(ck.IndexRangeError):
        ck.sub2ind((3, 4), (0, 1))
    with pytest.raises(ck.IndexRangeError):
        ck.sub2ind((3, 4), (3, 5))
    with pytest.raises(ck.ShapeError):
        ck.sub2ind((3, 4), (1, 1, 1))
    with pytest.raises(ck.IndexRangeError):
        ck.ind2sub((3, 4), 0)
    with pytest.raises(ck.IndexRangeError):
        ck.ind2sub((3, 4), 13)
    with pytest.raises(ck.ShapeError):
        ck.sub2ind((3, 0), (1, 1))
    with pytest.raises(ck.ShapeError):
        ck.ind2sub((), 1)


# ---------------------------------------------------------------- slices


def test_slice_ind2sub_pinned_examples():
    assert ck.slice_ind2sub((2, 3, 2), 2, 2, 3) == (1, 2, 2)
    assert ck.slice_ind2sub((2, 3, 2), 3, 1, 3) == (1, 2, 1)
    assert ck.slice_ind2sub((2, 3, 2), 1, 1, 1) == (1, 1, 1)


@pytest.mark.parametrize("dims", [(2, 3, 2), (4, 5, 3), (3, 2, 2, 2)])
def test_slices_partition_the_tensor(dims):
    d = len(dims)
    n = int(np.prod(dims))
    for k in range(1, d + 1):
        ns = n // dims[k - 1]
        seen = set()
        for sl in range(1, dims[k - 1] + 1):
            lin = {
                ck.sub2ind(dims, ck.slice_ind2sub(dims, k, sl, ii))
                for ii in range(1, ns + 1)
            }
            # matches the definition: exactly the elements with i_k = sl
            expect = {
                pos
                for pos, subs in enumerate(enum_indices(dims), start=1)
                if subs[k - 1] == sl
            }
            assert lin == expect
            seen |= lin
        assert seen == set(range(1, n + 1))


def test_slice_ind2sub_range_errors():
    with pytest.raises(ck.IndexRangeError):
        ck.slice_ind2sub((2, 3, 2), 4, 1, 1)
    with pytest.raises(ck.IndexRangeError):
        ck.slice_ind2sub((2, 3, 2), 2, 4, 1)
    with pytest.raises(ck.IndexRangeError):
        ck.slice_ind2sub((2, 3, 2), 2, 1, 5)


@pytest.mark.parametrize("dims", SHAPES)
def test_offset_table_matches_odometer(dims):
    for mode in range(len(dims)):
        table = slice_offsets_table(dims, mode)
        odo = list(slice_offsets_odometer(dims, mode))
        assert [tuple(r) for r in table] == odo
        assert odo == enum_slice_offsets(dims, mode)


# ---------------------------------------------------------------- tiles


@pytest.mark.parametrize("nt", [1, 2, 5, 12])
def test_tile_bounds_cover_slice(nt):
    dims = (4, 3, 4)
    geo = TileGeometry(dims, 1, nt)
    covered = []
    for t in range(geo.tiles_per_slice):
        start, length = geo.tile_bounds(t)
        assert 1 <= length <= nt
        covered.extend(range(start, start + length))
    assert covered == list(range(geo.slice_volume))


def test_tile_geometry_offsets_and_errors():
    dims = (3, 4, 2)
    geo = TileGeometry(dims, 2, 5)
    table = slice_offsets_table(dims, 2)
    for ii in range(geo.slice_volume):
        subs = geo.offset_subs(1, ii)
        assert subs[2] == 1
        expect = list(table[ii])
        expect[2] = 1
        assert list(subs) == expect
    with pytest.raises(ck.ParameterError):
        TileGeometry(dims, 0, 0)
    with pytest.raises(ck.ParameterError):
        TileGeometry(dims, 0, 9)  # slice volume is 8
    with pytest.raises(ck.IndexRangeError):
        TileGeometry(dims, 5, 1)
    with pytest.raises(ck.IndexRangeError):
        geo.tile_bounds(99)


# ---------------------------------------------------------------- tensor type


def test_dense_tensor_validation():
    with pytest.raises(ck.ShapeError):
        ck.DenseTensor((2, -1), np.zeros(2))
    with pytest.raises(ck.ShapeError):
        ck.DenseTensor((2, 3), np.zeros(5))
    with pytest.raises(ck.ShapeError):
        ck.DenseTensor((), np.zeros(1))


def test_from_ndarray_linearization():
    arr = rng_for(4).random((3, 4, 2))
    t = ck.DenseTensor.from_ndarray(arr)
    for pos, subs in enumerate(enum_indices((3, 4, 2))):
        i, j, k = (s - 1 for s in subs)
        assert t.data[pos] == arr[i, j, k]
    assert np.array_equal(t.to_ndarray(), arr)


def test_reshape_pinned_example():
    t = ck.DenseTensor((12,), np.arange(1.0, 13.0))
    r = t.reshape((3, 4))
    assert r.to_ndarray()[1, 2] == 8.0  # 1-based (2, 3) is flat position 8
    assert ck.sub2ind((3, 4), (2, 3)) == 8
    r.data[0] = -1.0
    assert t.data[0] == -1.0  # reshape shares the buffer
    with pytest.raises(ck.ShapeError):
        t.reshape((5, 3))


# ---------------------------------------------------------------- unfolding


def unfold_oracle(t, mode):
    """Brute-force unfolding straight from the definition."""
    dims = t.dims
    rest = [dims[m] for m in range(len(dims)) if m != mode]
    out = np.zeros((dims[mode], int(np.prod(rest)) if rest else 1))
    for pos, subs in enumerate(enum_indices(dims)):
        row = subs[mode] - 1
        col_subs = [subs[m] - 1 for m in range(len(dims)) if m != mode]
        col = 0
        stride = 1
        for c, e in zip(col_subs, rest):
            col += c * stride
            stride *= e
        out[row, col] = t.data[pos]
    return out


@pytest.mark.parametrize("dims", [(2, 3, 2), (4, 5, 3), (2, 2, 3, 2)])
def test_matricize_matches_oracle(dims):
    t = ck.DenseTensor(dims, rng_for(9).random(int(np.prod(dims))))
    for mode in range(len(dims)):
        assert np.array_equal(ck.matricize(t, mode), unfold_oracle(t, mode))


def test_matricize_pinned_row():
    t = ck.DenseTensor((2, 3, 2), np.arange(1.0, 13.0))
    assert list(ck.matricize(t, 1)[0]) == [1.0, 2.0, 7.0, 8.0]


def test_matricize_mode0_equals_reshape():
    t = ck.DenseTensor((4, 3, 2), rng_for(2).random(24))
    m0 = ck.matricize(t, 0)
    assert np.array_equal(m0, t.data.reshape((4, 6), order="F"))


@pytest.mark.parametrize("dims", [(2, 3, 2), (4, 5, 3)])
def test_dematricize_roundtrip(dims):
    t = ck.DenseTensor(dims, rng_for(11).random(int(np.prod(dims))))
    for mode in range(len(dims)):
        back = ck.dematricize(ck.matricize(t, mode), mode, dims)
        assert np.array_equal(back.data, t.data)


# ---------------------------------------------------------------- khatri-rao


def test_khatri_rao_pinned_example():
    out = ck.khatri_rao(np.array([[1.0], [2.0]]), np.array([[3.0], [4.0]]))
    assert out.shape == (4, 1)
    assert list(out[:, 0]) == [3.0, 4.0, 6.0, 8.0]  # first factor slowest


def test_khatri_rao_shape_and_identity():
    a = rng_for(5).random((4, 3))
    ones = np.ones((2, 3))
    out = ck.khatri_rao(ones, a)
    assert out.shape == (8, 3)
    assert np.array_equal(out[:4], a)
    assert np.array_equal(out[4:], a)
    with pytest.raises(ck.ShapeError):
        ck.khatri_rao(a, np.ones((2, 2)))


def test_khatri_rao_chain_associativity():
    r = rng_for(6)
    a, b, c = (r.random((2, 2)) for _ in range(3))
    left = ck.khatri_rao(ck.khatri_rao(a, b), c)
    right = ck.khatri_rao(a, ck.khatri_rao(b, c))
    # products of three floats may reassociate; allow rounding only
    np.testing.assert_allclose(left, right, rtol=1e-15)
    assert np.array_equal(ck.khatri_rao_chain([a, b, c]), left)


def test_khatri_rao_per_element_definition():
    r = rng_for(7)
    a, b = r.random((3, 2)), r.random((4, 2))
    out = ck.khatri_rao(a, b)
    for i in range(3):
        for j in range(4):
            for col in range(2):
                assert out[i * 4 + j, col] == a[i, col] * b[j, col]


# ---------------------------------------------------------------- file format


def test_dten_roundtrip(tmp_path):
    t = ck.DenseTensor((3, 4, 2), rng_for(8).random(24))
    path = tmp_path / "t.dten"
    ck.write_dten(path, t)
    back = ck.read_dten(path)
    assert back.dims == t.dims
    assert np.array_equal(back.data, t.data)
    assert ck.read_dten_header(path) == t.dims
    raw = path.read_bytes()
    assert raw[:4] == b"DTEN"
    assert len(raw) == 12 + 8 * 3 + 4 + 8 * 24


def _write_raw(path, magic=b"DTEN", version=1, dims=(2, 2), etype=1, payload=None):
    n = int(np.prod(dims))
    if payload is None:
        payload = np.arange(float(n)).tobytes()
    with open(path, "wb") as f:
        f.write(struct.pack("<4sII", magic, version, len(dims)))
        f.write(struct.pack(f"<{len(dims)}Q", *dims))
        f.write(struct.pack("<I", etype))
        f.write(payload)


@pytest.mark.parametrize(
    "kw",
    [
        {"magic": b"XTEN"},
        {"version": 2},
        {"etype": 3},
        {"payload": b"\x00" * 24},  # short
        {"payload": b"\x00" * 40},  # trailing bytes
        {"dims": (2, 0)},
    ],
)
def test_dten_rejects_malformed(tmp_path, kw):
    path = tmp_path / "bad.dten"
    _write_raw(path, **kw)
    with pytest.raises((ck.FormatError, ck.ShapeError)):
        ck.read_dten(path)


def test_dten_rejects_truncated_header(tmp_path):
    path = tmp_path / "tiny.dten"
    path.write_bytes(b"DT")
    with pytest.raises(ck.FormatError):
        ck.read_dten(path)
