"""Compiled inner loops for the matrix-free MTTKRP variants.

Kernels take the tensor as a flat float64 array plus an int64 extent vector,
and the factor matrices packed row-major into a single flat buffer ``fm``
with per-mode offsets ``foff`` (row stride is the rank R).  Parallel variants
accumulate into per-thread private copies of the output that the caller
merges in thread-id order, so "atomic update" contention never perturbs the
result: one worker reproduces the canonical serial evaluation order exactly,
and any worker count is bit-reproducible for a fixed assignment of work.

Scalar evaluation order is identical across kernels: an element's
contribution to column j is lam[j] * y * A_1 * A_2 * ... (modes ascending,
skipping the target mode), and contributions land in ascending element order
within each output row.
"""

import numpy as np
from numba import get_thread_id, njit, prange

# Elements per parallel work item in the per-element kernel; amortizes the
# multi-index scratch allocation without changing the evaluation order.
ELEM_BLOCK = 4096


def pack_factors(factors):
    """Concatenate row-major factor matrices into (flat buffer, offsets)."""
    r = factors[0].shape[1]
    foff = np.zeros(len(factors), dtype=np.int64)
    total = 0
    for m, a in enumerate(factors):
        foff[m] = total
        total += a.shape[0] * r
    fm = np.empty(total, dtype=np.float64)
    for m, a in enumerate(factors):
        fm[foff[m] : foff[m] + a.size] = np.ascontiguousarray(a).ravel()
    return fm, foff


@njit(cache=True)
def ref_kernel(data, dims, k, fm, foff, lam, r, out):
    """Serial reference: one pass over elements, all columns per element."""
    d = dims.size
    n_el = data.size
    sub = np.empty(d, np.int64)
    for i in range(n_el):
        rem = i
        for m in range(d):
            sub[m] = rem % dims[m]
            rem //= dims[m]
        y = data[i]
        row = sub[k]
        for j in range(r):
            p = lam[j] * y
            for m in range(d):
                if m != k:
                    p *= fm[foff[m] + sub[m] * r + j]
            out[row, j] += p


@njit(parallel=True, cache=True)
def elem_kernel(data, dims, k, fm, foff, lam, r, f_cols, gp):
    """Parallel over elements; every element updates its full output row.

    gp is (workers, I_k, R); each thread owns gp[tid].  Work is handed out in
    fixed blocks of ascending elements, so the per-(row, j) add order matches
    the serial reference whenever one thread processes the whole range.
    """
    d = dims.size
    n_el = data.size
    nblocks = (n_el + ELEM_BLOCK - 1) // ELEM_BLOCK
    for b in prange(nblocks):
        tid = get_thread_id()
        sub = np.empty(d, np.int64)
        lo = b * ELEM_BLOCK
        hi = min(lo + ELEM_BLOCK, n_el)
        for i in range(lo, hi):
            rem = i
            for m in range(d):
                sub[m] = rem % dims[m]
                rem //= dims[m]
            y = data[i]
            row = sub[k]
            jj = 0
            while jj < r:
                fw = min(f_cols, r - jj)
                for f in range(fw):
                    j = jj + f
                    p = lam[j] * y
                    for m in range(d):
                        if m != k:
                            p *= fm[foff[m] + sub[m] * r + j]
                    gp[tid, row, j] += p
                jj += f_cols


@njit(cache=True)
def accum_tile(data, dims, strides, k, fm, foff, lam, r, f_cols, n, t0, tlen, grow):
    """Accumulate one tile (slice n, in-slice offsets [t0, t0+tlen)) into grow.

    Processes the columns in blocks of f_cols; each block re-reads the tile's
    tensor elements and walks the multi-index with an incremental odometer
    (no div/mod per element).  Block sums land in grow with one add per
    column, so the per-column result is independent of f_cols.
    """
    d = dims.size
    dig0 = np.empty(d, np.int64)
    dig = np.empty(d, np.int64)
    pi = np.empty(f_cols, np.float64)
    rem = t0
    flat0 = n * strides[k]
    for m in range(d):
        if m == k:
            dig0[m] = 0
        else:
            dig0[m] = rem % dims[m]
            rem //= dims[m]
            flat0 += dig0[m] * strides[m]
    jj = 0
    while jj < r:
        fw = min(f_cols, r - jj)
        for f in range(fw):
            pi[f] = 0.0
        for m in range(d):
            dig[m] = dig0[m]
        flat = flat0
        for ii in range(tlen):
            y = data[flat]
            for f in range(fw):
                j = jj + f
                p = lam[j] * y
                for m in range(d):
                    if m != k:
                        p *= fm[foff[m] + dig[m] * r + j]
                pi[f] += p
            if ii + 1 < tlen:
                m = 0
                while m < d:
                    if m == k:
                        m += 1
                        continue
                    dig[m] += 1
                    flat += strides[m]
                    if dig[m] < dims[m]:
                        break
                    flat -= dig[m] * strides[m]
                    dig[m] = 0
                    m += 1
        for f in range(fw):
            grow[jj + f] += pi[f]
        jj += f_cols


@njit(parallel=True, cache=True)
def slice_kernel(data, dims, strides, k, fm, foff, lam, r, f_cols, out):
    """Parallel over mode-k slices; slice n owns output row n outright."""
    i_k = dims[k]
    n_s = data.size // i_k
    for n in prange(i_k):
        accum_tile(data, dims, strides, k, fm, foff, lam, r, f_cols, n, 0, n_s, out[n])


@njit(parallel=True, cache=True)
def tile_kernel(data, dims, strides, k, fm, foff, lam, r, f_cols, n_t, gp):
    """Parallel over tiles (slice-major order); rows are shared across tiles,
    so each thread accumulates into its private copy gp[tid]."""
    i_k = dims[k]
    n_s = data.size // i_k
    tps = (n_s + n_t - 1) // n_t
    for w in prange(i_k * tps):
        tid = get_thread_id()
        n = w // tps
        t0 = (w % tps) * n_t
        tlen = min(n_t, n_s - t0)
        accum_tile(data, dims, strides, k, fm, foff, lam, r, f_cols, n, t0, tlen, gp[tid, n])
