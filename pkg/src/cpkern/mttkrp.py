"""MTTKRP for dense tensors: G = (mode-k unfolding of Y) (KRP of other factors) diag(lam).

Four production strategies plus two slow oracles, all returning the I_k x R
result with the weights folded in (pass unit weights for the unweighted
product):

* ``reference``: serial element-wise evaluation, the canonical order.
* ``full-krp``: materializes the full Khatri-Rao product (memory oracle).
* ``gemm``: dense baseline via partial Khatri-Rao products and BLAS.
* ``elem`` / ``slice`` / ``tile``: matrix-free compiled kernels, parallel
  over elements / slices / tiles within slices.

The matrix-free variants never allocate the unfolding or any KRP; their only
working set is the output (plus per-worker private copies where rows are
shared).  ``seconds`` in the returned stats covers the kernel and the
private-copy merge; factor packing and buffer allocation are excluded.
"""

from __future__ import annotations

import math
import time
from contextlib import contextmanager
from dataclasses import dataclass, replace
from enum import Enum

import numba
import numpy as np

from . import _kernels
from .dtensor import (
    DenseTensor,
    col_major_strides,
    khatri_rao_chain,
    matricize,
    num_elements,
)
from .errors import IndexRangeError, ParameterError, ResourceError, ShapeError
from .kruskal import KruskalTensor

DEFAULT_KRP_BUDGET = 2 * 1024 ** 3  # bytes allowed for an explicit KRP


class Variant(str, Enum):
    REFERENCE = "reference"
    FULL_KRP = "full-krp"
    GEMM = "gemm"
    ELEM = "elem"
    SLICE = "slice"
    TILE = "tile"


@dataclass(frozen=True)
class MttkrpPlan:
    """How to run one MTTKRP: strategy, target mode, and kernel knobs.

    ``unroll`` is the column-block width F; ``team_width`` and
    ``vector_width`` are fixed at 1 in this CPU realization.  ``tile_volume``
    (N_T, in-slice elements per tile) is required by the tile variant and
    ignored elsewhere.  ``workers`` <= 0 means "current thread-pool size";
    requests above the pool's launch-time maximum are clamped.
    """

    variant: Variant
    mode: int
    unroll: int = 4
    team_width: int = 1
    vector_width: int = 1
    tile_volume: int | None = None
    workers: int = 0

    def validate(self, dims, rank) -> None:
        d = len(dims)
        if not 0 <= self.mode < d:
            raise IndexRangeError(f"mode {self.mode} out of range [0, {d - 1}]")
        if self.unroll < 1:
            raise ParameterError(f"unroll must be >= 1, got {self.unroll}")
        if self.team_width != 1 or self.vector_width != 1:
            raise ParameterError("team_width and vector_width must be 1 on the CPU")
        if rank < 1:
            raise ParameterError(f"rank must be >= 1, got {rank}")
        if self.variant == Variant.TILE:
            n_s = num_elements(dims) // dims[self.mode]
            if self.tile_volume is None:
                raise ParameterError("tile variant needs an explicit tile_volume")
            if not 1 <= int(self.tile_volume) <= n_s:
                raise ParameterError(
                    f"tile_volume {self.tile_volume} out of range [1, {n_s}]"
                )


@dataclass
class MttkrpStats:
    """Work accounting and timing for one MTTKRP evaluation.

    ``atomic_updates`` counts scalar adds into output rows that some other
    work item may also touch (realized here as private-copy accumulation, but
    counted as the algorithm defines them).  ``element_visits`` counts tensor
    element reads.
    """

    variant: Variant
    mode: int
    element_visits: int
    atomic_updates: int
    seconds: float
    workers: int = 1
    tile_volume: int | None = None
    unroll: int | None = None
    scratch_bytes: int | None = None
    footprint_bytes: int | None = None


@dataclass
class MttkrpOutput:
    matrix: np.ndarray
    stats: MttkrpStats


def _check_inputs(y: DenseTensor, m: KruskalTensor, mode: int) -> None:
    if y.dims != m.dims:
        raise ShapeError(f"tensor dims {y.dims} do not match model dims {m.dims}")
    if not 0 <= int(mode) < y.ndim:
        raise IndexRangeError(f"mode {mode} out of range [0, {y.ndim - 1}]")


def resolve_workers(requested: int) -> int:
    """Effective worker count: <=0 means the current pool size; caps apply."""
    cap = numba.config.NUMBA_NUM_THREADS
    if requested is None or requested <= 0:
        return numba.get_num_threads()
    return max(1, min(int(requested), cap))


@contextmanager
def _worker_pool(requested: int):
    eff = resolve_workers(requested)
    prev = numba.get_num_threads()
    numba.set_num_threads(eff)
    try:
        yield eff
    finally:
        numba.set_num_threads(prev)


def _kernel_args(y: DenseTensor, m: KruskalTensor, mode: int):
    dims = np.asarray(y.dims, dtype=np.int64)
    strides = np.asarray(col_major_strides(y.dims), dtype=np.int64)
    fm, foff = _kernels.pack_factors(m.factors)
    lam = np.ascontiguousarray(m.weights)
    return dims, strides, fm, foff, lam


def mttkrp_reference(y: DenseTensor, m: KruskalTensor, mode: int) -> MttkrpOutput:
    """Serial element-wise evaluation; the order every variant is judged against."""
    _check_inputs(y, m, mode)
    dims, _, fm, foff, lam = _kernel_args(y, m, mode)
    out = np.zeros((y.dims[mode], m.rank))
    t0 = time.perf_counter()
    _kernels.ref_kernel(y.data, dims, mode, fm, foff, lam, m.rank, out)
    dt = time.perf_counter() - t0
    stats = MttkrpStats(
        Variant.REFERENCE, mode, element_visits=y.size, atomic_updates=0, seconds=dt
    )
    return MttkrpOutput(out, stats)


def full_krp_bytes(dims, rank: int, mode: int) -> int:
    """Bytes needed for the explicit Khatri-Rao product of the other factors."""
    return 8 * (num_elements(dims) // dims[mode]) * rank


def mttkrp_full_krp(
    y: DenseTensor, m: KruskalTensor, mode: int, budget_bytes: int = DEFAULT_KRP_BUDGET
) -> MttkrpOutput:
    """Oracle: materialize Z = A_d o ... o A_{k+1} o A_{k-1} o ... o A_1, then
    one GEMM against the mode-k unfolding.  Refuses when Z exceeds the budget."""
    _check_inputs(y, m, mode)
    if y.ndim < 2:
        raise ParameterError("full-krp needs at least two modes")
    z_bytes = full_krp_bytes(y.dims, m.rank, mode)
    if z_bytes > budget_bytes:
        raise ResourceError(
            f"explicit KRP needs {z_bytes} bytes, budget is {budget_bytes}"
        )
    t0 = time.perf_counter()
    mats = [m.factors[mm] for mm in range(y.ndim - 1, -1, -1) if mm != mode]
    z = khatri_rao_chain(mats)
    z *= m.weights
    unf = matricize(y, mode)
    out = unf @ z
    dt = time.perf_counter() - t0
    # mode 0 unfolds as a view; other modes copy the tensor once
    scratch = z_bytes + (0 if mode == 0 else 8 * y.size)
    stats = MttkrpStats(
        Variant.FULL_KRP,
        mode,
        element_visits=y.size,
        atomic_updates=0,
        seconds=dt,
        scratch_bytes=scratch,
    )
    return MttkrpOutput(np.ascontiguousarray(out), stats)


def _split_extents(dims, mode: int) -> tuple:
    """(I_L, I_R): products of the extents left and right of ``mode``."""
    i_l = num_elements(dims[:mode]) if mode > 0 else 1
    i_r = num_elements(dims[mode + 1 :]) if mode < len(dims) - 1 else 1
    return i_l, i_r


def gemm_scratch_bytes(dims, rank: int, mode: int) -> int:
    """Temporary bytes the dense baseline allocates for this mode."""
    d = len(dims)
    i_l, i_r = _split_extents(dims, mode)
    if mode == 0:
        return 8 * rank * i_r
    if mode == d - 1:
        return 8 * rank * i_l
    return 8 * (rank * (i_l + i_r) + i_l * dims[mode] * rank)


def gemm_model_bytes(dims, rank: int, mode: int) -> int:
    """Model footprint of the dense baseline: tensor + both partial KRPs + output."""
    i_l, i_r = _split_extents(dims, mode)
    return 8 * (num_elements(dims) + rank * (i_l + i_r + dims[mode]))


def mttkrp_gemm(
    y: DenseTensor, m: KruskalTensor, mode: int, scratch_cap_bytes: int | None = None
) -> MttkrpOutput:
    """Dense baseline: contract with partial Khatri-Rao products via BLAS.

    For an interior mode this forms C = reshape(Y, [I_L I_k, I_R]) Z_R and
    contracts the left index against Z_L; end modes need a single GEMM.  The
    weights are applied exactly once (folded into one partial product).
    """
    _check_inputs(y, m, mode)
    d = y.ndim
    if d < 2:
        raise ParameterError("gemm baseline needs at least two modes")
    scratch = gemm_scratch_bytes(y.dims, m.rank, mode)
    if scratch_cap_bytes is not None and scratch > scratch_cap_bytes:
        raise ResourceError(
            f"gemm baseline needs {scratch} scratch bytes, cap is {scratch_cap_bytes}"
        )
    i_l, i_r = _split_extents(y.dims, mode)
    i_k = y.dims[mode]
    t0 = time.perf_counter()
    if mode == 0:
        z_r = khatri_rao_chain([m.factors[mm] for mm in range(d - 1, 0, -1)])
        z_r *= m.weights
        out = y.data.reshape((i_k, i_r), order="F") @ z_r
    elif mode == d - 1:
        z_l = khatri_rao_chain([m.factors[mm] for mm in range(d - 2, -1, -1)])
        z_l *= m.weights
        out = y.data.reshape((i_l, i_k), order="F").T @ z_l
    else:
        z_r = khatri_rao_chain([m.factors[mm] for mm in range(d - 1, mode, -1)])
        z_r *= m.weights
        c = y.data.reshape((i_l * i_k, i_r), order="F") @ z_r
        c3 = c.reshape((i_l, i_k, m.rank), order="F")
        z_l = khatri_rao_chain([m.factors[mm] for mm in range(mode - 1, -1, -1)])
        out = np.einsum("qlj,qj->lj", c3, z_l)
    dt = time.perf_counter() - t0
    stats = MttkrpStats(
        Variant.GEMM,
        mode,
        element_visits=y.size,
        atomic_updates=0,
        seconds=dt,
        scratch_bytes=scratch,
        footprint_bytes=gemm_model_bytes(y.dims, m.rank, mode),
    )
    return MttkrpOutput(np.ascontiguousarray(out), stats)


def _run_private_copy(kernel_call, workers: int, i_k: int, rank: int):
    """Allocate per-worker output copies, run, merge in worker order."""
    gp = np.zeros((workers, i_k, rank))
    t0 = time.perf_counter()
    kernel_call(gp)
    out = gp.sum(axis=0)
    dt = time.perf_counter() - t0
    return out, dt


def mttkrp_elem(y: DenseTensor, m: KruskalTensor, plan: MttkrpPlan) -> MttkrpOutput:
    """Parallel over elements; each element issues R updates to its output row."""
    if plan.variant != Variant.ELEM:
        raise ParameterError(f"plan variant is {plan.variant}, expected elem")
    _check_inputs(y, m, plan.mode)
    plan.validate(y.dims, m.rank)
    dims, _, fm, foff, lam = _kernel_args(y, m, plan.mode)
    with _worker_pool(plan.workers) as workers:
        out, dt = _run_private_copy(
            lambda gp: _kernels.elem_kernel(
                y.data, dims, plan.mode, fm, foff, lam, m.rank, plan.unroll, gp
            ),
            workers,
            y.dims[plan.mode],
            m.rank,
        )
    stats = MttkrpStats(
        Variant.ELEM,
        plan.mode,
        element_visits=y.size,
        atomic_updates=y.size * m.rank,
        seconds=dt,
        workers=workers,
        unroll=plan.unroll,
    )
    return MttkrpOutput(out, stats)


def mttkrp_slice(y: DenseTensor, m: KruskalTensor, plan: MttkrpPlan) -> MttkrpOutput:
    """Parallel over slices; conflict-free (each slice owns its output row)."""
    if plan.variant != Variant.SLICE:
        raise ParameterError(f"plan variant is {plan.variant}, expected slice")
    _check_inputs(y, m, plan.mode)
    plan.validate(y.dims, m.rank)
    dims, strides, fm, foff, lam = _kernel_args(y, m, plan.mode)
    out = np.zeros((y.dims[plan.mode], m.rank))
    with _worker_pool(plan.workers) as workers:
        t0 = time.perf_counter()
        _kernels.slice_kernel(
            y.data, dims, strides, plan.mode, fm, foff, lam, m.rank, plan.unroll, out
        )
        dt = time.perf_counter() - t0
    n_s = y.size // y.dims[plan.mode]
    stats = MttkrpStats(
        Variant.SLICE,
        plan.mode,
        element_visits=y.size * math.ceil(m.rank / plan.unroll),
        atomic_updates=0,
        seconds=dt,
        workers=workers,
        tile_volume=n_s,
        unroll=plan.unroll,
    )
    return MttkrpOutput(out, stats)


def mttkrp_tile(y: DenseTensor, m: KruskalTensor, plan: MttkrpPlan) -> MttkrpOutput:
    """Parallel over tiles within slices; tiles sharing a row accumulate privately."""
    if plan.variant != Variant.TILE:
        raise ParameterError(f"plan variant is {plan.variant}, expected tile")
    _check_inputs(y, m, plan.mode)
    plan.validate(y.dims, m.rank)
    dims, strides, fm, foff, lam = _kernel_args(y, m, plan.mode)
    n_t = int(plan.tile_volume)
    i_k = y.dims[plan.mode]
    n_s = y.size // i_k
    tiles_per_slice = -(-n_s // n_t)
    with _worker_pool(plan.workers) as workers:
        out, dt = _run_private_copy(
            lambda gp: _kernels.tile_kernel(
                y.data, dims, strides, plan.mode, fm, foff, lam, m.rank, plan.unroll, n_t, gp
            ),
            workers,
            i_k,
            m.rank,
        )
    stats = MttkrpStats(
        Variant.TILE,
        plan.mode,
        element_visits=y.size * math.ceil(m.rank / plan.unroll),
        atomic_updates=i_k * tiles_per_slice * m.rank,
        seconds=dt,
        workers=workers,
        tile_volume=n_t,
        unroll=plan.unroll,
    )
    return MttkrpOutput(out, stats)


def run(y: DenseTensor, m: KruskalTensor, plan: MttkrpPlan, **kwargs) -> MttkrpOutput:
    """Dispatch one MTTKRP according to the plan's variant."""
    v = Variant(plan.variant)
    if v == Variant.REFERENCE:
        return mttkrp_reference(y, m, plan.mode)
    if v == Variant.FULL_KRP:
        return mttkrp_full_krp(y, m, plan.mode, **kwargs)
    if v == Variant.GEMM:
        return mttkrp_gemm(y, m, plan.mode, **kwargs)
    if v == Variant.ELEM:
        return mttkrp_elem(y, m, plan)
    if v == Variant.SLICE:
        return mttkrp_slice(y, m, plan)
    return mttkrp_tile(y, m, plan)


def plan_for_mode(plan: MttkrpPlan, dims, mode: int) -> MttkrpPlan:
    """Copy of ``plan`` retargeted at ``mode``, with the tile volume clamped
    to the new slice volume (tile variant only)."""
    p = replace(plan, mode=mode)
    if p.variant == Variant.TILE and p.tile_volume is not None:
        n_s = num_elements(dims) // dims[mode]
        p = replace(p, tile_volume=max(1, min(int(p.tile_volume), n_s)))
    return p


def heuristic_tile_width(dims, machine) -> int:
    """Per-mode tile width w from the last-level-private-cache budget.

    Solves w^(d-1) * s_f * c/2 = s_LM/4 for w (a quarter of the cache for
    tensor elements, half-occupancy of the c-element cache lines), takes the
    floor with an exact integer fixup, and clamps to [1, min_n I_n].
    """
    dims = tuple(int(x) for x in dims)
    d = len(dims)
    if d < 2:
        raise ParameterError("tile-width heuristic needs at least two modes")
    budget = (machine.s_lm_bytes / 4.0) / (machine.s_f_bytes * (machine.c_tiles / 2.0))
    if budget < 1.0:
        return 1
    w = int(math.floor(budget ** (1.0 / (d - 1))))
    while (w + 1) ** (d - 1) <= budget:
        w += 1
    while w > 1 and w ** (d - 1) > budget:
        w -= 1
    return max(1, min(w, min(dims)))


def heuristic_tile_volume(dims, machine) -> int:
    """N_T = w^(d-1) for the heuristic width w (before per-mode clamping)."""
    return heuristic_tile_width(dims, machine) ** (len(dims) - 1)
