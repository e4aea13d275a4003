import numpy as np
import pytest

import cpkern as ck
from cpkern import mttkrp as mt
from cpkern.mttkrp import MttkrpPlan, Variant
from conftest import random_model, random_tensor, rng_for


def rel_err(got, ref):
    return float(np.linalg.norm(got - ref) / np.linalg.norm(ref))


def kruskal_mttkrp_oracle(m_y, m_z, k):
    """Closed form for MTTKRP of full(m_y) against m_z: factored tensors make
    the product a chain of small Grams (third, kernel-free oracle)."""
    prod = np.ones((m_y.rank, m_z.rank))
    for mode in range(m_y.ndim):
        if mode != k:
            prod *= m_y.factors[mode].T @ m_z.factors[mode]
    return m_y.factors[k] @ (np.diag(m_y.weights) @ prod @ np.diag(m_z.weights))


CASES = [((5, 4, 6), 3), ((3, 8, 2, 5), 4), ((6, 6), 2), ((2, 3, 2, 2, 3), 5)]


# ---------------------------------------------------------------- reference


def test_reference_zero_tensor():
    dims = (3, 4, 2)
    y = ck.DenseTensor.zeros(dims)
    m = random_model(dims, 3, seed=1)
    out = ck.mttkrp_reference(y, m, 1)
    assert np.array_equal(out.matrix, np.zeros((4, 3)))
    assert out.stats.element_visits == 24
    assert out.stats.atomic_updates == 0


def test_reference_matrix_case():
    r = rng_for(2)
    y2 = r.random((5, 7))
    a2 = r.random((7, 3))
    lam = r.random(3) + 0.5
    y = ck.DenseTensor.from_ndarray(y2)
    m = ck.KruskalTensor(lam, [r.random((5, 3)), a2])
    got = ck.mttkrp_reference(y, m, 0).matrix
    np.testing.assert_allclose(got, y2 @ (a2 * lam), rtol=1e-13)


@pytest.mark.parametrize("dims,rank", CASES)
def test_reference_matches_kruskal_identity(dims, rank):
    m_y = random_model(dims, 2, seed=3)
    m_z = random_model(dims, rank, seed=4)
    y = m_y.full()
    for k in range(len(dims)):
        got = ck.mttkrp_reference(y, m_z, k).matrix
        assert rel_err(got, kruskal_mttkrp_oracle(m_y, m_z, k)) < 1e-12


# ---------------------------------------------------------------- oracles


@pytest.mark.parametrize("dims,rank", CASES)
def test_full_krp_agrees_with_reference(dims, rank):
    y = random_tensor(dims, 5)
    m = random_model(dims, rank, seed=6)
    for k in range(len(dims)):
        ref = ck.mttkrp_reference(y, m, k).matrix
        krp = ck.mttkrp_full_krp(y, m, k).matrix
        assert rel_err(krp, ref) < 1e-13


def test_full_krp_budget_refusal():
    dims = (6, 6, 6)
    y = random_tensor(dims, 7)
    m = random_model(dims, 4, seed=8)
    need = mt.full_krp_bytes(dims, 4, 0)
    assert need == 8 * 36 * 4
    with pytest.raises(ck.ResourceError):
        ck.mttkrp_full_krp(y, m, 0, budget_bytes=need - 1)
    ck.mttkrp_full_krp(y, m, 0, budget_bytes=need)  # boundary is allowed


@pytest.mark.parametrize("dims,rank", CASES)
def test_gemm_agrees_with_reference(dims, rank):
    y = random_tensor(dims, 9)
    m = random_model(dims, rank, seed=10)
    for k in range(len(dims)):
        ref = ck.mttkrp_reference(y, m, k).matrix
        gem = ck.mttkrp_gemm(y, m, k).matrix
        assert rel_err(gem, ref) < 1e-12


def test_gemm_first_mode_bit_equals_full_krp_two_way():
    # both paths collapse to the same single BLAS call for matrices
    dims = (7, 9)
    y = random_tensor(dims, 11)
    m = random_model(dims, 3, seed=12, unit_weights=True)
    assert np.array_equal(
        ck.mttkrp_gemm(y, m, 0).matrix, ck.mttkrp_full_krp(y, m, 0).matrix
    )


def test_gemm_scratch_accounting_and_cap():
    dims = (4, 5, 6)
    rank = 3
    y = random_tensor(dims, 13)
    m = random_model(dims, rank, seed=14)
    out = ck.mttkrp_gemm(y, m, 1)
    assert out.stats.scratch_bytes == 8 * (rank * (4 + 6) + 4 * 5 * rank)
    assert out.stats.footprint_bytes == ck.mem_gemm(dims, rank, 1)
    assert ck.mttkrp_gemm(y, m, 0).stats.scratch_bytes == 8 * rank * 30
    assert ck.mttkrp_gemm(y, m, 2).stats.scratch_bytes == 8 * rank * 20
    with pytest.raises(ck.ResourceError):
        ck.mttkrp_gemm(y, m, 1, scratch_cap_bytes=16)


@pytest.mark.parametrize("dims", [(7, 9), (4, 5, 6), (3, 4, 2, 5)])
def test_baselines_do_not_mutate_the_model(dims):
    # weight folding must scale a scratch copy, never the caller's factors
    y = random_tensor(dims, 50)
    m = random_model(dims, 3, seed=51)
    before_w = m.weights.copy()
    before_f = [a.copy() for a in m.factors]
    for k in range(len(dims)):
        ck.mttkrp_gemm(y, m, k)
        ck.mttkrp_full_krp(y, m, k)
    assert np.array_equal(m.weights, before_w)
    for a, b in zip(m.factors, before_f):
        assert np.array_equal(a, b)


def test_gemm_model_bytes_matches_perfmodel():
    dims = (129, 129, 129, 12, 39)
    for k in range(5):
        assert mt.gemm_model_bytes(dims, 2000, k) == ck.mem_gemm(dims, 2000, k)


# ---------------------------------------------------------------- kernels


@pytest.mark.parametrize("dims,rank", CASES)
@pytest.mark.parametrize("workers", [1, 3])
def test_parallel_variants_match_reference(dims, rank, workers):
    y = random_tensor(dims, 15)
    m = random_model(dims, rank, seed=16)
    for k in range(len(dims)):
        ns = y.size // dims[k]
        ref = ck.mttkrp_reference(y, m, k).matrix
        nref = np.linalg.norm(ref)
        for plan in [
            MttkrpPlan(Variant.ELEM, k, workers=workers),
            MttkrpPlan(Variant.SLICE, k, workers=workers),
            MttkrpPlan(Variant.TILE, k, tile_volume=min(5, ns), workers=workers),
            MttkrpPlan(Variant.TILE, k, tile_volume=ns, workers=workers),
        ]:
            got = ck.run(y, m, plan).matrix
            assert np.linalg.norm(got - ref) <= 1e-12 * nref


def test_atomic_update_counts_exact():
    dims = (5, 4, 6)
    rank = 7
    n = 120
    y = random_tensor(dims, 17)
    m = random_model(dims, rank, seed=18)
    for k, i_k in enumerate(dims):
        n_s = n // i_k
        elem = ck.run(y, m, MttkrpPlan(Variant.ELEM, k)).stats
        assert elem.atomic_updates == n * rank
        assert elem.element_visits == n
        sl = ck.run(y, m, MttkrpPlan(Variant.SLICE, k)).stats
        assert sl.atomic_updates == 0
        for nt in (1, 5, 7, n_s):  # 7 leaves a ragged final tile for 24/30/20
            tl = ck.run(y, m, MttkrpPlan(Variant.TILE, k, tile_volume=nt)).stats
            assert tl.atomic_updates == i_k * (-(-n_s // nt)) * rank
    # column-block re-reads: ceil(R / F) passes over the tensor
    sl = ck.run(y, m, MttkrpPlan(Variant.SLICE, 0, unroll=4)).stats
    assert sl.element_visits == n * 2  # ceil(7/4)
    sl1 = ck.run(y, m, MttkrpPlan(Variant.SLICE, 0, unroll=7)).stats
    assert sl1.element_visits == n


def test_single_worker_bit_reproducible_and_canonical():
    dims = (4, 5, 3, 4)
    y = random_tensor(dims, 19)
    m = random_model(dims, 6, seed=20)
    for k in range(4):
        ref = ck.mttkrp_reference(y, m, k).matrix
        e1 = ck.run(y, m, MttkrpPlan(Variant.ELEM, k, workers=1)).matrix
        e2 = ck.run(y, m, MttkrpPlan(Variant.ELEM, k, workers=1)).matrix
        assert np.array_equal(e1, e2)
        assert np.array_equal(e1, ref)  # one worker = canonical serial order
        s1 = ck.run(y, m, MttkrpPlan(Variant.SLICE, k, workers=1)).matrix
        assert np.array_equal(s1, ref)


def test_slice_result_independent_of_worker_count():
    # slices own their rows, so any pool size gives identical bits
    dims = (6, 4, 5)
    y = random_tensor(dims, 21)
    m = random_model(dims, 3, seed=22)
    base = ck.run(y, m, MttkrpPlan(Variant.SLICE, 0, workers=1)).matrix
    for workers in (2, 5, 8):
        got = ck.run(y, m, MttkrpPlan(Variant.SLICE, 0, workers=workers)).matrix
        assert np.array_equal(got, base)


def test_fixed_worker_count_bit_reproducible():
    dims = (4, 6, 5)
    y = random_tensor(dims, 23)
    m = random_model(dims, 4, seed=24)
    for plan in [
        MttkrpPlan(Variant.ELEM, 1, workers=4),
        MttkrpPlan(Variant.TILE, 1, tile_volume=3, workers=4),
    ]:
        a = ck.run(y, m, plan).matrix
        b = ck.run(y, m, plan).matrix
        assert np.array_equal(a, b)


def test_tile_limit_cases_match_other_variants():
    dims = (5, 3, 4, 2)
    y = random_tensor(dims, 25)
    m = random_model(dims, 5, seed=26)
    for k in range(4):
        n_s = y.size // dims[k]
        slice_out = ck.run(y, m, MttkrpPlan(Variant.SLICE, k, workers=1)).matrix
        tile_ns = ck.run(
            y, m, MttkrpPlan(Variant.TILE, k, tile_volume=n_s, workers=1)
        ).matrix
        assert np.array_equal(tile_ns, slice_out)  # one tile per slice = slice
        elem_out = ck.run(y, m, MttkrpPlan(Variant.ELEM, k, workers=1)).matrix
        tile_1 = ck.run(y, m, MttkrpPlan(Variant.TILE, k, tile_volume=1, workers=1)).matrix
        assert np.array_equal(tile_1, elem_out)  # one-element tiles = per-element adds


def test_unroll_width_does_not_change_bits():
    # per-column accumulation order is unroll-invariant by construction
    dims = (4, 5, 6)
    y = random_tensor(dims, 27)
    m = random_model(dims, 7, seed=28)
    base = ck.run(y, m, MttkrpPlan(Variant.TILE, 2, unroll=1, tile_volume=5, workers=2)).matrix
    for unroll in (2, 3, 4, 7, 100):
        got = ck.run(
            y, m, MttkrpPlan(Variant.TILE, 2, unroll=unroll, tile_volume=5, workers=2)
        ).matrix
        assert np.array_equal(got, base)


def test_multi_worker_repeat_spread_stays_tiny():
    dims = (6, 5, 4)
    y = random_tensor(dims, 29)
    m = random_model(dims, 8, seed=30)
    ref = ck.mttkrp_reference(y, m, 0).matrix
    nref = np.linalg.norm(ref)
    for _ in range(10):
        got = ck.run(y, m, MttkrpPlan(Variant.TILE, 0, tile_volume=4, workers=8)).matrix
        assert np.linalg.norm(got - ref) <= 1e-12 * nref


# ---------------------------------------------------------------- plans


def test_plan_validation_errors():
    dims = (4, 5, 6)
    y = random_tensor(dims, 31)
    m = random_model(dims, 2, seed=32)
    with pytest.raises(ck.IndexRangeError):
        ck.run(y, m, MttkrpPlan(Variant.SLICE, 3))
    with pytest.raises(ck.ParameterError):
        ck.run(y, m, MttkrpPlan(Variant.SLICE, 0, unroll=0))
    with pytest.raises(ck.ParameterError):
        ck.run(y, m, MttkrpPlan(Variant.TILE, 0))  # tile needs a volume
    with pytest.raises(ck.ParameterError):
        ck.run(y, m, MttkrpPlan(Variant.TILE, 0, tile_volume=31))  # N_S is 30
    with pytest.raises(ck.ParameterError):
        ck.run(y, m, MttkrpPlan(Variant.TILE, 0, tile_volume=0))
    with pytest.raises(ck.ParameterError):
        ck.run(y, m, MttkrpPlan(Variant.SLICE, 0, team_width=2))
    with pytest.raises(ck.ParameterError):
        ck.run(y, m, MttkrpPlan(Variant.SLICE, 0, vector_width=2))
    with pytest.raises(ck.ParameterError):
        ck.mttkrp_elem(y, m, MttkrpPlan(Variant.SLICE, 0))  # variant mismatch
    with pytest.raises(ck.ShapeError):
        ck.run(random_tensor((4, 5), 1), m, MttkrpPlan(Variant.SLICE, 0))


def test_plan_for_mode_clamps_tile_volume():
    dims = (10, 3, 4)  # slice volumes 12, 40, 30
    plan = MttkrpPlan(Variant.TILE, 0, tile_volume=40)
    p0 = mt.plan_for_mode(plan, dims, 0)
    assert p0.tile_volume == 12
    p1 = mt.plan_for_mode(plan, dims, 1)
    assert p1.tile_volume == 40
    assert p1.mode == 1


def test_worker_resolution_clamps_to_pool():
    import numba

    cap = numba.config.NUMBA_NUM_THREADS
    assert mt.resolve_workers(999) == cap
    assert mt.resolve_workers(1) == 1
    assert mt.resolve_workers(0) >= 1
    y = random_tensor((4, 4), 33)
    m = random_model((4, 4), 2, seed=34)
    out = ck.run(y, m, MttkrpPlan(Variant.ELEM, 0, workers=999))
    assert out.stats.workers == cap


# ---------------------------------------------------------------- heuristic


def test_heuristic_pinned_values():
    h100 = ck.bundled_machine("nvidia-h100")
    intel = ck.bundled_machine("intel-8480p")
    island = (129, 129, 129, 12, 39)
    tearing = (401, 201, 12, 501)
    # budget (262144/4) / (8 * 16) = 512, fourth root 4.75 -> 4
    assert ck.heuristic_tile_width(island, h100) == 4
    assert ck.heuristic_tile_volume(island, h100) == 256
    # budget 131072: d=5 root 19 and d=4 root 50, both clamp to min extent 12
    assert ck.heuristic_tile_width(island, intel) == 12
    assert ck.heuristic_tile_volume(island, intel) == 20736
    assert ck.heuristic_tile_width(tearing, intel) == 12
    assert ck.heuristic_tile_volume(tearing, intel) == 1728


def test_heuristic_degenerate_and_bounds():
    h100 = ck.bundled_machine("nvidia-h100")
    assert ck.heuristic_tile_width((1, 1000, 1000), h100) == 1
    big = ck.MachineSpec("t", 1.0, 1.0, 1.0, 2 ** 40, 1, 8, 1)
    assert ck.heuristic_tile_width((5, 6, 7), big) == 5  # clamped to min extent
    tiny = ck.MachineSpec("t", 1.0, 1.0, 1.0, 1, 1, 8, 1)
    assert ck.heuristic_tile_width((5, 6, 7), tiny) == 1
    with pytest.raises(ck.ParameterError):
        ck.heuristic_tile_width((5,), h100)


@pytest.mark.parametrize("s_lm", [4096, 65536, 2 ** 21, 2 ** 24])
@pytest.mark.parametrize("d", [2, 3, 4, 5])
def test_heuristic_width_is_exact_floor(s_lm, d):
    mach = ck.MachineSpec("t", 1.0, 1.0, 1.0, s_lm, 2, 8, 1)
    dims = (10 ** 6,) * d
    w = ck.heuristic_tile_width(dims, mach)
    budget = (s_lm / 4) / (8 * 1.0)
    assert w ** (d - 1) <= budget
    assert (w + 1) ** (d - 1) > budget


# ---------------------------------------------------------------- stats


def test_stats_fields_round_out():
    dims = (4, 3, 5)
    y = random_tensor(dims, 35)
    m = random_model(dims, 2, seed=36)
    out = ck.run(y, m, MttkrpPlan(Variant.TILE, 1, tile_volume=4, workers=2))
    st = out.stats
    assert st.variant == Variant.TILE and st.mode == 1
    assert st.tile_volume == 4 and st.unroll == 4
    assert st.workers == 2
    assert st.seconds > 0
    assert out.matrix.shape == (3, 2)
    assert out.matrix.dtype == np.float64
    assert out.matrix.flags["C_CONTIGUOUS"]
