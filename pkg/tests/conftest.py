# Thread-pool size must be fixed before anything imports numba, so the
# multi-worker merge paths are exercised even on small CI boxes.
import os

os.environ.setdefault("NUMBA_NUM_THREADS", "8")

import numpy as np
import pytest

import cpkern as ck
from cpkern.mttkrp import MttkrpPlan


def rng_for(seed):
    return np.random.Generator(np.random.Philox(seed))


def random_tensor(dims, seed):
    r = rng_for(seed)
    n = 1
    for e in dims:
        n *= e
    return ck.DenseTensor(dims, r.random(n))


def random_model(dims, rank, seed, unit_weights=False):
    r = rng_for(seed + 1009)
    lam = np.ones(rank) if unit_weights else r.random(rank) + 0.5
    return ck.KruskalTensor(lam, [r.random((i, rank)) for i in dims])


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    # Compile every kernel once up front; timed acceptance windows measure
    # the algorithms, not the JIT.
    dims = (3, 4, 2)
    y = random_tensor(dims, 1)
    m = random_model(dims, 2, 1)
    ck.mttkrp_reference(y, m, 0)
    ck.run(y, m, MttkrpPlan(ck.Variant.ELEM, 0, workers=2))
    ck.run(y, m, MttkrpPlan(ck.Variant.SLICE, 0, workers=2))
    ck.run(y, m, MttkrpPlan(ck.Variant.TILE, 0, tile_volume=2, workers=2))
    yield
