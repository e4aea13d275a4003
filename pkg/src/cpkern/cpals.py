"""Alternating least squares for CP decomposition, on top of the MTTKRP kernels.

One sweep updates every factor in mode order: solve A_k Gamma = G for the
unnormalized factor (G is the unit-weight MTTKRP, Gamma the Hadamard product
of the other Grams), then fold the column norms into the weight vector.  The
fit 1 - ||Y - M||_F / ||Y||_F is tracked per sweep through the factored
identity <Y, M> = sum(G lam . A_last), so the dense residual is never formed.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from numpy.linalg import LinAlgError
from scipy.linalg import cho_factor, cho_solve

from . import mttkrp as mt
from .dtensor import DenseTensor
from .errors import ParameterError
from .kruskal import KruskalTensor, gram

_INITS = ("random-uniform",)


@dataclass(frozen=True)
class AlsConfig:
    """Rank, stopping rule, seed, and the MTTKRP plan template.

    ``tol`` is the absolute change in fit between sweeps that counts as
    converged.  The plan's mode is retargeted per factor update (and its tile
    volume clamped per mode); its variant, unroll, and worker fields apply to
    every MTTKRP in the run.
    """

    rank: int
    max_iters: int = 100
    tol: float = 1e-4
    seed: int = 0
    plan: mt.MttkrpPlan = field(
        default=mt.MttkrpPlan(variant=mt.Variant.REFERENCE, mode=0)
    )
    init: str = "random-uniform"

    def validate(self) -> None:
        if self.rank < 1:
            raise ParameterError(f"rank must be >= 1, got {self.rank}")
        if self.max_iters < 1:
            raise ParameterError(f"max_iters must be >= 1, got {self.max_iters}")
        if not self.tol >= 0:
            raise ParameterError(f"tol must be >= 0, got {self.tol}")
        if self.init not in _INITS:
            raise ParameterError(f"unknown init {self.init!r}; choose from {_INITS}")


@dataclass
class AlsTrace:
    """Per-sweep fits and timing of one ALS run.

    ``mttkrp_seconds[i][k]`` is the kernel time of sweep i, mode k;
    ``other_seconds[i]`` covers that sweep's solves, Gram updates, and fit
    evaluation.  ``total_seconds`` is the wall time of the whole run, so the
    two breakdowns sum to just under it (loop glue is uncounted).
    """

    fits: list
    mttkrp_seconds: list
    other_seconds: list
    total_seconds: float
    iterations: int
    converged: bool


def _solve_normal(gamma: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Solve X Gamma = G with Gamma symmetric PSD; regularize if singular."""
    r = gamma.shape[0]
    try:
        return cho_solve(cho_factor(gamma, check_finite=False), g.T, check_finite=False).T
    except LinAlgError:
        pass
    eps = 1e-12
    for _ in range(5):
        reg = gamma + (eps * np.trace(gamma) / r) * np.eye(r)
        try:
            return cho_solve(cho_factor(reg, check_finite=False), g.T, check_finite=False).T
        except LinAlgError:
            eps *= 1e3
    return np.linalg.lstsq(gamma, g.T, rcond=None)[0].T


def cp_als(y: DenseTensor, config: AlsConfig) -> tuple:
    """Run CP-ALS; returns (KruskalTensor, AlsTrace).

    Initialization draws factor entries uniformly from [0, 1) with a
    counter-based generator, so a fixed seed gives a fixed trajectory.
    """
    config.validate()
    if not np.all(np.isfinite(y.data)):
        raise ParameterError("tensor has non-finite entries")
    norm_y = y.norm()
    if norm_y == 0.0:
        raise ParameterError("cannot fit an all-zero tensor (fit is undefined)")
    r = config.rank
    d = y.ndim

    t_start = time.perf_counter()
    rng = np.random.Generator(np.random.Philox(config.seed))
    factors = [rng.random((i_k, r)) for i_k in y.dims]
    grams = [gram(a) for a in factors]
    lam = np.ones(r)
    unit = np.ones(r)

    fits = []
    mttkrp_seconds = []
    other_seconds = []
    converged = False
    for _ in range(config.max_iters):
        sweep_mt = []
        t_other = 0.0
        g = None
        for k in range(d):
            plan_k = mt.plan_for_mode(config.plan, y.dims, k)
            out = mt.run(y, KruskalTensor(unit, factors, validate=False), plan_k)
            g = out.matrix
            sweep_mt.append(out.stats.seconds)

            t0 = time.perf_counter()
            gamma = np.ones((r, r))
            for m in range(d):
                if m != k:
                    gamma *= grams[m]
            a_hat = _solve_normal(gamma, g)
            nrm = np.linalg.norm(a_hat, axis=0)
            nz = nrm > 0
            a_hat[:, nz] /= nrm[nz]
            lam = np.where(nz, nrm, 0.0)
            factors[k] = np.ascontiguousarray(a_hat)
            grams[k] = gram(factors[k])
            t_other += time.perf_counter() - t0

        t0 = time.perf_counter()
        h = np.ones((r, r))
        for m in range(d):
            h *= grams[m]
        norm_m_sq = float(lam @ h @ lam)
        # g is the unit-weight mode-(d-1) MTTKRP and A_{d-1} was solved from
        # it, so <Y, M> costs one elementwise pass
        iprod = float(np.sum((g * lam) * factors[d - 1]))
        resid_sq = max(0.0, norm_y ** 2 - 2.0 * iprod + norm_m_sq)
        fit = 1.0 - np.sqrt(resid_sq) / norm_y
        t_other += time.perf_counter() - t0

        fits.append(float(fit))
        mttkrp_seconds.append(sweep_mt)
        other_seconds.append(t_other)
        if len(fits) >= 2 and abs(fits[-1] - fits[-2]) < config.tol:
            converged = True
            break

    total = time.perf_counter() - t_start
    model = KruskalTensor(lam, factors)
    trace = AlsTrace(
        fits=fits,
        mttkrp_seconds=mttkrp_seconds,
        other_seconds=other_seconds,
        total_seconds=total,
        iterations=len(fits),
        converged=converged,
    )
    return model, trace
