"""Analytic work, traffic, and roofline-time models for the MTTKRP variants.

Traffic models (bytes; s_f is the element size, 8 for float64):

* perfect cache:  m_inf  = s_f (N + R sum_n I_n)
* zero cache:     m_0    = s_f (N + N R (d-1) + ceil(N_S/N_T) I_k R)
* zero cache with factor rows resident in a local memory of line length l:
                  m_0,LM = s_f (N + ceil(N_S/N_T) I_k R) + s_f N R (d-1) / l
* dense baseline: m_gemm = s_f (N + R (I_L + I_R + I_k))

Time is the additive roofline T_x = f / tau_f + m_x / tau_m with
f = N R d flops.  Counts are exact Python integers wherever the formula is
integral.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from importlib import resources

from .dtensor import check_dims, num_elements
from .errors import FormatError, IndexRangeError, ParameterError

FLOAT64_BYTES = 8
GIB = 1024 ** 3

_MACHINE_FIELDS = {
    "name": str,
    "tau_f": (int, float),
    "tau_m": (int, float),
    "l": (int, float),
    "s_lm_bytes": int,
    "c_tiles": int,
    "s_f_bytes": int,
    "device_capacity_bytes": int,
}


@dataclass(frozen=True)
class MachineSpec:
    """Throughput and cache parameters of one execution target.

    ``tau_f`` is flop/s, ``tau_m`` bytes/s, ``l`` the local-memory line
    length in elements, ``s_lm_bytes`` the per-core private cache capacity,
    ``c_tiles`` the elements per cache line of the load path.
    """

    name: str
    tau_f: float
    tau_m: float
    l: float
    s_lm_bytes: int
    c_tiles: int
    s_f_bytes: int
    device_capacity_bytes: int

    def __post_init__(self):
        if self.tau_f <= 0 or self.tau_m <= 0:
            raise ParameterError("tau_f and tau_m must be positive")
        if self.l < 1:
            raise ParameterError("line length l must be >= 1")
        if min(self.s_lm_bytes, self.c_tiles, self.s_f_bytes, self.device_capacity_bytes) < 1:
            raise ParameterError("cache, line, element, and capacity sizes must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


def machine_from_dict(obj) -> MachineSpec:
    if not isinstance(obj, dict):
        raise FormatError("machine spec must be a JSON object")
    missing = set(_MACHINE_FIELDS) - set(obj)
    if missing:
        raise FormatError(f"machine spec missing fields: {sorted(missing)}")
    unknown = set(obj) - set(_MACHINE_FIELDS)
    if unknown:
        raise FormatError(f"machine spec has unknown fields: {sorted(unknown)}")
    for key, types in _MACHINE_FIELDS.items():
        if not isinstance(obj[key], types) or isinstance(obj[key], bool):
            raise FormatError(f"machine spec field {key!r} has the wrong type")
    try:
        return MachineSpec(**obj)
    except ParameterError as exc:
        raise FormatError(f"machine spec invalid: {exc}") from exc


def load_machine(path) -> MachineSpec:
    with open(path, "r", encoding="utf-8") as f:
        try:
            obj = json.load(f)
        except json.JSONDecodeError as exc:
            raise FormatError(f"machine spec is not valid JSON: {exc}") from exc
    return machine_from_dict(obj)


def bundled_machine_names() -> list:
    base = resources.files(__package__) / "machines"
    return sorted(p.name[: -len(".json")] for p in base.iterdir() if p.name.endswith(".json"))


def bundled_machine(name: str) -> MachineSpec:
    base = resources.files(__package__) / "machines"
    path = base / f"{name}.json"
    if not path.is_file():
        raise ParameterError(
            f"no bundled machine {name!r}; available: {bundled_machine_names()}"
        )
    return machine_from_dict(json.loads(path.read_text(encoding="utf-8")))


def flops(dims, rank: int) -> int:
    """f = N R d (one multiply per element per mode per column, fused adds)."""
    dims = check_dims(dims)
    if rank < 0:
        raise ParameterError("rank must be >= 0")
    return num_elements(dims) * rank * len(dims)


def mem_infty(dims, rank: int, s_f: int = FLOAT64_BYTES) -> int:
    """Perfect-cache traffic: every byte of tensor and factors moves once."""
    dims = check_dims(dims)
    if rank < 0:
        raise ParameterError("rank must be >= 0")
    return s_f * (num_elements(dims) + rank * sum(dims))


def _tiles_per_slice(dims, mode: int, tile_volume: int) -> int:
    dims = check_dims(dims)
    d = len(dims)
    if not 0 <= mode < d:
        raise IndexRangeError(f"mode {mode} out of range [0, {d - 1}]")
    n_s = num_elements(dims) // dims[mode]
    if not 1 <= tile_volume <= n_s:
        raise ParameterError(f"tile_volume {tile_volume} out of range [1, {n_s}]")
    return -(-n_s // tile_volume)


def mem_zero(dims, rank: int, mode: int, tile_volume: int, s_f: int = FLOAT64_BYTES) -> int:
    """Zero-cache traffic: factors re-read per element, one row update per tile."""
    dims = check_dims(dims)
    tps = _tiles_per_slice(dims, mode, tile_volume)
    n = num_elements(dims)
    d = len(dims)
    return s_f * (n + n * rank * (d - 1) + tps * dims[mode] * rank)


def mem_zero_lm(
    dims, rank: int, mode: int, tile_volume: int, l: float, s_f: int = FLOAT64_BYTES
) -> float:
    """Zero-cache traffic with factor rows amortized over lines of length l."""
    if l < 1:
        raise ParameterError("line length l must be >= 1")
    dims = check_dims(dims)
    tps = _tiles_per_slice(dims, mode, tile_volume)
    n = num_elements(dims)
    d = len(dims)
    return s_f * (n + tps * dims[mode] * rank) + s_f * n * rank * (d - 1) / l


def mem_gemm(dims, rank: int, mode: int, s_f: int = FLOAT64_BYTES) -> int:
    """Dense-baseline footprint: tensor plus partial KRPs plus output."""
    dims = check_dims(dims)
    d = len(dims)
    if not 0 <= mode < d:
        raise IndexRangeError(f"mode {mode} out of range [0, {d - 1}]")
    i_l = num_elements(dims[:mode]) if mode > 0 else 1
    i_r = num_elements(dims[mode + 1 :]) if mode < d - 1 else 1
    return s_f * (num_elements(dims) + rank * (i_l + i_r + dims[mode]))


def mem_gemm_worst(dims, rank: int, s_f: int = FLOAT64_BYTES) -> tuple:
    """(bytes, mode) of the most expensive dense-baseline mode."""
    dims = check_dims(dims)
    best = max(range(len(dims)), key=lambda k: mem_gemm(dims, rank, k, s_f))
    return mem_gemm(dims, rank, best, s_f), best


def predict_seconds(f: int, m_bytes: float, machine: MachineSpec) -> float:
    """Additive roofline: T = f / tau_f + m / tau_m."""
    if f < 0 or m_bytes < 0:
        raise ParameterError("work and traffic must be nonnegative")
    return f / machine.tau_f + m_bytes / machine.tau_m


def intensity(f: int, m_inf_bytes: int) -> float:
    """Arithmetic intensity against the perfect-cache traffic (flop/byte)."""
    if m_inf_bytes <= 0:
        raise ParameterError("traffic must be positive")
    return f / m_inf_bytes


def is_compute_bound(intens: float, machine: MachineSpec) -> bool:
    """True when intensity clears the machine balance tau_f / tau_m."""
    return intens >= machine.tau_f / machine.tau_m


def gflops(f: int, seconds: float) -> float:
    """Achieved flop rate in binary GFLOP/s (1024^3 flops per unit)."""
    if seconds <= 0:
        raise ParameterError("seconds must be positive")
    return f / seconds / GIB


def gbytes_per_s(m_bytes: float, seconds: float) -> float:
    """Achieved traffic rate in GiB/s under a given traffic model."""
    if seconds <= 0:
        raise ParameterError("seconds must be positive")
    return m_bytes / seconds / GIB


def device_count(n_bytes: int, machine: MachineSpec) -> int:
    """Devices needed to hold ``n_bytes``, by capacity alone (a lower bound:
    working-set overlap and scratch can only raise the real requirement)."""
    if n_bytes < 0:
        raise ParameterError("byte count must be nonnegative")
    return -(-int(n_bytes) // machine.device_capacity_bytes)


@dataclass
class PerfReport:
    """Model numbers for one (shape, rank, mode, tile volume, machine) point,
    with achieved rates filled in when a measured time is supplied."""

    f: int
    m_inf: int
    m_zero: int
    m_zero_lm: float
    t_inf: float
    t_zero: float
    t_zero_lm: float
    intensity: float
    compute_bound: bool
    seconds: float | None = None
    gflops: float | None = None
    gib_s_zero: float | None = None
    gib_s_inf: float | None = None


def model_report(
    dims, rank: int, mode: int, tile_volume: int, machine: MachineSpec, seconds: float | None = None
) -> PerfReport:
    f = flops(dims, rank)
    m_inf = mem_infty(dims, rank, machine.s_f_bytes)
    m_zero = mem_zero(dims, rank, mode, tile_volume, machine.s_f_bytes)
    m_zero_lm = mem_zero_lm(dims, rank, mode, tile_volume, machine.l, machine.s_f_bytes)
    intens = intensity(f, m_inf)
    rep = PerfReport(
        f=f,
        m_inf=m_inf,
        m_zero=m_zero,
        m_zero_lm=m_zero_lm,
        t_inf=predict_seconds(f, m_inf, machine),
        t_zero=predict_seconds(f, m_zero, machine),
        t_zero_lm=predict_seconds(f, m_zero_lm, machine),
        intensity=intens,
        compute_bound=is_compute_bound(intens, machine),
    )
    if seconds is not None:
        rep.seconds = seconds
        rep.gflops = gflops(f, seconds)
        rep.gib_s_zero = gbytes_per_s(m_zero, seconds)
        rep.gib_s_inf = gbytes_per_s(m_inf, seconds)
    return rep
