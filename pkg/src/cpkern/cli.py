"""Command-line benchmark harness.

Subcommands: ``gen`` (write tensor files), ``mttkrp`` (run and verify one
kernel configuration), ``sweep`` (grid of runs to CSV), ``model`` (analytic
numbers only, no kernel runs), ``cpals`` (full decomposition with timing
split).

Conventions on this surface: modes are 1-based, shapes are comma-separated
extents, machine specs are bundled names or JSON paths.  Exit codes: 0 ok,
1 verification mismatch, 2 invalid arguments or malformed input files,
3 resource-budget refusal, 4 I/O failure.  ``MTTKRP_WORKERS`` sets the
default worker count; an explicit ``--workers`` wins.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import statistics
import sys
import time

import numpy as np

from . import cpals as als
from . import mttkrp as mt
from . import perfmodel as pm
from .dtensor import DenseTensor, num_elements, read_dten, read_dten_header, write_dten
from .errors import (
    CpkernError,
    FormatError,
    IndexRangeError,
    ParameterError,
    ResourceError,
    ShapeError,
)
from .kruskal import KruskalTensor, save_kten

PRESETS = {
    "tearing": (401, 201, 12, 501),
    "island": (129, 129, 129, 12, 39),
    "tearing-small": (51, 26, 12, 51),
    "island-small": (17, 17, 17, 12, 9),
}

LARGE_BYTES = 1024 ** 3  # payloads above this need --allow-large
AUTO_VERIFY_MAX = 100_000  # elements; small runs are checked automatically
VERIFY_TOL = 1e-12

BENCH_VARIANTS = (mt.Variant.GEMM, mt.Variant.ELEM, mt.Variant.SLICE, mt.Variant.TILE)


def _parse_shape(text: str) -> tuple:
    try:
        dims = tuple(int(x) for x in text.split(","))
    except ValueError:
        raise ParameterError(f"shape must be comma-separated integers, got {text!r}")
    if not dims or any(x < 1 for x in dims):
        raise ParameterError(f"every extent must be >= 1, got {text!r}")
    return dims


def _parse_int_list(text: str, what: str) -> list:
    try:
        out = [int(x) for x in text.split(",")]
    except ValueError:
        raise ParameterError(f"{what} must be comma-separated integers, got {text!r}")
    if not out:
        raise ParameterError(f"{what} must not be empty")
    return out


def _parse_variant(text: str) -> mt.Variant:
    try:
        return mt.Variant(text.lower())
    except ValueError:
        names = ", ".join(v.value for v in mt.Variant)
        raise ParameterError(f"unknown variant {text!r}; choose from {names}")


def _resolve_machine(arg: str) -> pm.MachineSpec:
    if os.path.exists(arg):
        return pm.load_machine(arg)
    return pm.bundled_machine(arg)


def _resolve_modes(text: str, d: int) -> list:
    """1-based mode list from 'all' or CSV; returned 0-based."""
    if text.strip().lower() == "all":
        return list(range(d))
    modes = _parse_int_list(text, "modes")
    for k in modes:
        if not 1 <= k <= d:
            raise ParameterError(f"mode {k} out of range [1, {d}]")
    return [k - 1 for k in modes]


def _default_workers(args) -> int:
    if args.workers is not None:
        return args.workers
    env = os.environ.get("MTTKRP_WORKERS")
    if env:
        try:
            return int(env)
        except ValueError:
            raise ParameterError(f"MTTKRP_WORKERS must be an integer, got {env!r}")
    return 0


def _shape_from_args(args) -> tuple:
    if getattr(args, "preset", None):
        return PRESETS[args.preset]
    if args.shape:
        return _parse_shape(args.shape)
    raise ParameterError("need --shape or --preset")


def _tensor_source(args) -> tuple:
    """(DenseTensor, label) from --tensor or a seeded synthetic --shape."""
    if args.tensor:
        return read_dten(args.tensor), args.tensor
    if not args.shape:
        raise ParameterError("need --tensor or --shape")
    dims = _parse_shape(args.shape)
    payload = 8 * num_elements(dims)
    if payload > LARGE_BYTES and not args.allow_large:
        raise ResourceError(
            f"synthetic tensor would hold {payload} bytes; pass --allow-large to proceed"
        )
    rng = np.random.Generator(np.random.Philox(args.seed))
    return DenseTensor(dims, rng.random(num_elements(dims))), f"synthetic(shape={dims})"


def _bench_factors(dims, rank: int, seed: int) -> KruskalTensor:
    """Unit-weight factors for kernel benchmarking, from a counter-based RNG."""
    rng = np.random.Generator(np.random.Philox(seed + 1))
    factors = [rng.random((i_k, rank)) for i_k in dims]
    return KruskalTensor(np.ones(rank), factors, validate=False)


def _rel_err(g: np.ndarray, ref: np.ndarray) -> float:
    denom = float(np.linalg.norm(ref))
    diff = float(np.linalg.norm(g - ref))
    if denom == 0.0:
        return 0.0 if diff == 0.0 else math.inf
    return diff / denom


def _resolve_tile_volume(args, dims, machine) -> tuple:
    """(width or None, requested N_T) from --tile-width / --tile-volume / heuristic."""
    if args.tile_volume is not None:
        if args.tile_volume < 1:
            raise ParameterError(f"tile volume must be >= 1, got {args.tile_volume}")
        return None, args.tile_volume
    if args.tile_width is not None:
        if args.tile_width < 1:
            raise ParameterError(f"tile width must be >= 1, got {args.tile_width}")
        return args.tile_width, args.tile_width ** (len(dims) - 1)
    width = mt.heuristic_tile_width(dims, machine)
    return width, width ** (len(dims) - 1)


# ---------------------------------------------------------------- gen


def cmd_gen(args) -> int:
    dims = _shape_from_args(args)
    n = num_elements(dims)
    payload = 8 * n
    if payload > LARGE_BYTES and not args.allow_large:
        raise ResourceError(
            f"refusing to write a {payload}-byte payload; pass --allow-large to proceed"
        )
    rng = np.random.Generator(np.random.Philox(args.seed))
    if args.kind == "random":
        t = DenseTensor(dims, rng.random(n))
    else:
        if args.rank < 1:
            raise ParameterError(f"rank must be >= 1, got {args.rank}")
        factors = [rng.random((i_k, args.rank)) for i_k in dims]
        m = KruskalTensor(np.ones(args.rank), factors, validate=False)
        t = m.full()
        if math.isfinite(args.snr):
            if args.snr <= 0:
                raise ParameterError(f"snr must be positive, got {args.snr}")
            noise = rng.standard_normal(n)
            scale = t.norm() / (args.snr * float(np.linalg.norm(noise)))
            t = DenseTensor(dims, t.data + scale * noise)
    write_dten(args.out, t)
    print(
        json.dumps(
            {
                "out": args.out,
                "dims": list(dims),
                "n_elements": n,
                "payload_bytes": payload,
                "kind": args.kind,
                "seed": args.seed,
            }
        )
    )
    return 0


# ---------------------------------------------------------------- mttkrp


def _run_plan(y, m, plan, args):
    if plan.variant == mt.Variant.FULL_KRP:
        return mt.run(y, m, plan, budget_bytes=args.krp_budget)
    if plan.variant == mt.Variant.GEMM:
        return mt.run(y, m, plan, scratch_cap_bytes=args.scratch_cap)
    return mt.run(y, m, plan)


def cmd_mttkrp(args) -> int:
    y, label = _tensor_source(args)
    machine = _resolve_machine(args.machine)
    variant = _parse_variant(args.variant)
    d = y.ndim
    if not 1 <= args.mode <= d:
        raise ParameterError(f"mode {args.mode} out of range [1, {d}]")
    mode = args.mode - 1
    m = _bench_factors(y.dims, args.rank, args.seed)

    width = None
    tile_req = None
    if variant == mt.Variant.TILE:
        width, tile_req = _resolve_tile_volume(args, y.dims, machine)
    plan = mt.plan_for_mode(
        mt.MttkrpPlan(
            variant=variant,
            mode=mode,
            unroll=args.unroll,
            tile_volume=tile_req,
            workers=_default_workers(args),
        ),
        y.dims,
        mode,
    )
    plan.validate(y.dims, args.rank)

    for _ in range(args.warmup):
        _run_plan(y, m, plan, args)
    times = []
    out = None
    for _ in range(args.reps):
        out = _run_plan(y, m, plan, args)
        times.append(out.stats.seconds)
    stats = out.stats

    f = pm.flops(y.dims, args.rank)
    m_inf = pm.mem_infty(y.dims, args.rank, machine.s_f_bytes)
    nt_model = {
        mt.Variant.REFERENCE: 1,
        mt.Variant.ELEM: 1,
        mt.Variant.SLICE: y.size // y.dims[mode],
        mt.Variant.TILE: stats.tile_volume,
    }.get(variant)
    t_min = min(times)
    report = {
        "tensor": label,
        "dims": list(y.dims),
        "n_elements": y.size,
        "variant": variant.value,
        "mode": args.mode,
        "rank": args.rank,
        "unroll": stats.unroll,
        "tile_width": width,
        "tile_volume": stats.tile_volume,
        "workers_requested": plan.workers,
        "workers_effective": stats.workers,
        "warmup": args.warmup,
        "reps": args.reps,
        "times_s": times,
        "time_min_s": t_min,
        "time_mean_s": statistics.fmean(times),
        "machine": machine.name,
        "f": f,
        "m_inf": m_inf,
        "intensity": pm.intensity(f, m_inf),
        "compute_bound": pm.is_compute_bound(pm.intensity(f, m_inf), machine),
        "t_inf": pm.predict_seconds(f, m_inf, machine),
        "gflops": pm.gflops(f, t_min),
        "mops_inf": pm.gbytes_per_s(m_inf, t_min),
        "atomic_updates": stats.atomic_updates,
        "element_visits": stats.element_visits,
        "scratch_bytes": stats.scratch_bytes,
        "footprint_bytes": stats.footprint_bytes,
    }
    if nt_model is not None:
        m_zero = pm.mem_zero(y.dims, args.rank, mode, nt_model, machine.s_f_bytes)
        m_zero_lm = pm.mem_zero_lm(
            y.dims, args.rank, mode, nt_model, machine.l, machine.s_f_bytes
        )
        report.update(
            {
                "m_zero": m_zero,
                "m_zero_lm": m_zero_lm,
                "t_zero": pm.predict_seconds(f, m_zero, machine),
                "t_zero_lm": pm.predict_seconds(f, m_zero_lm, machine),
                "mops0": pm.gbytes_per_s(m_zero, t_min),
            }
        )
    else:
        report.update(
            {"m_zero": None, "m_zero_lm": None, "t_zero": None, "t_zero_lm": None, "mops0": None}
        )

    verify = args.verify or y.size <= AUTO_VERIFY_MAX
    report["verified"] = verify
    report["oracle_max_rel_err"] = None
    report["oracle_ok"] = None
    if verify:
        ref = mt.mttkrp_reference(y, m, mode)
        err = _rel_err(out.matrix, ref.matrix)
        report["oracle_max_rel_err"] = err
        report["oracle_ok"] = bool(err <= VERIFY_TOL)

    text = json.dumps(report, indent=2)
    print(text)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    if verify and not report["oracle_ok"]:
        print(f"error: result differs from reference by {report['oracle_max_rel_err']:.3e}",
              file=sys.stderr)
        return 1
    return 0


# ---------------------------------------------------------------- sweep


def _csv_cell(v):
    """CSV dialect: floats carry 17 significant digits (exact round-trip)."""
    return f"{v:.17g}" if isinstance(v, float) else v


def cmd_sweep(args) -> int:
    y, _label = _tensor_source(args)
    machine = _resolve_machine(args.machine)
    d = y.ndim
    variants = [_parse_variant(v) for v in args.variants.split(",")]
    for v in variants:
        if v not in BENCH_VARIANTS:
            raise ParameterError(f"sweep benchmarks {[b.value for b in BENCH_VARIANTS]}, not {v.value}")
    modes = _resolve_modes(args.modes, d)
    ranks = _parse_int_list(args.ranks, "ranks")
    if args.tile_widths:
        widths = _parse_int_list(args.tile_widths, "tile widths")
        if any(w < 1 for w in widths):
            raise ParameterError("tile widths must be >= 1")
    else:
        widths = [mt.heuristic_tile_width(y.dims, machine)]
    workers = _default_workers(args)

    columns = [
        "variant", "mode", "rank", "tile_width", "N_T", "rep", "time_s", "gflops",
        "mops0", "mopsInf", "T0", "T0LM", "TInf", "atomic_updates",
    ]
    rows = []
    agg_rows = []
    for variant in variants:
        for rank in ranks:
            m = _bench_factors(y.dims, rank, args.seed)
            f = pm.flops(y.dims, rank)
            m_inf = pm.mem_infty(y.dims, rank, machine.s_f_bytes)
            t_inf = pm.predict_seconds(f, m_inf, machine)
            width_list = widths if variant == mt.Variant.TILE else [None]
            for width in width_list:
                per_mode_gflops = []
                if variant == mt.Variant.TILE:
                    agg_nt = width ** (d - 1)
                elif variant == mt.Variant.ELEM:
                    agg_nt = 1
                else:
                    agg_nt = ""  # slice N_T is the per-mode slice volume
                for mode in modes:
                    n_s = y.size // y.dims[mode]
                    if variant == mt.Variant.TILE:
                        nt = max(1, min(width ** (d - 1), n_s))
                    elif variant == mt.Variant.SLICE:
                        nt = n_s
                    elif variant == mt.Variant.ELEM:
                        nt = 1
                    else:
                        nt = None
                    plan = mt.MttkrpPlan(
                        variant=variant,
                        mode=mode,
                        unroll=args.unroll,
                        tile_volume=nt if variant == mt.Variant.TILE else None,
                        workers=workers,
                    )
                    if nt is not None:
                        m_zero = pm.mem_zero(y.dims, rank, mode, nt, machine.s_f_bytes)
                        m_zero_lm = pm.mem_zero_lm(
                            y.dims, rank, mode, nt, machine.l, machine.s_f_bytes
                        )
                        t_zero = pm.predict_seconds(f, m_zero, machine)
                        t_zero_lm = pm.predict_seconds(f, m_zero_lm, machine)
                    else:
                        m_zero = m_zero_lm = t_zero = t_zero_lm = None
                    for _ in range(args.warmup):
                        _run_plan(y, m, plan, args)
                    best_t = math.inf
                    for rep in range(args.reps):
                        out = _run_plan(y, m, plan, args)
                        t = out.stats.seconds
                        best_t = min(best_t, t)
                        rows.append(
                            {
                                "variant": variant.value,
                                "mode": mode + 1,
                                "rank": rank,
                                "tile_width": "" if width is None else width,
                                "N_T": "" if nt is None else nt,
                                "rep": rep,
                                "time_s": t,
                                "gflops": pm.gflops(f, t),
                                "mops0": "" if m_zero is None else pm.gbytes_per_s(m_zero, t),
                                "mopsInf": pm.gbytes_per_s(m_inf, t),
                                "T0": "" if t_zero is None else t_zero,
                                "T0LM": "" if t_zero_lm is None else t_zero_lm,
                                "TInf": t_inf,
                                "atomic_updates": out.stats.atomic_updates,
                            }
                        )
                    per_mode_gflops.append(pm.gflops(f, best_t))
                agg_rows.append(
                    {
                        "variant": variant.value,
                        "rank": rank,
                        "tile_width": "" if width is None else width,
                        "N_T": agg_nt,
                        "gflops": statistics.fmean(per_mode_gflops),
                        "best": 0,
                    }
                )

    # mark the best width within each (variant, rank) group
    groups = {}
    for row in agg_rows:
        groups.setdefault((row["variant"], row["rank"]), []).append(row)
    for group in groups.values():
        max(group, key=lambda r: r["gflops"])["best"] = 1

    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=columns)
        w.writeheader()
        w.writerows([{k: _csv_cell(v) for k, v in row.items()} for row in rows])
    agg_path = args.agg_out or (os.path.splitext(args.out)[0] + ".agg.csv")
    with open(agg_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(
            fh, fieldnames=["variant", "rank", "tile_width", "N_T", "gflops", "best"]
        )
        w.writeheader()
        w.writerows([{k: _csv_cell(v) for k, v in row.items()} for row in agg_rows])
    print(json.dumps({"rows": len(rows), "out": args.out, "agg_out": agg_path}))
    return 0


# ---------------------------------------------------------------- model


def cmd_model(args) -> int:
    if args.tensor:
        dims = read_dten_header(args.tensor)
    else:
        dims = _shape_from_args(args)
    machine = _resolve_machine(args.machine)
    d = len(dims)
    modes = _resolve_modes(args.modes, d)
    ranks = _parse_int_list(args.ranks, "ranks")
    n = num_elements(dims)

    heur_width = mt.heuristic_tile_width(dims, machine) if d >= 2 else 1
    per_rank = []
    for rank in ranks:
        f = pm.flops(dims, rank)
        m_inf = pm.mem_infty(dims, rank, machine.s_f_bytes)
        intens = pm.intensity(f, m_inf)
        gemm_per_mode = [pm.mem_gemm(dims, rank, k, machine.s_f_bytes) for k in range(d)]
        worst_bytes, worst_mode = pm.mem_gemm_worst(dims, rank, machine.s_f_bytes)
        variants = {}
        for name, nt_of_mode in (
            ("elem", lambda k: 1),
            ("slice", lambda k: n // dims[k]),
            ("tile", lambda k: max(1, min(heur_width ** (d - 1), n // dims[k]))),
        ):
            per_mode = []
            for k in modes:
                nt = nt_of_mode(k)
                m_zero = pm.mem_zero(dims, rank, k, nt, machine.s_f_bytes)
                m_zero_lm = pm.mem_zero_lm(dims, rank, k, nt, machine.l, machine.s_f_bytes)
                per_mode.append(
                    {
                        "mode": k + 1,
                        "N_T": nt,
                        "m_zero": m_zero,
                        "m_zero_lm": m_zero_lm,
                        "T0": pm.predict_seconds(f, m_zero, machine),
                        "T0LM": pm.predict_seconds(f, m_zero_lm, machine),
                    }
                )
            variants[name] = {
                "T0_mean": statistics.fmean(r["T0"] for r in per_mode),
                "T0LM_mean": statistics.fmean(r["T0LM"] for r in per_mode),
                "per_mode": per_mode,
            }
        per_rank.append(
            {
                "rank": rank,
                "f": f,
                "matrix_free_bytes": m_inf,
                "matrix_free_gib": m_inf / pm.GIB,
                "intensity": intens,
                "compute_bound": pm.is_compute_bound(intens, machine),
                "TInf": pm.predict_seconds(f, m_inf, machine),
                "gemm_per_mode_bytes": gemm_per_mode,
                "gemm_worst_bytes": worst_bytes,
                "gemm_worst_gib": worst_bytes / pm.GIB,
                "gemm_worst_mode": worst_mode + 1,
                "matrix_free_pct_of_gemm": 100.0 * m_inf / worst_bytes,
                # capacity-only lower bounds: real placements also need scratch
                # and replicated working sets
                "devices_matrix_free": pm.device_count(m_inf, machine),
                "devices_gemm": pm.device_count(worst_bytes, machine),
                "variants": variants,
            }
        )
    doc = {
        "machine": machine.to_dict(),
        "dims": list(dims),
        "n_elements": n,
        "tensor_bytes": machine.s_f_bytes * n,
        "heuristic_tile_width": heur_width,
        "heuristic_tile_volume": heur_width ** (d - 1) if d >= 2 else 1,
        "modes": [k + 1 for k in modes],
        "ranks": per_rank,
    }
    if args.json:
        print(json.dumps(doc, indent=2))
        return 0

    print(f"shape {dims}  N={n}  tensor {machine.s_f_bytes * n / pm.GIB:.3f} GiB  "
          f"machine {machine.name}")
    print(f"heuristic tile width {heur_width} (N_T={doc['heuristic_tile_volume']})")
    for row in per_rank:
        print(f"\nrank {row['rank']}:")
        print(f"  f = {row['f']} flops   intensity {row['intensity']:.3f} flop/B"
              f"   {'compute' if row['compute_bound'] else 'memory'}-bound")
        print(f"  matrix-free footprint {row['matrix_free_bytes']} B"
              f" = {row['matrix_free_gib']:.2f} GiB"
              f"  ({row['matrix_free_pct_of_gemm']:.2f}% of dense baseline)")
        print(f"  dense baseline worst mode {row['gemm_worst_mode']}:"
              f" {row['gemm_worst_bytes']} B = {row['gemm_worst_gib']:.2f} GiB")
        print(f"  devices needed (capacity lower bound):"
              f" {row['devices_matrix_free']} matrix-free, {row['devices_gemm']} dense")
        print(f"  T_inf {row['TInf']:.6f} s")
        for name, v in row["variants"].items():
            print(f"  {name:6s} T0 {v['T0_mean']:.6f} s   T0,LM {v['T0LM_mean']:.6f} s"
                  f"  (mean over modes)")
    return 0


# ---------------------------------------------------------------- cpals


def cmd_cpals(args) -> int:
    y, label = _tensor_source(args)
    machine = _resolve_machine(args.machine)
    variant = _parse_variant(args.variant)
    d = y.ndim
    width = None
    tile_req = None
    if variant == mt.Variant.TILE:
        width, tile_req = _resolve_tile_volume(args, y.dims, machine)
    plan = mt.MttkrpPlan(
        variant=variant,
        mode=0,
        unroll=args.unroll,
        tile_volume=tile_req,
        workers=_default_workers(args),
    )
    config = als.AlsConfig(
        rank=args.rank,
        max_iters=args.max_iters,
        tol=args.tol,
        seed=args.seed,
        plan=plan,
    )
    t0 = time.perf_counter()
    model, trace = als.cp_als(y, config)
    wall = time.perf_counter() - t0

    mttkrp_total = sum(sum(row) for row in trace.mttkrp_seconds)
    other_total = sum(trace.other_seconds)
    doc = {
        "tensor": label,
        "dims": list(y.dims),
        "rank": args.rank,
        "seed": args.seed,
        "variant": variant.value,
        "tile_width": width,
        "tile_volume": tile_req,
        "tol": args.tol,
        "max_iters": args.max_iters,
        "iterations": trace.iterations,
        "converged": trace.converged,
        "fit_final": trace.fits[-1] if trace.fits else None,
        "fits": trace.fits,
        "mttkrp_seconds": trace.mttkrp_seconds,
        "other_seconds": trace.other_seconds,
        "mttkrp_total_s": mttkrp_total,
        "other_total_s": other_total,
        "total_s": trace.total_seconds,
        "wall_s": wall,
        "weights": [float(w) for w in model.weights],
    }
    text = json.dumps(doc, indent=2)
    print(text)
    if args.trace:
        with open(args.trace, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    if args.out_model:
        save_kten(args.out_model, model)
    return 0


# ---------------------------------------------------------------- parser


def _add_tensor_source(p, with_preset=False):
    p.add_argument("--tensor", help="input tensor file")
    p.add_argument("--shape", help="synthesize: comma-separated extents")
    if with_preset:
        p.add_argument("--preset", choices=sorted(PRESETS), help="named shape")
    p.add_argument("--seed", type=int, default=0, help="RNG seed (default 0)")
    p.add_argument("--allow-large", action="store_true",
                   help="permit payloads above 1 GiB")


def _add_kernel_knobs(p):
    p.add_argument("--unroll", type=int, default=4, help="column block width F (default 4)")
    p.add_argument("--workers", type=int, default=None,
                   help="worker threads (default: MTTKRP_WORKERS or pool size)")
    p.add_argument("--tile-width", type=int, default=None,
                   help="per-mode tile width w (N_T = w^(d-1))")
    p.add_argument("--tile-volume", type=int, default=None,
                   help="in-slice elements per tile (overrides --tile-width)")
    p.add_argument("--machine", default="intel-8480p",
                   help="bundled machine name or spec JSON path")
    p.add_argument("--krp-budget", type=int, default=mt.DEFAULT_KRP_BUDGET,
                   help="byte budget for the explicit-KRP oracle")
    p.add_argument("--scratch-cap", type=int, default=None,
                   help="scratch byte cap for the dense baseline")


def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(
        prog="cpkern", description="Matrix-free MTTKRP kernels and CP-ALS benchmarks"
    )
    sub = top.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="write a tensor file")
    p.add_argument("--shape", help="comma-separated extents")
    p.add_argument("--preset", choices=sorted(PRESETS), help="named shape")
    p.add_argument("--kind", choices=["random", "kruskal"], default="random",
                   help="element generator (default random uniform)")
    p.add_argument("--rank", type=int, default=8, help="rank for --kind kruskal")
    p.add_argument("--snr", type=float, default=math.inf,
                   help="signal-to-noise norm ratio for --kind kruskal (default: no noise)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--allow-large", action="store_true",
                   help="permit payloads above 1 GiB")
    p.add_argument("--out", required=True, help="output path")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("mttkrp", help="run one kernel configuration")
    _add_tensor_source(p)
    p.add_argument("--variant", default="tile",
                   help="reference, full-krp, gemm, elem, slice, or tile")
    p.add_argument("--mode", type=int, default=1, help="target mode, 1-based")
    p.add_argument("--rank", type=int, default=32)
    p.add_argument("--reps", type=int, default=3)
    p.add_argument("--warmup", type=int, default=1)
    p.add_argument("--verify", action="store_true",
                   help="check against the serial reference (automatic for small runs)")
    p.add_argument("--out", help="also write the JSON report here")
    _add_kernel_knobs(p)
    p.set_defaults(func=cmd_mttkrp)

    p = sub.add_parser("sweep", help="grid of runs to CSV")
    _add_tensor_source(p)
    p.add_argument("--variants", default="tile", help="CSV of gemm, elem, slice, tile")
    p.add_argument("--modes", default="all", help="'all' or CSV of 1-based modes")
    p.add_argument("--ranks", default="32", help="CSV of ranks")
    p.add_argument("--tile-widths", default=None,
                   help="CSV of tile widths (default: heuristic width)")
    p.add_argument("--reps", type=int, default=3)
    p.add_argument("--warmup", type=int, default=1)
    p.add_argument("--out", required=True, help="per-run CSV path")
    p.add_argument("--agg-out", help="aggregate CSV path (default: <out>.agg.csv)")
    _add_kernel_knobs(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("model", help="analytic work/traffic/time numbers (no kernels)")
    p.add_argument("--tensor", help="read the shape from a tensor file header")
    p.add_argument("--shape", help="comma-separated extents")
    p.add_argument("--preset", choices=sorted(PRESETS), help="named shape")
    p.add_argument("--ranks", default="32", help="CSV of ranks")
    p.add_argument("--modes", default="all", help="'all' or CSV of 1-based modes")
    p.add_argument("--machine", default="intel-8480p")
    p.add_argument("--json", action="store_true", help="machine-readable output")
    p.set_defaults(func=cmd_model)

    p = sub.add_parser("cpals", help="CP decomposition with timing split")
    _add_tensor_source(p)
    p.add_argument("--rank", type=int, required=True)
    p.add_argument("--tol", type=float, default=1e-4,
                   help="absolute fit-change convergence threshold")
    p.add_argument("--max-iters", type=int, default=100)
    p.add_argument("--variant", default="slice")
    p.add_argument("--trace", help="also write the JSON trace here")
    p.add_argument("--out-model", help="write the factored result (text format)")
    _add_kernel_knobs(p)
    p.set_defaults(func=cmd_cpals)

    return top


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ShapeError, IndexRangeError, ParameterError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ResourceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except CpkernError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
