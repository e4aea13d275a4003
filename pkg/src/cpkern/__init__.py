"""Matrix-free MTTKRP kernels, performance models, and a CP-ALS harness.

Dense tensors are stored flat in first-mode-fastest order; factor matrices
are row-major float64.  Modes are 0-based in this API (the CLI and the
MATLAB-convention index helpers are 1-based).
"""

from .cpals import AlsConfig, AlsTrace, cp_als
from .dtensor import (
    DenseTensor,
    TileGeometry,
    dematricize,
    ind2sub,
    khatri_rao,
    khatri_rao_chain,
    matricize,
    read_dten,
    read_dten_header,
    slice_ind2sub,
    sub2ind,
    write_dten,
)
from .errors import (
    CpkernError,
    FormatError,
    IndexRangeError,
    ParameterError,
    ResourceError,
    ShapeError,
)
from .kruskal import KruskalTensor, gram, inner_product, load_kten, save_kten
from .mttkrp import (
    MttkrpOutput,
    MttkrpPlan,
    MttkrpStats,
    Variant,
    heuristic_tile_volume,
    heuristic_tile_width,
    mttkrp_elem,
    mttkrp_full_krp,
    mttkrp_gemm,
    mttkrp_reference,
    mttkrp_slice,
    mttkrp_tile,
    plan_for_mode,
    run,
)
from .perfmodel import (
    MachineSpec,
    PerfReport,
    bundled_machine,
    bundled_machine_names,
    device_count,
    flops,
    intensity,
    load_machine,
    mem_gemm,
    mem_gemm_worst,
    mem_infty,
    mem_zero,
    mem_zero_lm,
    model_report,
    predict_seconds,
)

__version__ = "0.1.0"

__all__ = [
    "AlsConfig",
    "AlsTrace",
    "CpkernError",
    "DenseTensor",
    "FormatError",
    "IndexRangeError",
    "KruskalTensor",
    "MachineSpec",
    "MttkrpOutput",
    "MttkrpPlan",
    "MttkrpStats",
    "ParameterError",
    "PerfReport",
    "ResourceError",
    "ShapeError",
    "TileGeometry",
    "Variant",
    "bundled_machine",
    "bundled_machine_names",
    "cp_als",
    "dematricize",
    "device_count",
    "flops",
    "gram",
    "heuristic_tile_volume",
    "heuristic_tile_width",
    "ind2sub",
    "inner_product",
    "intensity",
    "khatri_rao",
    "khatri_rao_chain",
    "load_kten",
    "load_machine",
    "matricize",
    "mem_gemm",
    "mem_gemm_worst",
    "mem_infty",
    "mem_zero",
    "mem_zero_lm",
    "model_report",
    "mttkrp_elem",
    "mttkrp_full_krp",
    "mttkrp_gemm",
    "mttkrp_reference",
    "mttkrp_slice",
    "mttkrp_tile",
    "plan_for_mode",
    "predict_seconds",
    "read_dten",
    "read_dten_header",
    "run",
    "save_kten",
    "slice_ind2sub",
    "sub2ind",
    "write_dten",
]
