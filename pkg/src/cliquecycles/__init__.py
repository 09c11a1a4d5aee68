"""Congested Clique simulator with distributed matrix products and h-cycle detection."""

from .ccsim import Clique, RoundLedger, SimConfig, broadcast, lenzen_route, run
from .detect import (AlgoConstants, DetectionResult, detect_h_cycle, dlp_baseline, fc,
                     fc_doubling, fmm_baseline, fvic, fvic_doubling, load_constants)
from .graphs import Graph, compute_delta, count_h_cycles, cycle_stats, generate
from .matmul import (BilinearScheme, MatrixBatch, matrix_power_batch, product_batch,
                     rect_chain_multiply, single_product)
from .quantum import grover_emulate, q_triangle_basic, q_triangle_fast

__version__ = "0.1.0"

__all__ = [
    "AlgoConstants", "BilinearScheme", "Clique", "DetectionResult", "Graph", "MatrixBatch",
    "RoundLedger", "SimConfig", "broadcast", "compute_delta", "count_h_cycles", "cycle_stats",
    "detect_h_cycle", "dlp_baseline", "fc", "fc_doubling", "fmm_baseline", "fvic",
    "fvic_doubling", "generate", "grover_emulate", "lenzen_route", "load_constants",
    "matrix_power_batch", "product_batch", "q_triangle_basic", "q_triangle_fast",
    "rect_chain_multiply", "run", "single_product",
]
