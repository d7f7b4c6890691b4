"""BB-code quantum memories on erasure qubits.

Pipeline: build a seven-phase memory circuit, compile it under an
erasure-biased noise law with a checkpoint schedule, convert sampled
erasure circuits into stabilizer circuits (exact or approximate engine),
sample with a Pauli-frame simulator, decode with BP+OSD and aggregate
per-round logical error rates and scaling fits.
"""

from .bbcode import BBCodeSpec, build_check_matrices, compute_k, extract_logicals, get_code

__all__ = [
    "BBCodeSpec",
    "build_check_matrices",
    "compute_k",
    "extract_logicals",
    "get_code",
]

__version__ = "0.1.0"
