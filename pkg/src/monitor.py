# -*- coding: utf-8 -*-
"""
monitor.py — resource guard for diagonalizations and sweeps
→ Memory estimate of a dense Hermitian eigensolve
→ Dense cap + psutil available-memory warning
→ Wall time / RSS growth of a run, logged at DEBUG
"""

import time
from contextlib import contextmanager
from typing import Optional

import psutil

from src.config import resolve
from src.logger import get_logger
from src.utils import DenseCapExceeded

logger = get_logger(__name__)

COMPLEX_BYTES = 16
# matrix + eigenvectors + LAPACK workspace (zheevd needs ~2n² complex)
DENSE_COPIES = 4


# ================================================
# 1. SYSTEM MEMORY (SAFE)
# ================================================
def available_memory() -> Optional[int]:
    """Available RAM in bytes, None when psutil cannot tell"""
    try:
        return int(psutil.virtual_memory().available)
    except Exception:
        return None


def process_rss() -> int:
    try:
        return int(psutil.Process().memory_info().rss)
    except (psutil.NoSuchProcess, psutil.AccessDenied):
        return 0


# ================================================
# 2. DENSE FEASIBILITY
# ================================================
def dense_memory_estimate(dim: int) -> int:
    return DENSE_COPIES * COMPLEX_BYTES * int(dim) ** 2


def check_dense_feasible(dim: int, cap: Optional[int] = None,
                         memory_fraction: Optional[float] = None) -> int:
    """Raise above the dense cap; warn when the estimate does not fit in free RAM"""
    cap = resolve(cap, "dense_cap")
    memory_fraction = resolve(memory_fraction, "memory_fraction")
    if dim > cap:
        raise DenseCapExceeded(f"dimension {dim} above dense cap {cap}; use the iterative solver "
                               f"(--lowest k) or raise --dense-cap")

    needed = dense_memory_estimate(dim)
    free = available_memory()
    if free is not None and needed > memory_fraction * free:
        logger.warning(f"dense solve of dimension {dim} needs ~{needed / 2**20:.0f} MB, "
                       f"{free / 2**20:.0f} MB available")
    return needed


# ================================================
# 3. RUN TRACKING
# ================================================
@contextmanager
def track_run(label: str):
    """Log wall time and RSS growth of the enclosed block"""
    start, rss = time.perf_counter(), process_rss()
    try:
        yield
    finally:
        elapsed = time.perf_counter() - start
        grown = (process_rss() - rss) / 2**20
        logger.debug(f"{label}: {elapsed:.3f} s, RSS {grown:+.1f} MB")
