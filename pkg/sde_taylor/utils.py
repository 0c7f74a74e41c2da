"""
Small shared helpers: running statistics, float formatting, CSV output, timing.
"""

import csv
import logging
import math
import sys
import time
from contextlib import contextmanager
from typing import Iterable, List, Sequence

import numpy as np

from sde_taylor.config import CSV_DIGITS

logger = logging.getLogger(__name__)


class RunningStats:
    """
    Welford mean / variance accumulator.

    Partial accumulators from different path blocks are combined with merge();
    merging in a fixed block order keeps results independent of worker count.
    """

    def __init__(self):
        self.count = 0
        self.mean = 0.0
        self.m2 = 0.0

    def push(self, value: float) -> None:
        self.count += 1
        delta = value - self.mean
        self.mean += delta / self.count
        self.m2 += delta * (value - self.mean)

    def push_array(self, values) -> None:
        values = np.asarray(values, dtype=float).ravel()
        if values.size == 0:
            return
        other = RunningStats()
        other.count = int(values.size)
        other.mean = float(values.mean())
        other.m2 = float(((values - other.mean) ** 2).sum())
        self.merge(other)

    def merge(self, other: "RunningStats") -> None:
        if other.count == 0:
            return
        if self.count == 0:
            self.count, self.mean, self.m2 = other.count, other.mean, other.m2
            return
        total = self.count + other.count
        delta = other.mean - self.mean
        self.mean += delta * other.count / total
        self.m2 += other.m2 + delta * delta * self.count * other.count / total
        self.count = total

    @property
    def variance(self) -> float:
        if self.count < 2:
            return float('nan')
        return self.m2 / (self.count - 1)

    @property
    def std_error(self) -> float:
        if self.count < 2:
            return float('nan')
        return math.sqrt(self.variance / self.count)


def format_float(value: float) -> str:
    if value is None:
        return "nan"
    return f"{float(value):.{CSV_DIGITS}g}"


def format_row(row: Iterable) -> List[str]:
    out = []
    for item in row:
        if isinstance(item, (float, np.floating)):
            out.append(format_float(item))
        else:
            out.append(str(item))
    return out


def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """Write rows to path, or to stdout when path is None or '-'."""
    if path is None or path == "-":
        writer = csv.writer(sys.stdout, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(format_row(row))
        return

    with open(path, 'w', newline='') as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(format_row(row))
    logger.info(f"wrote {path}")


@contextmanager
def timed(label: str):
    start = time.perf_counter()
    try:
        yield
    finally:
        elapsed = time.perf_counter() - start
        logger.info(f"[Time Stats] {label}: {elapsed:.3f}s")
