"""
Similarity-count benchmark for COCOA against CMC

Evaluates both losses on random embeddings over a (V, N) grid, checks the
counted similarity evaluations against the closed-form counts and records
the median wall time.
"""

import logging
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, List, Optional, Sequence, Union

import numpy as np

try:
    import psutil
    PSUTIL_AVAILABLE = True
except ImportError:
    PSUTIL_AVAILABLE = False

from .constants import BENCH_DELIMITER, CROSS_MODAL_METHODS, FUSION_DIM
from .encoder import EmbeddingSet
from .errors import BenchError, CocoaError, ConfigurationError
from .losses import CocoaHyper, OpCounter, cmc_loss, cocoa_loss, count_formula

logger = logging.getLogger(__name__)

BENCH_COLUMNS = ("method", "V", "N", "measured_count", "formula_count", "wall_seconds")


@dataclass
class BenchRow:
    method: str
    num_modalities: int
    batch_size: int
    measured_count: int
    formula_count: int
    wall_seconds: float


@dataclass
class BenchReport:
    rows: List[BenchRow] = field(default_factory=list)
    embedding_dim: int = FUSION_DIM
    repeats: int = 1
    cpu_count: Optional[int] = None
    pinned_cpu: Optional[int] = None

    def count(self, method: str, num_modalities: int, batch_size: int) -> int:
        for row in self.rows:
            if (row.method, row.num_modalities, row.batch_size) == (method, num_modalities, batch_size):
                return row.measured_count
        raise KeyError((method, num_modalities, batch_size))

    def ratio(self, num_modalities: int, batch_size: int) -> float:
        """cmc / cocoa similarity-count ratio at (V, N)."""
        return self.count("cmc", num_modalities, batch_size) / self.count("cocoa", num_modalities, batch_size)

    @property
    def grid(self):
        vs = sorted({r.num_modalities for r in self.rows})
        ns = sorted({r.batch_size for r in self.rows})
        return vs, ns


@contextmanager
def pinned_to_one_core() -> Iterator[Optional[int]]:
    """Restrict the process to a single CPU while timing, where supported."""
    if not PSUTIL_AVAILABLE:
        yield None
        return
    process = psutil.Process()
    try:
        original = process.cpu_affinity()
        process.cpu_affinity([original[0]])
    except (AttributeError, OSError, psutil.Error) as e:
        logger.debug("CPU pinning unavailable: %s", e)
        yield None
        return
    try:
        yield original[0]
    finally:
        try:
            process.cpu_affinity(original)
        except (OSError, psutil.Error) as e:
            logger.warning("Could not restore CPU affinity: %s", e)


def _loss_for(method: str):
    hyper = CocoaHyper()
    if method == "cocoa":
        return lambda z, counter: cocoa_loss(z, hyper, counter)
    return lambda z, counter: cmc_loss(z, hyper.tau, counter)


def run_bench(v_list: Sequence[int], n_list: Sequence[int], dim: int = FUSION_DIM,
              repeats: int = 3, seed: int = 0) -> BenchReport:
    """
    Count and time both cross-modal losses over every (V, N) pair.

    Raises:
        BenchError: A measured count differs from ``count_formula``
    """
    if not v_list or not n_list:
        raise ConfigurationError("bench needs at least one V and one N")
    if min(v_list) < 2 or min(n_list) < 2:
        raise ConfigurationError(f"bench needs V >= 2 and N >= 2, got V={list(v_list)}, N={list(n_list)}")
    if repeats < 1 or dim < 1:
        raise ConfigurationError(f"repeats and dim must be positive, got {repeats} and {dim}")

    rng = np.random.default_rng(seed)
    report = BenchReport(embedding_dim=dim, repeats=repeats,
                         cpu_count=psutil.cpu_count() if PSUTIL_AVAILABLE else None)
    with pinned_to_one_core() as cpu:
        report.pinned_cpu = cpu
        for v in sorted(set(int(x) for x in v_list)):
            for n in sorted(set(int(x) for x in n_list)):
                z = EmbeddingSet.from_array(rng.normal(size=(v, n, dim)))
                for method in CROSS_MODAL_METHODS:
                    report.rows.append(_measure(method, z, repeats))
    return report


def _measure(method: str, z: EmbeddingSet, repeats: int) -> BenchRow:
    loss = _loss_for(method)
    v, n = z.num_modalities, z.num_samples
    formula = count_formula(method, v, n)
    times = []
    measured = 0
    for _ in range(repeats):
        counter = OpCounter()
        started = time.perf_counter()
        loss(z, counter)
        times.append(time.perf_counter() - started)
        measured = counter.similarity_evaluations
        if measured != formula:
            raise BenchError(
                f"{method} at V={v}, N={n}: counted {measured} similarity "
                f"evaluations, formula gives {formula}")
    row = BenchRow(method, v, n, measured, formula, float(np.median(times)))
    logger.debug("bench %s V=%d N=%d: %d evaluations, %.6fs", method, v, n, formula, row.wall_seconds)
    return row


def ratio_is_monotone(report: BenchReport) -> bool:
    """
    True if the cmc/cocoa count ratio grows in N (fixed V) and in V (fixed N).

    The ratio is (V-1)N / (V+N-2): growth is strict everywhere except along N
    at V=2, where both losses make N^2 evaluations and the ratio stays 1.
    """
    vs, ns = report.grid
    for v in vs:
        ratios = [report.ratio(v, n) for n in ns]
        if v == 2:
            if any(not np.isclose(r, 1.0) for r in ratios):
                return False
        elif any(b <= a for a, b in zip(ratios, ratios[1:])):
            return False
    for n in ns:
        ratios = [report.ratio(v, n) for v in vs]
        if any(b <= a for a, b in zip(ratios, ratios[1:])):
            return False
    return True


def write_report(report: BenchReport, path: Union[str, Path]) -> Path:
    """Tab-separated table; the first line is a comment with the host details."""
    path = Path(path)
    lines = [f"# dim={report.embedding_dim} repeats={report.repeats} "
             f"cpu_count={report.cpu_count} pinned_cpu={report.pinned_cpu}",
             BENCH_DELIMITER.join(BENCH_COLUMNS)]
    for row in report.rows:
        lines.append(BENCH_DELIMITER.join([
            row.method, str(row.num_modalities), str(row.batch_size),
            str(row.measured_count), str(row.formula_count), f"{row.wall_seconds:.9f}"]))
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as e:
        raise CocoaError(f"Error writing bench report {path}: {e}") from e
    return path


def read_report(path: Union[str, Path]) -> List[dict]:
    rows = []
    with open(path, "r", encoding="utf-8") as handle:
        lines = [line.rstrip("\n") for line in handle if line.strip() and not line.startswith("#")]
    header = lines[0].split(BENCH_DELIMITER)
    for line in lines[1:]:
        rows.append(dict(zip(header, line.split(BENCH_DELIMITER))))
    return rows
