"""Exact unconditional lower bounds for the risk ratio (Wang-Shan construction).

The sample space {0..nF} x {0..nC} is ordered inductively: starting from the
most extreme outcome (nF, 0), each step adds the candidate outcome whose
inclusion keeps the worst-case (over the nuisance probability) tail mass at or
below alpha for the largest ratio.  The ratio at which an outcome enters is its
lower bound.  Bounds depend only on (nF, nC, level), so they are computed once
per design and stored as a table.
"""
from __future__ import annotations

import functools
import logging
import math
import os
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from ._kernels import impl as _impl
from .core import InfeasibleSizeError

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
DEFAULT_GRID_SIZE = 500
DEFAULT_MAX_N = 50
TABLE_DIR_ENV = "RISKRATIO_TABLE_DIR"


@dataclass(frozen=True, eq=False)
class WangShanTable:
    """Lower one-sided bounds at ``level`` for every outcome (yF, yC)."""

    nF: int
    nC: int
    level: float
    bounds: np.ndarray
    grid_size: int = DEFAULT_GRID_SIZE

    def __post_init__(self):
        arr = np.array(self.bounds, dtype=float)
        if arr.shape != (self.nF + 1, self.nC + 1):
            raise ValueError(f"bounds must have shape {(self.nF + 1, self.nC + 1)}, "
                             f"got {arr.shape}")
        if np.isnan(arr).any():
            raise ValueError("table has undefined cells")
        if not 0.0 < self.level < 1.0:
            raise ValueError("level must lie in (0, 1)")
        arr.setflags(write=False)
        object.__setattr__(self, "bounds", arr)

    def lower(self, y_f: int, y_c: int) -> float:
        return float(self.bounds[y_f, y_c])

    def __eq__(self, other) -> bool:
        return (isinstance(other, WangShanTable)
                and (self.nF, self.nC, self.level) == (other.nF, other.nC, other.level)
                and np.array_equal(self.bounds, other.bounds))

    __hash__ = None

    def save(self, path: str | os.PathLike) -> Path:
        path = Path(path)
        if path.is_dir():
            path = path / table_filename(self.nF, self.nC, self.level)
        lines = [
            "# riskratio wang-shan lower-bound table",
            f"format_version {FORMAT_VERSION}",
            f"nF {self.nF}",
            f"nC {self.nC}",
            f"level {self.level!r}",
            f"grid_size {self.grid_size}",
        ]
        lines += ["inf" if math.isinf(v) else float(v).hex() for v in self.bounds.ravel()]
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_text("\n".join(lines) + "\n")
        tmp.replace(path)
        return path

    @classmethod
    def load(cls, path: str | os.PathLike) -> "WangShanTable":
        return _parse(Path(path).read_text())


def _parse(text: str) -> WangShanTable:
    header = {}
    values = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, _, rest = line.partition(" ")
        if rest:
            header[key] = rest.strip()
        else:
            values.append(math.inf if line == "inf" else float.fromhex(line))
    version = int(header.get("format_version", -1))
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported table format version {version}")
    nf, nc = int(header["nF"]), int(header["nC"])
    bounds = np.array(values, dtype=float).reshape(nf + 1, nc + 1)
    return WangShanTable(nf, nc, float(header["level"]), bounds,
                         int(header.get("grid_size", DEFAULT_GRID_SIZE)))


def table_filename(nf: int, nc: int, level: float) -> str:
    return f"ws_nF{nf}_nC{nc}_L{level:.10g}.txt"


def build_table(nf: int, nc: int, level: float = 0.95,
                grid_size: int = DEFAULT_GRID_SIZE) -> WangShanTable:
    """Run the inductive construction. Cost grows roughly like n^4 * grid_size."""
    if nf < 1 or nc < 1:
        raise ValueError("ensemble sizes must be positive")
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    logger.info("building Wang-Shan table nF=%d nC=%d level=%g", nf, nc, level)
    bounds = _impl.ws_lower_table(int(nf), int(nc), 1.0 - level, int(grid_size))
    return WangShanTable(nf, nc, level, bounds, grid_size)


def _search_dirs():
    env = os.environ.get(TABLE_DIR_ENV)
    if env:
        yield Path(env)
    yield Path(str(resources.files("riskratio") / "data"))


@functools.lru_cache(maxsize=64)
def get_table(nf: int, nc: int, level: float,
              max_n: int = DEFAULT_MAX_N) -> WangShanTable:
    """Find a stored table, or build one when the design is small enough."""
    name = table_filename(nf, nc, level)
    for d in _search_dirs():
        path = d / name
        if path.is_file():
            return WangShanTable.load(path)
    if max(nf, nc) > max_n:
        raise InfeasibleSizeError(
            f"no stored Wang-Shan table {name} and n={max(nf, nc)} exceeds the "
            f"on-the-fly cap of {max_n}; build one with `riskratio build-ws-table`")
    return build_table(nf, nc, level)


def lookup_bounds(y_f, y_c, lower_table: WangShanTable,
                  upper_table: WangShanTable | None):
    """Lower and upper bounds for arrays of outcomes.

    ``upper_table`` is the table with the scenarios swapped; the upper bound is
    the reciprocal of the swapped lower bound.
    """
    y_f = np.asarray(y_f, dtype=np.int64)
    y_c = np.asarray(y_c, dtype=np.int64)
    lower = lower_table.bounds[y_f, y_c]
    if upper_table is None:
        return lower, np.full(lower.shape, np.inf)
    with np.errstate(divide="ignore"):
        upper = 1.0 / upper_table.bounds[y_c, y_f]
    return lower, upper
