"""Contingency tables between a binary split and base partitions, and the
chi-squared machinery used to score them.

Row 0 of every table is the left side of a split (``f_j <= v``), row 1 the
right side. Columns are the base-partition labels present in the node.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, InputError
from .model import Ensemble, NodeSubset

LEFT = 0
RIGHT = 1

_EPS = 1e-17
_TINY = 1e-300
_MAX_ITER = 100_000


class ContingencyTableSet:
    """c tables of shape (2, p_t) counting (split side, base label) pairs in a node.

    ``label_maps[t]`` maps a global label of partition t to its column. Only
    labels with nonzero support in the node get a column.
    """

    def __init__(self, tables, label_maps):
        self.tables = [np.asarray(t, dtype=np.int64) for t in tables]
        self.label_maps = [dict(m) for m in label_maps]
        self.row_totals = [t.sum(axis=1) for t in self.tables]
        self.col_totals = [t.sum(axis=0) for t in self.tables]
        self.total = int(self.tables[0].sum()) if self.tables else 0

    @property
    def c(self) -> int:
        return len(self.tables)

    def copy(self) -> "ContingencyTableSet":
        return ContingencyTableSet([t.copy() for t in self.tables], self.label_maps)

    def check(self) -> None:
        """Raise ContractError unless all marginals are consistent."""
        for t, table in enumerate(self.tables):
            if np.any(table < 0):
                raise ContractError(f"table {t} has a negative count")
            if int(table.sum()) != self.total:
                raise ContractError(f"table {t} sums to {table.sum()}, expected {self.total}")
            if not np.array_equal(table.sum(axis=1), self.row_totals[t]):
                raise ContractError(f"table {t} row totals are stale")
            if not np.array_equal(table.sum(axis=0), self.col_totals[t]):
                raise ContractError(f"table {t} column totals are stale")
            if np.any(self.col_totals[t] < 1):
                raise ContractError(f"table {t} has an empty column")

    def __eq__(self, other) -> bool:
        if not isinstance(other, ContingencyTableSet):
            return NotImplemented
        return (self.label_maps == other.label_maps
                and len(self.tables) == len(other.tables)
                and all(np.array_equal(a, b) for a, b in zip(self.tables, other.tables)))


@dataclass(frozen=True)
class SplitScore:
    statistic: float
    dof: int
    log_p: float


def build_tables(ensemble: Ensemble, subset: NodeSubset, is_left) -> ContingencyTableSet:
    """Count (side, label) co-occurrences for every base partition.

    ``is_left`` holds one boolean per entry of ``subset.indices``.
    """
    idx = subset.indices
    is_left = np.asarray(is_left, dtype=bool)
    if is_left.shape != idx.shape:
        raise ContractError("side assignment must cover every sample of the subset")
    rows = np.where(is_left, LEFT, RIGHT)
    tables, maps = [], []
    for t in range(ensemble.c):
        present, local = np.unique(ensemble.partitions[t, idx], return_inverse=True)
        table = np.zeros((2, len(present)), dtype=np.int64)
        np.add.at(table, (rows, local.reshape(-1)), 1)
        tables.append(table)
        maps.append({int(g): i for i, g in enumerate(present)})
    return ContingencyTableSet(tables, maps)


def shift_sample(tables: ContingencyTableSet, labels, from_side: int, to_side: int) -> ContingencyTableSet:
    """Move one sample with global base labels ``labels`` between rows, in place."""
    if from_side == to_side:
        return tables
    cols = []
    for t, label in enumerate(labels):
        col = tables.label_maps[t].get(int(label))
        if col is None or tables.tables[t][from_side, col] < 1:
            raise ContractError(f"cannot move label {label} out of row {from_side} in table {t}")
        cols.append(col)
    for t, col in enumerate(cols):
        tables.tables[t][from_side, col] -= 1
        tables.tables[t][to_side, col] += 1
        tables.row_totals[t][from_side] -= 1
        tables.row_totals[t][to_side] += 1
    return tables


def chi_squared_stat(table) -> float:
    """Pearson chi-squared statistic of a 2 x p table (no continuity correction)."""
    obs = np.asarray(table, dtype=np.float64)
    n = obs.sum()
    if n < 1:
        raise ContractError("chi-squared statistic of an empty table")
    rows = obs.sum(axis=1)
    cols = obs.sum(axis=0)
    if obs.shape[1] < 2 or np.any(rows == 0):
        return 0.0
    expected = np.outer(rows, cols) / n
    return float(np.sum((obs - expected) ** 2 / expected))


def aggregate_score(tables: ContingencyTableSet) -> SplitScore:
    """Sum the per-partition statistics; the sum is tested against chi2(dof)."""
    statistic = math.fsum(chi_squared_stat(t) for t in tables.tables)
    dof = sum(t.shape[1] - 1 for t in tables.tables)
    log_p = chi_sq_log_sf(statistic, dof) if dof > 0 else 0.0
    return SplitScore(statistic, dof, log_p)


def chi_sq_log_sf(x: float, dof: int) -> float:
    """Natural log of P(chi2_dof > x).

    Evaluated as the log of the regularized upper incomplete gamma function
    Q(dof/2, x/2): a power series for P below the a+1 crossover, a Lentz
    continued fraction for Q above it. Stays finite far past the point where
    the probability itself underflows.
    """
    if isinstance(dof, bool) or int(dof) != dof or dof < 1:
        raise InputError(f"degrees of freedom must be an integer >= 1, got {dof}")
    if not x >= 0:
        raise InputError(f"chi-squared value must be >= 0, got {x}")
    if x == 0:
        return 0.0
    if math.isinf(x):
        return -math.inf
    return log_gamma_q(0.5 * dof, 0.5 * x)


def log_gamma_q(a: float, y: float) -> float:
    """log Q(a, y), the regularized upper incomplete gamma function."""
    log_prefix = -y + a * math.log(y) - math.lgamma(a)
    if y < a + 1.0:
        return math.log1p(-math.exp(log_prefix + math.log(_gamma_p_series(a, y))))
    return log_prefix + math.log(_gamma_q_fraction(a, y))


def _gamma_p_series(a: float, y: float) -> float:
    # P(a, y) = exp(-y) y^a / Gamma(a) * sum_n y^n / (a (a+1) ... (a+n))
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(_MAX_ITER):
        ap += 1.0
        term *= y / ap
        total += term
        if term < total * _EPS:
            return total
    raise ContractError(f"incomplete gamma series did not converge (a={a}, y={y})")


def _gamma_q_fraction(a: float, y: float) -> float:
    # modified Lentz evaluation of the continued fraction for Q(a, y)
    b = y + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 3e-16:
            return h
    raise ContractError(f"incomplete gamma fraction did not converge (a={a}, y={y})")
