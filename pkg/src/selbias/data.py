"""Columnar datasets whose outcome is only observed in the selected sample.

Missing values are stored as NaN internally and written as empty CSV cells.
A dataset may carry frequency weights; simulated and real data use unit
weights, while exact population distributions are represented as one row per
configuration weighted by its probability.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional

import numpy as np

from .errors import (
    EmptySelectionError,
    InvariantViolation,
    MissingColumnError,
    NonBinaryError,
)

__all__ = ["Roles", "Dataset", "read_csv", "write_csv", "complete_cases"]


@dataclass(frozen=True)
class Roles:
    """Column bindings.

    ``complete`` lists columns that must be observed for every unit, selected
    or not (e.g. predictors of the selection model).  ``binary`` lists extra
    columns that must be 0/1 where observed.
    """

    treatment: str
    outcome: str
    selection: str
    post: tuple = ()
    covariates: tuple = ()
    complete: tuple = ()
    binary: tuple = ()

    def __post_init__(self):
        for name in ("post", "covariates", "complete", "binary"):
            object.__setattr__(self, name, tuple(getattr(self, name)))

    @property
    def required(self) -> list:
        cols = [self.treatment, self.outcome, self.selection]
        cols += [c for c in self.post + self.covariates + self.complete + self.binary]
        return list(dict.fromkeys(cols))


@dataclass(frozen=True, eq=False)
class Dataset:
    columns: Mapping[str, np.ndarray]
    roles: Roles
    weights: Optional[np.ndarray] = None
    _row_numbers: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        cols = {}
        for name, values in self.columns.items():
            arr = np.array(values, dtype=np.float64)
            arr.setflags(write=False)
            cols[name] = arr
        object.__setattr__(self, "columns", cols)
        n = {len(v) for v in cols.values()}
        if len(n) > 1:
            raise ValueError("columns have different lengths")
        if self.weights is not None:
            w = np.array(self.weights, dtype=np.float64)
            if w.shape != (self.n,) or np.any(w < 0) or not np.all(np.isfinite(w)):
                raise ValueError("weights must be finite, non-negative, one per row")
            w.setflags(write=False)
            object.__setattr__(self, "weights", w)
        validate(self)

    @property
    def n(self) -> int:
        return len(next(iter(self.columns.values()))) if self.columns else 0

    @property
    def w(self) -> np.ndarray:
        """Frequency weights (ones when unweighted)."""
        return np.ones(self.n) if self.weights is None else self.weights

    @property
    def total_weight(self) -> float:
        return float(self.w.sum())

    def __getitem__(self, name) -> np.ndarray:
        try:
            return self.columns[name]
        except KeyError:
            raise MissingColumnError(f"no column {name!r}") from None

    def __contains__(self, name):
        return name in self.columns

    def __len__(self):
        return self.n

    @property
    def a(self) -> np.ndarray:
        return self[self.roles.treatment]

    @property
    def y(self) -> np.ndarray:
        return self[self.roles.outcome]

    @property
    def s(self) -> np.ndarray:
        return self[self.roles.selection]

    @property
    def n_selected(self) -> float:
        return float(self.w[self.s == 1].sum())

    def subset(self, mask) -> "Dataset":
        mask = np.asarray(mask)
        w = None if self.weights is None else self.weights[mask]
        rows = None if self._row_numbers is None else self._row_numbers[mask]
        return Dataset({k: v[mask] for k, v in self.columns.items()}, self.roles, w, rows)

    def take(self, index) -> "Dataset":
        """Rows at integer positions ``index`` (with repetition, for resampling)."""
        return self.subset(np.asarray(index, dtype=np.intp))

    def with_roles(self, **changes) -> "Dataset":
        roles = Roles(**{**self.roles.__dict__, **changes})
        return Dataset(self.columns, roles, self.weights, self._row_numbers)

    def design(self, names: Iterable[str]) -> np.ndarray:
        """Intercept-first design matrix over ``names``."""
        names = list(names)
        cols = [np.ones(self.n)] + [self[c] for c in names]
        return np.column_stack(cols)


def _row_label(d: Dataset, i: int) -> int:
    return int(d._row_numbers[i]) if d._row_numbers is not None else i + 1


def validate(d: Dataset) -> None:
    r = d.roles
    for name in r.required:
        if name not in d.columns:
            raise MissingColumnError(f"dataset has no column {name!r}")

    def first(mask):
        return _row_label(d, int(np.flatnonzero(mask)[0]))

    for name in dict.fromkeys([r.selection, r.treatment] + list(r.binary)):
        col = d.columns[name]
        if name in (r.selection, r.treatment) and np.isnan(col).any():
            raise InvariantViolation(first(np.isnan(col)), name, "value is missing")
        bad = ~np.isnan(col) & (col != 0.0) & (col != 1.0)
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            raise NonBinaryError(_row_label(d, i), name, f"expected 0 or 1, got {col[i]!r}")
    s = d.columns[r.selection]
    for name in dict.fromkeys(r.complete):
        col = d.columns[name]
        if np.isnan(col).any():
            where = "in an unselected row" if s[np.isnan(col)].min() == 0 else "in a selected row"
            raise InvariantViolation(
                first(np.isnan(col)), name,
                f"missing {where}, but the column must be observed for all units",
            )
    y = d.columns[r.outcome]
    missing_sel = np.isnan(y) & (s == 1)
    if missing_sel.any():
        raise InvariantViolation(first(missing_sel), r.outcome, "outcome missing for a selected unit")
    for name in dict.fromkeys(r.post + r.covariates):
        col = d.columns[name]
        bad = np.isnan(col) & (s == 1)
        if bad.any():
            raise InvariantViolation(first(bad), name, "missing for a selected unit")
    for name, col in d.columns.items():
        if np.isinf(col).any():
            raise InvariantViolation(first(np.isinf(col)), name, "infinite value")


def read_csv(path, roles: Roles) -> Dataset:
    """Read a numeric CSV with a header row; empty cells are missing."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise MissingColumnError(f"{path}: empty file, header row required") from None
        rows = []
        for lineno, row in enumerate(reader, start=1):
            if not row:
                continue
            if len(row) != len(header):
                raise InvariantViolation(lineno, None, f"expected {len(header)} cells, got {len(row)}")
            values = []
            for name, cell in zip(header, row):
                cell = cell.strip()
                if cell == "":
                    values.append(math.nan)
                    continue
                try:
                    v = float(cell)
                except ValueError:
                    raise InvariantViolation(lineno, name, f"not a number: {cell!r}") from None
                if math.isnan(v):
                    raise InvariantViolation(lineno, name, "missing values must be empty cells")
                values.append(v)
            rows.append(values)
    for name in roles.required:
        if name not in header:
            raise MissingColumnError(f"{path}: no column {name!r} (have {', '.join(header)})")
    table = np.array(rows, dtype=np.float64).reshape(len(rows), len(header))
    cols = {name: table[:, j] for j, name in enumerate(header)}
    return Dataset(cols, roles, None, np.arange(1, len(rows) + 1))


def _cell(v: float) -> str:
    if math.isnan(v):
        return ""
    if v.is_integer() and abs(v) < 2**53 and math.copysign(1.0, v) > 0:
        return str(int(v))
    return repr(v)


def write_csv(d: Dataset, path) -> None:
    names = list(d.columns)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(names) + "\n")
        for i in range(d.n):
            fh.write(",".join(_cell(float(d.columns[c][i])) for c in names) + "\n")


def complete_cases(d: Dataset) -> Dataset:
    """Selected units only."""
    mask = d.s == 1
    if not (mask & (d.w > 0)).any():
        raise EmptySelectionError("no selected units")
    if mask.all():
        return d
    return d.subset(mask)
