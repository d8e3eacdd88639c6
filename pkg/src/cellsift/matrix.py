"""Numeric data matrices with an explicit missing-value mask.

Missingness is carried as a boolean mask rather than a sentinel number,
so contaminated data can never masquerade as missing.  Internally the
value array holds NaN at masked positions, which lets numpy propagate
missingness through arithmetic, but the mask stays authoritative.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .robust import RobustTuning, rob_loc, rob_scale

__all__ = [
    "DataMatrix",
    "ColumnSelectionReport",
    "NoAnalyzableColumnsError",
    "as_data_matrix",
    "select_analyzable_columns",
    "column_affine_transform",
    "permute_matrix",
]


class NoAnalyzableColumnsError(ValueError):
    """Raised when column selection drops every column of a matrix."""


class DataMatrix:
    """An immutable n x d matrix of floats with row/column labels.

    Parameters
    ----------
    values : array-like, shape (n, d)
        Cell values.  NaN entries are folded into the missing mask.
    missing : array-like of bool, optional
        Missing-cell mask.  Defaults to the NaN pattern of ``values``.
    row_labels, col_labels : sequences of str, optional
        Unique labels; default to "1".."n" and "V1".."Vd".
    """

    __slots__ = ("_values", "_missing", "_row_labels", "_col_labels")

    def __init__(self, values, missing=None, row_labels=None, col_labels=None):
        vals = np.array(values, dtype=float)
        if vals.ndim != 2:
            raise ValueError("DataMatrix requires a 2-D array of values")
        n, d = vals.shape
        if n < 1 or d < 1:
            raise ValueError("DataMatrix requires at least one row and one column")
        if missing is None:
            mask = np.isnan(vals)
        else:
            mask = np.array(missing, dtype=bool)
            if mask.shape != vals.shape:
                raise ValueError("missing mask shape does not match values")
            mask |= np.isnan(vals)
        vals[mask] = np.nan

        if row_labels is None:
            rows = tuple(str(i + 1) for i in range(n))
        else:
            rows = tuple(str(r) for r in row_labels)
        if col_labels is None:
            cols = tuple(f"V{j + 1}" for j in range(d))
        else:
            cols = tuple(str(c) for c in col_labels)
        if len(rows) != n:
            raise ValueError("row_labels length does not match row count")
        if len(cols) != d:
            raise ValueError("col_labels length does not match column count")
        if len(set(rows)) != n:
            raise ValueError("row labels must be unique")
        if len(set(cols)) != d:
            raise ValueError("column labels must be unique")

        vals.setflags(write=False)
        mask.setflags(write=False)
        self._values = vals
        self._missing = mask
        self._row_labels = rows
        self._col_labels = cols

    @property
    def values(self) -> np.ndarray:
        """Read-only value array; missing cells read as NaN."""
        return self._values

    @property
    def missing(self) -> np.ndarray:
        """Read-only missing mask."""
        return self._missing

    @property
    def row_labels(self) -> tuple:
        return self._row_labels

    @property
    def col_labels(self) -> tuple:
        return self._col_labels

    @property
    def shape(self) -> tuple:
        return self._values.shape

    @property
    def n_rows(self) -> int:
        return self._values.shape[0]

    @property
    def n_cols(self) -> int:
        return self._values.shape[1]

    def cell(self, i: int, j: int):
        """Guarded accessor: the cell value, or None when it is missing."""
        n, d = self._values.shape
        if not (0 <= i < n and 0 <= j < d):
            raise IndexError(f"cell ({i}, {j}) out of bounds for shape {(n, d)}")
        if self._missing[i, j]:
            return None
        return float(self._values[i, j])

    def __repr__(self):
        n, d = self.shape
        nmiss = int(self._missing.sum())
        return f"DataMatrix(shape=({n}, {d}), missing={nmiss})"


def as_data_matrix(X) -> DataMatrix:
    """Coerce a DataMatrix, DataFrame-like, or 2-D array-like input.

    DataFrame-likes (anything with columns, index and to_numpy) keep
    their labels; plain arrays get default labels.
    """
    if isinstance(X, DataMatrix):
        return X
    if hasattr(X, "columns") and hasattr(X, "index") and hasattr(X, "to_numpy"):
        return DataMatrix(
            X.to_numpy(dtype=float),
            row_labels=[str(r) for r in X.index],
            col_labels=[str(c) for c in X.columns],
        )
    arr = np.asarray(X, dtype=float)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got ndim={arr.ndim}")
    return DataMatrix(arr)


@dataclass(frozen=True)
class ColumnSelectionReport:
    """Partition of the original column indices after selection."""

    kept: tuple = ()
    dropped_non_numeric: tuple = ()
    dropped_few_values: tuple = ()
    dropped_too_many_missing: tuple = ()
    dropped_zero_scale: tuple = ()

    @property
    def n_dropped(self) -> int:
        return (
            len(self.dropped_non_numeric)
            + len(self.dropped_few_values)
            + len(self.dropped_too_many_missing)
            + len(self.dropped_zero_scale)
        )

    def describe(self, col_labels=None) -> list:
        """Human-readable drop reasons, one line per dropped column."""

        def name(j):
            return col_labels[j] if col_labels is not None else str(j)

        lines = []
        for j in self.dropped_non_numeric:
            lines.append(f"{name(j)}: non-numeric")
        for j in self.dropped_few_values:
            lines.append(f"{name(j)}: too few distinct values")
        for j in self.dropped_too_many_missing:
            lines.append(f"{name(j)}: too many missing cells")
        for j in self.dropped_zero_scale:
            lines.append(f"{name(j)}: zero robust scale")
        return lines


def select_analyzable_columns(
    X: DataMatrix,
    min_distinct: int = 3,
    max_missing_frac: float = 0.5,
    tuning: RobustTuning | None = None,
):
    """Keep the columns the detector can work with.

    A column survives when its missing fraction is at most
    ``max_missing_frac``, it has at least ``min_distinct`` distinct
    non-missing values, and its robust scale is nonzero.  Checks are
    applied in that order, so a column failing several lands in the
    first matching drop list.  Returns the reduced matrix and a report
    whose lists partition the input columns.  Raises
    NoAnalyzableColumnsError when nothing survives.
    """
    if min_distinct < 2:
        raise ValueError("min_distinct must be at least 2")
    if not (0.0 < max_missing_frac <= 1.0):
        raise ValueError("max_missing_frac must be in (0, 1]")
    tuning = tuning or RobustTuning()

    kept = []
    few_values = []
    too_many_missing = []
    zero_scale = []
    n = X.n_rows
    for j in range(X.n_cols):
        col_missing = X.missing[:, j]
        if col_missing.sum() / n > max_missing_frac:
            too_many_missing.append(j)
            continue
        vals = X.values[~col_missing, j]
        if np.unique(vals).size < min_distinct:
            few_values.append(j)
            continue
        m = rob_loc(vals, tuning.biweight_c)
        s = rob_scale(vals - m, tuning.scale_cap, tuning.scale_consistency)
        if s == 0.0:
            zero_scale.append(j)
            continue
        kept.append(j)

    report = ColumnSelectionReport(
        kept=tuple(kept),
        dropped_few_values=tuple(few_values),
        dropped_too_many_missing=tuple(too_many_missing),
        dropped_zero_scale=tuple(zero_scale),
    )
    if not kept:
        raise NoAnalyzableColumnsError(
            "no analyzable columns: "
            + "; ".join(report.describe(X.col_labels))
        )
    sub = DataMatrix(
        X.values[:, kept],
        X.missing[:, kept],
        row_labels=X.row_labels,
        col_labels=[X.col_labels[j] for j in kept],
    )
    return sub, report


def column_affine_transform(X: DataMatrix, shifts, factors) -> DataMatrix:
    """Apply x -> factor * x + shift columnwise; factors must be nonzero.

    Scalars broadcast over all columns.  Missing cells stay missing.
    """
    d = X.n_cols
    sh = np.broadcast_to(np.asarray(shifts, dtype=float), (d,))
    fa = np.broadcast_to(np.asarray(factors, dtype=float), (d,))
    if np.any(fa == 0.0):
        raise ValueError("column_affine_transform requires nonzero factors")
    vals = X.values * fa + sh
    return DataMatrix(vals, X.missing, X.row_labels, X.col_labels)


def _check_permutation(perm, size, what):
    p = np.asarray(perm, dtype=int)
    if p.shape != (size,) or not np.array_equal(np.sort(p), np.arange(size)):
        raise ValueError(f"{what} is not a permutation of 0..{size - 1}")
    return p


def permute_matrix(X: DataMatrix, row_perm=None, col_perm=None) -> DataMatrix:
    """Reorder rows and columns; entry i of a permutation names the source.

    Values, mask and labels move together, so
    ``permute_matrix(Y, inverse_rows, inverse_cols)`` restores Y exactly.
    """
    rp = (
        np.arange(X.n_rows)
        if row_perm is None
        else _check_permutation(row_perm, X.n_rows, "row_perm")
    )
    cp = (
        np.arange(X.n_cols)
        if col_perm is None
        else _check_permutation(col_perm, X.n_cols, "col_perm")
    )
    return DataMatrix(
        X.values[np.ix_(rp, cp)],
        X.missing[np.ix_(rp, cp)],
        row_labels=[X.row_labels[i] for i in rp],
        col_labels=[X.col_labels[j] for j in cp],
    )
