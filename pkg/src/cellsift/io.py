"""CSV reading and writing for matrices and detection results.

Numbers are written with repr, which round-trips doubles exactly, so a
written file read back reproduces the values bit for bit.  Parsing is
locale-independent: '.' is the only decimal mark and digit separators
are rejected.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .matrix import DataMatrix

__all__ = [
    "CsvTable",
    "read_csv",
    "write_flags",
    "write_row_flags",
    "write_imputed",
    "DEFAULT_NA_TOKENS",
]

DEFAULT_NA_TOKENS = ("NA", "", "NaN")

FLAGS_HEADER = ("rowLabel", "colLabel", "observed", "predicted", "stdResidual", "sign")
ROW_FLAGS_HEADER = ("rowLabel", "T", "standardizedT", "flagged")


@dataclass
class CsvTable:
    """A parsed CSV: the numeric matrix plus everything around it.

    header lists the original column names in order.  label_column
    names the auto-detected row-label column, if any.  text_columns
    maps the names of non-numeric columns to their raw string values,
    kept so output files can reproduce the input layout.
    """

    matrix: DataMatrix
    header: list
    label_column: str | None
    text_columns: dict


def _parse_token(token: str, na_lower: set):
    """Float value of a token, None when it marks a missing cell,
    or ValueError when it is not numeric."""
    text = token.strip()
    if text.lower() in na_lower:
        return None
    if "_" in text:
        # Python float() would accept digit separators; CSV numbers must not
        raise ValueError(f"not a number: {token!r}")
    value = float(text)
    if not math.isfinite(value):
        # non-finite literals act as missing markers
        return None
    return value


def _is_numeric_column(tokens, na_lower) -> bool:
    for tok in tokens:
        try:
            _parse_token(tok, na_lower)
        except ValueError:
            return False
    return True


def read_csv(path, na_tokens=DEFAULT_NA_TOKENS) -> CsvTable:
    """Read a CSV with a header row into a CsvTable.

    The first column becomes row labels when it is non-numeric with all
    values distinct.  Non-numeric columns are kept as raw text and
    excluded from the matrix.  Tokens in ``na_tokens`` (compared case-
    insensitively) mark missing cells.  Malformed files raise
    ValueError naming the offending line.
    """
    na_lower = {tok.strip().lower() for tok in na_tokens}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        header = [name.strip() for name in header]
        seen = set()
        dupes = sorted({name for name in header if name in seen or seen.add(name)})
        if dupes:
            raise ValueError(f"{path}: duplicate header names: {', '.join(dupes)}")
        width = len(header)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != width:
                raise ValueError(
                    f"{path}: line {lineno}: expected {width} fields, "
                    f"found {len(row)}"
                )
            rows.append(row)
    if not rows:
        raise ValueError(f"{path}: no data rows")

    columns = list(zip(*rows))

    label_column = None
    row_labels = None
    start = 0
    first = [tok.strip() for tok in columns[0]]
    if (
        width > 1
        and not _is_numeric_column(first, na_lower)
        and len(set(first)) == len(first)
        and all(tok.lower() not in na_lower for tok in first)
    ):
        label_column = header[0]
        row_labels = first
        start = 1

    numeric_labels = []
    numeric_cols = []
    text_columns = {}
    for idx in range(start, width):
        tokens = columns[idx]
        if _is_numeric_column(tokens, na_lower):
            parsed = [_parse_token(tok, na_lower) for tok in tokens]
            numeric_labels.append(header[idx])
            numeric_cols.append(
                [math.nan if v is None else v for v in parsed]
            )
        else:
            text_columns[header[idx]] = [tok for tok in tokens]
    if not numeric_cols:
        raise ValueError(f"{path}: no numeric columns")

    values = np.array(numeric_cols, dtype=float).T
    matrix = DataMatrix(
        values,
        row_labels=row_labels,
        col_labels=numeric_labels,
    )
    return CsvTable(
        matrix=matrix,
        header=header,
        label_column=label_column,
        text_columns=text_columns,
    )


def _fmt(value) -> str:
    return repr(float(value))


def write_flags(result, path) -> None:
    """Write flagged cells, row-major: observed and predicted values on
    the original scale, the standardized residual, and the flag sign."""
    analyzed = result.analyzed
    predictions = result.predictions
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(FLAGS_HEADER)
        rows, cols = np.nonzero(result.cell_flags)
        for i, j in zip(rows, cols):
            writer.writerow(
                [
                    analyzed.row_labels[i],
                    analyzed.col_labels[j],
                    _fmt(analyzed.values[i, j]),
                    _fmt(predictions[i, j]),
                    _fmt(result.residuals[i, j]),
                    "+" if result.cell_flags[i, j] > 0 else "-",
                ]
            )


def write_row_flags(result, path) -> None:
    """Write one row per matrix row: score, standardized score, flag."""
    analyzed = result.analyzed
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(ROW_FLAGS_HEADER)
        for i in range(analyzed.n_rows):
            score = result.row_scores[i]
            std = result.row_scores_std[i]
            writer.writerow(
                [
                    analyzed.row_labels[i],
                    "NA" if not np.isfinite(score) else _fmt(score),
                    "NA" if not np.isfinite(std) else _fmt(std),
                    "true" if result.row_flags[i] else "false",
                ]
            )


def write_imputed(table: CsvTable, imputed: DataMatrix, path) -> None:
    """Write the imputed matrix in the layout of the source CSV.

    Label and text columns are reproduced verbatim; numeric columns
    take their values from ``imputed``, with any still-missing cell
    written as NA.
    """
    numeric_index = {label: j for j, label in enumerate(imputed.col_labels)}
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(table.header)
        for i in range(imputed.n_rows):
            row = []
            for name in table.header:
                if table.label_column is not None and name == table.label_column:
                    row.append(imputed.row_labels[i])
                elif name in numeric_index:
                    j = numeric_index[name]
                    if imputed.missing[i, j]:
                        row.append("NA")
                    else:
                        row.append(_fmt(imputed.values[i, j]))
                else:
                    row.append(table.text_columns[name][i])
            writer.writerow(row)
