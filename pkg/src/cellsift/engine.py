"""Core detection pipeline for deviating cells in a numeric matrix.

The pipeline standardizes each analyzable column robustly, masks cells
that are already extreme on their own, estimates a robust correlation
graph between columns, predicts every cell from its correlated
neighbors, and flags cells whose standardized prediction residual is
beyond the cutoff.  Rows whose residual pattern is collectively
unusual are flagged as a whole, and flagged or missing cells are
replaced by their predictions on the original scale.

Matrices flow through as plain float arrays with NaN marking missing
or masked cells; the surrounding DataMatrix bookkeeping happens only at
the entry and exit points.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .matrix import (
    ColumnSelectionReport,
    DataMatrix,
    as_data_matrix,
    select_analyzable_columns,
)
from .robust import RobustTuning, chisq1_cdf, rob_corr, rob_loc, rob_scale, rob_slope

__all__ = [
    "DetectionParams",
    "CorrelationGraph",
    "DetectionResult",
    "FittedModel",
    "AppliedResult",
    "BaselineResult",
    "FlaggedCell",
    "DegenerateColumnWarning",
    "standardize_columns",
    "univariate_screen",
    "build_correlation_graph",
    "predict_cells",
    "fit_deshrink",
    "flag_cells",
    "run_pipeline",
    "apply_model",
    "columnwise_baseline",
]

# above this many analyzed columns the dense correlation matrix is not
# retained and the neighbor limit kicks in by default
_WIDE_MATRIX_COLUMNS = 1000
_DEFAULT_WIDE_NEIGHBORS = 100


class DegenerateColumnWarning(UserWarning):
    """A column or score vector had zero robust spread; a fallback applied."""


class FlaggedCell(NamedTuple):
    row: int
    col: int
    sign: int


@dataclass(frozen=True)
class DetectionParams:
    """Knobs of the detection pipeline.

    corrlim is the minimum absolute robust correlation for a column to
    count as a neighbor.  Columns without any neighbor are treated on
    their own: their residual is simply the standardized value.
    include_self adds the cell's own screened value (slope 1, weight 1)
    to its prediction.  extra_iterations > 0 re-runs prediction and
    flagging with previously flagged cells masked out.  k_neighbors
    caps the neighbor count per column; when unset it is unlimited for
    matrices up to 1000 analyzed columns and 100 beyond that.
    """

    tuning: RobustTuning = field(default_factory=RobustTuning)
    corrlim: float = 0.5
    combination: str = "weighted-mean"
    include_self: bool = True
    extra_iterations: int = 0
    k_neighbors: int | None = None
    flag_rows: bool = True
    min_distinct: int = 3
    max_missing_frac: float = 0.5

    def __post_init__(self):
        if not (0.0 <= self.corrlim < 1.0):
            raise ValueError("corrlim must lie in [0, 1)")
        if self.combination not in ("weighted-mean", "weighted-median"):
            raise ValueError(
                "combination must be 'weighted-mean' or 'weighted-median'"
            )
        if self.extra_iterations < 0:
            raise ValueError("extra_iterations must be nonnegative")
        if self.k_neighbors is not None and self.k_neighbors < 1:
            raise ValueError("k_neighbors must be at least 1 when set")


@dataclass
class CorrelationGraph:
    """Sparse neighbor structure between analyzed columns.

    neighbors[j] lists the columns h (ascending, j excluded) whose
    absolute robust correlation with j reaches the threshold, after any
    top-k restriction.  correlations[j] and slopes[j] align with it;
    slopes[j][t] predicts column j from neighbor neighbors[j][t].
    matrix holds the full symmetric correlation matrix when it was
    small enough to retain, else None.
    """

    neighbors: list
    correlations: list
    slopes: list
    connected: np.ndarray
    matrix: np.ndarray | None

    @property
    def n_cols(self) -> int:
        return self.connected.size


def standardize_columns(values: np.ndarray, tuning: RobustTuning):
    """Robust per-column standardization.

    Returns (location, scale, Z) where Z = (values - location) / scale.
    Columns here have already passed selection, so a zero scale means
    the caller fed inconsistent data and is reported as such.
    """
    n, d = values.shape
    location = np.empty(d)
    scale = np.empty(d)
    for j in range(d):
        col = values[:, j]
        col = col[np.isfinite(col)]
        m = rob_loc(col, tuning.biweight_c)
        s = rob_scale(col - m, tuning.scale_cap, tuning.scale_consistency)
        if s == 0.0:
            raise RuntimeError(
                f"column {j} has zero robust scale; it should have been "
                "dropped by column selection"
            )
        location[j] = m
        scale[j] = s
    return location, scale, (values - location) / scale


def univariate_screen(Z: np.ndarray, cutoff: float) -> np.ndarray:
    """Mask cells that are extreme in their own column: keep |z| <= cutoff."""
    return np.where(np.abs(Z) <= cutoff, Z, np.nan)


def _neighbor_order(cors: np.ndarray, candidates: np.ndarray, k: int) -> np.ndarray:
    """Top-k candidate columns by |correlation|, ties to the lower index."""
    if candidates.size <= k:
        return candidates
    order = np.lexsort((candidates, -np.abs(cors)))
    chosen = candidates[order[:k]]
    chosen.sort()
    return chosen


def build_correlation_graph(
    U: np.ndarray,
    tuning: RobustTuning,
    corrlim: float = 0.5,
    k_neighbors: int | None = None,
) -> CorrelationGraph:
    """Estimate the robust correlation graph of the screened columns.

    Every pair is measured with rob_corr on its complete pairs; an edge
    exists when |cor| >= corrlim.  Undefined correlations count as no
    edge.  With k_neighbors set, each column keeps only its k strongest
    neighbors.  Slopes are fitted per kept, directed pair.
    """
    n, d = U.shape
    if k_neighbors is not None and k_neighbors > d:
        raise ValueError(
            f"k_neighbors={k_neighbors} exceeds the {d} analyzed columns"
        )
    keep_matrix = d <= _WIDE_MATRIX_COLUMNS

    neighbors = []
    correlations = []
    if keep_matrix:
        C = np.full((d, d), np.nan)
        np.fill_diagonal(C, 1.0)
        for j in range(d):
            for h in range(j + 1, d):
                C[j, h] = C[h, j] = rob_corr(U[:, j], U[:, h], tuning)
        for j in range(d):
            row = C[j]
            with np.errstate(invalid="ignore"):
                cand = np.flatnonzero(np.abs(row) >= corrlim)
            cand = cand[cand != j]
            if k_neighbors is not None:
                cand = _neighbor_order(row[cand], cand, k_neighbors)
            neighbors.append(cand)
            correlations.append(row[cand].copy())
        matrix = C
    else:
        # wide matrix: one row at a time, keeping only the sparse result
        for j in range(d):
            row = np.full(d, np.nan)
            for h in range(d):
                if h != j:
                    row[h] = rob_corr(U[:, j], U[:, h], tuning)
            with np.errstate(invalid="ignore"):
                cand = np.flatnonzero(np.abs(row) >= corrlim)
            if k_neighbors is not None:
                cand = _neighbor_order(row[cand], cand, k_neighbors)
            neighbors.append(cand)
            correlations.append(row[cand].copy())
        matrix = None

    slopes = []
    for j in range(d):
        cand = neighbors[j]
        cors = correlations[j]
        bs = np.empty(cand.size)
        ok = np.ones(cand.size, dtype=bool)
        for t, h in enumerate(cand):
            try:
                bs[t] = rob_slope(U[:, j], U[:, h], tuning)
            except ValueError:
                # a kept edge with no usable slope; drop it
                warnings.warn(
                    f"dropping edge {j}-{h}: slope undefined",
                    DegenerateColumnWarning,
                    stacklevel=2,
                )
                ok[t] = False
        neighbors[j] = cand[ok]
        correlations[j] = cors[ok]
        slopes.append(bs[ok])

    connected = np.array([nbr.size > 0 for nbr in neighbors])
    return CorrelationGraph(neighbors, correlations, slopes, connected, matrix)


def _weighted_median(values: np.ndarray, weights: np.ndarray) -> float:
    order = np.argsort(values, kind="stable")
    v = values[order]
    w = weights[order]
    cum = np.cumsum(w)
    half = cum[-1] / 2.0
    idx = int(np.searchsorted(cum, half))
    if cum[idx] == half and idx + 1 < v.size:
        return 0.5 * (v[idx] + v[idx + 1])
    return float(v[idx])


def predict_cells(
    U: np.ndarray, graph: CorrelationGraph, params: DetectionParams
) -> np.ndarray:
    """Predict every cell from the screened values of its neighbors.

    Each neighbor h contributes slope_jh * u_ih with weight |cor_jh|;
    with include_self the cell's own screened value joins with slope
    and weight 1.  Contributions from masked cells drop out.  The
    combination is a weighted mean (or median), and 0 when no
    contribution is available, which is the fail-safe center of the
    standardized scale.
    """
    n, d = U.shape
    cutoff = params.tuning.cutoff
    Z0 = np.zeros((n, d))
    for j in range(d):
        nbr = graph.neighbors[j]
        if params.include_self:
            cols = np.concatenate(([j], nbr)).astype(int)
            b = np.concatenate(([1.0], graph.slopes[j]))
            w = np.concatenate(([1.0], np.abs(graph.correlations[j])))
        else:
            cols = nbr.astype(int)
            b = graph.slopes[j]
            w = np.abs(graph.correlations[j])
        if cols.size == 0:
            continue
        terms = U[:, cols] * b
        valid = np.isfinite(terms)
        # screening bounds every contribution: |b * u| <= |b| * cutoff
        bound = np.broadcast_to(np.abs(b) * cutoff, terms.shape)
        assert np.all(
            np.abs(terms[valid]) <= bound[valid] * (1.0 + 1e-12) + 1e-300
        ), "screened contribution exceeded its propagation bound"
        if params.combination == "weighted-mean":
            wsum = valid @ w
            num = np.where(valid, terms, 0.0) @ w
            nonzero = wsum > 0.0
            Z0[nonzero, j] = num[nonzero] / wsum[nonzero]
        else:
            for i in range(n):
                vi = valid[i]
                if vi.any():
                    Z0[i, j] = _weighted_median(terms[i, vi], w[vi])
    return Z0


def fit_deshrink(Z: np.ndarray, Z0: np.ndarray, tuning: RobustTuning) -> np.ndarray:
    """Per-column slope of observed on predicted, undoing combination shrinkage.

    Rows with a missing observation or a fail-safe zero prediction are
    left out of the fit.  Columns where no slope is identifiable keep
    factor 1.
    """
    d = Z.shape[1]
    a = np.ones(d)
    for j in range(d):
        sel = np.isfinite(Z[:, j]) & (Z0[:, j] != 0.0)
        if not bool(sel.any()):
            continue
        try:
            a[j] = rob_slope(Z[sel, j], Z0[sel, j], tuning)
        except ValueError:
            a[j] = 1.0
    return a


def _residual_matrix(
    Z: np.ndarray, Zhat: np.ndarray, residual_scale: np.ndarray
) -> np.ndarray:
    """Standardized residuals; columns with NaN scale fall back to Z itself."""
    R = np.empty_like(Z)
    for j in range(Z.shape[1]):
        s = residual_scale[j]
        if np.isfinite(s):
            R[:, j] = (Z[:, j] - Zhat[:, j]) / s
        else:
            R[:, j] = Z[:, j]
    return R


def _fit_residual_scales(
    Z: np.ndarray,
    Zhat: np.ndarray,
    connected: np.ndarray,
    tuning: RobustTuning,
) -> np.ndarray:
    """Robust scale of the raw residuals per connected column.

    NaN marks columns where residuals are not usable: standalone
    columns, and connected columns whose residual spread degenerated
    (those fall back to the standardized values, with a warning).
    """
    d = Z.shape[1]
    scales = np.full(d, np.nan)
    for j in range(d):
        if not connected[j]:
            continue
        res = Z[:, j] - Zhat[:, j]
        s = rob_scale(res, tuning.scale_cap, tuning.scale_consistency)
        if s > 0.0:
            scales[j] = s
        else:
            warnings.warn(
                f"column {j}: residual scale degenerated; using the "
                "standardized values instead",
                DegenerateColumnWarning,
                stacklevel=2,
            )
    return scales


def flag_cells(R: np.ndarray, cutoff: float) -> np.ndarray:
    """Signed flags from standardized residuals: |r| > cutoff, sign of r."""
    flags = np.zeros(R.shape, dtype=np.int8)
    with np.errstate(invalid="ignore"):
        flags[R > cutoff] = 1
        flags[R < -cutoff] = -1
    return flags


@dataclass
class _RowScores:
    scores: np.ndarray
    standardized: np.ndarray
    location: float
    scale: float
    flags: np.ndarray


def _score_rows(
    R: np.ndarray,
    tuning: RobustTuning,
    flag_rows: bool,
    location: float | None = None,
    scale: float | None = None,
) -> _RowScores:
    """Average upper-tail probability of the squared residuals per row.

    Each defined residual maps through the chi-squared(1) CDF, so clean
    rows average about one half.  Scores are standardized robustly and
    rows are flagged one-sided above the cutoff.  Passing location and
    scale reuses a previously fitted standardization.
    """
    n = R.shape[0]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        scores = np.nanmean(chisq1_cdf(R * R), axis=1)
    defined = np.isfinite(scores)
    if location is None or scale is None:
        if defined.any():
            location = rob_loc(scores[defined], tuning.biweight_c)
            scale = rob_scale(
                scores[defined] - location,
                tuning.scale_cap,
                tuning.scale_consistency,
            )
        else:
            location, scale = float("nan"), 0.0
        if scale == 0.0 and flag_rows:
            warnings.warn(
                "row scores have zero robust spread; no rows flagged",
                DegenerateColumnWarning,
                stacklevel=2,
            )
    standardized = np.full(n, np.nan)
    if scale > 0.0:
        standardized[defined] = (scores[defined] - location) / scale
    flags = np.zeros(n, dtype=bool)
    if flag_rows and scale > 0.0:
        with np.errstate(invalid="ignore"):
            flags = standardized > tuning.cutoff
    return _RowScores(scores, standardized, float(location), float(scale), flags)


@dataclass
class FittedModel:
    """Everything needed to re-apply a fitted detector to new rows."""

    n_source_columns: int
    kept: tuple
    location: np.ndarray
    scale: np.ndarray
    graph: CorrelationGraph
    deshrink: np.ndarray
    residual_scale: np.ndarray
    row_location: float
    row_scale: float
    params: DetectionParams


@dataclass
class DetectionResult:
    """Full output of the pipeline on one matrix.

    All matrices except ``imputed`` live in the analyzed column space
    (``analyzed`` carries the corresponding labels); ``imputed``
    restores the original column layout, copying non-analyzed columns
    verbatim.
    """

    analyzed: DataMatrix
    report: ColumnSelectionReport
    location: np.ndarray
    scale: np.ndarray
    standardized: np.ndarray
    screened: np.ndarray
    graph: CorrelationGraph
    predictions_std: np.ndarray
    deshrink: np.ndarray
    residuals: np.ndarray
    residual_scale: np.ndarray
    cell_flags: np.ndarray
    row_scores: np.ndarray
    row_scores_std: np.ndarray
    row_flags: np.ndarray
    imputed: DataMatrix
    model: FittedModel

    @property
    def predictions(self) -> np.ndarray:
        """Cell predictions on the original measurement scale."""
        return self.predictions_std * self.scale + self.location

    def flagged_cells(self) -> list:
        """Flagged cells in row-major order as (row, col, sign) tuples."""
        rows, cols = np.nonzero(self.cell_flags)
        return [
            FlaggedCell(int(i), int(j), int(self.cell_flags[i, j]))
            for i, j in zip(rows, cols)
        ]

    def flagged_rows(self) -> list:
        return [int(i) for i in np.flatnonzero(self.row_flags)]


@dataclass
class AppliedResult:
    """Output of re-applying a fitted model to a new matrix."""

    standardized: np.ndarray
    screened: np.ndarray
    predictions_std: np.ndarray
    residuals: np.ndarray
    cell_flags: np.ndarray
    row_scores: np.ndarray
    row_scores_std: np.ndarray
    row_flags: np.ndarray
    imputed: DataMatrix


def _impute_analyzed(
    analyzed: DataMatrix,
    Zhat: np.ndarray,
    flags: np.ndarray,
    location: np.ndarray,
    scale: np.ndarray,
) -> np.ndarray:
    """Copy the analyzed values, patching flagged and missing cells only.

    Untouched cells keep their exact original bits.
    """
    out = analyzed.values.copy()
    patch = (flags != 0) | analyzed.missing
    replacement = Zhat * scale + location
    out[patch] = replacement[patch]
    return out


def _merge_imputed(source: DataMatrix, kept, analyzed_imputed: np.ndarray) -> DataMatrix:
    vals = source.values.copy()
    mask = source.missing.copy()
    kept = list(kept)
    vals[:, kept] = analyzed_imputed
    mask[:, kept] = False
    return DataMatrix(vals, mask, source.row_labels, source.col_labels)


def _resolve_k(params: DetectionParams, d: int) -> int | None:
    if params.k_neighbors is not None:
        return params.k_neighbors
    if d > _WIDE_MATRIX_COLUMNS:
        return _DEFAULT_WIDE_NEIGHBORS
    return None


def run_pipeline(X, params: DetectionParams | None = None) -> DetectionResult:
    """Run the full detection pipeline on a matrix.

    Accepts a DataMatrix, DataFrame-like or 2-D array-like.  See
    DetectionResult for what comes back.
    """
    params = params or DetectionParams()
    source = as_data_matrix(X)
    analyzed, report = select_analyzable_columns(
        source, params.min_distinct, params.max_missing_frac, params.tuning
    )
    tuning = params.tuning
    cutoff = tuning.cutoff

    location, scale, Z = standardize_columns(analyzed.values, tuning)
    U0 = univariate_screen(Z, cutoff)
    graph = build_correlation_graph(
        U0, tuning, params.corrlim, _resolve_k(params, analyzed.n_cols)
    )

    U = U0
    for round_no in range(params.extra_iterations + 1):
        Z0 = predict_cells(U, graph, params)
        deshrink = fit_deshrink(Z, Z0, tuning)
        Zhat = Z0 * deshrink
        residual_scale = _fit_residual_scales(Z, Zhat, graph.connected, tuning)
        R = _residual_matrix(Z, Zhat, residual_scale)
        flags = flag_cells(R, cutoff)
        if round_no < params.extra_iterations:
            U = np.where(flags != 0, np.nan, U0)

    rows = _score_rows(R, tuning, params.flag_rows)
    analyzed_imputed = _impute_analyzed(analyzed, Zhat, flags, location, scale)
    imputed = _merge_imputed(source, report.kept, analyzed_imputed)

    model = FittedModel(
        n_source_columns=source.n_cols,
        kept=report.kept,
        location=location,
        scale=scale,
        graph=graph,
        deshrink=deshrink,
        residual_scale=residual_scale,
        row_location=rows.location,
        row_scale=rows.scale,
        params=params,
    )
    return DetectionResult(
        analyzed=analyzed,
        report=report,
        location=location,
        scale=scale,
        standardized=Z,
        screened=U0,
        graph=graph,
        predictions_std=Zhat,
        deshrink=deshrink,
        residuals=R,
        residual_scale=residual_scale,
        cell_flags=flags,
        row_scores=rows.scores,
        row_scores_std=rows.standardized,
        row_flags=rows.flags,
        imputed=imputed,
        model=model,
    )


def apply_model(model: FittedModel, X) -> AppliedResult:
    """Apply a fitted model to new rows with the same columns as the fit.

    A single pass: standardize with the fitted location and scale,
    screen, predict through the fitted graph and deshrinkage, flag
    against the fitted residual scales, and impute.  Row scores are
    standardized by the fit-time location and scale.
    """
    source = as_data_matrix(X)
    if source.n_cols != model.n_source_columns:
        raise ValueError(
            f"expected {model.n_source_columns} columns as in the fitted "
            f"matrix, got {source.n_cols}"
        )
    params = model.params
    tuning = params.tuning
    kept = list(model.kept)
    analyzed = DataMatrix(
        source.values[:, kept],
        source.missing[:, kept],
        row_labels=source.row_labels,
        col_labels=[source.col_labels[j] for j in kept],
    )
    Z = (analyzed.values - model.location) / model.scale
    U = univariate_screen(Z, tuning.cutoff)
    Z0 = predict_cells(U, model.graph, params)
    Zhat = Z0 * model.deshrink
    R = _residual_matrix(Z, Zhat, model.residual_scale)
    flags = flag_cells(R, tuning.cutoff)
    rows = _score_rows(
        R, tuning, params.flag_rows, model.row_location, model.row_scale
    )
    analyzed_imputed = _impute_analyzed(
        analyzed, Zhat, flags, model.location, model.scale
    )
    imputed = _merge_imputed(source, kept, analyzed_imputed)
    return AppliedResult(
        standardized=Z,
        screened=U,
        predictions_std=Zhat,
        residuals=R,
        cell_flags=flags,
        row_scores=rows.scores,
        row_scores_std=rows.standardized,
        row_flags=rows.flags,
        imputed=imputed,
    )


@dataclass
class BaselineResult:
    """Output of the columnwise reference detector."""

    analyzed: DataMatrix
    report: ColumnSelectionReport
    location: np.ndarray
    scale: np.ndarray
    standardized: np.ndarray
    cell_flags: np.ndarray
    imputed: DataMatrix


def columnwise_baseline(
    X,
    tuning: RobustTuning | None = None,
    min_distinct: int = 3,
    max_missing_frac: float = 0.5,
) -> BaselineResult:
    """Purely univariate reference detector.

    Standardizes each analyzable column robustly and flags |z| beyond
    the cutoff, ignoring the correlation structure entirely.  Flagged
    and missing cells are imputed by the column location, the best this
    detector can offer.
    """
    tuning = tuning or RobustTuning()
    source = as_data_matrix(X)
    analyzed, report = select_analyzable_columns(
        source, min_distinct, max_missing_frac, tuning
    )
    location, scale, Z = standardize_columns(analyzed.values, tuning)
    flags = flag_cells(Z, tuning.cutoff)
    out = analyzed.values.copy()
    patch = (flags != 0) | analyzed.missing
    out[patch] = np.broadcast_to(location, out.shape)[patch]
    imputed = _merge_imputed(source, report.kept, out)
    return BaselineResult(
        analyzed=analyzed,
        report=report,
        location=location,
        scale=scale,
        standardized=Z,
        cell_flags=flags,
        imputed=imputed,
    )
