"""Scikit-learn style estimator wrapping the detection pipeline."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .engine import AppliedResult, DetectionParams, apply_model, run_pipeline
from .matrix import as_data_matrix
from .robust import RobustTuning

__all__ = ["DeviatingCellDetector"]


class DeviatingCellDetector(BaseEstimator, TransformerMixin):
    """Detect deviating cells in a numeric matrix and impute them.

    ``fit`` analyzes a matrix: each analyzable column is standardized
    robustly, cells are predicted from correlated columns, and cells
    whose standardized prediction residual exceeds the cutoff are
    flagged, together with rows whose overall residual pattern is
    unusual.  ``transform`` imputes flagged and missing cells with
    their predictions; on new rows it re-applies the fitted column
    statistics, correlation graph and residual scales.

    Parameters
    ----------
    tolerance : float, default 0.99
        Probability driving the flagging cutoff sqrt(chi2_1 quantile);
        0.99 gives cutoff 2.576.
    corrlim : float, default 0.5
        Minimum |robust correlation| for a column to act as a neighbor.
    combination : {"weighted-mean", "weighted-median"}
        How neighbor contributions are combined into a prediction.
    include_self : bool, default True
        Include the cell's own screened value among the contributions.
    extra_iterations : int, default 0
        Re-run prediction and flagging this many extra times with
        previously flagged cells masked.
    k_neighbors : int or None
        Cap on neighbors per column; None means unlimited up to 1000
        analyzed columns and 100 beyond that.
    flag_rows : bool, default True
        Also flag rows with collectively unusual residuals.
    min_distinct : int, default 3
        Minimum distinct non-missing values for a column to be analyzed.
    max_missing_frac : float, default 0.5
        Maximum fraction of missing cells for a column to be analyzed.
    biweight_c, scale_cap, scale_consistency, ellipse_df
        Tuning constants of the underlying robust estimators.

    Attributes
    ----------
    result_ : DetectionResult
        Full pipeline output on the fitted matrix.
    cell_flags_ : ndarray of int8, shape (n, n_analyzed)
        Signed cell flags on the fitted matrix (+1 high, -1 low, 0 ok).
    row_flags_ : ndarray of bool, shape (n,)
        Row flags on the fitted matrix.
    imputed_ : ndarray, shape (n, d)
        Fitted matrix with flagged and missing cells imputed, original
        column layout.
    analyzed_columns_ : ndarray of int
        Indices of the columns that were analyzed.
    location_, scale_ : ndarray, shape (n_analyzed,)
        Robust column locations and scales.
    """

    def __init__(
        self,
        tolerance: float = 0.99,
        corrlim: float = 0.5,
        combination: str = "weighted-mean",
        include_self: bool = True,
        extra_iterations: int = 0,
        k_neighbors: int | None = None,
        flag_rows: bool = True,
        min_distinct: int = 3,
        max_missing_frac: float = 0.5,
        biweight_c: float = 3.0,
        scale_cap: float = 2.5,
        scale_consistency: float = 0.845,
        ellipse_df: int = 2,
    ):
        self.tolerance = tolerance
        self.corrlim = corrlim
        self.combination = combination
        self.include_self = include_self
        self.extra_iterations = extra_iterations
        self.k_neighbors = k_neighbors
        self.flag_rows = flag_rows
        self.min_distinct = min_distinct
        self.max_missing_frac = max_missing_frac
        self.biweight_c = biweight_c
        self.scale_cap = scale_cap
        self.scale_consistency = scale_consistency
        self.ellipse_df = ellipse_df

    def _detection_params(self) -> DetectionParams:
        tuning = RobustTuning(
            biweight_c=self.biweight_c,
            scale_cap=self.scale_cap,
            scale_consistency=self.scale_consistency,
            tolerance=self.tolerance,
            ellipse_df=self.ellipse_df,
        )
        return DetectionParams(
            tuning=tuning,
            corrlim=self.corrlim,
            combination=self.combination,
            include_self=self.include_self,
            extra_iterations=self.extra_iterations,
            k_neighbors=self.k_neighbors,
            flag_rows=self.flag_rows,
            min_distinct=self.min_distinct,
            max_missing_frac=self.max_missing_frac,
        )

    def fit(self, X, y=None):
        """Analyze the matrix and store the fitted model and results."""
        result = run_pipeline(as_data_matrix(X), self._detection_params())
        self.result_ = result
        self.model_ = result.model
        self.n_features_in_ = result.imputed.n_cols
        self.analyzed_columns_ = np.asarray(result.report.kept, dtype=int)
        self.location_ = result.location
        self.scale_ = result.scale
        self.cell_flags_ = result.cell_flags
        self.row_flags_ = result.row_flags
        self.row_scores_ = result.row_scores
        self.imputed_ = np.asarray(result.imputed.values)
        return self

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise NotFittedError(
                "this DeviatingCellDetector instance is not fitted yet"
            )

    def apply(self, X) -> AppliedResult:
        """Re-apply the fitted model to a matrix with the same columns."""
        self._check_fitted()
        return apply_model(self.model_, X)

    def transform(self, X) -> np.ndarray:
        """Impute flagged and missing cells; returns the full-width array."""
        return np.array(self.apply(X).imputed.values)

    def predict(self, X) -> np.ndarray:
        """Rowwise labels in the scikit-learn outlier convention.

        Returns +1 for rows that look consistent, -1 for flagged rows.
        """
        applied = self.apply(X)
        return np.where(applied.row_flags, -1, 1)
