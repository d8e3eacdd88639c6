"""cellsift: cellwise outlier detection and robust imputation.

Flags individual deviating cells in a numeric matrix by predicting
each cell from robustly correlated columns, flags rows whose residual
pattern is collectively unusual, and imputes flagged or missing cells.
"""

from .bench import (
    ContaminationSpec,
    ExperimentPoint,
    contaminate,
    expected_contaminated_row_fraction,
    imputation_mse,
    lrt_deviation,
    make_correlation,
    missed_fraction,
    run_experiment,
    sample_gaussian,
    substructure_theory,
    write_results_csv,
)
from .cellmap import DEFAULT_PALETTE, CellMapSpec, render_cell_map
from .detector import DeviatingCellDetector
from .engine import (
    BaselineResult,
    CorrelationGraph,
    DetectionParams,
    DetectionResult,
    FlaggedCell,
    apply_model,
    columnwise_baseline,
    run_pipeline,
)
from .io import CsvTable, read_csv, write_flags, write_imputed, write_row_flags
from .matrix import (
    ColumnSelectionReport,
    DataMatrix,
    NoAnalyzableColumnsError,
    as_data_matrix,
    column_affine_transform,
    permute_matrix,
    select_analyzable_columns,
)
from .robust import (
    RobustTuning,
    chisq1_cdf,
    chisq1_quantile,
    rob_corr,
    rob_loc,
    rob_scale,
    rob_slope,
)

__version__ = "0.1.0"

__all__ = [
    "ColumnSelectionReport",
    "ContaminationSpec",
    "CorrelationGraph",
    "CsvTable",
    "BaselineResult",
    "CellMapSpec",
    "DEFAULT_PALETTE",
    "DataMatrix",
    "DetectionParams",
    "DetectionResult",
    "DeviatingCellDetector",
    "ExperimentPoint",
    "FlaggedCell",
    "NoAnalyzableColumnsError",
    "RobustTuning",
    "apply_model",
    "as_data_matrix",
    "chisq1_cdf",
    "chisq1_quantile",
    "column_affine_transform",
    "columnwise_baseline",
    "contaminate",
    "expected_contaminated_row_fraction",
    "imputation_mse",
    "lrt_deviation",
    "make_correlation",
    "missed_fraction",
    "permute_matrix",
    "read_csv",
    "render_cell_map",
    "rob_corr",
    "rob_loc",
    "rob_scale",
    "rob_slope",
    "run_experiment",
    "run_pipeline",
    "sample_gaussian",
    "select_analyzable_columns",
    "substructure_theory",
    "write_flags",
    "write_imputed",
    "write_results_csv",
    "write_row_flags",
    "__version__",
]
