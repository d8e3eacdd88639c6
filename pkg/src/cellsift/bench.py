"""Synthetic benchmark: data models, contamination, metrics, experiments.

Random numbers come from numpy's PCG64 generator.  Every replication
derives its streams from SeedSequence((base_seed, grid_index,
rep_index)), so results are reproducible from the base seed alone and
independent of execution order.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .engine import DetectionParams, columnwise_baseline, run_pipeline
from .matrix import DataMatrix

__all__ = [
    "make_correlation",
    "sample_gaussian",
    "ContaminationSpec",
    "contaminate",
    "missed_fraction",
    "imputation_mse",
    "lrt_deviation",
    "expected_contaminated_row_fraction",
    "substructure_theory",
    "ExperimentPoint",
    "run_experiment",
    "write_results_csv",
    "load_grid_config",
    "RESULT_COLUMNS",
]

RESULT_COLUMNS = (
    "model",
    "n",
    "d",
    "eps",
    "gamma",
    "detector",
    "metric",
    "value",
    "stderr",
    "reps",
    "seed",
)

_MODEL_ALIASES = {
    "a09": "a09",
    "random-low": "random-low",
    "randomlow": "random-low",
    "randomlowcorr": "random-low",
    "random_low": "random-low",
}


def make_correlation(kind: str, d: int, seed=None) -> np.ndarray:
    """Build a d x d correlation matrix for a named model.

    "a09" has entries (-0.9)^|h-j|: strong, alternating, fading with
    distance.  "random-low" draws a Haar-random orthogonal basis,
    eigenvalues log-uniform on [1, 100], and rescales to unit diagonal,
    which tends to produce weak pairwise correlations; it needs a seed.
    """
    if d < 1:
        raise ValueError("d must be positive")
    canonical = _MODEL_ALIASES.get(kind.replace(" ", "").lower())
    if canonical == "a09":
        idx = np.arange(d)
        return (-0.9) ** np.abs(idx[:, None] - idx[None, :])
    if canonical == "random-low":
        rng = np.random.default_rng(seed)
        A = rng.standard_normal((d, d))
        Q, _ = np.linalg.qr(A)
        lam = np.exp(rng.uniform(math.log(1.0), math.log(100.0), size=d))
        S = (Q * lam) @ Q.T
        diag = np.sqrt(np.diag(S))
        S = S / np.outer(diag, diag)
        S = (S + S.T) / 2.0
        np.fill_diagonal(S, 1.0)
        return S
    raise ValueError(f"unknown correlation model {kind!r}")


def sample_gaussian(n: int, sigma: np.ndarray, seed=None) -> DataMatrix:
    """Draw n rows from a centered Gaussian with covariance sigma."""
    sigma = np.asarray(sigma, dtype=float)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise ValueError("sigma must be a square matrix")
    if n < 1:
        raise ValueError("n must be positive")
    try:
        L = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError as exc:
        raise ValueError("sigma is not positive definite") from exc
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, sigma.shape[0])) @ L.T
    return DataMatrix(X)


@dataclass(frozen=True)
class ContaminationSpec:
    """How to corrupt a clean matrix.

    mode "cellwise" replaces floor(fraction * n * d) distinct cells by
    the value gamma.  mode "rowwise" replaces floor(fraction * n) rows
    by gamma times a fixed direction: the eigenvector of the smallest
    eigenvalue of the correlation matrix, scaled so the direction has
    squared Mahalanobis norm d (hard to see marginally, maximally
    implausible jointly).  mode "none" leaves the data alone.
    """

    mode: str = "none"
    fraction: float = 0.0
    gamma: float = 0.0
    seed: int | None = None

    def __post_init__(self):
        if self.mode not in ("none", "cellwise", "rowwise"):
            raise ValueError("mode must be 'none', 'cellwise' or 'rowwise'")
        if not (0.0 <= self.fraction < 0.5):
            raise ValueError("fraction must lie in [0, 0.5)")


def _outlier_direction(sigma: np.ndarray) -> np.ndarray:
    d = sigma.shape[0]
    eigvals, eigvecs = np.linalg.eigh(sigma)
    v = eigvecs[:, 0].copy()
    nz = np.flatnonzero(v)
    if nz.size and v[nz[0]] < 0:
        v = -v
    quad = float(v @ np.linalg.solve(sigma, v))
    return v * math.sqrt(d / quad)


def contaminate(X: DataMatrix, spec: ContaminationSpec, sigma=None):
    """Corrupt a matrix per the spec; returns (corrupted, truth).

    truth is an (m, 2) array of contaminated cell indices for cellwise
    mode, an (m,) array of row indices for rowwise mode, and empty for
    mode "none" or a fraction that rounds down to nothing.  Replaced
    cells are always observed, never missing.
    """
    n, d = X.shape
    if spec.mode == "none" or spec.fraction == 0.0:
        return X, np.empty((0, 2), dtype=int)
    rng = np.random.default_rng(spec.seed)
    vals = X.values.copy()
    mask = X.missing.copy()
    if spec.mode == "cellwise":
        m = int(spec.fraction * n * d)
        if m == 0:
            warnings.warn("contamination fraction rounds down to zero cells")
            return X, np.empty((0, 2), dtype=int)
        flat = rng.choice(n * d, size=m, replace=False)
        rows, cols = np.divmod(flat, d)
        vals[rows, cols] = spec.gamma
        mask[rows, cols] = False
        order = np.lexsort((cols, rows))
        truth = np.column_stack((rows[order], cols[order]))
    else:
        if sigma is None:
            raise ValueError("rowwise contamination needs the correlation matrix")
        m = int(spec.fraction * n)
        if m == 0:
            warnings.warn("contamination fraction rounds down to zero rows")
            return X, np.empty(0, dtype=int)
        direction = _outlier_direction(np.asarray(sigma, dtype=float))
        rows = np.sort(rng.choice(n, size=m, replace=False))
        vals[rows, :] = spec.gamma * direction
        mask[rows, :] = False
        truth = rows
    corrupted = DataMatrix(vals, mask, X.row_labels, X.col_labels)
    return corrupted, truth


def _index_set(entries) -> set:
    """Normalize flag containers to a set of plain indices or index pairs."""
    if isinstance(entries, set):
        return entries
    arr = np.asarray(entries)
    if arr.dtype == bool:
        if arr.ndim == 1:
            return {int(i) for i in np.flatnonzero(arr)}
        rows, cols = np.nonzero(arr)
        return {(int(i), int(j)) for i, j in zip(rows, cols)}
    if arr.ndim == 2 and arr.shape[1] == 2:
        return {(int(i), int(j)) for i, j in arr}
    if arr.ndim == 2:
        rows, cols = np.nonzero(arr)
        return {(int(i), int(j)) for i, j in zip(rows, cols)}
    return {int(i) for i in arr.ravel()}


def missed_fraction(true_outliers, flagged) -> float:
    """Fraction of generated outliers the detector did not flag.

    Both arguments may be sets, index arrays, boolean masks, or signed
    flag matrices.  Raises ValueError when no outliers were generated,
    where the rate is undefined.
    """
    truth = _index_set(true_outliers)
    if not truth:
        raise ValueError("missed_fraction undefined: no outliers generated")
    flags = _index_set(flagged)
    return len(truth - flags) / len(truth)


def imputation_mse(clean_values, imputed_values, row_flags=None) -> float:
    """Mean squared imputation error against the clean data.

    Averaged over every cell of the rows that were not flagged; flagged
    rows are the detector's declared write-offs.  Raises ValueError
    when every row is flagged.
    """
    clean = np.asarray(clean_values, dtype=float)
    imputed = np.asarray(imputed_values, dtype=float)
    if clean.shape != imputed.shape:
        raise ValueError("clean and imputed shapes differ")
    if row_flags is None:
        keep = np.ones(clean.shape[0], dtype=bool)
    else:
        keep = ~np.asarray(row_flags, dtype=bool)
    if not keep.any():
        raise ValueError("imputation_mse undefined: every row was flagged")
    diff = clean[keep] - imputed[keep]
    return float(np.mean(diff * diff))


def lrt_deviation(sigma_hat, sigma) -> float:
    """Likelihood-ratio style distance between two covariance matrices.

    trace(S_hat S^-1) - log det(S_hat S^-1) - d; zero exactly when the
    two matrices coincide, positive otherwise.  Both inputs must be
    positive definite.
    """
    S_hat = np.asarray(sigma_hat, dtype=float)
    S = np.asarray(sigma, dtype=float)
    if S_hat.shape != S.shape or S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError("covariance matrices must be square and congruent")
    d = S.shape[0]
    try:
        L_hat = np.linalg.cholesky(S_hat)
        L = np.linalg.cholesky(S)
    except np.linalg.LinAlgError as exc:
        raise ValueError("covariance matrices must be positive definite") from exc
    trace_term = float(np.trace(np.linalg.solve(S, S_hat)))
    logdet = 2.0 * (
        float(np.sum(np.log(np.diag(L_hat)))) - float(np.sum(np.log(np.diag(L))))
    )
    return max(trace_term - logdet - d, 0.0)


def expected_contaminated_row_fraction(eps: float, d: int) -> float:
    """Chance that a row of d cells holds at least one contaminated cell."""
    if not (0.0 <= eps < 1.0):
        raise ValueError("eps must lie in [0, 1)")
    if d < 1:
        raise ValueError("d must be positive")
    return 1.0 - (1.0 - eps) ** d


def substructure_theory(q: int, eps: float):
    """Limits of fitting on q-column subsets under cellwise contamination.

    Returns (breakdown, clean_prob): the contamination fraction
    1 - 2^(-1/q) at which a majority of q-cell subrows can be corrupted,
    and the probability (1-eps)^q that a q-cell subrow is entirely clean.
    """
    if q < 2:
        raise ValueError("q must be at least 2")
    if not (0.0 <= eps < 1.0):
        raise ValueError("eps must lie in [0, 1)")
    return 1.0 - 2.0 ** (-1.0 / q), (1.0 - eps) ** q


@dataclass(frozen=True)
class ExperimentPoint:
    """One cell of the benchmark grid."""

    model: str
    n: int
    d: int
    eps: float
    gamma: float
    mode: str = "cellwise"
    detector: str = "cellsift"


def _run_detector(detector: str, X: DataMatrix, params: DetectionParams):
    """Returns (cell flag matrix, row flag mask, imputed values)."""
    if detector == "cellsift":
        res = run_pipeline(X, params)
        return res.cell_flags, res.row_flags, res.imputed.values
    if detector == "columnwise":
        res = columnwise_baseline(X, params.tuning)
        no_rows = np.zeros(X.n_rows, dtype=bool)
        return res.cell_flags, no_rows, res.imputed.values
    raise ValueError(f"unknown detector {detector!r}")


def _replicate_metrics(
    point: ExperimentPoint, base_seed: int, grid_index: int, rep_index: int,
    params: DetectionParams,
) -> dict:
    seq = np.random.SeedSequence((base_seed, grid_index, rep_index))
    model_seed, data_seed, contam_seed = (int(s) for s in seq.generate_state(3))
    sigma = make_correlation(point.model, point.d, model_seed)
    clean = sample_gaussian(point.n, sigma, data_seed)
    spec = ContaminationSpec(point.mode, point.eps, point.gamma, contam_seed)
    corrupted, truth = contaminate(clean, spec, sigma)

    cell_flags, row_flags, imputed = _run_detector(point.detector, corrupted, params)
    n, d = corrupted.shape
    metrics = {
        "flagged_cell_fraction": float((cell_flags != 0).sum()) / (n * d),
        "flagged_row_fraction": float(row_flags.sum()) / n,
    }
    if len(truth):
        if point.mode == "cellwise":
            metrics["missed_cell_fraction"] = missed_fraction(truth, cell_flags)
        else:
            metrics["missed_row_fraction"] = missed_fraction(truth, row_flags)
    try:
        metrics["imputation_mse"] = imputation_mse(
            clean.values, imputed, row_flags
        )
    except ValueError:
        pass
    kept = ~row_flags
    if int(kept.sum()) > d:
        try:
            sigma_hat = np.cov(imputed[kept], rowvar=False)
            metrics["lrt"] = lrt_deviation(sigma_hat, sigma)
        except ValueError:
            pass
    return metrics


def run_experiment(
    points,
    replications: int,
    base_seed: int,
    params: DetectionParams | None = None,
    progress=None,
) -> list:
    """Run every grid point for the given number of replications.

    Returns long-format result rows (dicts keyed by RESULT_COLUMNS):
    one row per point and metric, averaging over replications, with the
    standard error of that mean.  progress, if given, is called with
    (point, index, total) before each point runs.
    """
    if replications < 1:
        raise ValueError("replications must be positive")
    params = params or DetectionParams()
    points = list(points)
    rows = []
    for gi, point in enumerate(points):
        if progress is not None:
            progress(point, gi, len(points))
        samples: dict = {}
        for ri in range(replications):
            for name, value in _replicate_metrics(
                point, base_seed, gi, ri, params
            ).items():
                samples.setdefault(name, []).append(value)
        for name in sorted(samples):
            vals = np.asarray(samples[name], dtype=float)
            value = float(np.mean(vals))
            if vals.size > 1:
                stderr = float(np.std(vals, ddof=1) / math.sqrt(vals.size))
            else:
                stderr = 0.0
            rows.append(
                {
                    "model": point.model,
                    "n": point.n,
                    "d": point.d,
                    "eps": point.eps,
                    "gamma": point.gamma,
                    "detector": point.detector,
                    "metric": name,
                    "value": value,
                    "stderr": stderr,
                    "reps": int(vals.size),
                    "seed": base_seed,
                }
            )
    return rows


def write_results_csv(rows, path) -> None:
    """Write experiment rows with the fixed benchmark column set."""
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(RESULT_COLUMNS))
        writer.writeheader()
        for row in rows:
            writer.writerow({key: row[key] for key in RESULT_COLUMNS})


def _config_values(raw: str) -> list:
    return [tok.strip() for tok in raw.split(",") if tok.strip()]


def load_grid_config(path):
    """Parse a flat key-value grid file into (points, replications, seed).

    Lines look like ``key = value`` with '#' comments; list-valued keys
    (model, n, d, eps, gamma, mode, detector) take comma-separated
    values and the grid is their cross product.  replications and seed
    are scalars with defaults 10 and 0.
    """
    entries: dict = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, _, raw = text.partition("=")
            entries[key.strip().lower()] = raw.strip()

    def take_list(key, default, convert):
        raw = entries.pop(key, None)
        if raw is None:
            return [convert(v) for v in default]
        return [convert(v) for v in _config_values(raw)]

    models = take_list("model", ["a09"], str)
    ns = take_list("n", ["100"], int)
    ds = take_list("d", ["10"], int)
    epss = take_list("eps", ["0.1"], float)
    gammas = take_list("gamma", ["6"], float)
    modes = take_list("mode", ["cellwise"], str)
    detectors = take_list("detector", ["cellsift"], str)
    replications = int(entries.pop("replications", 10))
    seed = int(entries.pop("seed", 0))
    if entries:
        unknown = ", ".join(sorted(entries))
        raise ValueError(f"unknown grid config keys: {unknown}")

    points = [
        ExperimentPoint(model, n, d, eps, gamma, mode, detector)
        for model in models
        for n in ns
        for d in ds
        for eps in epss
        for gamma in gammas
        for mode in modes
        for detector in detectors
    ]
    return points, replications, seed
