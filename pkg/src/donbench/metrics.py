"""Error metrics, percentile sample selection, histograms and report output."""

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DegenerateTargetError


def l2_relative_error(s_fe, s_pred) -> float:
    """Euclidean norm of the error divided by the norm of the reference."""
    s_fe = np.asarray(s_fe, dtype=np.float64).ravel()
    s_pred = np.asarray(s_pred, dtype=np.float64).ravel()
    if s_fe.shape != s_pred.shape:
        raise ValueError("vectors must have equal length")
    denom = float(np.linalg.norm(s_fe))
    if denom == 0.0:
        raise DegenerateTargetError("reference vector has zero norm")
    return float(np.linalg.norm(s_fe - s_pred)) / denom


def mae(s_fe, s_pred) -> float:
    """Mean absolute elementwise difference."""
    s_fe = np.asarray(s_fe, dtype=np.float64).ravel()
    s_pred = np.asarray(s_pred, dtype=np.float64).ravel()
    if s_fe.shape != s_pred.shape or s_fe.size == 0:
        raise ValueError("vectors must have equal nonzero length")
    return float(np.mean(np.abs(s_fe - s_pred)))


def percentile_rank_index(percentile: int, n: int) -> int:
    """Rank (into ascending order) of the exemplar at an integer percentile."""
    if not 0 <= percentile <= 100:
        raise ValueError("percentile must be in [0, 100]")
    return min((percentile * n) // 100, n - 1)


def percentile_exemplars(errors: np.ndarray, percentiles) -> dict:
    """Map percentile -> (rank, index into `errors`) using ascending error order."""
    errors = np.asarray(errors, dtype=np.float64)
    order = np.argsort(errors, kind="stable")
    out = {}
    for p in percentiles:
        rank = percentile_rank_index(int(p), errors.size)
        out[int(p)] = (rank, int(order[rank]))
    return out


def error_histogram(errors: np.ndarray, bins: int = 30):
    """Uniform-bin histogram over the observed range; counts sum to len(errors)."""
    errors = np.asarray(errors, dtype=np.float64)
    lo, hi = float(errors.min()), float(errors.max())
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    counts, edges = np.histogram(errors, bins=bins, range=(lo, hi))
    return edges, counts


@dataclass
class MetricsReport:
    """Per-sample and aggregate errors for one model on one dataset split."""

    benchmark: str
    field_names: list
    test_indices: list
    # per field: arrays over test samples (NaN where the target is degenerate)
    l2: dict
    mae: dict
    degenerate: dict
    aggregates: dict
    percentiles: dict  # field -> {p: {"rank", "sample_index", "l2"}}
    histograms: dict  # field -> {"edges", "counts"}
    timings: dict = field(default_factory=dict)

    def deterministic_dict(self) -> dict:
        """Everything except wall-clock timings, JSON-ready and canonical."""
        return {
            "benchmark": self.benchmark,
            "field_names": list(self.field_names),
            "test_indices": [int(i) for i in self.test_indices],
            "l2": {k: _float_list(v) for k, v in self.l2.items()},
            "mae": {k: _float_list(v) for k, v in self.mae.items()},
            "degenerate": {
                k: [bool(x) for x in v] for k, v in self.degenerate.items()
            },
            "aggregates": self.aggregates,
            "percentiles": self.percentiles,
            "histograms": self.histograms,
        }

    def to_dict(self) -> dict:
        out = self.deterministic_dict()
        out["timings"] = self.timings  # excluded from reproducibility checks
        return out

    def save(self, out_dir) -> Path:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "report.json").write_text(
            json.dumps(self.to_dict(), indent=2, sort_keys=True)
        )
        with open(out_dir / "per_sample_errors.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            header = ["sample_index"]
            for name in self.field_names:
                header += [f"l2_{name}", f"mae_{name}", f"degenerate_{name}"]
            writer.writerow(header)
            for row, idx in enumerate(self.test_indices):
                line = [int(idx)]
                for name in self.field_names:
                    line += [
                        repr(float(self.l2[name][row])),
                        repr(float(self.mae[name][row])),
                        int(self.degenerate[name][row]),
                    ]
                writer.writerow(line)
        for name in self.field_names:
            hist = self.histograms[name]
            with open(out_dir / f"histogram_{name}.csv", "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["bin_left", "bin_right", "count"])
                edges, counts = hist["edges"], hist["counts"]
                for i, count in enumerate(counts):
                    writer.writerow(
                        [repr(float(edges[i])), repr(float(edges[i + 1])), int(count)]
                    )
        return out_dir


def _float_list(arr):
    return [float(x) for x in np.asarray(arr).ravel()]


def compute_field_metrics(targets: np.ndarray, predictions: np.ndarray):
    """Per-sample L2 and MAE for one field; flags degenerate references.

    `targets` and `predictions` are (n_samples, n_values).  Degenerate
    samples (zero-norm target) get NaN L2 and are excluded from aggregates.
    """
    n = targets.shape[0]
    l2_vals = np.full(n, np.nan)
    mae_vals = np.zeros(n)
    degenerate = np.zeros(n, dtype=bool)
    for i in range(n):
        mae_vals[i] = mae(targets[i], predictions[i])
        try:
            l2_vals[i] = l2_relative_error(targets[i], predictions[i])
        except DegenerateTargetError:
            degenerate[i] = True
    return l2_vals, mae_vals, degenerate
