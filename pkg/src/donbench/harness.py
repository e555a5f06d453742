"""End-to-end orchestration: train/evaluate pipelines, architecture
comparisons with multi-seed medians, and runtime benchmarking."""

import csv
import json
import logging
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from multiprocessing import get_context
from pathlib import Path

import numpy as np

from . import fem
from .dataset import (
    REACTION_DIFFUSION,
    THERMO_ELECTRICAL_UNCOUPLED,
    DatasetContainer,
)
from .errors import HarnessError, TrainingError
from .metrics import (
    MetricsReport,
    compute_field_metrics,
    error_histogram,
    percentile_exemplars,
)
from .networks import ArchitectureSpec, build_model
from .training import TrainConfig, split_indices, train

logger = logging.getLogger(__name__)

ARCHITECTURES = (
    "deeponet-single",
    "deeponet-multi",
    "sdeeponet-single",
    "sdeeponet-multi",
)

DEFAULT_PERCENTILES = (0, 55, 85, 99)
DEFAULT_BINS = 30


def architecture_spec(arch_id: str, container: DatasetContainer,
                      seed: int = 0, **overrides) -> ArchitectureSpec:
    """Build the ArchitectureSpec for an architecture id on a dataset."""
    if arch_id not in ARCHITECTURES:
        raise HarnessError(f"unknown architecture {arch_id!r}")
    name, mode = arch_id.split("-")
    family = "deeponet" if name == "deeponet" else "s_deeponet"
    sensor_counts = tuple(a.shape[1] for a in container.input_arrays())
    return ArchitectureSpec(
        family=family,
        branch_mode=mode,
        sensor_counts=sensor_counts,
        n_output_fields=len(container.field_names),
        seed=seed,
        **overrides,
    )


def train_on_container(container: DatasetContainer, arch_id: str,
                       config: TrainConfig, **spec_overrides):
    """Build and train a model for `arch_id` on the dataset."""
    spec = architecture_spec(
        arch_id, container, seed=config.seed, **spec_overrides
    )
    model = build_model(spec)
    data = container.training_data()
    return train(model, data, config, benchmark=container.benchmark)


def predict_fields(model, container: DatasetContainer, sample_indices,
                   batch_size: int = 64) -> np.ndarray:
    """Model predictions on the stored grid: (n_sel, n_values, n_fields)."""
    inputs = [
        np.asarray(a[sample_indices], dtype=np.float64)
        for a in container.input_arrays()
    ]
    return model.predict(inputs, container.coords_grid(), batch_size=batch_size)


def evaluate(model, container: DatasetContainer, split_seed: int,
             out_dir=None, percentiles=DEFAULT_PERCENTILES,
             bins=DEFAULT_BINS) -> MetricsReport:
    """Evaluate on the held-out 20% split recomputed from `split_seed`.

    Degenerate samples (zero-norm reference) are excluded from L2 aggregates
    and counted separately.  When `out_dir` is given, the report plus
    plot-ready CSVs (per-sample errors, histograms, percentile exemplar
    field dumps) are written there.
    """
    benchmark = getattr(model, "benchmark", None)
    if benchmark is not None and benchmark != container.benchmark:
        raise HarnessError(
            f"model was trained on {benchmark!r}, dataset is "
            f"{container.benchmark!r}"
        )
    _, test_idx = split_indices(container.n_samples, split_seed)
    test_idx = np.sort(test_idx)

    targets = container.field_tensor()[test_idx].astype(np.float64)
    start = time.perf_counter()
    predictions = predict_fields(model, container, test_idx)
    inference_time = time.perf_counter() - start

    field_names = container.field_names
    l2, mae_d, degenerate, aggregates = {}, {}, {}, {}
    pct, histograms = {}, {}
    for c, name in enumerate(field_names):
        l2_vals, mae_vals, degen = compute_field_metrics(
            targets[..., c], predictions[..., c]
        )
        l2[name], mae_d[name], degenerate[name] = l2_vals, mae_vals, degen
        valid = l2_vals[~degen]
        aggregates[name] = {
            "mean_l2": float(valid.mean()) if valid.size else None,
            "mean_mae": float(mae_vals.mean()),
            "n_degenerate": int(degen.sum()),
            "n_test": int(test_idx.size),
        }
        ranked = valid if valid.size else np.zeros(1)
        exemplars = percentile_exemplars(ranked, percentiles)
        valid_rows = np.nonzero(~degen)[0]
        pct[name] = {}
        for p, (rank, local) in exemplars.items():
            row = int(valid_rows[local]) if valid.size else 0
            pct[name][str(p)] = {
                "rank": int(rank),
                "test_row": row,
                "sample_index": int(test_idx[row]),
                "l2": float(l2_vals[row]) if valid.size else None,
            }
        edges, counts = error_histogram(ranked, bins=bins)
        histograms[name] = {
            "edges": [float(e) for e in edges],
            "counts": [int(v) for v in counts],
        }

    report = MetricsReport(
        benchmark=container.benchmark,
        field_names=field_names,
        test_indices=[int(i) for i in test_idx],
        l2=l2,
        mae=mae_d,
        degenerate=degenerate,
        aggregates=aggregates,
        percentiles=pct,
        histograms=histograms,
        timings={
            "inference_total_s": inference_time,
            "inference_per_sample_s": inference_time / max(1, test_idx.size),
        },
    )
    if out_dir is not None:
        report.save(out_dir)
        _dump_exemplar_fields(
            Path(out_dir), container, targets, predictions, report
        )
    return report


def _dump_exemplar_fields(out_dir, container, targets, predictions, report):
    """CSV field dumps (target vs prediction) for every percentile exemplar."""
    coords = container.coords_grid()
    for c, name in enumerate(report.field_names):
        for p, info in report.percentiles[name].items():
            row = info["test_row"]
            path = out_dir / f"exemplar_{name}_p{p}.csv"
            with open(path, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["x", "t", "target", "prediction"])
                for j in range(coords.shape[0]):
                    writer.writerow(
                        [
                            repr(float(coords[j, 0])),
                            repr(float(coords[j, 1])),
                            repr(float(targets[row, j, c])),
                            repr(float(predictions[row, j, c])),
                        ]
                    )


def _comparison_cell(dataset_dir, arch_id, config_dict, seed, spec_overrides):
    """Train and evaluate one (architecture, seed) cell; used by workers."""
    container = DatasetContainer.load(dataset_dir)
    config = TrainConfig(**config_dict)
    config.seed = seed
    model, history = train_on_container(
        container, arch_id, config, **spec_overrides
    )
    report = evaluate(model, container, config.split_seed)
    return {
        "arch": arch_id,
        "seed": seed,
        "mean_l2": {
            name: report.aggregates[name]["mean_l2"]
            for name in report.field_names
        },
        "final_loss": history[-1][1] if history else None,
    }


def run_comparison(dataset, arch_ids, config: TrainConfig, seeds=(0, 1, 2),
                   workers: int = 1, out_dir=None, **spec_overrides) -> dict:
    """Train every architecture with every seed and tabulate mean L2 errors.

    Returns a table dict: per-architecture, per-field medians across seeds
    plus the per-seed values and a per-field winner flag.  Failed cells are
    recorded with their error message instead of numbers.
    """
    if isinstance(dataset, (str, Path)):
        container = DatasetContainer.load(dataset)
        dataset_dir = Path(dataset)
        tmp = None
    else:
        container = dataset
        tmp = tempfile.TemporaryDirectory(prefix="donbench-cmp-")
        dataset_dir = Path(tmp.name)
        container.save(dataset_dir)

    cells = [(arch, seed) for arch in arch_ids for seed in seeds]
    results = {}
    try:
        if workers > 1:
            ctx = get_context("spawn")
            with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
                futures = {
                    pool.submit(
                        _comparison_cell, str(dataset_dir), arch,
                        config.to_dict(), seed, spec_overrides,
                    ): (arch, seed)
                    for arch, seed in cells
                }
                for fut, key in futures.items():
                    try:
                        results[key] = fut.result()
                    except TrainingError as exc:
                        results[key] = {"error": str(exc)}
        else:
            for arch, seed in cells:
                try:
                    results[(arch, seed)] = _comparison_cell(
                        str(dataset_dir), arch, config.to_dict(), seed,
                        spec_overrides,
                    )
                except TrainingError as exc:
                    results[(arch, seed)] = {"error": str(exc)}
    finally:
        if tmp is not None:
            tmp.cleanup()

    field_names = container.field_names
    table = {
        "benchmark": container.benchmark,
        "fields": field_names,
        "architectures": list(arch_ids),
        "seeds": list(seeds),
        "cells": {},
    }
    for arch in arch_ids:
        per_seed = [results[(arch, seed)] for seed in seeds]
        failed = [r for r in per_seed if "error" in r]
        if failed:
            table["cells"][arch] = {"error": failed[0]["error"]}
            continue
        table["cells"][arch] = {
            name: {
                "per_seed": [r["mean_l2"][name] for r in per_seed],
                "median": float(
                    np.median([r["mean_l2"][name] for r in per_seed])
                ),
            }
            for name in field_names
        }
    table["winners"] = {}
    for name in field_names:
        medians = {
            arch: table["cells"][arch][name]["median"]
            for arch in arch_ids
            if "error" not in table["cells"][arch]
        }
        if medians:
            table["winners"][name] = min(medians, key=medians.get)

    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "comparison.json").write_text(
            json.dumps(table, indent=2, sort_keys=True)
        )
        with open(out_dir / "comparison.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["architecture"]
                + [f"mean_l2_{name}_median" for name in field_names]
                + ["winner_fields"]
            )
            for arch in arch_ids:
                cell = table["cells"][arch]
                if "error" in cell:
                    writer.writerow([arch, "failed:" + cell["error"]])
                    continue
                wins = [n for n in field_names if table["winners"].get(n) == arch]
                writer.writerow(
                    [arch]
                    + [repr(cell[name]["median"]) for name in field_names]
                    + ["+".join(wins)]
                )
    return table


def _rebuild_sample_inputs(container: DatasetContainer, index: int):
    grid = container.grid()
    scheme = container.scheme()
    nodes = grid.nodes()
    times = scheme.times()
    constants = container.manifest["constants"]
    from .fields import SampledFunction

    if container.benchmark == REACTION_DIFFUSION:
        return fem.ReactionDiffusionInputs(
            u0=SampledFunction(
                np.asarray(container.arrays["u0"][index], dtype=np.float64), nodes
            ),
            k=SampledFunction(
                np.asarray(container.arrays["k"][index], dtype=np.float64), nodes
            ),
            diffusivity=constants["diffusivity"],
        )
    references = None
    coupling = "coupled"
    if container.benchmark == THERMO_ELECTRICAL_UNCOUPLED:
        coupling = "uncoupled"
        references = (
            np.asarray(container.arrays["reference_T"], dtype=np.float64),
            np.asarray(container.arrays["reference_phi"], dtype=np.float64),
        )
    return fem.ThermoElectricalInputs(
        q_ext=SampledFunction(
            np.asarray(container.arrays["q_ext"][index], dtype=np.float64), times
        ),
        rho_e=SampledFunction(
            np.asarray(container.arrays["rho_e"][index], dtype=np.float64), times
        ),
        k_thermal=constants["k_thermal"],
        beta=constants["beta"],
        coupling=coupling,
        reference_fields=references,
    )


def solve_sample(container: DatasetContainer, index: int):
    """Re-run the FEM solve for one stored sample (used for timing)."""
    grid = container.grid()
    scheme = container.scheme()
    bc = container.bc()
    inputs = _rebuild_sample_inputs(container, index)
    if container.benchmark == REACTION_DIFFUSION:
        return fem.solve_reaction_diffusion(grid, scheme, inputs, bc)
    return fem.solve_thermo_electrical(
        grid, scheme, inputs, bc,
        potential_time_order=container.manifest["constants"][
            "potential_time_order"
        ],
    )


def bench_runtime(container: DatasetContainer, model, n_trials: int = 10) -> dict:
    """Median FEM solve time vs median model inference time per sample."""
    n_trials = max(1, n_trials)
    fem_times = []
    for trial in range(n_trials):
        index = trial % container.n_samples
        start = time.perf_counter()
        solve_sample(container, index)
        fem_times.append(time.perf_counter() - start)

    batch = np.arange(min(container.n_samples, 256))
    inference_times = []
    for _ in range(n_trials):
        start = time.perf_counter()
        predict_fields(model, container, batch, batch_size=batch.size)
        inference_times.append((time.perf_counter() - start) / batch.size)

    fem_median = float(np.median(fem_times))
    inference_median = float(np.median(inference_times))
    return {
        "n_trials": n_trials,
        "fem_solve_per_sample_s": fem_median,
        "inference_per_sample_s": inference_median,
        "inference_batch_size": int(batch.size),
        "speedup_ratio": fem_median / inference_median,
    }
