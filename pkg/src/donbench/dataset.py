"""Dataset generation campaigns and the on-disk container format.

A dataset is a manifest (JSON) plus one little-endian float32 binary blob
per named array.  The manifest records everything needed to regenerate or
audit the data: benchmark id, grid/scheme/boundary descriptors, the random
field hyperparameters of every input, per-sample seeds, coupling mode and
reference-field provenance, the array shapes, per-array content hashes and
a self-hash that is verified on load.

Three benchmarks are built in:

* ``reaction_diffusion``          -- two spatial inputs u0(x), k(x); field u.
* ``thermo_electrical_coupled``   -- temporal inputs Q_ext(t), rho_e(t);
  fields T and phi with bidirectional coupling.
* ``thermo_electrical_uncoupled`` -- same inputs, but the cross-field terms
  are frozen at reference trajectories computed from the dataset-mean
  (nominal) inputs, so each field depends on its own input only.
"""

import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import fem, rng
from .errors import GenerationError, HarnessError, SolverError
from .fields import GrfSpec, SampledFunction, generate_grf

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
MAX_RETRIES = 3

REACTION_DIFFUSION = "reaction_diffusion"
THERMO_ELECTRICAL_COUPLED = "thermo_electrical_coupled"
THERMO_ELECTRICAL_UNCOUPLED = "thermo_electrical_uncoupled"
BENCHMARKS = (
    REACTION_DIFFUSION,
    THERMO_ELECTRICAL_COUPLED,
    THERMO_ELECTRICAL_UNCOUPLED,
)

# Input-function hyperparameters are artifact configuration, not physics
# constants; they are recorded in every manifest and overridable per call.
_DEFAULTS = {
    REACTION_DIFFUSION: {
        "grid": {"n_elements": 127},
        "scheme": {"n_steps": 101, "t_end": 1.0},
        "bc": {"left": 0.0, "right": 0.0},
        "constants": {"diffusivity": 0.01},
        "inputs": {
            "u0": {"mean": 0.0, "variance": 1.0, "correlation_length": 0.1},
            "k": {"mean": 1.0, "variance": 0.25, "correlation_length": 0.1},
        },
    },
    THERMO_ELECTRICAL_COUPLED: {
        "grid": {"n_elements": 127},
        "scheme": {"n_steps": 101, "t_end": 1.0},
        "bc": {"left": 0.0, "right": 0.0},
        "constants": {"k_thermal": 0.116, "beta": 3.9, "potential_time_order": 2},
        "inputs": {
            "q_ext": {"mean": 0.0, "variance": 1.0, "correlation_length": 0.1},
            "rho_e": {"mean": 0.0, "variance": 1.0, "correlation_length": 0.1},
        },
    },
}
_DEFAULTS[THERMO_ELECTRICAL_UNCOUPLED] = _DEFAULTS[THERMO_ELECTRICAL_COUPLED]

_INPUT_NAMES = {
    REACTION_DIFFUSION: ("u0", "k"),
    THERMO_ELECTRICAL_COUPLED: ("q_ext", "rho_e"),
    THERMO_ELECTRICAL_UNCOUPLED: ("q_ext", "rho_e"),
}
_FIELD_NAMES = {
    REACTION_DIFFUSION: ("u",),
    THERMO_ELECTRICAL_COUPLED: ("T", "phi"),
    THERMO_ELECTRICAL_UNCOUPLED: ("T", "phi"),
}


def _canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _deep_merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = value
    return out


class DatasetContainer:
    """In-memory dataset: manifest dict plus named float32 arrays."""

    def __init__(self, manifest: dict, arrays: dict):
        self.manifest = manifest
        self.arrays = {k: np.asarray(v, dtype=np.float32) for k, v in arrays.items()}
        self._validate()

    def _validate(self):
        if self.manifest["n_samples"] < 1:
            raise HarnessError("dataset must contain at least one sample")
        meta = self.manifest["arrays"]
        if set(meta) != set(self.arrays):
            raise HarnessError("array names disagree with the manifest")
        for name, info in meta.items():
            if list(self.arrays[name].shape) != list(info["shape"]):
                raise HarnessError(
                    f"array {name!r} has shape {self.arrays[name].shape}, "
                    f"manifest says {info['shape']}"
                )

    # -- descriptors ---------------------------------------------------------

    @property
    def benchmark(self) -> str:
        return self.manifest["benchmark"]

    @property
    def n_samples(self) -> int:
        return self.manifest["n_samples"]

    @property
    def input_names(self):
        return list(self.manifest["input_names"])

    @property
    def field_names(self):
        return list(self.manifest["field_names"])

    def grid(self) -> fem.Grid1D:
        return fem.Grid1D(**self.manifest["grid"])

    def scheme(self) -> fem.TimeScheme:
        return fem.TimeScheme(**self.manifest["scheme"])

    def bc(self) -> fem.BoundarySpec:
        return fem.BoundarySpec(**self.manifest["bc"])

    def coords_grid(self) -> np.ndarray:
        """(x, t) pairs for every stored value, time-major flattening."""
        nodes = self.grid().nodes()
        times = self.scheme().times()
        xx = np.tile(nodes, times.size)
        tt = np.repeat(times, nodes.size)
        return np.column_stack([xx, tt])

    def input_arrays(self):
        return [self.arrays[name] for name in self.input_names]

    def field_tensor(self) -> np.ndarray:
        """Targets stacked per field: (N, n_steps * n_nodes, n_fields)."""
        fields = [
            self.arrays[name].reshape(self.n_samples, -1)
            for name in self.field_names
        ]
        return np.stack(fields, axis=-1)

    def training_data(self):
        from .training import TrainingData

        return TrainingData(
            branch_inputs=[
                np.asarray(a, dtype=np.float64) for a in self.input_arrays()
            ],
            targets=np.asarray(self.field_tensor(), dtype=np.float64),
            coords=self.coords_grid(),
        )

    # -- persistence -----------------------------------------------------------

    def save(self, out_dir) -> Path:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        for name in self.arrays:
            blob = self.arrays[name].astype("<f4").tobytes()
            (out_dir / f"{name}.bin").write_bytes(blob)
            digest = hashlib.sha256(blob).hexdigest()
            if self.manifest["arrays"][name].get("sha256") != digest:
                self.manifest["arrays"][name]["sha256"] = digest
        body = {k: v for k, v in self.manifest.items() if k != "manifest_sha256"}
        self.manifest["manifest_sha256"] = hashlib.sha256(
            _canonical_json(body).encode()
        ).hexdigest()
        (out_dir / "manifest.json").write_text(
            json.dumps(self.manifest, indent=2, sort_keys=True)
        )
        return out_dir

    @classmethod
    def load(cls, src_dir) -> "DatasetContainer":
        src_dir = Path(src_dir)
        manifest_path = src_dir / "manifest.json"
        if not manifest_path.exists():
            raise HarnessError(f"no manifest.json under {src_dir}")
        manifest = json.loads(manifest_path.read_text())
        body = {k: v for k, v in manifest.items() if k != "manifest_sha256"}
        digest = hashlib.sha256(_canonical_json(body).encode()).hexdigest()
        if digest != manifest.get("manifest_sha256"):
            raise HarnessError("manifest hash mismatch; dataset corrupted")
        arrays = {}
        for name, info in manifest["arrays"].items():
            blob = (src_dir / f"{name}.bin").read_bytes()
            if hashlib.sha256(blob).hexdigest() != info["sha256"]:
                raise HarnessError(f"array {name!r} hash mismatch; file corrupted")
            arrays[name] = np.frombuffer(blob, dtype="<f4").reshape(info["shape"])
        return cls(manifest, arrays)


def _grf_input(config: dict, name: str, n_points: int, seed: int) -> SampledFunction:
    params = config["inputs"][name]
    return generate_grf(
        GrfSpec(
            n_points=n_points,
            seed=seed,
            mean=params["mean"],
            variance=params["variance"],
            correlation_length=params["correlation_length"],
        )
    )


def _constant_input(value: float, n_points: int) -> SampledFunction:
    return SampledFunction(np.full(n_points, value), np.linspace(0.0, 1.0, n_points))


# seam for tests to inject solver failures
def _solve_rd(grid, scheme, inputs, bc):
    return fem.solve_reaction_diffusion(grid, scheme, inputs, bc)


def _solve_te(grid, scheme, inputs, bc, potential_time_order):
    return fem.solve_thermo_electrical(
        grid, scheme, inputs, bc, potential_time_order=potential_time_order
    )


def _generate_sample(benchmark, config, grid, scheme, bc, sample_seed, references):
    """Generate inputs and solve one sample, retrying on solver failure."""
    last_error = None
    for attempt in range(MAX_RETRIES + 1):
        seed = rng.retry(sample_seed, attempt)
        try:
            if benchmark == REACTION_DIFFUSION:
                u0 = _grf_input(config, "u0", grid.n_nodes, rng.substream(seed, 0))
                k = _grf_input(config, "k", grid.n_nodes, rng.substream(seed, 1))
                inputs = fem.ReactionDiffusionInputs(
                    u0=u0, k=k, diffusivity=config["constants"]["diffusivity"]
                )
                solution = _solve_rd(grid, scheme, inputs, bc)
                return {"u0": u0.values, "k": k.values, "u": solution.values}, attempt
            q_ext = _grf_input(config, "q_ext", scheme.n_steps, rng.substream(seed, 0))
            rho_e = _grf_input(config, "rho_e", scheme.n_steps, rng.substream(seed, 1))
            coupling = (
                "uncoupled" if benchmark == THERMO_ELECTRICAL_UNCOUPLED else "coupled"
            )
            inputs = fem.ThermoElectricalInputs(
                q_ext=q_ext,
                rho_e=rho_e,
                k_thermal=config["constants"]["k_thermal"],
                beta=config["constants"]["beta"],
                coupling=coupling,
                reference_fields=references,
            )
            temp, phi = _solve_te(
                grid, scheme, inputs, bc, config["constants"]["potential_time_order"]
            )
            return {
                "q_ext": q_ext.values,
                "rho_e": rho_e.values,
                "T": temp.values,
                "phi": phi.values,
            }, attempt
        except SolverError as exc:
            last_error = exc
            logger.warning(
                "sample with base seed %d failed attempt %d: %s",
                sample_seed, attempt, exc,
            )
    raise GenerationError(
        f"sample with base seed {sample_seed} failed after "
        f"{MAX_RETRIES + 1} attempts: {last_error}"
    )


def generate_dataset(benchmark: str, n_samples: int, master_seed: int,
                     overrides=None, threads: int = 1) -> DatasetContainer:
    """Run a generation campaign and return the in-memory container."""
    if benchmark not in BENCHMARKS:
        raise HarnessError(f"unknown benchmark {benchmark!r}")
    if n_samples < 1:
        raise HarnessError("n_samples must be >= 1")
    config = _DEFAULTS[benchmark]
    if overrides:
        config = _deep_merge(config, overrides)

    grid = fem.Grid1D(**config["grid"])
    scheme = fem.TimeScheme(**config["scheme"])
    bc = fem.BoundarySpec(**config["bc"])

    references = None
    reference_arrays = {}
    reference_provenance = None
    if benchmark == THERMO_ELECTRICAL_UNCOUPLED:
        nominal = fem.ThermoElectricalInputs(
            q_ext=_constant_input(config["inputs"]["q_ext"]["mean"], scheme.n_steps),
            rho_e=_constant_input(config["inputs"]["rho_e"]["mean"], scheme.n_steps),
            k_thermal=config["constants"]["k_thermal"],
            beta=config["constants"]["beta"],
            coupling="coupled",
        )
        ref_t, ref_phi = fem.compute_reference_fields(
            grid, scheme, nominal, bc,
            potential_time_order=config["constants"]["potential_time_order"],
        )
        references = (ref_t.values, ref_phi.values)
        reference_arrays = {"reference_T": ref_t.values, "reference_phi": ref_phi.values}
        reference_provenance = {
            "source": "coupled solve of dataset-mean (nominal) inputs",
            "q_ext_nominal": config["inputs"]["q_ext"]["mean"],
            "rho_e_nominal": config["inputs"]["rho_e"]["mean"],
        }

    sample_seeds = [rng.split(master_seed, i) for i in range(n_samples)]

    def run(seed):
        return _generate_sample(benchmark, config, grid, scheme, bc, seed, references)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(run, sample_seeds))
    else:
        outcomes = [run(seed) for seed in sample_seeds]

    input_names = _INPUT_NAMES[benchmark]
    field_names = _FIELD_NAMES[benchmark]
    arrays = {}
    for name in input_names + field_names:
        arrays[name] = np.stack([out[0][name] for out in outcomes]).astype(np.float32)
    for name, values in reference_arrays.items():
        arrays[name] = np.asarray(values, dtype=np.float32)
    retry_counts = {
        str(i): out[1] for i, out in enumerate(outcomes) if out[1] > 0
    }

    manifest = {
        "format_version": FORMAT_VERSION,
        "benchmark": benchmark,
        "n_samples": n_samples,
        "master_seed": master_seed,
        "grid": dict(config["grid"]),
        "scheme": dict(config["scheme"]),
        "bc": dict(config["bc"]),
        "initial_condition": "zero",
        "coupling": (
            "none" if benchmark == REACTION_DIFFUSION
            else ("uncoupled" if benchmark == THERMO_ELECTRICAL_UNCOUPLED
                  else "coupled")
        ),
        "constants": dict(config["constants"]),
        "input_specs": {k: dict(v) for k, v in config["inputs"].items()},
        "input_names": list(input_names),
        "field_names": list(field_names),
        "sample_seeds": sample_seeds,
        "retry_counts": retry_counts,
        "reference_provenance": reference_provenance,
        "arrays": {
            name: {
                "shape": list(arr.shape),
                "dtype": "<f4",
                "sha256": hashlib.sha256(arr.astype("<f4").tobytes()).hexdigest(),
            }
            for name, arr in arrays.items()
        },
    }
    return DatasetContainer(manifest, arrays)
