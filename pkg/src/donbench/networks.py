"""The four operator architectures and their shared contraction semantics.

All variants predict a solution field at arbitrary query coordinates by
contracting a branch encoding of the input functions against a trunk
encoding of the coordinates:

    prediction[j, c] = sum_h B[h] * T[j, h, c] + beta[c]

* family "deeponet": the branch is an affine stack over sensor values;
  "single" mode concatenates both input functions into one branch,
  "multi" mode encodes each with its own branch and joins the encodings
  with an elementwise (Hadamard) product.
* family "s_deeponet": the branch is a GRU encoder-decoder over temporal
  input sequences; "single" mode stacks the two sequences as features of
  one branch, "multi" mode runs one recurrent branch per input and joins
  by Hadamard product.

The trunk maps each query coordinate to an (h x c) slab, so all output
fields are predicted simultaneously from shared trunk features.
"""

import warnings
from dataclasses import asdict, dataclass, replace
from typing import Optional

import numpy as np

from . import rng
from .autodiff import Tensor
from .errors import InputError, SpecError
from .layers import (
    GruEncoderDecoder,
    Mlp,
    ParameterStore,
    concat_sensor_vectors,
    stack_feature_sequences,
)

FAMILIES = ("deeponet", "s_deeponet")
BRANCH_MODES = ("single", "multi")


@dataclass(frozen=True)
class ArchitectureSpec:
    family: str
    branch_mode: str
    sensor_counts: tuple
    n_output_fields: int
    hidden_dim: int = 64
    branch_widths: tuple = (128, 128)
    trunk_widths: tuple = (128, 128, 128)
    activation: str = "tanh"
    gru_hidden: int = 64
    query_dim: int = 2
    seed: int = 0
    # output width of each branch; anything other than hidden_dim is invalid
    # and rejected by build_model (guards against corrupt descriptors)
    branch_output_dims: Optional[tuple] = None

    @property
    def n_inputs(self) -> int:
        return len(self.sensor_counts)

    def resolved_branch_output_dims(self) -> tuple:
        if self.branch_output_dims is None:
            return (self.hidden_dim,) * self.n_inputs
        return tuple(self.branch_output_dims)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sensor_counts"] = list(self.sensor_counts)
        d["branch_widths"] = list(self.branch_widths)
        d["trunk_widths"] = list(self.trunk_widths)
        if self.branch_output_dims is not None:
            d["branch_output_dims"] = list(self.branch_output_dims)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ArchitectureSpec":
        d = dict(d)
        for key in ("sensor_counts", "branch_widths", "trunk_widths"):
            d[key] = tuple(d[key])
        if d.get("branch_output_dims") is not None:
            d["branch_output_dims"] = tuple(d["branch_output_dims"])
        return cls(**d)


def validate_spec(spec: ArchitectureSpec):
    if spec.family not in FAMILIES:
        raise SpecError(f"unknown family {spec.family!r}")
    if spec.branch_mode not in BRANCH_MODES:
        raise SpecError(f"unknown branch mode {spec.branch_mode!r}")
    if spec.n_inputs != 2:
        raise SpecError("architectures take exactly two input functions")
    if spec.activation not in ("tanh", "relu"):
        raise SpecError(f"unknown activation {spec.activation!r}")
    if spec.hidden_dim < 1 or spec.n_output_fields < 1 or spec.query_dim < 1:
        raise SpecError("hidden_dim, n_output_fields and query_dim must be >= 1")
    if any(s < 1 for s in spec.sensor_counts):
        raise SpecError("sensor counts must be >= 1")
    outs = spec.resolved_branch_output_dims()
    if len(outs) != spec.n_inputs:
        raise SpecError("one branch output width per input is required")
    if any(w != spec.hidden_dim for w in outs):
        raise SpecError(
            f"branch output widths {outs} must all equal the hidden "
            f"dimension {spec.hidden_dim} (Hadamard compatibility)"
        )


@dataclass(frozen=True)
class QueryBatch:
    """Continuous query coordinates, one row per evaluation point."""

    coordinates: np.ndarray

    def __post_init__(self):
        coords = np.asarray(self.coordinates, dtype=np.float64)
        if coords.ndim == 1:
            coords = coords[:, None]
        if coords.ndim != 2:
            raise ValueError("coordinates must be (n, d)")
        coords.setflags(write=False)
        object.__setattr__(self, "coordinates", coords)


@dataclass
class Normalization:
    """Per-field affine input/output statistics plus the trunk coordinate map."""

    input_mean: np.ndarray
    input_scale: np.ndarray
    output_mean: np.ndarray
    output_scale: np.ndarray
    coord_lo: np.ndarray
    coord_hi: np.ndarray

    @classmethod
    def identity(cls, n_inputs: int, n_fields: int, query_dim: int):
        return cls(
            input_mean=np.zeros(n_inputs),
            input_scale=np.ones(n_inputs),
            output_mean=np.zeros(n_fields),
            output_scale=np.ones(n_fields),
            coord_lo=-np.ones(query_dim),
            coord_hi=np.ones(query_dim),
        )

    def validate(self):
        for arr in (self.input_mean, self.input_scale, self.output_mean,
                    self.output_scale, self.coord_lo, self.coord_hi):
            if not np.all(np.isfinite(arr)):
                raise ValueError("normalization statistics must be finite")
        if np.any(self.input_scale == 0) or np.any(self.output_scale == 0):
            raise ValueError("normalization scales must be nonzero")

    def normalize_input(self, index: int, values: np.ndarray) -> np.ndarray:
        return (values - self.input_mean[index]) / self.input_scale[index]

    def normalize_coords(self, coords: np.ndarray) -> np.ndarray:
        span = self.coord_hi - self.coord_lo
        span = np.where(span == 0, 1.0, span)
        return 2.0 * (coords - self.coord_lo) / span - 1.0

    def normalize_outputs(self, fields: np.ndarray) -> np.ndarray:
        return (fields - self.output_mean) / self.output_scale

    def denormalize_outputs(self, fields: np.ndarray) -> np.ndarray:
        return fields * self.output_scale + self.output_mean

    def to_dict(self) -> dict:
        return {
            "input_mean": self.input_mean.tolist(),
            "input_scale": self.input_scale.tolist(),
            "output_mean": self.output_mean.tolist(),
            "output_scale": self.output_scale.tolist(),
            "coord_lo": self.coord_lo.tolist(),
            "coord_hi": self.coord_hi.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Normalization":
        return cls(**{k: np.asarray(v, dtype=np.float64) for k, v in d.items()})


class OperatorModel:
    """Architecture + parameters + normalization; immutable once trained."""

    def __init__(self, spec: ArchitectureSpec):
        validate_spec(spec)
        self.spec = spec
        self.store = ParameterStore()
        self.benchmark = None
        self.norm = Normalization.identity(
            spec.n_inputs, spec.n_output_fields, spec.query_dim
        )
        stream = rng.stream(spec.seed)
        h, c = spec.hidden_dim, spec.n_output_fields

        self.branches = []
        if spec.family == "deeponet":
            if spec.branch_mode == "single":
                dims = [sum(spec.sensor_counts), *spec.branch_widths, h]
                self.branches.append(
                    Mlp(self.store, "branch0", dims, spec.activation, stream)
                )
            else:
                for i, m in enumerate(spec.sensor_counts):
                    dims = [m, *spec.branch_widths, h]
                    self.branches.append(
                        Mlp(self.store, f"branch{i}", dims, spec.activation, stream)
                    )
        else:
            n_feats = (spec.n_inputs,) if spec.branch_mode == "single" else (1, 1)
            for i, f in enumerate(n_feats):
                self.branches.append(
                    GruEncoderDecoder(
                        self.store, f"branch{i}", f, spec.gru_hidden, h, stream
                    )
                )

        trunk_dims = [spec.query_dim, *spec.trunk_widths, h * c]
        self.trunk = Mlp(self.store, "trunk", trunk_dims, spec.activation, stream)
        self.beta = self.store.add("beta", np.zeros(c))

    # -- forward pieces (normalized space) ----------------------------------

    def branch_output(self, inputs_norm) -> Tensor:
        """Latent branch encoding B of normalized inputs, shape (batch, h)."""
        spec = self.spec
        if len(inputs_norm) != spec.n_inputs:
            raise InputError(
                f"expected {spec.n_inputs} input functions, got {len(inputs_norm)}"
            )
        if spec.family == "deeponet":
            for i, (u, m) in enumerate(zip(inputs_norm, spec.sensor_counts)):
                if u.shape[-1] != m:
                    raise InputError(
                        f"input {i} has {u.shape[-1]} sensors, expected {m}"
                    )
            if spec.branch_mode == "single":
                return self.branches[0](concat_sensor_vectors(inputs_norm))
            outs = [b(Tensor(np.asarray(u, dtype=np.float64)))
                    for b, u in zip(self.branches, inputs_norm)]
            joined = outs[0]
            for out in outs[1:]:
                joined = joined * out
            return joined
        # sequence family
        for i, (u, m) in enumerate(zip(inputs_norm, spec.sensor_counts)):
            if u.shape[-1] != m:
                raise InputError(
                    f"input sequence {i} has length {u.shape[-1]}, expected {m}"
                )
        if spec.branch_mode == "single":
            return self.branches[0](stack_feature_sequences(inputs_norm))
        outs = [b(stack_feature_sequences([u]))
                for b, u in zip(self.branches, inputs_norm)]
        joined = outs[0]
        for out in outs[1:]:
            joined = joined * out
        return joined

    def trunk_output(self, coords_norm: np.ndarray) -> Tensor:
        """Trunk slab for normalized coordinates, shape (n, h * c)."""
        coords_norm = np.asarray(coords_norm, dtype=np.float64)
        if coords_norm.ndim != 2 or coords_norm.shape[1] != self.spec.query_dim:
            raise InputError(
                f"queries must be (n, {self.spec.query_dim}), got "
                f"{coords_norm.shape}"
            )
        return self.trunk(Tensor(coords_norm))

    def contract(self, branch: Tensor, trunk: Tensor) -> Tensor:
        """Dot product over the hidden dimension plus the per-field bias."""
        h, c = self.spec.hidden_dim, self.spec.n_output_fields
        n_queries = trunk.shape[0]
        slab = trunk.reshape(n_queries, h, c).transpose((1, 0, 2))
        slab = slab.reshape(h, n_queries * c)
        out = (branch @ slab).reshape(branch.shape[0], n_queries, c)
        return out + self.beta

    def forward_normalized(self, inputs_norm, coords_norm) -> Tensor:
        return self.contract(
            self.branch_output(inputs_norm), self.trunk_output(coords_norm)
        )

    # -- prediction (raw units) ----------------------------------------------

    def _warn_if_outside_domain(self, coords: np.ndarray):
        tol = 1e-9
        if np.any(coords < self.norm.coord_lo - tol) or np.any(
            coords > self.norm.coord_hi + tol
        ):
            warnings.warn(
                "query coordinates fall outside the training domain "
                "bounding box; predictions are extrapolations",
                stacklevel=3,
            )

    def predict(self, raw_inputs, queries, batch_size: int = 64) -> np.ndarray:
        """De-normalized predictions, shape (n_samples, n_queries, c)."""
        coords = queries.coordinates if isinstance(queries, QueryBatch) else queries
        coords = np.asarray(coords, dtype=np.float64)
        self._warn_if_outside_domain(coords)
        coords_norm = self.norm.normalize_coords(coords)

        arrays = [np.atleast_2d(np.asarray(u, dtype=np.float64)) for u in raw_inputs]
        n_samples = arrays[0].shape[0]
        inputs_norm = [
            self.norm.normalize_input(i, u) for i, u in enumerate(arrays)
        ]
        trunk = self.trunk_output(coords_norm)
        chunks = []
        for start in range(0, n_samples, batch_size):
            sel = slice(start, min(start + batch_size, n_samples))
            branch = self.branch_output([u[sel] for u in inputs_norm])
            chunks.append(self.contract(branch, trunk).data)
        out = np.concatenate(chunks, axis=0)
        return self.norm.denormalize_outputs(out)


def build_model(spec: ArchitectureSpec) -> OperatorModel:
    """Allocate and initialize all parameters for `spec`."""
    model = OperatorModel(spec)
    expected = count_parameters(spec)
    actual = model.store.total_count()
    if actual != expected:
        raise SpecError(
            f"parameter count mismatch: allocated {actual}, formula {expected}"
        )
    return model


def count_parameters(spec: ArchitectureSpec) -> int:
    """Closed-form trainable parameter count for `spec`."""
    validate_spec(spec)
    h, c = spec.hidden_dim, spec.n_output_fields
    total = Mlp.parameter_count([spec.query_dim, *spec.trunk_widths, h * c])
    total += c  # bias beta
    if spec.family == "deeponet":
        if spec.branch_mode == "single":
            total += Mlp.parameter_count(
                [sum(spec.sensor_counts), *spec.branch_widths, h]
            )
        else:
            for m in spec.sensor_counts:
                total += Mlp.parameter_count([m, *spec.branch_widths, h])
    else:
        if spec.branch_mode == "single":
            total += GruEncoderDecoder.parameter_count(
                spec.n_inputs, spec.gru_hidden, h
            )
        else:
            total += spec.n_inputs * GruEncoderDecoder.parameter_count(
                1, spec.gru_hidden, h
            )
    return total


def _forward_raw(model: OperatorModel, raw_inputs, queries) -> np.ndarray:
    single = np.asarray(raw_inputs[0]).ndim == 1
    out = model.predict(raw_inputs, queries)
    return out[0] if single else out


def forward_deeponet(model: OperatorModel, input_functions, queries) -> np.ndarray:
    """Predictions of a feedforward-branch model at the query coordinates."""
    if model.spec.family != "deeponet":
        raise InputError(f"model family is {model.spec.family!r}, not 'deeponet'")
    return _forward_raw(model, input_functions, queries)


def forward_s_deeponet(model: OperatorModel, input_sequences, queries) -> np.ndarray:
    """Predictions of a recurrent-branch model at the query coordinates."""
    if model.spec.family != "s_deeponet":
        raise InputError(f"model family is {model.spec.family!r}, not 's_deeponet'")
    return _forward_raw(model, input_sequences, queries)


def clone_spec_with_seed(spec: ArchitectureSpec, seed: int) -> ArchitectureSpec:
    return replace(spec, seed=seed)
