"""Model checkpoint persistence.

A checkpoint is a JSON manifest (`<prefix>.json`) plus a little-endian flat
float64 blob (`<prefix>.bin`).  The manifest lists parameter names, shapes
and blob offsets, and carries the architecture descriptor, normalization
statistics, the init seed and a hash of the training configuration, so
`load_checkpoint` can rebuild the exact model.
"""

import hashlib
import json
from pathlib import Path

import numpy as np

from .errors import HarnessError
from .networks import ArchitectureSpec, Normalization, OperatorModel, build_model

FORMAT_VERSION = 1


def _canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(config: dict) -> str:
    return hashlib.sha256(_canonical_json(config).encode()).hexdigest()


def save_checkpoint(model: OperatorModel, path_prefix, benchmark=None,
                    train_config=None, split_seed=None) -> Path:
    """Write `<prefix>.json` and `<prefix>.bin`; returns the manifest path."""
    prefix = Path(path_prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)

    entries = []
    offset = 0
    for name, tensor in model.store.items():
        entries.append(
            {"name": name, "shape": list(tensor.data.shape), "offset": offset}
        )
        offset += tensor.data.size
    blob = model.store.flat_data().astype("<f8").tobytes()

    manifest = {
        "format_version": FORMAT_VERSION,
        "architecture": model.spec.to_dict(),
        "normalization": model.norm.to_dict(),
        "seed": model.spec.seed,
        "benchmark": benchmark if benchmark is not None else model.benchmark,
        "train_config": train_config,
        "train_config_hash": config_hash(train_config) if train_config else None,
        "split_seed": split_seed,
        "params": entries,
        "n_parameters": offset,
        "blob_sha256": hashlib.sha256(blob).hexdigest(),
    }

    bin_path = prefix.with_suffix(".bin")
    json_path = prefix.with_suffix(".json")
    bin_path.write_bytes(blob)
    json_path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return json_path


def load_checkpoint(path_prefix):
    """Rebuild the model from a checkpoint; returns (model, manifest)."""
    prefix = Path(path_prefix)
    json_path = prefix.with_suffix(".json")
    bin_path = prefix.with_suffix(".bin")
    if not json_path.exists() or not bin_path.exists():
        raise HarnessError(f"checkpoint files missing under prefix {prefix}")
    manifest = json.loads(json_path.read_text())
    if manifest.get("format_version") != FORMAT_VERSION:
        raise HarnessError(
            f"unsupported checkpoint format {manifest.get('format_version')!r}"
        )
    blob = bin_path.read_bytes()
    if hashlib.sha256(blob).hexdigest() != manifest["blob_sha256"]:
        raise HarnessError("checkpoint blob hash mismatch; file corrupted")

    spec = ArchitectureSpec.from_dict(manifest["architecture"])
    model = build_model(spec)
    flat = np.frombuffer(blob, dtype="<f8").astype(np.float64)
    if flat.size != manifest["n_parameters"]:
        raise HarnessError("checkpoint blob size disagrees with manifest")
    names = [e["name"] for e in manifest["params"]]
    if names != model.store.names():
        raise HarnessError("checkpoint parameter layout disagrees with architecture")
    model.store.load_flat(flat)
    model.norm = Normalization.from_dict(manifest["normalization"])
    model.benchmark = manifest.get("benchmark")
    return model, manifest
