"""Mini-batch training of operator models.

One epoch is one optimizer step on a random mini-batch of samples and a
random subset of query points (both drawn from the seeded stream), with the
mean-squared-error loss computed in normalized space.  The 80/20 train/test
split is recomputed from `split_seed` so evaluation can reproduce it
exactly; normalization statistics are fitted on the training split only.
"""

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from . import rng
from .autodiff import mse_loss
from .errors import TrainingError
from .networks import Normalization, OperatorModel
from .optim import AdamState, adam_step, inverse_time_lr

TRAIN_FRACTION = 0.8


@dataclass
class TrainConfig:
    epochs: int
    batch_size: int = 48
    learning_rate: float = 1e-3
    lr_decay: float = 0.0  # inverse-time decay constant; 0 disables
    queries_per_step: int = 1024
    seed: int = 0
    split_seed: int = 0
    log_every: int = 200
    checkpoint_path: Optional[str] = None

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainingData:
    """Arrays prepared for training: inputs, flattened targets, coordinates."""

    branch_inputs: list  # one (N, sensors) array per input function
    targets: np.ndarray  # (N, n_queries, n_fields)
    coords: np.ndarray  # (n_queries, query_dim)

    @property
    def n_samples(self) -> int:
        return self.targets.shape[0]


def split_indices(n_samples: int, split_seed: int, train_fraction=TRAIN_FRACTION):
    """Deterministic disjoint train/test index sets covering all samples."""
    perm = rng.stream(split_seed).permutation(n_samples)
    n_train = int(round(train_fraction * n_samples))
    n_train = min(max(n_train, 1), n_samples - 1) if n_samples > 1 else n_samples
    return perm[:n_train], perm[n_train:]


def fit_normalization(model: OperatorModel, data: TrainingData, train_idx) -> None:
    """Fit per-field affine statistics on the training split only."""
    spec = model.spec
    input_mean = np.zeros(spec.n_inputs)
    input_scale = np.ones(spec.n_inputs)
    for i, u in enumerate(data.branch_inputs):
        sub = u[train_idx]
        input_mean[i] = sub.mean()
        std = sub.std()
        input_scale[i] = std if std > 0 else 1.0
    targets = data.targets[train_idx]
    output_mean = targets.mean(axis=(0, 1))
    output_scale = targets.std(axis=(0, 1))
    output_scale = np.where(output_scale > 0, output_scale, 1.0)
    norm = Normalization(
        input_mean=input_mean,
        input_scale=input_scale,
        output_mean=output_mean,
        output_scale=output_scale,
        coord_lo=data.coords.min(axis=0),
        coord_hi=data.coords.max(axis=0),
    )
    norm.validate()
    model.norm = norm


def train(model: OperatorModel, data: TrainingData, config: TrainConfig,
          benchmark: Optional[str] = None):
    """Train `model` in place; returns (model, loss_history).

    The loss history holds (epoch, loss) pairs at every `log_every` epochs
    plus the final epoch.  A checkpoint with full provenance is written when
    `config.checkpoint_path` is set.
    """
    train_idx, _ = split_indices(data.n_samples, config.split_seed)
    fit_normalization(model, data, train_idx)
    if benchmark is not None:
        model.benchmark = benchmark

    inputs_norm = [
        model.norm.normalize_input(i, np.asarray(u, dtype=np.float64))
        for i, u in enumerate(data.branch_inputs)
    ]
    targets_norm = model.norm.normalize_outputs(
        np.asarray(data.targets, dtype=np.float64)
    )
    coords_norm = model.norm.normalize_coords(data.coords)
    n_queries = coords_norm.shape[0]

    stream = rng.stream(config.seed)
    state = AdamState(learning_rate=config.learning_rate)
    history = []
    batch_size = min(config.batch_size, len(train_idx))
    queries_per_step = min(config.queries_per_step, n_queries)

    for epoch in range(config.epochs):
        batch = stream.choice(train_idx, size=batch_size, replace=False)
        qsel = (
            np.arange(n_queries)
            if queries_per_step == n_queries
            else stream.choice(n_queries, size=queries_per_step, replace=False)
        )
        pred = model.forward_normalized(
            [u[batch] for u in inputs_norm], coords_norm[qsel]
        )
        loss = mse_loss(pred, targets_norm[batch][:, qsel, :])
        value = float(loss.data)
        if not np.isfinite(value):
            raise TrainingError(f"non-finite loss at epoch {epoch}")
        if epoch % config.log_every == 0 or epoch == config.epochs - 1:
            history.append((epoch, value))
        model.store.zero_grad()
        loss.backward()
        adam_step(
            model.store,
            model.store.gradients(),
            state,
            lr=inverse_time_lr(config.learning_rate, config.lr_decay, state.step),
        )

    if config.checkpoint_path is not None:
        from .checkpoint import save_checkpoint

        save_checkpoint(
            model,
            config.checkpoint_path,
            benchmark=model.benchmark,
            train_config=config.to_dict(),
        )
    return model, history
