"""Network building blocks: parameter store, affine stacks, GRU encoders.

The GRU follows the standard gating convention

    z = sigmoid(x Wz + h Uz + bz)
    r = sigmoid(x Wr + h Ur + br)
    c = tanh(x Wh + (r * h) Uh + bh)
    h' = (1 - z) * h + z * c

`gru_cell` composes it from autodiff primitives (differentiable through the
inputs, used for the decoder step).  `gru_encode` runs a whole constant input
sequence from a zero initial state with a hand-written fused
backward-through-time pass, which is what makes CPU training tractable; the
two paths are checked against each other in the test suite.
"""

import numpy as np

from .autodiff import Tensor, concat, sigmoid_array
from .errors import GraphError


class ParameterStore:
    """Named trainable tensors; insertion order is the canonical flat layout."""

    def __init__(self):
        self._params = {}

    def add(self, name: str, array) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter name {name!r}")
        t = Tensor(array, requires_grad=True)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self):
        return list(self._params)

    def items(self):
        return self._params.items()

    def tensors(self):
        return list(self._params.values())

    def total_count(self) -> int:
        return sum(t.data.size for t in self._params.values())

    def zero_grad(self):
        for t in self._params.values():
            t.grad = None

    def gradients(self) -> dict:
        return {name: t.grad for name, t in self._params.items()}

    def flat_data(self) -> np.ndarray:
        if not self._params:
            return np.zeros(0)
        return np.concatenate([t.data.ravel() for t in self._params.values()])

    def load_flat(self, flat: np.ndarray):
        flat = np.asarray(flat, dtype=np.float64)
        if flat.size != self.total_count():
            raise ValueError(
                f"flat vector has {flat.size} values, store holds "
                f"{self.total_count()}"
            )
        offset = 0
        for t in self._params.values():
            n = t.data.size
            t.data = flat[offset : offset + n].reshape(t.data.shape).copy()
            offset += n


def glorot_uniform(rng, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def recurrent_uniform(rng, rows: int, cols: int, hidden: int) -> np.ndarray:
    limit = 1.0 / np.sqrt(hidden)
    return rng.uniform(-limit, limit, size=(rows, cols))


def _activate(x: Tensor, kind: str) -> Tensor:
    if kind == "tanh":
        return x.tanh()
    if kind == "relu":
        return x.relu()
    raise ValueError(f"unknown activation {kind!r}")


class Mlp:
    """Affine stack with the configured activation on hidden layers."""

    def __init__(self, store: ParameterStore, prefix: str, dims, activation, rng):
        self.dims = list(dims)
        self.activation = activation
        self.weights = []
        self.biases = []
        for i in range(len(self.dims) - 1):
            w = store.add(
                f"{prefix}.w{i}", glorot_uniform(rng, self.dims[i], self.dims[i + 1])
            )
            b = store.add(f"{prefix}.b{i}", np.zeros(self.dims[i + 1]))
            self.weights.append(w)
            self.biases.append(b)

    def __call__(self, x) -> Tensor:
        out = x if isinstance(x, Tensor) else Tensor(x)
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out = out @ w + b
            if i != last:
                out = _activate(out, self.activation)
        return out

    @staticmethod
    def parameter_count(dims) -> int:
        return sum(dims[i] * dims[i + 1] + dims[i + 1] for i in range(len(dims) - 1))


_GRU_SLOTS = ("wz", "wr", "wh", "uz", "ur", "uh", "bz", "br", "bh")


def gru_cell(x, h_prev, params: dict) -> Tensor:
    """One GRU step built from autodiff primitives.

    `params` maps the names wz, wr, wh (input kernels), uz, ur, uh (recurrent
    kernels) and bz, br, bh (biases) to tensors.
    """
    x = x if isinstance(x, Tensor) else Tensor(x)
    h_prev = h_prev if isinstance(h_prev, Tensor) else Tensor(h_prev)
    z = (x @ params["wz"] + h_prev @ params["uz"] + params["bz"]).sigmoid()
    r = (x @ params["wr"] + h_prev @ params["ur"] + params["br"]).sigmoid()
    c = (x @ params["wh"] + (r * h_prev) @ params["uh"] + params["bh"]).tanh()
    return (1.0 - z) * h_prev + z * c


def gru_encode(x_seq: np.ndarray, params: dict) -> Tensor:
    """Final hidden state of a GRU run over a constant sequence (B, L, F).

    The input sequence is treated as data (not differentiated); gradients
    with respect to all nine parameter tensors come from a fused
    backward-through-time pass.
    """
    x_seq = np.asarray(x_seq, dtype=np.float64)
    if x_seq.ndim != 3:
        raise GraphError(f"gru_encode: expected (B, L, F) input, got {x_seq.shape}")
    tensors = [params[k] for k in _GRU_SLOTS]
    wz, wr, wh, uz, ur, uh, bz, br, bh = tensors
    n_batch, n_steps, n_feat = x_seq.shape
    hidden = uz.data.shape[0]
    if wz.data.shape[0] != n_feat:
        raise GraphError(
            f"gru_encode: sequence features {n_feat} vs kernel rows "
            f"{wz.data.shape[0]}"
        )

    w_all = np.concatenate([wz.data, wr.data, wh.data], axis=1)  # (F, 3H)
    u_zr = np.concatenate([uz.data, ur.data], axis=1)  # (H, 2H)
    b_zr = np.concatenate([bz.data, br.data])
    xw = (x_seq.reshape(n_batch * n_steps, n_feat) @ w_all).reshape(
        n_batch, n_steps, 3 * hidden
    )

    h = np.zeros((n_batch, hidden))
    hs_prev = np.empty((n_steps, n_batch, hidden))
    zs = np.empty_like(hs_prev)
    rs = np.empty_like(hs_prev)
    cs = np.empty_like(hs_prev)
    rhs = np.empty_like(hs_prev)
    for t in range(n_steps):
        zr = sigmoid_array(xw[:, t, : 2 * hidden] + h @ u_zr + b_zr)
        z, r = zr[:, :hidden], zr[:, hidden:]
        rh = r * h
        c = np.tanh(xw[:, t, 2 * hidden :] + rh @ uh.data + bh.data)
        hs_prev[t] = h
        zs[t], rs[t], cs[t], rhs[t] = z, r, c, rh
        h = (1.0 - z) * h + z * c

    uh_t = uh.data.T
    u_zr_t = u_zr.T

    def backward(grad_out):
        dh = grad_out.copy()
        d_pre = np.empty((n_steps, n_batch, 3 * hidden))
        for t in range(n_steps - 1, -1, -1):
            h_prev, z, r, c = hs_prev[t], zs[t], rs[t], cs[t]
            step_pre = d_pre[t]
            # d_pre_c = dh * z * (1 - c^2)
            np.multiply(dh, z, out=step_pre[:, 2 * hidden :])
            step_pre[:, 2 * hidden :] *= 1.0 - c * c
            d_rh = step_pre[:, 2 * hidden :] @ uh_t
            # d_pre_r = d_rh * h_prev * r * (1 - r)
            np.multiply(d_rh, h_prev, out=step_pre[:, hidden : 2 * hidden])
            step_pre[:, hidden : 2 * hidden] *= r * (1.0 - r)
            # d_pre_z = dh * (c - h_prev) * z * (1 - z)
            np.multiply(dh, c - h_prev, out=step_pre[:, :hidden])
            step_pre[:, :hidden] *= z * (1.0 - z)
            # dh for step t-1
            dh *= 1.0 - z
            dh += d_rh * r
            dh += step_pre[:, : 2 * hidden] @ u_zr_t

        flat_pre = d_pre.reshape(n_steps * n_batch, 3 * hidden)
        x_flat = np.ascontiguousarray(x_seq.transpose(1, 0, 2)).reshape(
            n_steps * n_batch, n_feat
        )
        dw_all = x_flat.T @ flat_pre  # (F, 3H)
        h_flat = hs_prev.reshape(n_steps * n_batch, hidden)
        du_zr = h_flat.T @ flat_pre[:, : 2 * hidden]  # (H, 2H)
        duh = rhs.reshape(n_steps * n_batch, hidden).T @ flat_pre[:, 2 * hidden :]
        db_all = flat_pre.sum(axis=0)
        return (
            dw_all[:, :hidden],
            dw_all[:, hidden : 2 * hidden],
            dw_all[:, 2 * hidden :],
            du_zr[:, :hidden],
            du_zr[:, hidden:],
            duh,
            db_all[:hidden],
            db_all[hidden : 2 * hidden],
            db_all[2 * hidden :],
        )

    return Tensor.from_op(h, tensors, backward)


class GruEncoderDecoder:
    """Sequence branch: GRU encoder, one decoder GRU step, affine head.

    The decoder step feeds the final encoder state back in as both input and
    previous state, then the head projects to the latent width.
    """

    def __init__(self, store, prefix, in_features, hidden, out_dim, rng):
        self.hidden = hidden
        self.in_features = in_features
        self.encoder = {}
        self.decoder = {}
        for tag, group, rows in (("enc", self.encoder, in_features),
                                 ("dec", self.decoder, hidden)):
            for gate in ("z", "r", "h"):
                group[f"w{gate}"] = store.add(
                    f"{prefix}.{tag}.w{gate}",
                    recurrent_uniform(rng, rows, hidden, hidden),
                )
            for gate in ("z", "r", "h"):
                group[f"u{gate}"] = store.add(
                    f"{prefix}.{tag}.u{gate}",
                    recurrent_uniform(rng, hidden, hidden, hidden),
                )
            for gate in ("z", "r", "h"):
                group[f"b{gate}"] = store.add(
                    f"{prefix}.{tag}.b{gate}", np.zeros(hidden)
                )
        self.head_w = store.add(
            f"{prefix}.head.w", glorot_uniform(rng, hidden, out_dim)
        )
        self.head_b = store.add(f"{prefix}.head.b", np.zeros(out_dim))

    def __call__(self, x_seq: np.ndarray) -> Tensor:
        encoded = gru_encode(x_seq, self.encoder)
        decoded = gru_cell(encoded, encoded, self.decoder)
        return decoded @ self.head_w + self.head_b

    @staticmethod
    def parameter_count(in_features, hidden, out_dim) -> int:
        enc = 3 * (in_features * hidden + hidden * hidden + hidden)
        dec = 3 * (hidden * hidden + hidden * hidden + hidden)
        head = hidden * out_dim + out_dim
        return enc + dec + head


def stack_feature_sequences(sequences) -> np.ndarray:
    """Stack per-input sequences (B, L) into a feature sequence (B, L, k)."""
    arrays = [np.asarray(s, dtype=np.float64) for s in sequences]
    return np.stack(arrays, axis=-1)


def concat_sensor_vectors(vectors) -> Tensor:
    """Concatenate per-input sensor batches (B, m_i) into one branch input."""
    return concat([Tensor(np.asarray(v, dtype=np.float64)) for v in vectors], axis=1)
