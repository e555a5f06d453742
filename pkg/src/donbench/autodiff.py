"""Reverse-mode automatic differentiation over dense float64 numpy arrays.

A `Tensor` wraps a contiguous row-major array and remembers how it was
produced; `backward()` walks the graph in reverse topological order and
accumulates exact gradients into every tensor with `requires_grad`.  The
op set is the minimum needed by the operator networks: elementwise
arithmetic with broadcasting, 2-D matmul, tanh/sigmoid/relu, square,
reductions, reshape/transpose/concat.  Ops with custom fused backwards
(e.g. the GRU sequence encoder) attach their own closure via `from_op`.
"""

import numpy as np

from .errors import GraphError


def _as_array(value) -> np.ndarray:
    # note: order="C" keeps 0-d arrays 0-d (ascontiguousarray would not)
    return np.asarray(value, dtype=np.float64, order="C")


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn")

    def __init__(self, data, requires_grad: bool = False):
        self.data = _as_array(data)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward_fn = None

    @classmethod
    def from_op(cls, data, parents, backward_fn):
        out = cls(data, requires_grad=any(p.requires_grad for p in parents))
        if out.requires_grad:
            out._parents = tuple(parents)
            out._backward_fn = backward_fn
        return out

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # -- graph traversal ---------------------------------------------------

    def backward(self, seed=None):
        """Accumulate d(self)/d(leaf) into .grad over the whole graph."""
        if seed is None:
            if self.data.size != 1:
                raise GraphError("backward() without a seed requires a scalar output")
            seed = np.ones_like(self.data)
        order = self._topological_order()
        grads = {id(self): _as_array(seed)}
        for node in reversed(order):
            grad = grads.pop(id(node), None)
            if grad is None:
                continue
            if node.requires_grad and node._backward_fn is None:
                node.grad = grad if node.grad is None else node.grad + grad
            if node._backward_fn is None:
                continue
            parent_grads = node._backward_fn(grad)
            for parent, pgrad in zip(node._parents, parent_grads):
                if pgrad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pgrad
                else:
                    grads[key] = pgrad

    def _topological_order(self):
        order, visited, stack = [], set(), [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))
        return order

    def zero_grad(self):
        self.grad = None

    # -- elementwise arithmetic --------------------------------------------

    def _coerce(self, other) -> "Tensor":
        return other if isinstance(other, Tensor) else Tensor(other)

    def __add__(self, other):
        other = self._coerce(other)
        try:
            data = self.data + other.data
        except ValueError as exc:
            raise GraphError(f"add: {exc}") from exc
        a_shape, b_shape = self.data.shape, other.data.shape
        return Tensor.from_op(
            data,
            (self, other),
            lambda g: (_unbroadcast(g, a_shape), _unbroadcast(g, b_shape)),
        )

    __radd__ = __add__

    def __neg__(self):
        return Tensor.from_op(-self.data, (self,), lambda g: (-g,))

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) + (-self)

    def __mul__(self, other):
        other = self._coerce(other)
        try:
            data = self.data * other.data
        except ValueError as exc:
            raise GraphError(f"mul: {exc}") from exc
        a, b = self, other
        return Tensor.from_op(
            data,
            (a, b),
            lambda g: (
                _unbroadcast(g * b.data, a.data.shape),
                _unbroadcast(g * a.data, b.data.shape),
            ),
        )

    __rmul__ = __mul__

    def __matmul__(self, other):
        other = self._coerce(other)
        a, b = self, other
        if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
            raise GraphError(
                f"matmul: incompatible shapes {a.data.shape} @ {b.data.shape}"
            )
        return Tensor.from_op(
            a.data @ b.data,
            (a, b),
            lambda g: (g @ b.data.T, a.data.T @ g),
        )

    # -- nonlinearities ----------------------------------------------------

    def tanh(self):
        out = np.tanh(self.data)
        return Tensor.from_op(out, (self,), lambda g: (g * (1.0 - out * out),))

    def sigmoid(self):
        out = sigmoid_array(self.data)
        return Tensor.from_op(out, (self,), lambda g: (g * out * (1.0 - out),))

    def relu(self):
        mask = self.data > 0
        return Tensor.from_op(
            np.where(mask, self.data, 0.0), (self,), lambda g: (g * mask,)
        )

    def square(self):
        return Tensor.from_op(
            self.data * self.data, (self,), lambda g: (2.0 * g * self.data,)
        )

    # -- reductions and shape ops -------------------------------------------

    def sum(self):
        shape = self.data.shape
        return Tensor.from_op(
            np.array(self.data.sum()), (self,), lambda g: (np.broadcast_to(g, shape),)
        )

    def mean(self):
        shape = self.data.shape
        n = self.data.size
        return Tensor.from_op(
            np.array(self.data.mean()),
            (self,),
            lambda g: (np.broadcast_to(g / n, shape),),
        )

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old = self.data.shape
        try:
            data = self.data.reshape(shape)
        except ValueError as exc:
            raise GraphError(f"reshape: {exc}") from exc
        return Tensor.from_op(data, (self,), lambda g: (g.reshape(old),))

    def transpose(self, axes):
        axes = tuple(axes)
        inverse = tuple(np.argsort(axes))
        return Tensor.from_op(
            np.ascontiguousarray(self.data.transpose(axes)),
            (self,),
            lambda g: (g.transpose(inverse),),
        )


def sigmoid_array(x: np.ndarray) -> np.ndarray:
    """Logistic function on a raw array.

    The plain formula is safe in float64: exp(-x) overflowing to inf for
    very negative x yields exactly 0.0, which is the correct limit.
    """
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-x))


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [t if isinstance(t, Tensor) else Tensor(t) for t in tensors]
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise GraphError(f"concat: {exc}") from exc
    sizes = [t.data.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def backward(g):
        return tuple(
            np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=axis)
            for i in range(len(sizes))
        )

    return Tensor.from_op(data, tensors, backward)


def mse_loss(prediction: Tensor, target) -> Tensor:
    """Mean over all elements of the squared prediction-target difference."""
    target = target if isinstance(target, Tensor) else Tensor(target)
    if prediction.data.shape != target.data.shape:
        raise GraphError(
            f"mse_loss: prediction {prediction.data.shape} vs "
            f"target {target.data.shape}"
        )
    return (prediction - target).square().mean()
