"""Central finite-difference gradient checking used across the test suite."""

import numpy as np


def finite_difference_check(tensors, loss_fn, h=1e-6):
    """Worst relative error between analytic and central-FD gradients.

    `tensors` are the parameter leaves to perturb; `loss_fn` rebuilds the
    scalar loss from scratch on every call.  The relative error uses
    max(1, |analytic|, |fd|) as the scale so near-zero gradients are
    compared absolutely.
    """
    loss = loss_fn()
    for t in tensors:
        t.grad = None
    loss.backward()
    worst = 0.0
    for t in tensors:
        grad = t.grad if t.grad is not None else np.zeros_like(t.data)
        flat = t.data.ravel()
        gflat = grad.ravel()
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + h
            plus = float(loss_fn().data)
            flat[i] = original - h
            minus = float(loss_fn().data)
            flat[i] = original
            fd = (plus - minus) / (2.0 * h)
            err = abs(gflat[i] - fd) / max(1.0, abs(gflat[i]), abs(fd))
            worst = max(worst, err)
    return worst
