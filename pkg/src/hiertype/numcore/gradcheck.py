"""Finite-difference oracle for tape gradients.

grad_check perturbs every parameter coordinate by +/-eps, recomputes the loss
through the caller-supplied closure, and compares the central difference to
the tape gradient. The closure must rebuild the graph from the parameters'
current data on every call, with no fresh randomness inside.
"""

import numpy as np


def grad_check(loss_fn, params, eps=1e-3):
    """Return the max relative error between tape and numeric gradients.

    Relative error uses a 1e-4 floor in the denominator so coordinates with
    true gradient zero compare absolutely instead of dividing roundoff by
    roundoff.
    """
    for p in params:
        p.grad = None
    loss = loss_fn()
    loss.backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy()
                for p in params]

    worst = 0.0
    for p, a in zip(params, analytic):
        flat = p.data.reshape(-1)
        aflat = a.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = float(loss_fn().data)
            flat[i] = orig - eps
            f_minus = float(loss_fn().data)
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * eps)
            denom = max(abs(aflat[i]), abs(numeric), 1e-4)
            worst = max(worst, abs(aflat[i] - numeric) / denom)
    return worst
