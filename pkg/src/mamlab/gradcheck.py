"""Central-difference gradient verification.

This is the oracle the whole package leans on: analytic gradients from the
tape are compared against central finite differences, coordinate by
coordinate, and the worst relative error is returned.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import ContractError, ParameterError
from .tensor import GradTape, Tensor, backward, no_grad


def check_gradient(fn: Callable[[Tensor], Tensor], point: Tensor,
                   epsilon: float = 1e-5) -> float:
    """Max over coordinates of |analytic - central difference| / max(1, |cd|).

    ``fn`` must map a tensor to a scalar tensor and be a pure function of its
    argument (any other tensors it closes over are held fixed).
    """
    if epsilon <= 0:
        raise ParameterError(f"epsilon must be positive, got {epsilon}")
    base = np.array(point.data, dtype=np.float64)

    with GradTape():
        x = Tensor(base.copy(), requires_grad=True)
        out = fn(x)
        if not isinstance(out, Tensor) or out.ndim != 0:
            raise ContractError("check_gradient needs fn to return a scalar tensor")
        backward(out)
        analytic = np.zeros_like(base) if x.grad is None else x.grad.copy()

    flat = base.reshape(-1)
    worst = 0.0
    with no_grad():
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + epsilon
            fplus = fn(Tensor(base)).item()
            flat[i] = orig - epsilon
            fminus = fn(Tensor(base)).item()
            flat[i] = orig
            numeric = (fplus - fminus) / (2.0 * epsilon)
            err = abs(analytic.reshape(-1)[i] - numeric) / max(1.0, abs(numeric))
            if err > worst:
                worst = err
    return worst
