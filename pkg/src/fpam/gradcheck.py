"""Central finite-difference gradient verification for pure subgraphs."""
from __future__ import annotations

import numpy as np

from .errors import NumericError
from .tensor import Tensor


def grad_check(fn, wrt, eps: float = 1e-5) -> float:
    """Compare analytic gradients of ``fn()`` against central differences.

    ``fn`` must rebuild the forward pass from scratch on every call and return
    a scalar Tensor; ``wrt`` lists the tensors to probe. Returns the worst
    per-element relative error |analytic - numeric| / (max(|a|, |n|) + 1e-8).
    """
    if isinstance(wrt, Tensor):
        wrt = [wrt]
    for p in wrt:
        p.requires_grad = True
        p.grad = None

    out = fn()
    if not np.isfinite(out.data).all():
        raise NumericError("non-finite loss in grad_check forward pass")
    out.backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in wrt]

    worst = 0.0
    for p, a in zip(wrt, analytic):
        flat = p.data.reshape(-1)
        aflat = a.reshape(-1)
        for i in range(flat.size):
            saved = flat[i]
            flat[i] = saved + eps
            f_plus = fn().item()
            flat[i] = saved - eps
            f_minus = fn().item()
            flat[i] = saved
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                raise NumericError(f"non-finite probe value at element {i}")
            numeric = (f_plus - f_minus) / (2 * eps)
            denom = max(abs(aflat[i]), abs(numeric)) + 1e-8
            worst = max(worst, abs(aflat[i] - numeric) / denom)
    return worst
