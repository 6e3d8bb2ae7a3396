"""Named parameter store and the SGD-with-momentum update."""
from __future__ import annotations

import numpy as np

from .errors import ContractError
from .tensor import Tensor


class ParamStore:
    """Ordered name -> parameter map with per-parameter momentum buffers.

    Momentum buffers are created zero-initialized on the first optimizer step
    and always match their parameter's dims.
    """

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._momentum: dict[str, np.ndarray] = {}

    def add(self, name: str, param: Tensor) -> Tensor:
        if name in self._params:
            raise ContractError(f"duplicate parameter name {name!r}")
        param.requires_grad = True
        self._params[name] = param
        return param

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def items(self):
        return self._params.items()

    def momentum_of(self, name: str) -> np.ndarray | None:
        return self._momentum.get(name)

    def param_count(self) -> int:
        return sum(p.size for p in self._params.values())

    def zero_grad(self) -> None:
        for p in self._params.values():
            p.grad = None


def sgd_momentum_step(store: ParamStore, lr: float, momentum: float) -> None:
    """Classic heavy-ball update: v <- momentum*v + g; p <- p - lr*v."""
    for name, p in store.items():
        if p.grad is None:
            raise ContractError(f"parameter {name!r} has no gradient; run backward first")
        v = store._momentum.get(name)
        if v is None:
            v = np.zeros_like(p.data)
        v = momentum * v + p.grad
        store._momentum[name] = v
        p.data = p.data - lr * v
