from typing import Dict, Iterator, List, Tuple

import numpy as np

from app.autograd.tensor import Tensor
from app.models.errors import ArchiveError, DimensionError


class Module:
    """
    Base class for parameter containers.

    Parameters are discovered by walking instance attributes in assignment
    order: Tensor attributes are parameters, Module attributes and lists of
    Modules are children. Frozen tensors (requires_grad False) are still part
    of the state dict.
    """

    def forward(self, *args, **kwargs) -> Tensor:
        raise NotImplementedError("Forward pass not implemented for this module")

    def __call__(self, *args, **kwargs) -> Tensor:
        return self.forward(*args, **kwargs)

    def children(self) -> Iterator[Tuple[str, "Module"]]:
        for name, value in vars(self).items():
            if isinstance(value, Module):
                yield name, value
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield f"{name}.{i}", item

    def named_parameters(self, prefix: str = "") -> List[Tuple[str, Tensor]]:
        named: List[Tuple[str, Tensor]] = []
        for name, value in vars(self).items():
            if isinstance(value, Tensor):
                named.append((f"{prefix}{name}", value))
        for name, child in self.children():
            named.extend(child.named_parameters(prefix=f"{prefix}{name}."))
        return named

    def parameters(self) -> List[Tensor]:
        return [p for _, p in self.named_parameters()]

    def trainable_parameters(self) -> List[Tensor]:
        return [p for p in self.parameters() if p.requires_grad]

    def freeze(self) -> "Module":
        for param in self.parameters():
            param.requires_grad = False
            param.grad = None
        return self

    def zero_grad(self) -> None:
        for param in self.parameters():
            param.zero_grad()

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: param.data.copy() for name, param in self.named_parameters()}

    def load_state_dict(self, arrays: Dict[str, np.ndarray], prefix: str = "") -> None:
        """
        Copy arrays into the matching parameters

        Args:
            arrays: Arrays keyed by parameter name
            prefix: Key prefix under which this module's parameters were stored

        Raises:
            ArchiveError: If a parameter has no stored array
            DimensionError: If a stored array has the wrong shape
        """
        for name, param in self.named_parameters():
            key = f"{prefix}{name}"
            if key not in arrays:
                raise ArchiveError(f"missing array '{key}'")
            value = np.asarray(arrays[key], dtype=np.float64)
            if value.shape != param.shape:
                raise DimensionError(f"array '{key}' has shape {value.shape}, expected {param.shape}")
            param.data = value.copy()

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.parameters()))
