"""Named, ordered store of trainable tensors."""

from __future__ import annotations

import numpy as np

from ..autodiff import Tensor


class ParamStore:
    """Ordered map from hierarchical dot-path names to trainable tensors.

    Insertion order is the canonical parameter order: checkpoints and the
    optimizer both iterate it, so registration must be deterministic.
    """

    def __init__(self):
        self._entries: dict[str, Tensor] = {}

    def register(self, name: str, data: np.ndarray) -> Tensor:
        if name in self._entries:
            raise ValueError(f"parameter {name!r} registered twice")
        t = Tensor(np.asarray(data, dtype=np.float32), requires_grad=True)
        self._entries[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._entries[name]

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def names(self) -> list[str]:
        return list(self._entries)

    def items(self):
        return self._entries.items()

    def tensors(self):
        return self._entries.values()

    def num_values(self) -> int:
        return sum(t.size for t in self._entries.values())

    def zero_grads(self) -> None:
        for t in self._entries.values():
            t.grad = None

    def cast_(self, dtype) -> None:
        """In-place dtype change of every parameter (64-bit replay path)."""
        for t in self._entries.values():
            t.data = t.data.astype(dtype)
            t.grad = None

    def export_arrays(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self._entries.items()}

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        """Overwrite parameter values; names and shapes must match exactly."""
        if list(arrays) != self.names():
            raise KeyError(
                "parameter set mismatch: "
                f"expected {self.names()[:4]}..., got {list(arrays)[:4]}..."
            )
        for name, arr in arrays.items():
            t = self._entries[name]
            if arr.shape != t.data.shape:
                raise ValueError(
                    f"shape mismatch for {name}: {arr.shape} vs {t.data.shape}"
                )
            t.data = arr.astype(t.data.dtype, copy=True)
