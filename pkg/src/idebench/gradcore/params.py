"""Named parameter collections, Adam, and the JSON checkpoint format."""

from __future__ import annotations

import json
import os
from collections import OrderedDict
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import NumericalError
from .rng import Rng, uniform_init
from .tensor import Tensor


class ParamSet:
    """Ordered, uniquely named trainable tensors plus optimizer state."""

    def __init__(self):
        self._params: "OrderedDict[str, Tensor]" = OrderedDict()
        self.step = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}

    def add(self, name: str, value) -> Tensor:
        if name in self._params:
            raise KeyError(f"duplicate parameter name {name!r}")
        t = Tensor(np.array(value, dtype=np.float64), requires_grad=True, name=name)
        self._params[name] = t
        return t

    def add_uniform(self, name: str, shape, rng: Rng, scale: float = 0.1) -> Tensor:
        return self.add(name, uniform_init(rng, shape, scale))

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def items(self):
        return self._params.items()

    def values(self):
        return self._params.values()

    def zero_grad(self) -> None:
        for p in self._params.values():
            p.zero_grad()

    def num_values(self) -> int:
        return int(sum(p.data.size for p in self._params.values()))

    def copy_values(self) -> dict[str, np.ndarray]:
        return {k: p.data.copy() for k, p in self._params.items()}

    def load_values(self, values: dict[str, np.ndarray]) -> None:
        for k, p in self._params.items():
            arr = np.asarray(values[k], dtype=np.float64)
            if arr.shape != p.data.shape:
                raise ValueError(f"shape mismatch for {k}: {arr.shape} vs {p.data.shape}")
            p.data = arr.copy()
            p.zero_grad()


def adam_step(params: ParamSet, lr: float = 1e-3, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> ParamSet:
    """Apply one bias-corrected Adam update in place and bump ``params.step``."""
    for name, p in params.items():
        if not np.all(np.isfinite(p.grad)):
            raise NumericalError(f"non-finite gradient in {name!r} at step {params.step}")
    params.step += 1
    t = params.step
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for name, p in params.items():
        m = params._m.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            params._v[name] = np.zeros_like(p.data)
        v = params._v[name]
        m = beta1 * m + (1.0 - beta1) * p.grad
        v = beta2 * v + (1.0 - beta2) * p.grad * p.grad
        params._m[name], params._v[name] = m, v
        p.data = p.data - lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return params


def check_finite_loss(value: float, step: int) -> None:
    if not np.isfinite(value):
        raise NumericalError(f"loss became {value} at step {step}")


# -- checkpoint format --------------------------------------------------------

def _fmt(x: float) -> str:
    s = format(float(x), ".17g")
    # JSON would read "-0" back as the integer 0 and lose the sign
    return s if any(c in s for c in ".en") else s + ".0"


def dumps_values(values: dict[str, np.ndarray], extra: dict | None = None) -> str:
    """Serialise parameters as ``{name: {shape, data}}`` with 17 significant digits.

    Extra top-level metadata (vocab manifests, architecture) goes under
    ``"meta"`` and is encoded with the standard JSON encoder.
    """
    parts = []
    for name, arr in values.items():
        arr = np.asarray(arr, dtype=np.float64)
        shape = ", ".join(str(int(s)) for s in arr.shape)
        data = ", ".join(_fmt(x) for x in arr.ravel())
        parts.append(f'{json.dumps(name)}: {{"shape": [{shape}], "data": [{data}]}}')
    body = ",\n  ".join(parts)
    out = "{\n  " + body
    if extra is not None:
        out += (",\n  " if parts else "") + '"meta": ' + json.dumps(extra, sort_keys=True)
    return out + "\n}\n"


def loads_values(text: str) -> tuple[dict[str, np.ndarray], dict | None]:
    doc = json.loads(text)
    meta = doc.pop("meta", None)
    values = {}
    for name, entry in doc.items():
        shape = tuple(entry["shape"])
        values[name] = np.array(entry["data"], dtype=np.float64).reshape(shape)
    return values, meta


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def save_checkpoint(params: ParamSet, path, meta: dict | None = None) -> None:
    atomic_write_text(path, dumps_values(params.copy_values(), meta))


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict | None]:
    return loads_values(Path(path).read_text())
