"""Parameter storage, binary serialization and a multiply-accumulate counter."""
from __future__ import annotations

import contextlib
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from tfw.errors import ConfigError, DimensionError

MAGIC = b"TFW1"
FORMAT_VERSION = 1


@dataclass
class Param:
    name: str
    value: np.ndarray
    grad: np.ndarray
    decay: bool = True  # L2 applies to weights only, not biases
    state: dict = field(default_factory=dict)

    @property
    def size(self) -> int:
        return int(self.value.size)


class ParamStore:
    """Named learnable tensors, each paired with a same-shape gradient slot."""

    def __init__(self, dtype=np.float64):
        self.dtype = np.dtype(dtype)
        self._params: dict[str, Param] = {}

    def add(self, name: str, value, decay: bool = True) -> Param:
        if name in self._params:
            raise ConfigError(f"duplicate parameter name {name!r}")
        value = np.array(value, dtype=self.dtype)
        p = Param(name, value, np.zeros_like(value), decay)
        self._params[name] = p
        return p

    def __getitem__(self, name: str) -> Param:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[Param]:
        return iter(self._params.values())

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def subset(self, prefix: str) -> "ParamStore":
        """A view sharing the Param objects whose names start with ``prefix``."""
        view = ParamStore(self.dtype)
        view._params = {n: p for n, p in self._params.items() if n.startswith(prefix)}
        return view

    def count(self) -> int:
        return sum(p.size for p in self._params.values())

    def zero_grad(self) -> None:
        for p in self._params.values():
            p.grad[...] = 0.0

    def reset_state(self) -> None:
        for p in self._params.values():
            p.state.clear()

    def snapshot(self) -> dict[str, np.ndarray]:
        return {n: p.value.copy() for n, p in self._params.items()}

    def load_values(self, values: dict[str, np.ndarray], strict: bool = True) -> None:
        """Copy values into matching parameters (shapes must agree)."""
        for name, v in values.items():
            if name not in self._params:
                if strict:
                    raise KeyError(f"unknown parameter {name!r}")
                continue
            p = self._params[name]
            if p.value.shape != tuple(v.shape):
                raise DimensionError(f"{name}: stored shape {tuple(v.shape)} != {p.value.shape}")
            p.value[...] = v

    def astype(self, dtype) -> None:
        self.dtype = np.dtype(dtype)
        for p in self._params.values():
            p.value = p.value.astype(self.dtype)
            p.grad = np.zeros_like(p.value)
            p.state.clear()


def save_params(store: ParamStore, path) -> None:
    """Write ``store`` as: magic, u32 version, then one record per parameter.

    Record layout (little endian): u32 name length, UTF-8 name, u32 rank,
    rank x u64 extents, float32 data in row-major order.
    """
    chunks = [MAGIC, struct.pack("<I", FORMAT_VERSION)]
    for p in store:
        name = p.name.encode("utf-8")
        chunks.append(struct.pack("<I", len(name)))
        chunks.append(name)
        chunks.append(struct.pack("<I", p.value.ndim))
        chunks.append(struct.pack(f"<{p.value.ndim}Q", *p.value.shape))
        chunks.append(np.ascontiguousarray(p.value, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def read_params(path) -> dict[str, np.ndarray]:
    buf = Path(path).read_bytes()
    if buf[:4] != MAGIC:
        raise ValueError(f"{path}: bad magic {buf[:4]!r}")
    (version,) = struct.unpack_from("<I", buf, 4)
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    pos = 8
    out: dict[str, np.ndarray] = {}
    while pos < len(buf):
        (n,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        name = buf[pos:pos + n].decode("utf-8")
        pos += n
        (rank,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        shape = struct.unpack_from(f"<{rank}Q", buf, pos)
        pos += 8 * rank
        count = int(np.prod(shape, dtype=np.int64))
        data = np.frombuffer(buf, dtype="<f4", count=count, offset=pos)
        pos += 4 * count
        out[name] = data.reshape(shape).copy()
    return out


def load_params(store: ParamStore, path, strict: bool = True) -> None:
    store.load_values(read_params(path), strict=strict)


class MacCounter:
    """Tallies multiply-accumulate operations performed by layer forwards."""

    def __init__(self):
        self.total = 0
        self.by_op: dict[str, int] = {}

    def add(self, op: str, n: int) -> None:
        self.total += int(n)
        self.by_op[op] = self.by_op.get(op, 0) + int(n)


_counters: list[MacCounter] = []


def record_macs(op: str, n: int) -> None:
    for c in _counters:
        c.add(op, n)


@contextlib.contextmanager
def count_macs():
    counter = MacCounter()
    _counters.append(counter)
    try:
        yield counter
    finally:
        _counters.remove(counter)
