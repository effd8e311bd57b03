"""Central finite-difference oracle for hand-written backward passes."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from tfw.core.params import ParamStore


def rel_error(a, n):
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)


@dataclass
class GradCheckReport:
    max_rel_error: dict[str, float] = field(default_factory=dict)
    # name -> (flat index, analytic value, numeric value) at the worst coordinate
    worst: dict[str, tuple[int, float, float]] = field(default_factory=dict)

    @property
    def overall(self) -> float:
        return max(self.max_rel_error.values(), default=0.0)

    def passed(self, tol: float = 1e-4) -> bool:
        return self.overall < tol

    def __str__(self):
        lines = [f"{'max rel err':>12}  name"]
        for name, err in self.max_rel_error.items():
            idx, a, n = self.worst[name]
            lines.append(f"{err:12.3e}  {name} [worst @ {idx}: analytic {a:.6g}, numeric {n:.6g}]")
        return "\n".join(lines)


def numeric_grad(f: Callable[[], float], x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central differences of scalar ``f`` w.r.t. every coordinate of ``x`` (modified in place, restored)."""
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = f()
        flat[i] = orig - eps
        fm = f()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * eps)
    return g


def grad_check(forward: Callable[[], np.ndarray], backward: Callable[[np.ndarray], dict],
               inputs: dict[str, np.ndarray], store: ParamStore | None = None,
               eps: float = 1e-5, seed: int = 0,
               reset: Callable[[], None] | None = None) -> GradCheckReport:
    """Compare analytic gradients against central finite differences.

    ``forward()`` reads ``inputs`` and ``store`` in place and returns an array;
    the checked scalar is ``sum(forward() * G)`` for a fixed random ``G``.
    ``backward(G)`` must return input gradients keyed like ``inputs`` and
    accumulate parameter gradients into ``store``.
    """
    rng = np.random.default_rng(seed)
    out = np.asarray(forward())
    G = rng.standard_normal(out.shape)
    if store is not None:
        store.zero_grad()
    in_grads = backward(G)
    if reset:
        reset()

    def scalar():
        v = float(np.sum(np.asarray(forward()) * G))
        if reset:
            reset()
        return v

    targets = [(f"input:{k}", inputs[k], in_grads[k]) for k in inputs if k in in_grads]
    if store is not None:
        targets += [(p.name, p.value, p.grad.copy()) for p in store]

    report = GradCheckReport()
    for name, arr, analytic in targets:
        numeric = numeric_grad(scalar, arr, eps)
        err = rel_error(np.asarray(analytic), numeric)
        i = int(np.argmax(err))
        report.max_rel_error[name] = float(err.reshape(-1)[i])
        report.worst[name] = (i, float(np.asarray(analytic).reshape(-1)[i]), float(numeric.reshape(-1)[i]))
    return report
