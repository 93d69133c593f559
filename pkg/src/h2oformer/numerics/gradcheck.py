"""Central finite-difference verification of tape gradients."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .tensor import Parameter, Tape, Tensor, no_grad


@dataclass
class ParamCheck:
    name: str
    shape: tuple[int, ...]
    checked: int
    worst_error: float
    worst_index: tuple[int, ...]
    analytic: float
    numeric: float


@dataclass
class GradcheckReport:
    tolerance: float
    epsilon: float
    entries: list[ParamCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(e.worst_error <= self.tolerance for e in self.entries)

    @property
    def worst(self) -> ParamCheck | None:
        return max(self.entries, key=lambda e: e.worst_error, default=None)

    def failures(self) -> list[ParamCheck]:
        return [e for e in self.entries if e.worst_error > self.tolerance]

    def format_table(self) -> str:
        lines = [f"{'parameter':<44} {'shape':<16} {'n':>4} {'worst rel err':>14}  status"]
        for e in self.entries:
            status = "ok" if e.worst_error <= self.tolerance else "FAIL"
            lines.append(f"{e.name:<44} {str(e.shape):<16} {e.checked:>4} {e.worst_error:>14.3e}  {status}")
        return "\n".join(lines)


def relative_error(g_ad: float, g_fd: float) -> float:
    return abs(g_ad - g_fd) / max(1.0, abs(g_ad), abs(g_fd))


def finite_diff_check(
    loss_fn: Callable[[], Tensor],
    params: Sequence[Parameter],
    epsilon: float = 1e-5,
    tolerance: float = 1e-4,
    samples: int = 32,
    seed: int = 0,
) -> GradcheckReport:
    """Compare tape gradients of ``loss_fn()`` with central differences.

    ``loss_fn`` must be deterministic: every call with unchanged parameters
    returns the same scalar.  Up to ``samples`` entries per parameter are
    probed (all of them for smaller tensors).
    """
    for p in params:
        if p.dtype != np.float64:
            raise TypeError(f"finite_diff_check needs float64 parameters; {p.name} is {p.dtype}")
        p.zero_grad()
    with Tape() as tape:
        loss = loss_fn()
    tape.backward(loss)
    analytic = {id(p): p.grad.copy() for p in params}

    rng = np.random.default_rng(seed)
    report = GradcheckReport(tolerance=tolerance, epsilon=epsilon)
    for p in params:
        flat = p.data.reshape(-1)
        n = flat.size
        picks = np.arange(n) if n <= samples else rng.choice(n, size=samples, replace=False)
        grad = analytic[id(p)].reshape(-1)
        worst = (-1.0, 0, 0.0, 0.0)
        for i in picks:
            orig = flat[i]
            with no_grad():
                flat[i] = orig + epsilon
                up = float(loss_fn().item())
                flat[i] = orig - epsilon
                down = float(loss_fn().item())
            flat[i] = orig
            numeric = (up - down) / (2 * epsilon)
            err = relative_error(float(grad[i]), numeric)
            if err > worst[0]:
                worst = (err, int(i), float(grad[i]), numeric)
        report.entries.append(ParamCheck(
            name=p.name or "<unnamed>",
            shape=p.shape,
            checked=len(picks),
            worst_error=worst[0],
            worst_index=tuple(int(j) for j in np.unravel_index(worst[1], p.shape)),
            analytic=worst[2],
            numeric=worst[3],
        ))
    return report
