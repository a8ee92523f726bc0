from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .layers import Parameter


@dataclass
class GradCheckReport:
    """Max relative error per parameter.

    The error for a parameter is max|analytic - numeric| divided by the
    larger of the two gradients' max-norms, so a tensor whose gradient is
    tiny everywhere is still judged relative to its own scale.
    """

    errors: dict[str, float] = field(default_factory=dict)
    checked: dict[str, int] = field(default_factory=dict)

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    def worst(self) -> tuple[str, float]:
        name = max(self.errors, key=self.errors.get)
        return name, self.errors[name]

    def ok(self, tolerance: float) -> bool:
        return self.max_error < tolerance

    def format(self) -> str:
        width = max((len(n) for n in self.errors), default=4)
        return "\n".join(f"{name:<{width}}  {err:.3e}  ({self.checked[name]} entries)"
                         for name, err in self.errors.items())


def grad_check(loss_fn: Callable[[], float], params: Sequence[Parameter], step: float = 1e-5,
               max_entries: int | None = None, rng: np.random.Generator | None = None,
               value_fn: Callable[[], float] | None = None) -> GradCheckReport:
    """Compare analytic gradients against central finite differences.

    ``loss_fn`` must run forward and backward deterministically, leaving
    gradients in ``Parameter.grad``, and return the scalar loss. Gradients are
    zeroed before each call. With ``max_entries`` only that many randomly
    chosen entries of each parameter are perturbed. ``value_fn``, if given,
    is a forward-only equivalent of ``loss_fn`` used for the perturbed
    evaluations.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    for p in params:
        p.zero_grad()
    loss_fn()
    analytic = {p.name: p.grad.copy() for p in params}

    evaluate = value_fn if value_fn is not None else loss_fn
    report = GradCheckReport()
    for p in params:
        flat = p.value.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = rng.choice(flat.size, size=max_entries, replace=False)
        a = analytic[p.name].reshape(-1)[idx]
        n = np.empty(len(idx))
        for k, i in enumerate(idx):
            orig = flat[i]
            flat[i] = orig + step
            plus = _eval(evaluate, params)
            flat[i] = orig - step
            minus = _eval(evaluate, params)
            flat[i] = orig
            n[k] = (plus - minus) / (2.0 * step)
        scale = max(np.abs(a).max(initial=0.0), np.abs(n).max(initial=0.0))
        err = float(np.abs(a - n).max(initial=0.0) / scale) if scale > 0 else 0.0
        report.errors[p.name] = err
        report.checked[p.name] = len(idx)
    for p in params:
        p.grad[...] = analytic[p.name]
    return report


def _eval(fn, params):
    for p in params:
        p.zero_grad()
    return float(fn())
