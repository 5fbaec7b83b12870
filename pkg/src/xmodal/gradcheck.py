"""Finite-difference gradient verification.

`grad_check` compares the tape gradient of a scalar-valued function against
central differences, coordinate by coordinate.  Functions under test must be
deterministic (eval mode: no dropout draws).
"""

from __future__ import annotations

from typing import Callable, Optional

import numpy as np

from .errors import ContractError
from .rng import Rng
from .tensor import Tape, Tensor, backward


def grad_check(
    f: Callable[[Tensor], Tensor],
    x: Tensor,
    eps: float = 1e-5,
    max_coords: Optional[int] = None,
    rng: Optional[Rng] = None,
) -> float:
    """Max over checked coordinates of |analytic - central| / max(1, |central|).

    Checks every coordinate of `x` by default; `max_coords` samples a random
    subset (seeded via `rng`) for large parameter tensors.
    """
    if not 1e-7 <= eps <= 1e-3:
        raise ContractError(f"eps must be in [1e-7, 1e-3], got {eps}")
    x.zero_grad()
    with Tape() as tape:
        y = f(x)
    if y.data.size != 1:
        raise ContractError(f"grad_check requires a scalar-valued f, got shape {y.shape}")
    backward(y, tape)
    analytic = np.zeros_like(x.data) if x.grad is None else x.grad.copy()
    x.zero_grad()

    flat = x.data.reshape(-1)
    n = flat.size
    if max_coords is not None and max_coords < n:
        if rng is None:
            rng = Rng(0)
        coords = sorted({rng.integer(n) for _ in range(max_coords)})
    else:
        coords = range(n)

    a_flat = analytic.reshape(-1)
    worst = 0.0
    for i in coords:
        orig = flat[i]
        flat[i] = orig + eps
        hi = f(x).item()
        flat[i] = orig - eps
        lo = f(x).item()
        flat[i] = orig
        numeric = (hi - lo) / (2.0 * eps)
        err = abs(a_flat[i] - numeric) / max(1.0, abs(numeric))
        worst = max(worst, err)
    return worst


def grad_check_params(
    f: Callable[[], Tensor],
    params,
    eps: float = 1e-5,
    max_coords_per_param: Optional[int] = None,
    rng: Optional[Rng] = None,
) -> float:
    """Run `grad_check` against each parameter of a zero-arg loss function."""
    worst = 0.0
    for p in params:
        err = grad_check(lambda _p: f(), p, eps=eps, max_coords=max_coords_per_param, rng=rng)
        worst = max(worst, err)
    return worst
