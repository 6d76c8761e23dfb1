"""Central finite-difference checks against the reverse-mode gradients."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .autodiff import no_grad
from .encoder import ParamStore


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-5) -> np.ndarray:
    """|a - n| / max(|a|, |n|, floor) elementwise."""
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def numeric_grad(f: Callable[[], float], x: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """d f / d x by central differences, perturbing ``x`` in place."""
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        hi = f()
        flat[i] = orig - step
        lo = f()
        flat[i] = orig
        gflat[i] = (hi - lo) / (2 * step)
    return g


def check_params(
    loss_fn: Callable[[ParamStore], object], params: ParamStore, step: float = 1e-5, floor: float = 1e-5
) -> dict[str, float]:
    """Max relative error per parameter tensor.

    ``loss_fn(params)`` must return a scalar :class:`~ntssl.autodiff.Tensor`.
    """
    params.zero_grad()
    loss_fn(params).backward()
    analytic = {k: params.grad(k).copy() for k in params}

    def value() -> float:
        with no_grad():
            return loss_fn(params).item()

    errors = {}
    for name, t in params.items():
        numeric = numeric_grad(value, t.data, step)
        errors[name] = float(relative_error(analytic[name], numeric, floor).max())
    return errors
