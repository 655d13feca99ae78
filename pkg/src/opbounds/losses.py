"""Lipschitz losses on R^m: squared, Huber, and multi-quantile pinball.

Vector losses are coordinate sums, which keeps the Lipschitz constant
computable (Euclidean norm, hence the sqrt(m) factor).  Kink conventions are
fixed: the pinball subgradient at zero residual is the lower branch tau - 1;
Huber has a continuous gradient and no kink.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError

_FAMILIES = ("squared", "huber", "pinball")

#: Marker for losses without a global Lipschitz constant.
UNBOUNDED = math.inf


@dataclass(frozen=True)
class LossSpec:
    family: str
    huber_delta: float = 1.0
    quantiles: tuple[float, ...] = ()

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise InputError(f"unknown loss family {self.family!r}")
        if self.family == "huber" and not self.huber_delta > 0:
            raise InputError("huber_delta must be positive")
        if self.family == "pinball":
            qs = tuple(float(q) for q in self.quantiles)
            if not qs or any(not (0.0 < q < 1.0) for q in qs):
                raise InputError("pinball needs quantiles in (0, 1)")
            object.__setattr__(self, "quantiles", qs)


def _residual(spec: LossSpec, z, y) -> np.ndarray:
    zv = np.asarray(z, dtype=float).ravel()
    yv = np.asarray(y, dtype=float).ravel()
    if zv.shape != yv.shape:
        raise InputError(f"dimension mismatch: {zv.shape} vs {yv.shape}")
    if spec.family == "pinball" and len(spec.quantiles) != zv.size:
        raise InputError(
            f"{len(spec.quantiles)} quantiles for {zv.size}-dimensional output"
        )
    return zv - yv


def loss_value(spec: LossSpec, z, y) -> float:
    u = _residual(spec, z, y)
    if spec.family == "squared":
        return float(np.sum(u * u))
    if spec.family == "huber":
        d = spec.huber_delta
        au = np.abs(u)
        quad = 0.5 * u * u
        lin = d * (au - 0.5 * d)
        return float(np.sum(np.where(au <= d, quad, lin)))
    tau = np.asarray(spec.quantiles)
    return float(np.sum(np.maximum(tau * u, (tau - 1.0) * u)))


def loss_subgradient(spec: LossSpec, z, y) -> np.ndarray:
    u = _residual(spec, z, y)
    if spec.family == "squared":
        return 2.0 * u
    if spec.family == "huber":
        return np.clip(u, -spec.huber_delta, spec.huber_delta)
    tau = np.asarray(spec.quantiles)
    return np.where(u > 0, tau, tau - 1.0)


def lipschitz_constant(spec: LossSpec, m: int | None = None) -> float:
    """Euclidean Lipschitz constant of z -> loss(z, y); inf for squared.

    The per-coordinate slope bound picks up a sqrt(m) factor in the Euclidean
    norm.  For pinball the output dimension is the number of quantiles; for
    huber it defaults to 1 unless given.
    """
    if spec.family == "squared":
        return UNBOUNDED
    if spec.family == "pinball":
        if m is not None and m != len(spec.quantiles):
            raise InputError(f"m={m} does not match {len(spec.quantiles)} quantiles")
        m = len(spec.quantiles)
        slope = max(max(t, 1.0 - t) for t in spec.quantiles)
        return slope * math.sqrt(m)
    m = 1 if m is None else int(m)
    return spec.huber_delta * math.sqrt(m)
