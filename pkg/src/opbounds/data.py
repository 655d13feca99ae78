"""Dataset generation and CSV ingestion for the experiment harness.

Synthetic data comes from a stored teacher (a random kernel expansion), so
excess risk against the generating function is always computable.  The CSV
format is ``x1,...,xd,y1,...,ym`` with period decimals, locale-independent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._rng import substream
from .errors import ConfigError, InputError
from .kernels import DecomposableKernel, KernelExpansion, ScalarKernelSpec


@dataclass(frozen=True)
class GeneratorConfig:
    n: int
    d: int
    m: int
    noise: float = 0.0
    teacher_anchors: int = 8
    teacher_bandwidth: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.d < 1 or self.m < 1:
            raise InputError("n, d, m must be positive")
        if self.noise < 0:
            raise InputError("noise level must be nonnegative")
        if self.teacher_anchors < 1:
            raise InputError("teacher needs at least one anchor")


@dataclass(frozen=True)
class Dataset:
    x: np.ndarray
    y: np.ndarray
    teacher: KernelExpansion | None = None

    @property
    def n(self) -> int:
        return self.x.shape[0]


def synth_dataset(cfg: GeneratorConfig) -> Dataset:
    """y = f*(x) + gaussian noise, with f* a random kernel expansion."""
    xs = substream(cfg.seed, 0).uniform(-1.0, 1.0, size=(cfg.n, cfg.d))
    anchors = substream(cfg.seed, 1).uniform(-1.0, 1.0, size=(cfg.teacher_anchors, cfg.d))
    coeffs = substream(cfg.seed, 2).standard_normal((cfg.teacher_anchors, cfg.m))
    coeffs /= np.sqrt(cfg.teacher_anchors)
    kernel = DecomposableKernel(
        scalar=ScalarKernelSpec("gaussian", cfg.teacher_bandwidth, dimension=cfg.d),
        output=np.eye(cfg.m),
        kappa=1.0,
    )
    teacher = KernelExpansion(kernel, anchors, coeffs)
    clean = teacher.at(xs)
    noise = cfg.noise * substream(cfg.seed, 3).standard_normal((cfg.n, cfg.m))
    return Dataset(x=xs, y=clean + noise, teacher=teacher)


def write_csv(path, x: np.ndarray, y: np.ndarray) -> None:
    n, d = x.shape
    m = y.shape[1]
    header = ",".join([f"x{i + 1}" for i in range(d)] + [f"y{j + 1}" for j in range(m)])
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for i in range(n):
            row = list(x[i]) + list(y[i])
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def read_csv(path, d: int, m: int) -> Dataset:
    with open(path) as fh:
        header = fh.readline().strip()
    expected = ",".join([f"x{i + 1}" for i in range(d)] + [f"y{j + 1}" for j in range(m)])
    if header != expected:
        raise ConfigError(
            f"dataset CSV header {header!r} does not match expected {expected!r}"
        )
    body = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if body.shape[1] != d + m:
        raise ConfigError(
            f"dataset CSV has {body.shape[1]} columns, expected {d + m}"
        )
    return Dataset(x=body[:, :d], y=body[:, d:])
