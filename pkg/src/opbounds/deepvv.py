"""Deep vector-valued RKHS models with transfer-operator regularization.

A model is a stack of kernel-expansion layers f_j(x) = sum_i k_j(x, z_i) M_j
c_i with fixed anchors and trainable coefficients, so every RKHS norm stays
Gram-computable.  The product of the layer transfer operators, restricted to
the span of the probe features, has norm sqrt(pencil_max(G_top, G_bottom))
with

    G_bottom[i, j] = k_1(x_i, x_j) * y_i^T M~ y_j
    G_top[i, j]    = k_L(h(x_i), h(x_j)) * y_i^T M~ y_j

where h composes all layers but the last and M~ is the output-space matrix
(the last layer's M; in the uniform-M setting all coincide).  Training is
plain gradient descent with backtracking on

    (1/n) sum ||f(x_i) - y_i||^2 + lambda_1 * pf_norm + lambda_2 * top_norm.

The analytic gradient differentiates the top pencil eigenvalue through the
simple-eigenvalue formula d rho = a^T dG_top a (the whitening basis is fixed
because G_bottom does not depend on the coefficients) and falls back to
finite differences when the top eigenvalue gap degenerates.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from ._rng import substream
from .errors import InputError, NumericError, RefinementOrderError
from .kernels import (
    ScalarKernelSpec,
    as_points,
    gram_scalar,
    gram_scalar_cross,
    make_output_matrix,
)
from .spectral import pencil_max, pencil_max_with_vector

_EIG_GAP_TOL = 1e-8
_FD_STEP = 1e-5
_ARMIJO = 1e-4
_MIN_STEP = 1e-14


@dataclass(frozen=True)
class VVLayer:
    """One kernel-expansion layer: x -> sum_i k(x, z_i) M c_i."""

    kernel: ScalarKernelSpec
    output: np.ndarray
    anchors: np.ndarray
    coeffs: np.ndarray
    capacity: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "output", make_output_matrix(self.output))
        object.__setattr__(
            self, "anchors", as_points(self.anchors, self.kernel.dimension)
        )
        c = np.asarray(self.coeffs, dtype=float)
        if c.shape != (self.anchors.shape[0], self.output.shape[0]):
            raise InputError(
                f"coeffs shape {c.shape} incompatible with "
                f"{self.anchors.shape[0]} anchors and output dim {self.output.shape[0]}"
            )
        object.__setattr__(self, "coeffs", c)
        if self.capacity is not None and not self.capacity > 0:
            raise InputError("capacity must be positive when set")

    @property
    def out_dim(self) -> int:
        return self.output.shape[0]

    def apply(self, u: np.ndarray) -> np.ndarray:
        k = gram_scalar_cross(self.kernel, u, self.anchors)
        return k @ self.coeffs @ self.output

    def rkhs_norm(self) -> float:
        g = gram_scalar(self.kernel, self.anchors)
        quad = float(np.sum(g * (self.coeffs @ self.output @ self.coeffs.T)))
        return float(np.sqrt(max(quad, 0.0)))


@dataclass(frozen=True)
class LayeredModel:
    layers: tuple[VVLayer, ...]

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise InputError("model needs at least one layer")
        if len(layers) < 3:
            warnings.warn(
                f"model has {len(layers)} layers; the architecture is meant "
                "for depth >= 3",
                stacklevel=3,
            )
        for j, (prev, nxt) in enumerate(zip(layers, layers[1:]), start=1):
            if nxt.kernel.dimension != prev.out_dim:
                raise InputError(
                    f"layer {j} outputs R^{prev.out_dim} but layer {j + 1} "
                    f"expects R^{nxt.kernel.dimension}"
                )
        object.__setattr__(self, "layers", layers)

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def input_dim(self) -> int:
        return self.layers[0].kernel.dimension

    @property
    def output_dim(self) -> int:
        return self.layers[-1].out_dim

    def with_coeffs(self, coeffs: list[np.ndarray]) -> "LayeredModel":
        return LayeredModel(
            tuple(replace(l, coeffs=c) for l, c in zip(self.layers, coeffs))
        )


def init_layered_model(
    x,
    kernels: list[ScalarKernelSpec],
    outputs: list[np.ndarray],
    seed: int = 0,
    capacities: list[float | None] | None = None,
) -> LayeredModel:
    """Build a model anchored at the training inputs propagated layer-wise,
    with coefficients i.i.d. uniform in [-0.1, 0.1] from the seed."""
    pts = as_points(x, kernels[0].dimension)
    if len(kernels) != len(outputs):
        raise InputError("kernels and output matrices must pair up")
    caps = capacities if capacities is not None else [None] * len(kernels)
    layers = []
    u = pts
    for j, (spec, m_mat) in enumerate(zip(kernels, outputs)):
        g = substream(seed, j)
        m_mat = make_output_matrix(m_mat)
        c = g.uniform(-0.1, 0.1, size=(u.shape[0], m_mat.shape[0]))
        layer = VVLayer(spec, m_mat, u, c, capacity=caps[j])
        layers.append(layer)
        u = layer.apply(u)
    return LayeredModel(tuple(layers))


def forward(model: LayeredModel, x) -> np.ndarray:
    """Evaluate the composition on a batch; rows are outputs."""
    u = as_points(x, model.input_dim)
    for layer in model.layers:
        u = layer.apply(u)
    return u


def _forward_trace(model: LayeredModel, x) -> list[np.ndarray]:
    """Per-level inputs: levels[j] feeds layer j; levels[L] is the output."""
    levels = [as_points(x, model.input_dim)]
    for layer in model.layers:
        levels.append(layer.apply(levels[-1]))
    return levels


def default_probes(y, m: int) -> np.ndarray:
    """Data labels as probe vectors, with canonical-basis rows replacing any
    zero labels so the probe span never degenerates."""
    probes = np.asarray(y, dtype=float)
    if probes.ndim == 1:
        probes = probes[:, None]
    probes = probes.copy()
    zero = np.linalg.norm(probes, axis=1) == 0.0
    for i in np.flatnonzero(zero):
        probes[i] = 0.0
        probes[i, i % m] = 1.0
    return probes


def _pf_grams(model: LayeredModel, xs: np.ndarray, probes: np.ndarray):
    """(G_top, G_bottom, mid outputs, probe bilinear matrix)."""
    first, last = model.layers[0], model.layers[-1]
    m_tilde = last.output
    if probes.shape[1] != m_tilde.shape[0]:
        raise InputError(
            f"probes live in R^{probes.shape[1]} but the output space is "
            f"R^{m_tilde.shape[0]}"
        )
    probe_bilinear = probes @ m_tilde @ probes.T
    g_bottom = gram_scalar(first.kernel, xs) * probe_bilinear
    mids = xs
    for layer in model.layers[:-1]:
        mids = layer.apply(mids)
    g_top = gram_scalar(last.kernel, mids) * probe_bilinear
    return g_top, g_bottom, mids, probe_bilinear


def pf_product_norm(model: LayeredModel, xs, probes) -> float:
    """Norm of the transfer-operator product restricted to the probe span."""
    x = as_points(xs, model.input_dim)
    p = np.asarray(probes, dtype=float)
    if p.ndim == 1:
        p = p[:, None]
    if p.shape[0] != x.shape[0]:
        raise InputError("one probe vector per point is required")
    if np.any(np.linalg.norm(p, axis=1) == 0.0):
        raise InputError("probe vectors must be nonzero")
    g_top, g_bottom, _, _ = _pf_grams(model, x, p)
    return float(np.sqrt(pencil_max(g_top, g_bottom)))


def top_layer_norm(model: LayeredModel) -> float:
    """RKHS norm of the last layer."""
    return model.layers[-1].rkhs_norm()


def pf_complexity_bound(model: LayeredModel, xs, probes) -> dict:
    """(1/n) * pf_norm * top_norm * sqrt(sum_i Tr K_1(x_i, x_i)), with all
    factors reported; evaluated at the given model."""
    x = as_points(xs, model.input_dim)
    n = x.shape[0]
    first = model.layers[0]
    diag = np.array([gram_scalar(first.kernel, x[i : i + 1])[0, 0] for i in range(n)])
    trace_root = float(np.sqrt(np.sum(diag) * np.trace(first.output)))
    pf = pf_product_norm(model, x, probes)
    top = top_layer_norm(model)
    return {
        "total": pf * top * trace_root / n,
        "pf_norm": pf,
        "top_norm": top,
        "trace_root": trace_root,
        "n": n,
        "note": "evaluated at the given model",
    }


def separable_bound(
    model: LayeredModel,
    kappa: float,
    tr_m1: float,
    n: int,
    mode: str,
    xs=None,
    probes=None,
    pf_norm: float | None = None,
    top_norm: float | None = None,
) -> float:
    """Separable-kernel complexity bound in two conventions.

    ``printed`` uses sqrt(kappa Tr(M1)) / n; ``consistent`` uses
    sqrt(kappa Tr(M1) / n), the specialization of the general product bound.
    PF/top factors may be frozen via ``pf_norm``/``top_norm`` (otherwise they
    are computed from the model on the given data and probes).
    """
    if mode not in ("printed", "consistent"):
        raise InputError(f"unknown mode {mode!r}")
    if pf_norm is None:
        if xs is None or probes is None:
            raise InputError("either pf_norm or (xs, probes) must be given")
        pf_norm = pf_product_norm(model, xs, probes)
    if top_norm is None:
        top_norm = top_layer_norm(model)
    if mode == "printed":
        lead = np.sqrt(kappa * tr_m1) / n
    else:
        lead = np.sqrt(kappa * tr_m1 / n)
    return float(lead * pf_norm * top_norm)


@dataclass(frozen=True)
class TrainConfig:
    lambda1: float = 0.0
    lambda2: float = 0.0
    step: float = 0.1
    iters: int = 100
    grad_mode: str = "analytic"
    seed: int = 0
    tol: float = 1e-10  # gradient-norm stop

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise InputError("regularization weights must be nonnegative")
        if self.grad_mode not in ("analytic", "finite-diff"):
            raise InputError(f"unknown grad_mode {self.grad_mode!r}")
        if self.iters < 1 or not self.step > 0:
            raise InputError("iters must be >= 1 and step positive")


def objective_terms(
    model: LayeredModel, xs, ys, lambda1: float, lambda2: float, probes=None
) -> tuple[float, float, float]:
    """(data term, lambda1 * pf norm, lambda2 * top norm)."""
    x = as_points(xs, model.input_dim)
    y = np.asarray(ys, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    n = x.shape[0]
    preds = forward(model, x)
    data = float(np.sum((preds - y) ** 2)) / n
    if probes is None:
        probes = default_probes(y, model.output_dim)
    pf_term = lambda1 * pf_product_norm(model, x, probes) if lambda1 > 0 else 0.0
    top_term = lambda2 * top_layer_norm(model) if lambda2 > 0 else 0.0
    return data, pf_term, top_term


def objective(
    model: LayeredModel, xs, ys, lambda1: float, lambda2: float, probes=None
) -> float:
    return sum(objective_terms(model, xs, ys, lambda1, lambda2, probes))


def _require_gaussian(model: LayeredModel) -> None:
    for j, layer in enumerate(model.layers, start=1):
        if layer.kernel.family != "gaussian":
            raise InputError(
                f"analytic gradients need gaussian layer kernels; layer {j} "
                f"is {layer.kernel.family}"
            )


def _backprop_layer(layer: VVLayer, u: np.ndarray, kmat: np.ndarray, gbar: np.ndarray):
    """Given d obj / d out for one layer, return (d obj / d C, d obj / d u)."""
    grad_c = kmat.T @ gbar @ layer.output
    w = (gbar @ (layer.coeffs @ layer.output).T) * kmat  # (n, q)
    gamma = layer.kernel.bandwidth
    grad_u = -2.0 * gamma * (w.sum(axis=1)[:, None] * u - w @ layer.anchors)
    return grad_c, grad_u


def gradient(
    model: LayeredModel,
    xs,
    ys,
    lambda1: float,
    lambda2: float,
    mode: str = "analytic",
    probes=None,
) -> list[np.ndarray]:
    """Gradient of the training objective with respect to every coefficient
    matrix.

    Notes
    -----
    The transfer-product term differentiates rho, the top pencil eigenvalue,
    as d rho = a^T dG_top a with a the G_bottom-normalized eigenvector; this
    is the simple-eigenvalue perturbation formula and is exact to first order
    because the whitening basis depends only on G_bottom.  When the top
    eigenvalue gap falls below 1e-8 relative, the whole gradient falls back to
    central finite differences (step 1e-5 * (1 + |parameter|)) with a warning.
    """
    x = as_points(xs, model.input_dim)
    y = np.asarray(ys, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    if probes is None:
        probes = default_probes(y, model.output_dim)
    if mode == "finite-diff":
        return _fd_gradient(model, x, y, lambda1, lambda2, probes)
    if mode != "analytic":
        raise InputError(f"unknown gradient mode {mode!r}")
    _require_gaussian(model)

    n = x.shape[0]
    levels = _forward_trace(model, x)
    kmats = [
        gram_scalar_cross(layer.kernel, levels[j], layer.anchors)
        for j, layer in enumerate(model.layers)
    ]
    grads = [np.zeros_like(layer.coeffs) for layer in model.layers]

    # seed at the output: data term
    seeds = {model.depth: (2.0 / n) * (levels[-1] - y)}

    if lambda1 > 0:
        g_top, g_bottom, mids, probe_bilinear = _pf_grams(model, x, probes)
        rho, a_vec, gap = pencil_max_with_vector(g_top, g_bottom)
        if rho > 0 and np.isfinite(gap) and gap < _EIG_GAP_TOL * rho:
            warnings.warn(
                "top pencil eigenvalue nearly degenerate; falling back to "
                "finite-difference gradients",
                stacklevel=2,
            )
            return _fd_gradient(model, x, y, lambda1, lambda2, probes)
        if rho > 0:
            last = model.layers[-1]
            k_top = gram_scalar(last.kernel, mids)
            t_mat = np.outer(a_vec, a_vec) * probe_bilinear * k_top
            gamma_l = last.kernel.bandwidth
            d_rho_d_mid = -4.0 * gamma_l * (
                t_mat.sum(axis=1)[:, None] * mids - t_mat @ mids
            )
            scale = lambda1 / (2.0 * np.sqrt(rho))
            seeds[model.depth - 1] = seeds.get(
                model.depth - 1, np.zeros_like(mids)
            ) + scale * d_rho_d_mid

    if lambda2 > 0:
        last = model.layers[-1]
        top = last.rkhs_norm()
        if top > 0:
            g_last = gram_scalar(last.kernel, last.anchors)
            grads[-1] += lambda2 * (g_last @ last.coeffs @ last.output) / top

    gbar = seeds[model.depth]
    for j in range(model.depth - 1, -1, -1):
        grad_c, grad_u = _backprop_layer(model.layers[j], levels[j], kmats[j], gbar)
        grads[j] += grad_c
        gbar = grad_u
        if j in seeds:
            gbar = gbar + seeds[j]
    return grads


def _fd_gradient(model, x, y, lambda1, lambda2, probes):
    grads = []
    coeffs = [layer.coeffs.copy() for layer in model.layers]
    for j in range(model.depth):
        g = np.zeros_like(coeffs[j])
        it = np.nditer(coeffs[j], flags=["multi_index"])
        for val in it:
            idx = it.multi_index
            h = _FD_STEP * (1.0 + abs(float(val)))
            for sign in (+1.0, -1.0):
                bumped = [c.copy() for c in coeffs]
                bumped[j][idx] += sign * h
                obj = objective(model.with_coeffs(bumped), x, y, lambda1, lambda2, probes)
                g[idx] += sign * obj / (2.0 * h)
        grads.append(g)
    return grads


@dataclass
class TrainResult:
    model: LayeredModel
    trajectory: list[dict] = field(default_factory=list)
    converged: bool = False
    iterations: int = 0
    warning: str | None = None


def train(model: LayeredModel, xs, ys, cfg: TrainConfig, probes=None) -> TrainResult:
    """Gradient descent with backtracking; the objective never increases
    across accepted steps and the trajectory records objective, transfer-
    product norm, and top-layer norm per accepted iteration."""
    x = as_points(xs, model.input_dim)
    y = np.asarray(ys, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    if probes is None:
        probes = default_probes(y, model.output_dim)

    def full_obj(m):
        return objective(m, x, y, cfg.lambda1, cfg.lambda2, probes)

    current = model
    obj = full_obj(current)
    if not np.isfinite(obj):
        raise NumericError(f"objective is non-finite at the start ({obj})")
    result = TrainResult(model=current)
    for it in range(1, cfg.iters + 1):
        grads = gradient(
            current, x, y, cfg.lambda1, cfg.lambda2, mode=cfg.grad_mode, probes=probes
        )
        gnorm = float(np.sqrt(sum(np.sum(g * g) for g in grads)))
        if gnorm <= cfg.tol:
            result.converged = True
            result.iterations = it - 1
            break
        step = cfg.step
        accepted = False
        while step >= _MIN_STEP:
            cand = current.with_coeffs(
                [layer.coeffs - step * g for layer, g in zip(current.layers, grads)]
            )
            cand_obj = full_obj(cand)
            if not np.isfinite(cand_obj):
                step *= 0.5
                continue
            if cand_obj <= obj - _ARMIJO * step * gnorm * gnorm:
                current, obj = cand, cand_obj
                accepted = True
                break
            step *= 0.5
        if not accepted:
            result.warning = "line search stalled"
            result.iterations = it - 1
            break
        pf = pf_product_norm(current, x, probes)
        top = top_layer_norm(current)
        result.trajectory.append(
            {"iteration": it, "objective": obj, "pf_norm": pf, "top_norm": top,
             "step": step}
        )
        result.iterations = it
    result.model = current
    return result


def capacity_diagnostics(model: LayeredModel) -> list[dict]:
    """Per-layer capacity report.  Capacities are advisory: the last layer's
    bound applies to its RKHS norm, and `within` is None when no capacity is
    set."""
    out = []
    for j, layer in enumerate(model.layers):
        norm = layer.rkhs_norm()
        entry = {"layer": j + 1, "capacity": layer.capacity, "rkhs_norm": norm}
        if layer.capacity is None:
            entry["within"] = None
        else:
            entry["within"] = bool(norm <= layer.capacity)
        out.append(entry)
    return out


def project_top_capacity(model: LayeredModel) -> LayeredModel:
    """Rescale the last layer's coefficients onto its capacity ball when the
    top-layer norm exceeds it; otherwise return the model unchanged."""
    last = model.layers[-1]
    if last.capacity is None:
        return model
    norm = last.rkhs_norm()
    if norm <= last.capacity:
        return model
    scaled = replace(last, coeffs=last.coeffs * (last.capacity / norm))
    return LayeredModel(tuple(model.layers[:-1]) + (scaled,))


def model_to_dict(model: LayeredModel) -> dict:
    """JSON-ready checkpoint: kernels, output matrices, anchors, coefficients."""
    layers = []
    for layer in model.layers:
        layers.append(
            {
                "kernel": {
                    "family": layer.kernel.family,
                    "bandwidth": layer.kernel.bandwidth,
                    "smoothness": layer.kernel.smoothness,
                    "dimension": layer.kernel.dimension,
                },
                "output": layer.output.tolist(),
                "anchors": layer.anchors.tolist(),
                "coeffs": layer.coeffs.tolist(),
                "capacity": layer.capacity,
            }
        )
    return {"layers": layers}


def model_from_dict(payload: dict) -> LayeredModel:
    layers = []
    for entry in payload["layers"]:
        k = entry["kernel"]
        spec = ScalarKernelSpec(
            family=k["family"],
            bandwidth=k["bandwidth"],
            smoothness=k.get("smoothness", 0.0),
            dimension=k["dimension"],
        )
        layers.append(
            VVLayer(
                spec,
                np.asarray(entry["output"], dtype=float),
                np.asarray(entry["anchors"], dtype=float),
                np.asarray(entry["coeffs"], dtype=float),
                capacity=entry.get("capacity"),
            )
        )
    return LayeredModel(tuple(layers))


def refine_kernel(model: LayeredModel, a_mat, direction: str) -> LayeredModel:
    """Replace every layer's output matrix by A, after verifying the
    eigenvalue ordering: shrink requires M_j - A PSD, enlarge requires
    A - M_j PSD (min eigenvalue >= -1e-10)."""
    if direction not in ("shrink", "enlarge"):
        raise InputError(f"unknown refinement direction {direction!r}")
    a_mat = make_output_matrix(a_mat)
    new_layers = []
    for j, layer in enumerate(model.layers, start=1):
        if layer.output.shape != a_mat.shape:
            raise InputError(
                f"layer {j} has output matrix of shape {layer.output.shape}, "
                f"refinement matrix has {a_mat.shape}"
            )
        diff = layer.output - a_mat if direction == "shrink" else a_mat - layer.output
        min_eig = float(np.linalg.eigvalsh(diff)[0])
        if min_eig < -1e-10:
            raise RefinementOrderError(
                f"refinement ordering violated at layer {j}: minimum "
                f"eigenvalue of the {direction} difference is {min_eig}"
            )
        new_layers.append(replace(layer, output=a_mat))
    return LayeredModel(tuple(new_layers))
