"""Experiment harness: config validation, orchestration, report emission.

Configs are JSON documents validated against per-subcommand schemas before
any computation; unknown keys are rejected.  Records echo the config and all
resolved seeds, so re-running a record's config reproduces its metrics
bit-for-bit.  Timing is printed to stderr only, keeping the output file a
pure function of (config, seed).
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np
from jsonschema import Draft7Validator

from . import __version__
from ._rng import derive_seed, substream
from .complexity import McConfig, rademacher_ball_mc, trace_bound
from .data import Dataset, GeneratorConfig, read_csv, synth_dataset
from .deepvv import (
    TrainConfig,
    TrainResult,
    default_probes,
    init_layered_model,
    model_from_dict,
    model_to_dict,
    objective_terms,
    pf_complexity_bound,
    pf_product_norm,
    refine_kernel,
    separable_bound,
    top_layer_norm,
    train,
)
from .erm import FitConfig, empirical_risk, excess_risk_bound_rhs, fit_full, fit_sketched
from .errors import ConfigError, OpboundsError, RefinementOrderError
from .kernels import (
    DecomposableKernel,
    KernelExpansion,
    ScalarKernelSpec,
    gram_operator,
    gram_scalar,
)
from .koopman import (
    LayerSpec,
    NetworkSpec,
    product_bound,
    peeled_bound,
    split_complexity_bound,
)
from .losses import LossSpec, lipschitz_constant
from .sketching import SketchMatrix, SketchSpec, make_p_sparsified, satisfiability_constant
from .spectral import (
    check_satisfiability,
    critical_radius,
    eigendecompose_scaled_gram,
    statistical_dimension,
)

SUBCOMMANDS = ("bound-compare", "sketch-regress", "deep-vvrkhs", "spectral-report")

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_POSINT = {"type": "integer", "minimum": 1}

_DATASET_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "kind": {"enum": ["synthetic", "csv"]},
        "n": _POSINT,
        "d": _POSINT,
        "m": _POSINT,
        "noise": {"type": "number", "minimum": 0},
        "teacher_anchors": _POSINT,
        "teacher_bandwidth": _POS,
        "seed": {"type": "integer"},
        "path": {"type": "string"},
    },
    "required": ["kind", "d", "m"],
}

_MATRIX = {
    "oneOf": [
        {"type": "array", "items": {"type": "array", "items": _NUM}},
        {
            "type": "object",
            "additionalProperties": False,
            "properties": {"csv": {"type": "string"}},
            "required": ["csv"],
        },
    ]
}

_KERNEL_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "family": {"enum": ["gaussian", "matern", "sobolev-radial"]},
        "bandwidth": _POS,
        "smoothness": {"type": "number", "minimum": 0},
        "output_matrix": {"oneOf": [{"enum": ["identity"]}, _MATRIX["oneOf"][0]]},
        "output_dim": _POSINT,
        "kappa": _POS,
    },
    "required": ["family", "bandwidth"],
}

_LOSS_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "family": {"enum": ["squared", "huber", "pinball"]},
        "huber_delta": _POS,
        "quantiles": {"type": "array", "items": {"type": "number"}},
    },
    "required": ["family"],
}

# "identity" is a harness convenience (rows must equal n) for reproducing the
# full-vs-sketched equivalence scenario; random sketches come from the library
_SKETCH_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "rows": _POSINT,
        "p": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "dist": {"enum": ["rademacher", "gaussian", "identity"]},
        "seed": {"type": "integer"},
        "scale": _POS,
    },
    "required": ["rows"],
}

_FIT_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "lambda_n": _POS,
        "max_iters": _POSINT,
        "step_size": _POS,
        "tol": _POS,
        "seed": {"type": "integer"},
    },
    "required": ["lambda_n"],
}

_MC_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {"draws": _POSINT, "seed": {"type": "integer"}},
    "required": ["draws"],
}

_LAYER_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "weights": _MATRIX,
        "bias": {"type": "array", "items": _NUM},
        "activation_koopman_norm": _POS,
        "sobolev_order_in": _POS,
        "sobolev_order_out": _POS,
        "ratio_G": _POS,
    },
    "required": ["weights"],
}

_NETWORK_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "g_norm": _POS,
        "output_dim": _POSINT,
        "layers": {"type": "array", "items": _LAYER_SCHEMA, "minItems": 1},
        "injectivity_class": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"C": _POS, "D": _POS},
            "required": ["C", "D"],
        },
    },
    "required": ["g_norm", "output_dim", "layers"],
}

_TRAIN_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "lambda1": {"type": "number", "minimum": 0},
        "lambda2": {"type": "number", "minimum": 0},
        "step": _POS,
        "iters": _POSINT,
        "grad_mode": {"enum": ["analytic", "finite-diff"]},
        "seed": {"type": "integer"},
        "tol": _POS,
    },
}

_DEEP_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "bandwidths": {"type": "array", "items": _POS, "minItems": 1},
        "output_dims": {"type": "array", "items": _POSINT, "minItems": 1},
        "train": _TRAIN_SCHEMA,
        "lambda1_sweep": {"type": "array", "items": {"type": "number", "minimum": 0}},
        "refine": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "direction": {"enum": ["shrink", "enlarge"]},
                "scale": _POS,
            },
            "required": ["direction", "scale"],
        },
        "checkpoint_in": {"type": "string"},
        "checkpoint_out": {"type": "string"},
        "evaluate_only": {"type": "boolean"},
    },
    "required": ["bandwidths", "output_dims", "train"],
}

_SPLIT_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {"l_prime": _POSINT, "surrogates": _POSINT},
}

_SCHEMAS = {
    "bound-compare": {
        "type": "object",
        "additionalProperties": False,
        "properties": {
            "seed": {"type": "integer"},
            "dataset": _DATASET_SCHEMA,
            "kernel": _KERNEL_SCHEMA,
            "mc": _MC_SCHEMA,
            "network": _NETWORK_SCHEMA,
            "split": {"type": "integer", "minimum": 0},
            "split_bound": _SPLIT_SCHEMA,
        },
        "required": ["dataset", "kernel", "mc", "network"],
    },
    "sketch-regress": {
        "type": "object",
        "additionalProperties": False,
        "properties": {
            "seed": {"type": "integer"},
            "dataset": _DATASET_SCHEMA,
            "kernel": _KERNEL_SCHEMA,
            "loss": _LOSS_SCHEMA,
            "fit": _FIT_SCHEMA,
            "sketch": _SKETCH_SCHEMA,
            "conf_delta": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
            "emit_coefficients": {"type": "boolean"},
        },
        "required": ["dataset", "kernel", "loss", "fit", "sketch"],
    },
    "deep-vvrkhs": {
        "type": "object",
        "additionalProperties": False,
        "properties": {
            "seed": {"type": "integer"},
            "dataset": _DATASET_SCHEMA,
            "deep_model": _DEEP_SCHEMA,
        },
        "required": ["dataset", "deep_model"],
    },
    "spectral-report": {
        "type": "object",
        "additionalProperties": False,
        "properties": {
            "seed": {"type": "integer"},
            "dataset": _DATASET_SCHEMA,
            "kernel": _KERNEL_SCHEMA,
            "sketch": _SKETCH_SCHEMA,
        },
        "required": ["dataset", "kernel"],
    },
}


def validate_config(subcommand: str, config: dict) -> None:
    if subcommand not in _SCHEMAS:
        raise ConfigError(f"unknown subcommand {subcommand!r}")
    errors = sorted(
        Draft7Validator(_SCHEMAS[subcommand]).iter_errors(config),
        key=lambda e: list(e.absolute_path),
    )
    if errors:
        first = errors[0]
        path = "/".join(str(p) for p in first.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {path}: {first.message}")


def _jsonify(obj):
    if isinstance(obj, dict):
        return {k: _jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonify(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonify(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):  # before int: bool subclasses int
        return bool(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if not np.isfinite(v):
            return repr(v)
        return v
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    return obj


def _load_matrix(value, base_dir: Path) -> np.ndarray:
    if isinstance(value, dict):
        path = Path(value["csv"])
        if not path.is_absolute():
            path = base_dir / path
        return np.loadtxt(path, delimiter=",", ndmin=2)
    return np.asarray(value, dtype=float)


def _build_dataset(cfg: dict, seed: int, base_dir: Path) -> tuple[Dataset, dict]:
    if cfg["kind"] == "csv":
        if "path" not in cfg:
            raise ConfigError("csv dataset needs a path")
        path = Path(cfg["path"])
        if not path.is_absolute():
            path = base_dir / path
        return read_csv(path, cfg["d"], cfg["m"]), {"dataset": None}
    if "n" not in cfg:
        raise ConfigError("synthetic dataset needs n")
    used = cfg.get("seed", seed)
    gen = GeneratorConfig(
        n=cfg["n"],
        d=cfg["d"],
        m=cfg["m"],
        noise=cfg.get("noise", 0.0),
        teacher_anchors=cfg.get("teacher_anchors", 8),
        teacher_bandwidth=cfg.get("teacher_bandwidth", 1.0),
        seed=used,
    )
    return synth_dataset(gen), {"dataset": used}


def _build_kernel(cfg: dict, d: int, m: int) -> DecomposableKernel:
    spec = ScalarKernelSpec(
        family=cfg["family"],
        bandwidth=cfg["bandwidth"],
        smoothness=cfg.get("smoothness", 0.0),
        dimension=d,
    )
    out = cfg.get("output_matrix", "identity")
    if isinstance(out, str):
        m_mat = np.eye(cfg.get("output_dim", m))
    else:
        m_mat = np.asarray(out, dtype=float)
    return DecomposableKernel(spec, m_mat, kappa=cfg.get("kappa", 1.0))


def _build_loss(cfg: dict) -> LossSpec:
    return LossSpec(
        family=cfg["family"],
        huber_delta=cfg.get("huber_delta", 1.0),
        quantiles=tuple(cfg.get("quantiles", ())),
    )


def _build_network(cfg: dict, base_dir: Path) -> NetworkSpec:
    layers = []
    for layer in cfg["layers"]:
        layers.append(
            LayerSpec(
                weights=_load_matrix(layer["weights"], base_dir),
                bias=np.asarray(layer["bias"], dtype=float) if "bias" in layer else None,
                activation_koopman_norm=layer.get("activation_koopman_norm", 1.0),
                sobolev_order_in=layer.get("sobolev_order_in", 1.0),
                sobolev_order_out=layer.get("sobolev_order_out", 1.0),
                ratio_g=layer.get("ratio_G", 1.0),
            )
        )
    inj = cfg.get("injectivity_class")
    return NetworkSpec(
        layers=tuple(layers),
        g_norm=cfg["g_norm"],
        output_dim=cfg["output_dim"],
        injectivity_class=(inj["C"], inj["D"]) if inj else None,
    )


def _build_sketch(cfg: dict, n: int, seed: int) -> tuple[SketchMatrix, float]:
    """Sketch matrix plus the keep-probability used for the c constant."""
    dist = cfg.get("dist", "gaussian")
    if dist == "identity":
        if cfg["rows"] != n:
            raise ConfigError(f"identity sketch needs rows == n ({n})")
        return SketchMatrix(matrix=np.eye(n)), cfg.get("p", 1.0)
    spec = SketchSpec(
        s=cfg["rows"],
        n=n,
        p=cfg.get("p", 1.0),
        dist=dist,
        seed=seed,
        scale=cfg.get("scale"),
    )
    return make_p_sparsified(spec), spec.p


def _identity_pushforward(net: NetworkSpec, x: np.ndarray, upto: int) -> np.ndarray:
    """Push data through the first layers with identity activations; the
    harness convention for producing mid-space points."""
    u = x
    for layer in net.layers[:upto]:
        u = u @ layer.weights.T
        if layer.bias is not None:
            u = u + layer.bias[None, :]
    return u


def _run_bound_compare(config: dict, seed: int, base_dir: Path) -> dict:
    ds, seeds = _build_dataset(config["dataset"], derive_seed(seed, 1), base_dir)
    kernel = _build_kernel(config["kernel"], config["dataset"]["d"], config["dataset"]["m"])
    net = _build_network(config["network"], base_dir)
    mc_seed = config["mc"].get("seed", derive_seed(seed, 4))
    cfg_mc = McConfig(draws=config["mc"]["draws"], seed=mc_seed)

    g_op = gram_operator(kernel, ds.x)
    ball = rademacher_ball_mc(g_op, ds.n, cfg_mc)
    kappa, tr_m = kernel.kappa, kernel.trace_m()
    product = product_bound(net, kappa, tr_m, ds.n)
    split_at = config.get("split", 0)
    peeled = peeled_bound(net, split_at)

    sb_cfg = config.get("split_bound", {})
    l_prime = sb_cfg.get("l_prime", net.depth)
    n_sur = sb_cfg.get("surrogates", 3)
    mid = _identity_pushforward(net, ds.x, l_prime)
    d_mid = mid.shape[1]
    kernel_mid = DecomposableKernel(
        ScalarKernelSpec("gaussian", kernel.scalar.bandwidth, dimension=d_mid),
        kernel.output,
        kappa=kernel.kappa,
    )
    surrogates = []
    for i in range(n_sur):
        raw = substream(mc_seed, 1000 + i).standard_normal((ds.n, kernel.output_dim))
        cand = KernelExpansion(kernel_mid, mid, raw)
        norm = cand.norm()
        target = net.g_norm * (i + 1) / n_sur
        scale = target / norm if norm > 0 else 0.0
        surrogates.append(KernelExpansion(kernel_mid, mid, raw * scale))
    split_rep = split_complexity_bound(
        net, l_prime, surrogates, ds.x, kernel, mid, kernel_mid, cfg_mc
    )

    metrics = {
        "trace_bound": trace_bound(kappa, tr_m, ds.n),
        "rademacher_ball": {"estimate": ball.estimate, "stderr": ball.stderr},
        "product": product.to_dict(),
        "split": split_rep.to_dict(),
        "peeled": {"split": split_at, "value": peeled},
        "notes": "mid points use identity-activation pushforward",
    }
    return {"metrics": metrics, "resolved_seeds": {**seeds, "mc": mc_seed}}


def _run_sketch_regress(config: dict, seed: int, base_dir: Path) -> dict:
    ds, seeds = _build_dataset(config["dataset"], derive_seed(seed, 1), base_dir)
    kernel = _build_kernel(config["kernel"], config["dataset"]["d"], config["dataset"]["m"])
    loss = _build_loss(config["loss"])
    fit_seed = config["fit"].get("seed", derive_seed(seed, 3))
    fit_cfg = FitConfig(
        lambda_n=config["fit"]["lambda_n"],
        max_iters=config["fit"].get("max_iters", 500),
        step_size=config["fit"].get("step_size", 1.0),
        tol=config["fit"].get("tol", 1e-8),
        seed=fit_seed,
    )
    sk_seed = config["sketch"].get("seed", derive_seed(seed, 2))
    sketch, sk_p = _build_sketch(config["sketch"], ds.n, sk_seed)

    full = fit_full(kernel, ds.x, ds.y, loss, fit_cfg)
    sketched = fit_sketched(kernel, ds.x, ds.y, loss, fit_cfg, sketch)
    risk_full = empirical_risk(full, ds.x, ds.y, loss)
    risk_sketched = empirical_risk(sketched, ds.x, ds.y, loss)

    g_k = gram_scalar(kernel.scalar, ds.x)
    dec = eigendecompose_scaled_gram(g_k, ds.n)
    delta_sq = critical_radius(dec.mu)
    d_n = statistical_dimension(dec.mu, delta_sq)
    c_val = satisfiability_constant(sk_p)
    report = check_satisfiability(sketch, dec, d_n, delta_sq, c_val)

    j_l = lipschitz_constant(loss, kernel.output_dim)
    if np.isfinite(j_l):
        rhs = excess_risk_bound_rhs(
            j_l=j_l,
            c=c_val,
            lambda_n=fit_cfg.lambda_n,
            m_opnorm=float(np.linalg.norm(kernel.output, 2)),
            delta_sq=delta_sq,
            kappa=kernel.kappa,
            tr_m=kernel.trace_m(),
            n=ds.n,
            conf_delta=config.get("conf_delta", 0.05),
        )
        bound_entry = {"value": rhs.value, "big_c": rhs.big_c, "terms": list(rhs.terms)}
    else:
        bound_entry = {
            "error": "unbounded-loss",
            "message": "excess-risk bound needs a Lipschitz loss",
        }

    metrics = {
        "risk_full": risk_full,
        "risk_sketched": risk_sketched,
        "diagnostics_full": {
            "objective": full.diagnostics.objective,
            "grad_norm": full.diagnostics.grad_norm,
            "iterations": full.diagnostics.iterations,
            "converged": full.diagnostics.converged,
            "warning": full.diagnostics.warning,
        },
        "diagnostics_sketched": {
            "objective": sketched.diagnostics.objective,
            "grad_norm": sketched.diagnostics.grad_norm,
            "iterations": sketched.diagnostics.iterations,
            "converged": sketched.diagnostics.converged,
            "warning": sketched.diagnostics.warning,
        },
        "satisfiability": report.to_dict(),
        "excess_risk_bound": bound_entry,
    }
    if ds.teacher is not None:
        metrics["risk_teacher"] = empirical_risk(ds.teacher.at, ds.x, ds.y, loss)
    if config.get("emit_coefficients", False):
        metrics["coefficients"] = {
            "full": full.coeffs.tolist(),
            "sketched": sketched.coeffs.tolist(),
        }
    return {
        "metrics": metrics,
        "resolved_seeds": {**seeds, "sketch": sk_seed, "fit": fit_seed},
    }


def _run_deep(config: dict, seed: int, base_dir: Path) -> dict:
    ds, seeds = _build_dataset(config["dataset"], derive_seed(seed, 1), base_dir)
    deep = config["deep_model"]
    dims_in = [config["dataset"]["d"]] + list(deep["output_dims"][:-1])
    if deep["output_dims"][-1] != config["dataset"]["m"]:
        raise ConfigError("last output dim must equal the dataset output dim")
    if len(deep["bandwidths"]) != len(deep["output_dims"]):
        raise ConfigError("bandwidths and output_dims must have equal length")
    kernels = [
        ScalarKernelSpec("gaussian", bw, dimension=d_in)
        for bw, d_in in zip(deep["bandwidths"], dims_in)
    ]
    outputs = [np.eye(dim) for dim in deep["output_dims"]]
    t_cfg_raw = deep["train"]
    train_seed = t_cfg_raw.get("seed", derive_seed(seed, 5))
    t_cfg = TrainConfig(
        lambda1=t_cfg_raw.get("lambda1", 0.0),
        lambda2=t_cfg_raw.get("lambda2", 0.0),
        step=t_cfg_raw.get("step", 0.1),
        iters=t_cfg_raw.get("iters", 100),
        grad_mode=t_cfg_raw.get("grad_mode", "analytic"),
        seed=train_seed,
        tol=t_cfg_raw.get("tol", 1e-10),
    )
    if "checkpoint_in" in deep:
        ckpt_path = Path(deep["checkpoint_in"])
        if not ckpt_path.is_absolute():
            ckpt_path = base_dir / ckpt_path
        with open(ckpt_path) as fh:
            model = model_from_dict(json.load(fh))
    else:
        model = init_layered_model(ds.x, kernels, outputs, seed=train_seed)
    init_terms = objective_terms(model, ds.x, ds.y, t_cfg.lambda1, t_cfg.lambda2)
    if deep.get("evaluate_only", False):
        result = TrainResult(model=model)
    else:
        result = train(model, ds.x, ds.y, t_cfg)
    final_terms = objective_terms(result.model, ds.x, ds.y, t_cfg.lambda1, t_cfg.lambda2)

    kappa = 1.0  # gaussian layer kernels are normalized at zero distance
    tr_m1 = float(np.trace(result.model.layers[0].output))
    probes = default_probes(ds.y, result.model.output_dim)
    pf_rep = pf_complexity_bound(result.model, ds.x, probes)
    sep_printed = separable_bound(
        result.model, kappa, tr_m1, ds.n, "printed", xs=ds.x, probes=probes
    )
    sep_consistent = separable_bound(
        result.model, kappa, tr_m1, ds.n, "consistent", xs=ds.x, probes=probes
    )
    epochs = [
        {
            "iteration": entry["iteration"],
            "objective": entry["objective"],
            "pf_bound": entry["pf_norm"] * entry["top_norm"] * pf_rep["trace_root"] / ds.n,
            "separable_printed": float(np.sqrt(kappa * tr_m1) / ds.n)
            * entry["pf_norm"] * entry["top_norm"],
            "separable_consistent": float(np.sqrt(kappa * tr_m1 / ds.n))
            * entry["pf_norm"] * entry["top_norm"],
            "pf_norm": entry["pf_norm"],
            "top_norm": entry["top_norm"],
        }
        for entry in result.trajectory
    ]

    metrics = {
        "initial_objective": {
            "data": init_terms[0], "pf": init_terms[1], "top": init_terms[2],
            "total": sum(init_terms),
        },
        "final_objective": {
            "data": final_terms[0], "pf": final_terms[1], "top": final_terms[2],
            "total": sum(final_terms),
        },
        "iterations": result.iterations,
        "converged": result.converged,
        "epochs": epochs,
        "pf_bound": pf_rep,
        "separable": {"printed": sep_printed, "consistent": sep_consistent},
    }

    if "refine" in deep:
        direction = deep["refine"]["direction"]
        scale = deep["refine"]["scale"]
        a_mat = scale * result.model.layers[-1].output
        pf = pf_product_norm(result.model, ds.x, probes)
        top = top_layer_norm(result.model)
        try:
            refined = refine_kernel(result.model, a_mat, direction)
            tr_a = float(np.trace(refined.layers[0].output))
            after = separable_bound(
                refined, kappa, tr_a, ds.n, "consistent", pf_norm=pf, top_norm=top
            )
            metrics["refinement"] = {
                "direction": direction,
                "scale": scale,
                "accepted": True,
                "separable_consistent_before": sep_consistent,
                "separable_consistent_after_frozen_factors": after,
            }
        except RefinementOrderError as exc:
            metrics["refinement"] = {
                "direction": direction,
                "scale": scale,
                "accepted": False,
                "reason": str(exc),
            }

    if "lambda1_sweep" in deep:
        sweep = []
        for lam1 in deep["lambda1_sweep"]:
            cfg_l = TrainConfig(
                lambda1=lam1, lambda2=t_cfg.lambda2, step=t_cfg.step,
                iters=t_cfg.iters, grad_mode=t_cfg.grad_mode, seed=train_seed,
                tol=t_cfg.tol,
            )
            model_l = init_layered_model(ds.x, kernels, outputs, seed=train_seed)
            res_l = train(model_l, ds.x, ds.y, cfg_l)
            sweep.append(
                {
                    "lambda1": lam1,
                    "final_pf_norm": pf_product_norm(res_l.model, ds.x, probes),
                }
            )
        metrics["lambda1_sweep"] = sweep

    if "checkpoint_out" in deep:
        # written last, after every metric computed, so failures leave nothing
        ckpt_path = Path(deep["checkpoint_out"])
        if not ckpt_path.is_absolute():
            ckpt_path = base_dir / ckpt_path
        with open(ckpt_path, "w") as fh:
            json.dump(_jsonify(model_to_dict(result.model)), fh, indent=2)
        metrics["checkpoint"] = deep["checkpoint_out"]

    return {"metrics": metrics, "resolved_seeds": {**seeds, "train": train_seed}}


def _run_spectral(config: dict, seed: int, base_dir: Path) -> dict:
    ds, seeds = _build_dataset(config["dataset"], derive_seed(seed, 1), base_dir)
    kernel = _build_kernel(config["kernel"], config["dataset"]["d"], config["dataset"]["m"])
    g_k = gram_scalar(kernel.scalar, ds.x)
    dec = eigendecompose_scaled_gram(g_k, ds.n)
    delta_sq = critical_radius(dec.mu)
    d_n = statistical_dimension(dec.mu, delta_sq)
    metrics = {
        "delta_sq": delta_sq,
        "d_n": d_n,
        "eigenvalues_top": dec.mu[: min(32, ds.n)].tolist(),
    }
    resolved = dict(seeds)
    if "sketch" in config:
        sk_seed = config["sketch"].get("seed", derive_seed(seed, 2))
        sketch, sk_p = _build_sketch(config["sketch"], ds.n, sk_seed)
        c_val = satisfiability_constant(sk_p)
        metrics["satisfiability"] = check_satisfiability(
            sketch, dec, d_n, delta_sq, c_val
        ).to_dict()
        resolved["sketch"] = sk_seed
    return {"metrics": metrics, "resolved_seeds": resolved}


_RUNNERS = {
    "bound-compare": _run_bound_compare,
    "sketch-regress": _run_sketch_regress,
    "deep-vvrkhs": _run_deep,
    "spectral-report": _run_spectral,
}


def run(subcommand: str, config: dict, seed: int | None, base_dir: Path) -> dict:
    """Validate, execute, and assemble a result record (not yet serialized)."""
    validate_config(subcommand, config)
    master = seed if seed is not None else config.get("seed", 0)
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # pragma: no cover
        outcome = _RUNNERS[subcommand](config, master, base_dir)
    else:
        with threadpool_limits(limits=1):
            outcome = _RUNNERS[subcommand](config, master, base_dir)
    return {
        "subcommand": subcommand,
        "library_version": __version__,
        "seed": master,
        "resolved_seeds": outcome["resolved_seeds"],
        "config": config,
        "metrics": outcome["metrics"],
    }


def _flatten(prefix: str, obj, out: list) -> None:
    if isinstance(obj, dict):
        for k, v in obj.items():
            _flatten(f"{prefix}.{k}" if prefix else str(k), v, out)
    elif isinstance(obj, list):
        for i, v in enumerate(obj):
            _flatten(f"{prefix}[{i}]", v, out)
    else:
        out.append((prefix, obj))


def render_record(record: dict, fmt: str) -> str:
    record = _jsonify(record)
    if fmt == "json":
        return json.dumps(record, indent=2) + "\n"
    rows: list = []
    _flatten("", record["metrics"], rows)
    lines = ["metric,value"]
    lines += [f"{k},{v}" for k, v in rows]
    return "\n".join(lines) + "\n"


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="opbounds",
        description="Generalization-bound experiment harness",
    )
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", required=True)
    parser.add_argument("--out", required=True)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--format", choices=("json", "csv"), default="json")
    args = parser.parse_args(argv)

    config_path = Path(args.config)
    started = time.perf_counter()
    try:
        with open(config_path) as fh:
            config = json.load(fh)
        if not isinstance(config, dict):
            raise ConfigError("config root must be a JSON object")
        record = run(args.subcommand, config, args.seed, config_path.parent)
        payload = render_record(record, args.format)
    except OpboundsError as exc:
        err = {"error": exc.category, "message": str(exc)}
        print(json.dumps(err), file=sys.stderr)
        return 2
    except (OSError, json.JSONDecodeError) as exc:
        print(json.dumps({"error": "io", "message": str(exc)}), file=sys.stderr)
        return 2
    # output is written only after the whole run succeeded
    with open(args.out, "w") as fh:
        fh.write(payload)
    elapsed = time.perf_counter() - started
    print(f"{args.subcommand}: wrote {args.out} in {elapsed:.3f}s", file=sys.stderr)
    return 0
