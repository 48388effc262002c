"""Learnable scene representation: embedding, occupancy and reflectance fields.

chi = mlp_chi(H(x));  alpha = sigmoid(mlp_alpha(chi));
rho_gamma = softplus(mlp_rho_gamma([chi, SH(d)])).

Gradients are exact reverse mode, written out by hand per layer.
"""
from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from . import kernels
from .encodings import SH_DIM, HashGrid, HashGridConfig, hash_encode, hash_encode_backward, sh_encode
from .errors import NonFiniteGradient, NotUnitVector, OutOfBounds, ShapeMismatch


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softplus(x):
    return np.logaddexp(0.0, x)


class MLP:
    """Dense ReLU network with a linear final layer."""

    def __init__(self, sizes, rng, dtype=np.float64, zero_last=False):
        self.sizes = tuple(int(s) for s in sizes)
        self.weights = []
        self.biases = []
        for i, (n_in, n_out) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            last = i == len(self.sizes) - 2
            if last and zero_last:
                w = np.zeros((n_in, n_out), dtype=dtype)
            else:
                # He-uniform on fan-in
                lim = np.sqrt(6.0 / n_in)
                w = rng.uniform(-lim, lim, size=(n_in, n_out)).astype(dtype)
            self.weights.append(w)
            self.biases.append(np.zeros(n_out, dtype=dtype))

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def forward(self, x):
        """Returns (output, cache) where cache holds each layer's input."""
        cache = []
        h = x
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            cache.append(h)
            h = h @ w + b
            if i < self.n_layers - 1:
                h = np.maximum(h, 0.0)
        return h, cache

    def backward(self, cache, grad_out, need_input_grad=True):
        """Returns (grad wrt input, [dW...], [db...])."""
        g = grad_out
        dws = [None] * self.n_layers
        dbs = [None] * self.n_layers
        for i in reversed(range(self.n_layers)):
            h_in = cache[i]
            dws[i] = h_in.T @ g
            dbs[i] = g.sum(axis=0)
            if i == 0 and not need_input_grad:
                return None, dws, dbs
            g = g @ self.weights[i].T
            if i > 0:
                # h_in is the post-ReLU activation of layer i-1
                g = g * (h_in > 0)
        return g, dws, dbs


@dataclass
class FieldConfig:
    hash: HashGridConfig = field(default_factory=HashGridConfig)
    chi_dim: int = 15
    chi_hidden: tuple = (64, 64)
    alpha_hidden: tuple = (32,)
    rho_gamma_hidden: tuple = (64, 64)
    dtype: str = "float64"

    def to_dict(self) -> dict[str, Any]:
        return {
            "hash": self.hash.to_dict(),
            "chi_dim": self.chi_dim,
            "chi_hidden": list(self.chi_hidden),
            "alpha_hidden": list(self.alpha_hidden),
            "rho_gamma_hidden": list(self.rho_gamma_hidden),
            "dtype": self.dtype,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "FieldConfig":
        d = dict(d)
        if "hash" in d:
            d["hash"] = HashGridConfig.from_dict(d["hash"])
        for k in ("chi_hidden", "alpha_hidden", "rho_gamma_hidden"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)


@dataclass
class FieldCache:
    """Forward intermediates for one batch of points."""

    x: np.ndarray
    active_levels: int
    chi_cache: list
    alpha_cache: list
    rg_cache: list
    alpha_logit: np.ndarray
    rg_logit: np.ndarray
    alpha: np.ndarray
    rho_gamma: np.ndarray
    chi: np.ndarray


class FieldModel:
    def __init__(self, cfg: FieldConfig, seed=0):
        self.cfg = cfg
        dtype = np.dtype(cfg.dtype)
        rng = np.random.default_rng(seed)
        self.grid = HashGrid.create(cfg.hash, rng, dtype=dtype)
        self.mlp_chi = MLP((cfg.hash.n_features, *cfg.chi_hidden, cfg.chi_dim), rng, dtype)
        self.mlp_alpha = MLP((cfg.chi_dim, *cfg.alpha_hidden, 1), rng, dtype, zero_last=True)
        self.mlp_rho_gamma = MLP((cfg.chi_dim + SH_DIM, *cfg.rho_gamma_hidden, 1), rng, dtype, zero_last=True)

    @property
    def dtype(self):
        return self.grid.tables.dtype

    def parameters(self) -> "OrderedDict[str, np.ndarray]":
        """All learnable arrays in declared (checkpoint) order; values are live references."""
        params = OrderedDict()
        params["hash.tables"] = self.grid.tables
        for name, mlp in (("chi", self.mlp_chi), ("alpha", self.mlp_alpha), ("rho_gamma", self.mlp_rho_gamma)):
            for i in range(mlp.n_layers):
                params[f"{name}.W{i}"] = mlp.weights[i]
                params[f"{name}.b{i}"] = mlp.biases[i]
        return params

    def set_parameters(self, values) -> None:
        for name, arr in self.parameters().items():
            new = np.asarray(values[name])
            if new.shape != arr.shape:
                raise ShapeMismatch(f"{name}: {new.shape} != {arr.shape}")
            arr[...] = new

    def copy(self) -> "FieldModel":
        other = FieldModel.__new__(FieldModel)
        other.cfg = self.cfg
        other.grid = HashGrid(self.cfg.hash, self.grid.tables.copy())
        for name in ("mlp_chi", "mlp_alpha", "mlp_rho_gamma"):
            src = getattr(self, name)
            dst = MLP.__new__(MLP)
            dst.sizes = src.sizes
            dst.weights = [w.copy() for w in src.weights]
            dst.biases = [b.copy() for b in src.biases]
            setattr(other, name, dst)
        return other

    # ------------------------------------------------------------------ forward

    def forward(self, x, d, active_levels=None, check=True):
        """Evaluate all fields at points ``x`` (M,3) seen along unit directions ``d`` (M,3).

        Returns (alpha (M,), rho_gamma (M,), chi (M,d_chi), cache).
        """
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        d = np.atleast_2d(np.asarray(d, dtype=np.float64))
        if x.shape != d.shape:
            raise ShapeMismatch(f"x {x.shape} vs d {d.shape}")
        if active_levels is None:
            active_levels = self.cfg.hash.n_levels
        if check and not np.all(self.cfg.hash.contains(x)):
            raise OutOfBounds("point outside field bounds")
        if check and np.any(np.abs(np.linalg.norm(d, axis=-1) - 1.0) > 1e-6):
            raise NotUnitVector("view direction must have unit norm")
        dt = self.dtype
        feats = hash_encode(x, self.grid, active_levels, check=False)
        chi, chi_cache = self.mlp_chi.forward(feats)
        a_logit, a_cache = self.mlp_alpha.forward(chi)
        rg_in = np.concatenate([chi, sh_encode(d, check=False).astype(dt)], axis=1)
        rg_logit, rg_cache = self.mlp_rho_gamma.forward(rg_in)
        alpha = sigmoid(a_logit[:, 0])
        rho_gamma = softplus(rg_logit[:, 0])
        cache = FieldCache(x, active_levels, chi_cache, a_cache, rg_cache,
                           a_logit[:, 0], rg_logit[:, 0], alpha, rho_gamma, chi)
        return alpha, rho_gamma, chi, cache

    # ----------------------------------------------------------------- backward

    def backward(self, cache: FieldCache, g_alpha, g_rho_gamma, grads=None):
        """Reverse-mode gradients for upstream dL/dalpha and dL/d(rho_gamma), both (M,).

        Accumulates into ``grads`` (dict keyed like parameters()) when given.
        """
        g_alpha = np.asarray(g_alpha, dtype=self.dtype)
        g_rg = np.asarray(g_rho_gamma, dtype=self.dtype)
        m = cache.alpha.shape[0]
        if g_alpha.shape != (m,) or g_rg.shape != (m,):
            raise ShapeMismatch(f"upstream shapes {g_alpha.shape}, {g_rg.shape} vs ({m},)")
        if grads is None:
            grads = zero_grads(self)

        g_alogit = (g_alpha * cache.alpha * (1.0 - cache.alpha))[:, None]
        g_rglogit = (g_rg * sigmoid(cache.rg_logit))[:, None]

        g_chi_a, dws, dbs = self.mlp_alpha.backward(cache.alpha_cache, g_alogit)
        _acc(grads, "alpha", dws, dbs)
        g_rg_in, dws, dbs = self.mlp_rho_gamma.backward(cache.rg_cache, g_rglogit)
        _acc(grads, "rho_gamma", dws, dbs)
        g_chi = g_chi_a + g_rg_in[:, :self.cfg.chi_dim]
        g_feat, dws, dbs = self.mlp_chi.backward(cache.chi_cache, g_chi)
        _acc(grads, "chi", dws, dbs)
        hash_encode_backward(cache.x, self.grid, cache.active_levels, g_feat, grad=grads["hash.tables"])
        return grads


def _acc(grads, name, dws, dbs):
    for i, (dw, db) in enumerate(zip(dws, dbs)):
        grads[f"{name}.W{i}"] += dw
        grads[f"{name}.b{i}"] += db


def zero_grads(model: FieldModel):
    return OrderedDict((k, np.zeros_like(v)) for k, v in model.parameters().items())


def eval_fields(model: FieldModel, x, d, active_levels=None):
    """(alpha, rho_gamma, chi) at points ``x`` along directions ``d``."""
    alpha, rg, chi, _ = model.forward(x, d, active_levels)
    return alpha, rg, chi


class Adam:
    """Bias-corrected adaptive-moment optimizer over a dict of arrays, updated in place."""

    def __init__(self, lr=1e-2, beta1=0.9, beta2=0.99, eps=1e-15, lr_scale=None):
        self.lr = lr
        self.lr_scale = dict(lr_scale or {})  # per-parameter multiplier on lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = {}
        self.v = {}

    def state_dict(self):
        return {"lr": self.lr, "beta1": self.beta1, "beta2": self.beta2, "eps": self.eps,
                "step": self.step_count,
                "m": {k: v.copy() for k, v in self.m.items()},
                "v": {k: v.copy() for k, v in self.v.items()}}

    def step(self, params, grads) -> None:
        for k, p in params.items():
            g = grads[k]
            if g.shape != p.shape:
                raise ShapeMismatch(f"{k}: grad {g.shape} vs param {p.shape}")
            if not np.all(np.isfinite(g)):
                raise NonFiniteGradient(f"non-finite gradient in {k}")
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for k, p in params.items():
            g = grads[k]
            if k not in self.m:
                self.m[k] = np.zeros_like(p)
                self.v[k] = np.zeros_like(p)
            lr = self.lr * self.lr_scale.get(k, 1.0)
            kernels.adam_update(p.reshape(-1), np.ascontiguousarray(g).reshape(-1),
                                self.m[k].reshape(-1), self.v[k].reshape(-1),
                                lr / bc1, self.beta1, self.beta2, self.eps, 1.0 / bc2)


def optimizer_step(params, grads, state: Adam):
    """Functional alias: apply one Adam update in place and return (params, state)."""
    state.step(params, grads)
    return params, state
