"""Adam-based MAP training loop and a finite-difference gradient checker.

Models expose their parameters as a dict of named arrays and a loss function
``f(params) -> (value, grads)`` with grads in the same layout. ``Packer``
flattens such dicts into one vector in a fixed key order so the optimizer can
stay generic.
"""
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np


class NumericalError(RuntimeError):
    """A loss or gradient became non-finite during training."""


SAMPLERS = ("full", "random_block", "case_control")


@dataclass
class TrainConfig:
    learning_rate: float = 0.05
    iterations: int = 3000
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    reg_strength: Optional[float] = None  # None -> model default
    seed: int = 0
    sampler: str = "full"
    sample_size: Optional[int] = None
    multiplier: float = 5.0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if int(self.iterations) < 1:
            raise ValueError("iterations must be >= 1")
        self.iterations = int(self.iterations)
        for name in ("adam_beta1", "adam_beta2"):
            b = getattr(self, name)
            if not 0 < b < 1:
                raise ValueError(f"{name} must lie in (0, 1)")
        if not self.adam_eps > 0:
            raise ValueError("adam_eps must be positive")
        if self.reg_strength is not None and self.reg_strength < 0:
            raise ValueError("reg_strength must be nonnegative")
        if self.sampler not in SAMPLERS:
            raise ValueError(f"sampler must be one of {SAMPLERS}")
        if self.sampler == "random_block" and (self.sample_size is None or self.sample_size < 2):
            raise ValueError("random_block sampler needs sample_size >= 2")
        if self.sampler == "case_control" and self.multiplier < 1:
            raise ValueError("case_control multiplier must be >= 1")

    def rho(self, default: float) -> float:
        return float(default if self.reg_strength is None else self.reg_strength)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        unknown = set(d) - set(known)
        if unknown:
            raise ValueError(f"unknown train options: {sorted(unknown)}")
        return cls(**known)


@dataclass
class LossReport:
    trace: List[float] = field(default_factory=list)
    grad_inf_norm: float = float("nan")


class Packer:
    """Flatten ``{name: array}`` into a vector and back, in a fixed key order."""

    def __init__(self, template: Dict[str, np.ndarray], keys=None):
        self.keys = list(keys) if keys is not None else list(template)
        self.shapes = [np.shape(template[k]) for k in self.keys]
        sizes = [int(np.prod(s)) for s in self.shapes]
        self.offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(int)

    @property
    def size(self) -> int:
        return int(self.offsets[-1])

    def pack(self, d: Dict[str, np.ndarray]) -> np.ndarray:
        if not self.keys:
            return np.zeros(0)
        return np.concatenate([np.asarray(d[k], dtype=float).ravel() for k in self.keys])

    def unpack(self, x: np.ndarray) -> Dict[str, np.ndarray]:
        return {k: x[self.offsets[n]:self.offsets[n + 1]].reshape(self.shapes[n])
                for n, k in enumerate(self.keys)}


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, size: int) -> "AdamState":
        return cls(np.zeros(size), np.zeros(size), 0)


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState, cfg: TrainConfig) -> np.ndarray:
    """One bias-corrected Adam update; ``state`` is advanced in place."""
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise ValueError("params, grads and moments must share a shape")
    if not np.all(np.isfinite(grads)):
        bad = np.flatnonzero(~np.isfinite(grads))
        raise NumericalError(f"non-finite gradient at {len(bad)} coordinates (first {bad[:5].tolist()})")
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    state.t += 1
    state.m = b1 * state.m + (1.0 - b1) * grads
    state.v = b2 * state.v + (1.0 - b2) * grads * grads
    mhat = state.m / (1.0 - b1 ** state.t)
    vhat = state.v / (1.0 - b2 ** state.t)
    return params - cfg.learning_rate * mhat / (np.sqrt(vhat) + cfg.adam_eps)


def check_gradients(loss_fn: Callable, params, rel_tol: float = 1e-5, return_detail=False):
    """Compare analytic and central-difference gradients.

    ``loss_fn(params) -> (value, grads)`` where ``params`` is either a flat
    vector or a dict of arrays. The step per coordinate is
    ``1e-5 * (1 + |theta|)``. Returns ``max |fd - analytic| / (1 + |analytic|)``.
    """
    if isinstance(params, dict):
        packer = Packer(params)

        def flat(x):
            val, g = loss_fn(packer.unpack(x))
            return val, packer.pack(g)

        x0 = packer.pack(params)
    else:
        flat = loss_fn
        x0 = np.asarray(params, dtype=float).ravel()
    _, analytic = flat(x0.copy())
    analytic = np.asarray(analytic, dtype=float).ravel()
    numeric = np.empty_like(x0)
    for k in range(len(x0)):
        h = 1e-5 * (1.0 + abs(x0[k]))
        xp = x0.copy()
        xm = x0.copy()
        xp[k] += h
        xm[k] -= h
        numeric[k] = (flat(xp)[0] - flat(xm)[0]) / (2.0 * h)
    dev = np.abs(numeric - analytic) / (1.0 + np.abs(analytic))
    worst = float(dev.max()) if len(dev) else 0.0
    if return_detail:
        return worst, analytic, numeric
    return worst


def minimize(loss_fn: Callable, params: Dict[str, np.ndarray], cfg: TrainConfig,
             callback: Optional[Callable] = None, trainable=None):
    """Run ``cfg.iterations`` Adam steps on ``loss_fn``.

    ``loss_fn(params, step) -> (value, grads)``; ``callback(step, params)``
    may return a replacement loss function (used e.g. for periodic tree
    rebuilds). Only keys in ``trainable`` (default: all) are updated.
    Returns (params, LossReport). The recorded loss at step ``k`` is the
    value at the parameters before update ``k``.
    """
    keys = list(trainable) if trainable is not None else list(params)
    packer = Packer(params, keys)
    fixed = {k: v for k, v in params.items() if k not in keys}
    x = packer.pack(params)
    state = AdamState.zeros(packer.size)
    report = LossReport()
    g = np.zeros_like(x)
    for step in range(cfg.iterations):
        current = dict(fixed)
        current.update(packer.unpack(x))
        if callback is not None:
            new_fn = callback(step, current)
            if new_fn is not None:
                loss_fn = new_fn
        value, grads = loss_fn(current, step)
        if not np.isfinite(value):
            raise NumericalError(f"non-finite loss at iteration {step}")
        report.trace.append(float(value))
        g = packer.pack(grads)
        x = adam_step(x, g, state, cfg)
    out = dict(fixed)
    out.update({k: v.copy() for k, v in packer.unpack(x).items()})
    report.grad_inf_norm = float(np.max(np.abs(g))) if len(g) else 0.0
    return out, report
