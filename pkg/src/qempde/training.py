"""Gradient-descent training of the circuit against the composite loss."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .ansatz import AnsatzSpec, mean_fidelity
from .errors import ConfigurationError, TrainingAborted
from .noise import NoiseConfig
from .pde import PdeProblem, collocation_array, loss_and_gradient

log = logging.getLogger(__name__)


class Adam:
    def __init__(self, size: int, lr: float = 0.01, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1**self.t)
        v_hat = self.v / (1 - self.beta2**self.t)
        return params - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class SGD:
    def __init__(self, size: int, lr: float = 0.01):
        self.lr = lr

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        return params - self.lr * grad


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    lr: float = 0.01
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    noise: NoiseConfig | None = None
    zne_wrapped: bool = False
    zne_scales: tuple[float, ...] = (1.0, 2.0, 3.0)
    init_scale: float = 0.1
    # "constant" or "cosine" (anneals lr towards lr_min over the run)
    schedule: str = "constant"
    lr_min: float = 0.0

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigurationError("epochs must be >= 1")
        if not self.lr > 0:
            raise ConfigurationError("learning rate must be positive")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigurationError(f"unknown optimizer {self.optimizer!r}")
        if self.schedule not in ("constant", "cosine"):
            raise ConfigurationError(f"unknown schedule {self.schedule!r}")
        if not 0 <= self.lr_min <= self.lr:
            raise ConfigurationError("lr_min must lie in [0, lr]")

    def lr_at(self, epoch: int) -> float:
        if self.schedule == "constant" or self.epochs == 1:
            return self.lr
        frac = epoch / (self.epochs - 1)
        return self.lr_min + 0.5 * (self.lr - self.lr_min) * (1 + np.cos(np.pi * frac))


@dataclass
class TrainTrace:
    losses: list[float]
    theta: np.ndarray
    fidelity: float | None = None
    data_losses: list[float] = field(default_factory=list)
    phys_losses: list[float] = field(default_factory=list)
    flags: list[str] = field(default_factory=list)

    @property
    def floor(self) -> float:
        """Mean loss over the last 10% of epochs (at least one)."""
        k = max(1, len(self.losses) // 10)
        return float(np.mean(self.losses[-k:]))


def init_parameters(spec: AnsatzSpec, seed: int, scale: float = 0.1) -> np.ndarray:
    """Uniform angles in ``[-scale, scale]`` (near-identity start)."""
    return np.random.default_rng(seed).uniform(-scale, scale, spec.param_count)


def train(spec: AnsatzSpec, problem: PdeProblem, cfg: TrainConfig, theta0=None, callback=None) -> TrainTrace:
    """Run ``cfg.epochs`` optimiser steps; ``losses[k]`` is the loss at the start of step ``k``."""
    theta = init_parameters(spec, cfg.seed, cfg.init_scale) if theta0 is None else np.array(theta0, dtype=float)
    if cfg.optimizer == "adam":
        opt = Adam(theta.size, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
    else:
        opt = SGD(theta.size, cfg.lr)
    zne = cfg.zne_scales if cfg.zne_wrapped else None
    losses, dl, pl, flags = [], [], [], []
    for epoch in range(cfg.epochs):
        parts, grad = loss_and_gradient(spec, theta, problem, cfg.noise, zne)
        if not np.isfinite(parts.total) or not np.all(np.isfinite(grad)):
            raise TrainingAborted(f"non-finite loss at epoch {epoch}", losses)
        if parts.dry and "dry_state" not in flags:
            flags.append("dry_state")
        losses.append(parts.total)
        dl.append(parts.data)
        pl.append(parts.phys)
        opt.lr = cfg.lr_at(epoch)
        theta = opt.step(theta, grad)
        if not np.all(np.isfinite(theta)):
            raise TrainingAborted(f"non-finite parameters after epoch {epoch}", losses)
        if callback is not None:
            callback(epoch, parts, theta)
        if epoch % 50 == 0:
            log.debug("epoch %d loss %.6g", epoch, parts.total)
    trace = TrainTrace(losses, theta, data_losses=dl, phys_losses=pl, flags=flags)
    if cfg.noise is not None and not cfg.noise.is_trivial:
        trace.fidelity = mean_fidelity(spec, theta, collocation_array(problem), cfg.noise)
    return trace
