"""Stochastic transmission-design policies trained by REINFORCE."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MU_FLOOR = 0.01


@dataclass
class DesignSample:
    raw: np.ndarray  # draw used in the score function
    used: np.ndarray  # design handed to the environment


@dataclass
class GaussianDesignPolicy:
    """Independent N(mu_l, sigma_l^2) capacity increments in MW."""

    mu: np.ndarray
    sigma: np.ndarray
    mode = "continuous"

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=float).copy()
        self.sigma = np.broadcast_to(np.asarray(self.sigma, dtype=float), self.mu.shape).copy()
        if np.any(self.sigma <= 0):
            raise ValueError("sigma must be positive")

    @classmethod
    def initial(cls, n_lines, sigma=5.0, mu=0.0):
        return cls(np.full(n_lines, mu), np.full(n_lines, sigma))

    def sample(self, rng):
        raw = self.mu + self.sigma * rng.standard_normal(self.mu.shape)
        return DesignSample(raw, np.maximum(raw, 0.0))

    def log_prob_grad(self, omega):
        omega = np.asarray(omega, dtype=float)
        if omega.shape != self.mu.shape:
            raise ValueError("design dimension mismatch")
        return (omega - self.mu) / self.sigma**2

    def clamp(self):
        pass

    def finalize(self):
        return np.maximum(self.mu, 0.0)


@dataclass
class BernoulliDesignPolicy:
    """Independent upgrade flags with P(z_l = 1) = mu_l."""

    mu: np.ndarray
    mu_floor: float = MU_FLOOR
    mode = "discrete"

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=float).copy()
        if not 0 < self.mu_floor < 0.5:
            raise ValueError("mu_floor must lie in (0, 0.5)")
        self.clamp()

    @classmethod
    def initial(cls, n_lines, mu=0.5, mu_floor=MU_FLOOR):
        return cls(np.full(n_lines, mu), mu_floor)

    def sample(self, rng):
        z = (rng.random(self.mu.shape) < self.mu).astype(float)
        return DesignSample(z, z.copy())

    def log_prob_grad(self, omega):
        z = np.asarray(omega, dtype=float)
        if z.shape != self.mu.shape:
            raise ValueError("design dimension mismatch")
        if not np.all((z == 0) | (z == 1)):
            raise ValueError("Bernoulli designs must be 0/1")
        return np.where(z == 1, 1.0 / self.mu, -1.0 / (1.0 - self.mu))

    def clamp(self):
        np.clip(self.mu, self.mu_floor, 1.0 - self.mu_floor, out=self.mu)

    def finalize(self):
        return (self.mu > 0.5).astype(float)


def finalize_design(policy):
    """Gaussian: max(0, mu); Bernoulli: 1 where mu > 0.5."""
    return policy.finalize()


def expansion_cost(design, case, mode="continuous", fixed_increment=0.0):
    """Annual cost sum_l c_l * z_l * dL_l over the candidate lines."""
    d = np.asarray(design, dtype=float)
    cand = case.candidates
    if d.shape != (len(cand),):
        raise ValueError(f"design has {d.size} entries, expected {len(cand)}")
    if mode == "discrete":
        d = d * fixed_increment
    return float(sum(case.lines[k].expansion_cost * v for k, v in zip(cand, d)))


@dataclass
class BaselineState:
    """Exponential moving average of the episode return."""

    decay: float = 0.95
    value: float | None = None

    def update(self, g):
        self.value = g if self.value is None else self.decay * self.value + (1.0 - self.decay) * g


@dataclass
class RunningStd:
    """Welford running variance of advantages, for normalisation."""

    count: int = 0
    mean: float = 0.0
    m2: float = 0.0

    def push(self, x):
        self.count += 1
        d = x - self.mean
        self.mean += d / self.count
        self.m2 += d * (x - self.mean)

    @property
    def std(self):
        return float(np.sqrt(self.m2 / (self.count - 1))) if self.count > 1 else 0.0


@dataclass
class DesignUpdater:
    """Buffers (omega, G_total) pairs and applies the REINFORCE step every ``n_up`` episodes."""

    policy: object
    lr: float
    n_up: int = 10
    normalize: bool = False
    baseline: BaselineState = field(default_factory=BaselineState)
    scale: RunningStd = field(default_factory=RunningStd)
    pending: list = field(default_factory=list)
    n_updates: int = 0

    def __post_init__(self):
        if self.n_up < 1:
            raise ValueError("n_up must be at least 1")
        if not self.lr > 0:
            raise ValueError("design learning rate must be positive")

    def record_and_maybe_update(self, omega, g_total):
        """Store one episode; returns True when an update was applied."""
        if self.baseline.value is None:
            self.baseline.value = float(g_total)
        adv = float(g_total) - self.baseline.value
        self.pending.append((np.asarray(omega, dtype=float), adv))
        self.baseline.update(float(g_total))
        if self.normalize:
            self.scale.push(adv)
        if len(self.pending) < self.n_up:
            return False
        div = 1.0
        if self.normalize:
            div = self.scale.std if self.scale.std > 0 else 1.0
        grad = sum(self.policy.log_prob_grad(w) * (a / div) for w, a in self.pending) / len(self.pending)
        self.policy.mu += self.lr * grad
        self.policy.clamp()
        self.pending.clear()
        self.n_updates += 1
        return True
