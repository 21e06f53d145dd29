"""SDE model description shared by the path simulator and the density solver."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigError
from .flow import NoiseCoefficient
from .levy import LevyTriplet

__all__ = ["PointInitial", "GaussianInitial", "ModelSpec"]


@dataclass(frozen=True)
class PointInitial:
    """Deterministic initial state."""

    x: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", np.atleast_1d(np.asarray(self.x, float)))

    @property
    def d(self) -> int:
        return self.x.shape[0]

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return np.tile(self.x, (size, 1))

    def density(self, points: np.ndarray) -> np.ndarray:
        raise ConfigError("a point initial state has no density; use a normal initial")


@dataclass(frozen=True)
class GaussianInitial:
    """Independent Gaussian initial state with per-coordinate mean and std."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, float))
        std = np.atleast_1d(np.asarray(self.std, float))
        if std.shape != mean.shape:
            raise ConfigError("initial mean and std must have matching shapes")
        if np.any(std <= 0):
            raise ConfigError("initial std must be positive")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    @property
    def d(self) -> int:
        return self.mean.shape[0]

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return self.mean + self.std * rng.standard_normal((size, self.d))

    def density(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, float)
        z = (pts - self.mean) / self.std
        norm = np.prod(self.std) * (2.0 * np.pi) ** (self.d / 2.0)
        return np.exp(-0.5 * np.sum(z * z, axis=-1)) / norm


Initial = PointInitial | GaussianInitial


@dataclass
class ModelSpec:
    """A Marcus SDE: drift f, noise coefficient sigma, driver triplet, initial law.

    ``drift`` maps (m, d) point batches to (m, d) vectors.  ``closed_inverse``
    and ``closed_forward``, when registered, are vectorized closed forms of the
    inverse/forward jump maps used instead of the numeric flow:
    closed_inverse(u, v) -> (points, jac_dets), closed_forward(u, v) -> points.
    """

    drift: Callable[[np.ndarray], np.ndarray]
    noise: NoiseCoefficient
    driver: LevyTriplet
    x0: Initial
    closed_inverse: Callable | None = None
    closed_forward: Callable | None = None
    flow_steps: int = 50
    model_id: str = "custom"

    def __post_init__(self):
        if self.driver.n != self.noise.n:
            raise ConfigError(
                f"driver dimension {self.driver.n} != noise columns {self.noise.n}"
            )
        if self.x0.d != self.noise.d:
            raise ConfigError(
                f"initial state dimension {self.x0.d} != state dimension {self.noise.d}"
            )
        probe = self.drift(np.zeros((1, self.d)))
        if np.shape(probe) != (1, self.d):
            raise ConfigError(
                f"drift must map (m, {self.d}) to (m, {self.d}), got {np.shape(probe)}"
            )

    @property
    def d(self) -> int:
        return self.noise.d

    @property
    def n(self) -> int:
        return self.noise.n
