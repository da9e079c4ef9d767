"""Seeded random projection from raw observations to state keys.

Weights come from numpy's ``PCG64`` bit generator seeded with the projection
seed, and ``Generator.standard_normal`` (ziggurat) fills the matrix in
row-major order. Both algorithms are versioned by numpy, so a
``(seed, rows, cols)`` triple names one matrix on every platform.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InputError

RNG_ALGORITHM = "numpy.PCG64/standard_normal"


@dataclass(frozen=True)
class ProjectionMatrix:
    seed: int
    rows: int
    cols: int
    weights: np.ndarray = field(repr=False, compare=False)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ProjectionMatrix):
            return NotImplemented
        return (
            (self.seed, self.rows, self.cols) == (other.seed, other.rows, other.cols)
            and np.array_equal(self.weights, other.weights)
        )

    __hash__ = None  # type: ignore[assignment]


def new_projection(seed: int, in_dim: int, out_dim: int) -> ProjectionMatrix:
    """Build the ``out_dim x in_dim`` standard-normal projection for ``seed``."""
    if in_dim < 1 or out_dim < 1:
        raise ConfigError(f"projection dimensions must be >= 1, got in={in_dim} out={out_dim}",
                          key="proj-dim")
    if not 0 <= seed < 2**64:
        raise ConfigError(f"projection seed must be a 64-bit unsigned integer, got {seed}",
                          key="seed")
    rng = np.random.Generator(np.random.PCG64(seed))
    weights = rng.standard_normal((out_dim, in_dim))
    weights.setflags(write=False)
    return ProjectionMatrix(seed=int(seed), rows=out_dim, cols=in_dim, weights=weights)


def embed(proj: ProjectionMatrix, observation) -> np.ndarray:
    """Return the state key ``proj.weights @ observation`` as a float64 vector."""
    obs = np.asarray(observation, dtype=np.float64)
    if obs.ndim != 1 or obs.shape[0] != proj.cols:
        raise InputError(f"observation has shape {obs.shape}, projection expects ({proj.cols},)")
    return proj.weights @ obs
