"""Seeded random streams.

All randomness goes through a Philox counter-based generator keyed by
(seed, stream), so draws for different purposes never overlap and a given
seed reproduces the same instance on every platform.
"""
import numpy as np

from main.config import RNG_NAME

STREAM_SUPPORT = 1
STREAM_MATRIX = 2
STREAM_NOISE = 3
STREAM_STARTS = 4
STREAM_SCORING = 5

_MASK64 = (1 << 64) - 1


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    sequence = np.random.SeedSequence([int(seed) & _MASK64, int(stream)])
    return np.random.Generator(np.random.Philox(sequence))


def generator_name() -> str:
    return RNG_NAME


def sample_in_ball(rng: np.random.Generator, count: int, dim: int, radius: float) -> np.ndarray:
    """`count` points uniformly distributed in the closed ball of `radius` in R^dim."""
    directions = rng.standard_normal((count, dim))
    norms = np.linalg.norm(directions, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    radii = radius * rng.random((count, 1)) ** (1.0 / dim)
    return directions / norms * radii
