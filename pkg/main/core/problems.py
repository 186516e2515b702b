"""
Test-problem families: the two-component toy map, linear maps with a
Lipschitz perturbation, real phase retrieval, decaying sparse vectors and
Bernoulli-Gaussian impulsive noise. Every generator is a pure function of its
seed (see main.core.rng).
"""
import enum
import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from main.core.exceptions import IndexOutOfRange, InvalidDimensions
from main.core.residual import ResidualMap
from main.core.rng import (
    STREAM_MATRIX,
    STREAM_NOISE,
    STREAM_SUPPORT,
    generator_name,
    make_rng,
)

logger = logging.getLogger(__name__)


class ProblemFamily(str, enum.Enum):
    SIMPLE_1D = "simple_1d"
    LINEAR = "linear"
    PERTURBED_RIP = "perturbed_rip"
    PHASE_RETRIEVAL = "phase_retrieval"


class LinearMap(ResidualMap):
    def __init__(self, matrix, overdetermined: bool = True):
        self.matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
        super().__init__(self.matrix.shape[1], self.matrix.shape[0], overdetermined)

    def _evaluate(self, x):
        return self.matrix @ x

    def _jacobian(self, x):
        return self.matrix.copy()


class Simple1DMap(ResidualMap):
    """x -> (x, x^2)."""

    def __init__(self):
        super().__init__(1, 2)

    def _evaluate(self, x):
        return np.array([x[0], x[0] * x[0]])

    def _jacobian(self, x):
        return np.array([[1.0], [2.0 * x[0]]])


class PerturbedRipMap(ResidualMap):
    """
    z -> A1 z + rho ||z - z_ref||^2 A2 z with A2 the all-ones m x N matrix.

    The perturbation vanishes at z_ref.
    """

    def __init__(self, a1, rho: float, z_ref):
        self.a1 = np.atleast_2d(np.asarray(a1, dtype=float))
        m, n = self.a1.shape
        super().__init__(n, m, overdetermined=False)
        if rho < 0:
            raise ValueError(f"rho must be nonnegative, got {rho}")
        self.rho = float(rho)
        self.z_ref = self.check_input(z_ref).copy()

    def _evaluate(self, z):
        shift = z - self.z_ref
        return self.a1 @ z + self.rho * np.dot(shift, shift) * np.sum(z) * np.ones(self.dim_out)

    def _jacobian(self, z):
        shift = z - self.z_ref
        ones = np.ones(self.dim_out)
        perturbation = np.dot(shift, shift) * np.ones((self.dim_out, self.dim_in)) \
            + np.outer(ones * np.sum(z), 2.0 * shift)
        return self.a1 + self.rho * perturbation


class PhaseRetrievalMap(ResidualMap):
    """x -> (<a_i, x>^2)_i for the rows a_i of `vectors`."""
    sign_symmetric = True

    def __init__(self, vectors):
        self.vectors = np.atleast_2d(np.asarray(vectors, dtype=float))
        m, n = self.vectors.shape
        super().__init__(n, m, overdetermined=False)

    def _evaluate(self, x):
        inner = self.vectors @ x
        return inner * inner

    def _jacobian(self, x):
        return 2.0 * (self.vectors @ x)[:, None] * self.vectors


class RestrictedMap(ResidualMap):
    """Parent map composed with zero padding from R^k onto the support."""

    def __init__(self, parent: ResidualMap, support: Sequence[int]):
        self.parent = parent
        self.support = np.asarray(support, dtype=int)
        self.sign_symmetric = parent.sign_symmetric
        self.has_jacobian = parent.has_jacobian
        super().__init__(len(self.support), parent.dim_out)

    def pad(self, x) -> np.ndarray:
        full = np.zeros(self.parent.dim_in)
        full[self.support] = x
        return full

    def _evaluate(self, x):
        return self.parent.eval(self.pad(x))

    def _jacobian(self, x):
        return self.parent.jacobian(self.pad(x))[:, self.support]


def make_simple_1d() -> ResidualMap:
    return Simple1DMap()


def make_perturbed_rip(N: int, m: int, rho: float, z_ref, rng_seed: int) -> ResidualMap:
    """A1 has i.i.d. N(0, 1/m) entries drawn from the matrix stream of `rng_seed`."""
    if N < 1 or m < 1 or m > N:
        raise InvalidDimensions(f"Expected 1 <= m <= N, got N={N}, m={m}")
    rng = make_rng(rng_seed, STREAM_MATRIX)
    a1 = rng.standard_normal((m, N)) / np.sqrt(m)
    return PerturbedRipMap(a1, rho, z_ref)


def make_phase_retrieval(N: int, m: int, rng_seed: int) -> ResidualMap:
    if N < 1 or m < 1:
        raise InvalidDimensions(f"Expected positive dimensions, got N={N}, m={m}")
    rng = make_rng(rng_seed, STREAM_MATRIX)
    return PhaseRetrievalMap(rng.standard_normal((m, N)))


def restrict_to_support(map: ResidualMap, support: Sequence[int]) -> ResidualMap:
    support = [int(j) for j in support]
    if not support:
        raise InvalidDimensions("Support must not be empty")
    for j in support:
        if not 0 <= j < map.dim_in:
            raise IndexOutOfRange(f"Index {j} outside [0, {map.dim_in})")
    if len(set(support)) != len(support):
        raise InvalidDimensions(f"Support has repeated indices: {support}")
    return RestrictedMap(map, support)


@dataclass(frozen=True)
class DecaySparseSpec:
    N: int
    k: int
    kappa: float = 1.0
    norm: float = 1.0

    def __post_init__(self):
        if not 1 <= self.k <= self.N:
            raise InvalidDimensions(f"Expected 1 <= k <= N, got k={self.k}, N={self.N}")
        if not 0 < self.kappa <= 1:
            raise ValueError(f"kappa must lie in (0, 1], got {self.kappa}")
        if not self.norm > 0:
            raise ValueError(f"norm must be positive, got {self.norm}")


@dataclass(frozen=True)
class NoiseSpec:
    alpha_p: float
    amplitude_std: float = 1.0
    scale_to_measurement_norm: bool = True

    def __post_init__(self):
        if not 0 <= self.alpha_p <= 1:
            raise ValueError(f"alpha_p must lie in [0, 1], got {self.alpha_p}")
        if not self.amplitude_std > 0:
            raise ValueError(f"amplitude_std must be positive, got {self.amplitude_std}")


def make_sparse_vector(spec: DecaySparseSpec, rng_seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    k-sparse vector whose j-th drawn support index has magnitude c * kappa^(j-1).

    Returns:
        (x_star, sorted support)
    """
    rng = make_rng(rng_seed, STREAM_SUPPORT)
    drawn = rng.choice(spec.N, size=spec.k, replace=False)
    signs = rng.choice(np.array([-1.0, 1.0]), size=spec.k)

    base = spec.kappa ** np.arange(spec.k)
    magnitudes = np.empty(spec.k)
    magnitudes[0] = spec.norm / np.linalg.norm(base)
    for j in range(1, spec.k):
        magnitudes[j] = spec.kappa * magnitudes[j - 1]

    x_star = np.zeros(spec.N)
    x_star[drawn] = signs * magnitudes
    return x_star, np.sort(drawn)


def add_bernoulli_gaussian_noise(y, spec: NoiseSpec, rng_seed: int) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    rng = make_rng(rng_seed, STREAM_NOISE)
    occurrences = rng.random(y.size) < spec.alpha_p
    amplitudes = rng.normal(0.0, spec.amplitude_std, size=y.size)
    noise = np.where(occurrences, amplitudes, 0.0)
    noise_norm = np.linalg.norm(noise)
    if noise_norm == 0:
        return y.copy()
    if spec.scale_to_measurement_norm:
        noise = noise * (np.linalg.norm(y) / noise_norm)
    return y + noise


@dataclass(frozen=True)
class InstanceParams:
    N: int = 20
    m: int = 12
    k: int = 1
    kappa: float = 1.0
    norm: float = 1.0
    rho: float = 0.0
    y_1d: Tuple[float, float] = (0.0, 0.9)


@dataclass
class ProblemInstance:
    map: ResidualMap
    y: np.ndarray
    x_star: Optional[np.ndarray]
    support: Optional[np.ndarray]
    seed: int
    meta: Dict[str, object] = field(default_factory=dict)

    def restricted_map(self) -> ResidualMap:
        if self.support is None:
            return self.map
        return restrict_to_support(self.map, self.support)

    def restricted_x_star(self) -> Optional[np.ndarray]:
        if self.x_star is None or self.support is None:
            return self.x_star
        return self.x_star[self.support]

    def __repr__(self):
        return f"<ProblemInstance(family={self.meta.get('family')}, seed={self.seed})>"


def make_instance(family: ProblemFamily, params: Optional[InstanceParams] = None,
                  noise: Optional[NoiseSpec] = None, rng_seed: int = 0) -> ProblemInstance:
    """
    Builds one instance of `family` from `params`.

    Sparse families draw x_star, then the map, then y = A(x_star) plus noise,
    each from its own stream of `rng_seed`.
    """
    family = ProblemFamily(family)
    params = params or InstanceParams()
    meta: Dict[str, object] = {"family": family.value, "rng": generator_name()}

    if family == ProblemFamily.SIMPLE_1D:
        map = make_simple_1d()
        y = np.asarray(params.y_1d, dtype=float)
        meta["noiseless"] = False
        return ProblemInstance(map=map, y=y, x_star=None, support=None, seed=rng_seed, meta=meta)

    if family == ProblemFamily.LINEAR:
        raise ValueError("Linear instances are read from problem files, not generated")

    x_star, support = make_sparse_vector(
        DecaySparseSpec(N=params.N, k=params.k, kappa=params.kappa, norm=params.norm), rng_seed)
    if family == ProblemFamily.PERTURBED_RIP:
        map = make_perturbed_rip(params.N, params.m, params.rho, x_star, rng_seed)
        meta["rho"] = params.rho
    else:
        map = make_phase_retrieval(params.N, params.m, rng_seed)

    y = map.eval(x_star)
    noiseless = noise is None or noise.alpha_p == 0
    if not noiseless:
        y = add_bernoulli_gaussian_noise(y, noise, rng_seed)
        meta["alpha_p"] = noise.alpha_p
        meta["noise_scaling"] = "vector_l2" if noise.scale_to_measurement_norm else "none"
    meta.update({"N": params.N, "m": params.m, "k": params.k, "kappa": params.kappa,
                 "noiseless": noiseless})
    logger.debug(f"Generated {family.value} instance with seed {rng_seed}")
    return ProblemInstance(map=map, y=y, x_star=x_star, support=support, seed=rng_seed, meta=meta)
