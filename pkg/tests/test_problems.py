import numpy as np
import pytest

from main.core.exceptions import IndexOutOfRange, InvalidDimensions
from main.core.problems import (
    DecaySparseSpec,
    InstanceParams,
    NoiseSpec,
    ProblemFamily,
    add_bernoulli_gaussian_noise,
    make_instance,
    make_perturbed_rip,
    make_phase_retrieval,
    make_sparse_vector,
    restrict_to_support,
)


def test_generators_are_pure_functions_of_the_seed():
    a = make_instance(ProblemFamily.PHASE_RETRIEVAL, InstanceParams(k=3), NoiseSpec(0.3), 5)
    b = make_instance(ProblemFamily.PHASE_RETRIEVAL, InstanceParams(k=3), NoiseSpec(0.3), 5)
    c = make_instance(ProblemFamily.PHASE_RETRIEVAL, InstanceParams(k=3), NoiseSpec(0.3), 6)
    np.testing.assert_array_equal(a.y, b.y)
    np.testing.assert_array_equal(a.map.vectors, b.map.vectors)
    assert not np.array_equal(a.y, c.y)


def test_sparse_vector_decay_and_norm():
    x, support = make_sparse_vector(DecaySparseSpec(N=20, k=4, kappa=0.5, norm=2.0), 3)
    assert np.count_nonzero(x) == 4
    assert list(support) == sorted(support)
    assert np.linalg.norm(x) == pytest.approx(2.0)
    magnitudes = np.sort(np.abs(x[support]))[::-1]
    np.testing.assert_allclose(magnitudes[1:] / magnitudes[:-1], 0.5)


def test_sparse_vector_validation():
    with pytest.raises(InvalidDimensions):
        DecaySparseSpec(N=3, k=4)
    with pytest.raises(ValueError):
        DecaySparseSpec(N=5, k=2, kappa=0.0)


def test_perturbed_rip_is_linear_at_reference():
    z_ref = np.zeros(8)
    z_ref[2] = 1.0
    map = make_perturbed_rip(8, 5, 10.0, z_ref, 1)
    np.testing.assert_allclose(map.eval(z_ref), map.a1 @ z_ref)
    # entries have variance 1/m
    big = make_perturbed_rip(400, 100, 0.0, np.zeros(400), 2)
    assert np.var(big.a1) == pytest.approx(1.0 / 100, rel=0.05)
    with pytest.raises(InvalidDimensions):
        make_perturbed_rip(5, 8, 0.0, np.zeros(5), 0)


def test_phase_retrieval_ignores_global_sign():
    map = make_phase_retrieval(6, 10, 4)
    x = np.random.default_rng(0).standard_normal(6)
    np.testing.assert_allclose(map.eval(x), map.eval(-x))
    assert map.sign_symmetric


def test_restrict_to_support():
    map = make_phase_retrieval(6, 10, 4)
    restricted = restrict_to_support(map, [1, 4])
    assert (restricted.dim_in, restricted.dim_out) == (2, 10)
    assert restricted.sign_symmetric
    x = np.zeros(6)
    x[[1, 4]] = [0.5, -1.0]
    np.testing.assert_allclose(restricted.eval([0.5, -1.0]), map.eval(x))
    with pytest.raises(IndexOutOfRange):
        restrict_to_support(map, [6])
    with pytest.raises(InvalidDimensions):
        restrict_to_support(map, [])
    with pytest.raises(InvalidDimensions):
        restrict_to_support(map, [1, 1])


def test_noise_is_scaled_to_the_measurement_norm():
    y = np.arange(1.0, 13.0)
    noisy = add_bernoulli_gaussian_noise(y, NoiseSpec(0.5), 9)
    assert np.linalg.norm(noisy - y) == pytest.approx(np.linalg.norm(y))
    clean = add_bernoulli_gaussian_noise(y, NoiseSpec(0.0), 9)
    np.testing.assert_array_equal(clean, y)
    with pytest.raises(ValueError):
        NoiseSpec(1.5)


def test_instances():
    toy = make_instance(ProblemFamily.SIMPLE_1D)
    assert toy.x_star is None
    np.testing.assert_array_equal(toy.y, [0.0, 0.9])
    rip = make_instance(ProblemFamily.PERTURBED_RIP, InstanceParams(k=2, rho=3.0), rng_seed=1)
    # y = A(x*) exactly when noiseless
    np.testing.assert_allclose(rip.y, rip.map.eval(rip.x_star))
    np.testing.assert_allclose(rip.restricted_map().eval(rip.restricted_x_star()), rip.y)
    assert rip.meta["noiseless"]
    with pytest.raises(ValueError):
        make_instance(ProblemFamily.LINEAR)
