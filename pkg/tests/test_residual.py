import numpy as np
import pytest

from main.core.exceptions import DimensionMismatch, InvalidDimensions, InvalidWeights, NonFiniteEvaluation
from main.core.problems import (
    LinearMap,
    make_perturbed_rip,
    make_phase_retrieval,
    make_simple_1d,
    restrict_to_support,
)
from main.core.residual import (
    IrlsState,
    ResidualMap,
    SolveReport,
    Termination,
    finite_difference_jacobian,
    validate_weights,
)


class _Exploding(ResidualMap):
    def __init__(self):
        super().__init__(1, 1)

    def _evaluate(self, x):
        return np.array([1.0 / x[0]]) if x[0] > 0 else np.array([np.inf])


def _families():
    rng = np.random.default_rng(0)
    z_ref = 0.1 * rng.standard_normal(20)
    return [
        ("simple_1d", make_simple_1d(), 1),
        ("linear", LinearMap(rng.standard_normal((6, 3))), 3),
        ("perturbed_rip", make_perturbed_rip(20, 12, 3.0, z_ref, 7), 20),
        ("phase_retrieval", make_phase_retrieval(20, 12, 7), 20),
        ("restricted", restrict_to_support(make_perturbed_rip(20, 12, 0.5, z_ref, 3), [1, 4, 9]), 3),
    ]


@pytest.mark.parametrize("name,map,dim", _families(), ids=[f[0] for f in _families()])
def test_analytic_jacobians_match_finite_differences(name, map, dim):
    rng = np.random.default_rng(42)
    for _ in range(100):
        x = rng.standard_normal(dim)
        analytic = map.jacobian(x)
        numeric = finite_difference_jacobian(map, x)
        scale = max(1.0, float(np.max(np.abs(analytic))))
        assert np.max(np.abs(analytic - numeric)) <= 1e-5 * scale


def test_dimension_checks():
    map = LinearMap(np.ones((3, 2)))
    with pytest.raises(DimensionMismatch):
        map.eval([1.0, 2.0, 3.0])
    with pytest.raises(DimensionMismatch):
        map.check_output([1.0])
    with pytest.raises(InvalidDimensions):
        LinearMap(np.ones((2, 3)))
    # scalars are promoted for one-dimensional maps
    assert make_simple_1d().eval(0.5).tolist() == [0.5, 0.25]


def test_finite_difference_reports_non_finite_values():
    with pytest.raises(NonFiniteEvaluation):
        finite_difference_jacobian(_Exploding(), [0.0], h=1e-3)


def test_validate_weights():
    assert validate_weights([1, 2], 2).dtype == float
    with pytest.raises(InvalidWeights):
        validate_weights([1.0, 0.0])
    with pytest.raises(InvalidWeights):
        validate_weights([1.0, np.nan])
    # still a ValueError for callers catching the builtin
    with pytest.raises(ValueError):
        validate_weights([-1.0])
    with pytest.raises(DimensionMismatch):
        validate_weights([1.0], 2)


def test_report_trace_frame():
    states = [IrlsState(n, np.zeros(1), np.ones(2), 1.0 / (n + 1), 2.0 - n, 1.0, 0.1) for n in range(3)]
    report = SolveReport(iterates=states, termination=Termination.MAX_ITERS, final_x=np.zeros(1),
                         final_lp_residual=1.0, wall_time=0.0)
    df = report.to_frame()
    assert list(df.columns) == ["n", "eps", "J", "lp_residual", "step_norm"]
    assert len(df) == 3
    assert report.outer_iters == 2
    assert report.final_eps == pytest.approx(1.0 / 3.0)
