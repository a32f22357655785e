import json

import numpy as np
import pytest

from strange_reservoir.embedding.diagnostics import (
    ESP_REL_TOL,
    HypothesisReport,
    HypothesisViolatedError,
    PolynomialSpecError,
    check_embedding_dimension,
    check_esp,
    check_immersion_rank,
    check_injectivity,
    check_periodic_independence,
    check_reachability,
    monomials,
    monte_carlo_periodic_independence,
    monte_carlo_polynomial_independence,
    monte_carlo_reachability,
    monte_carlo_spectrum_avoidance,
    periodic_orbit_family,
)
from strange_reservoir.embedding.reservoir import (
    build_diagonal,
    build_haar,
    build_takens,
    build_uniform,
    conjugate,
    from_matrices,
)
from strange_reservoir.numerics.dynsys import ObservationFn
from tests.const import PERIOD_EIGENVALUES

CHEBYSHEV = [
    [1.0],
    [0.0, 1.0],
    [-1.0, 0.0, 2.0],
    [0.0, -3.0, 0.0, 4.0],
    [1.0, 0.0, -8.0, 0.0, 8.0],
]


@pytest.fixture
def haar7():
    return build_haar(7, 0.5, np.random.default_rng(3), seed=3)


def test_report_serialization():
    report = HypothesisReport(
        check="reachability",
        passed=True,
        statistic=0.125,
        tolerance=1e-10,
        samples=1,
        details="rank 7 of 7",
    )
    assert report.to_line() == (
        "PASS reachability: statistic=0.125 tolerance=1e-10 samples=1"
        " (rank 7 of 7)"
    )
    data = json.loads(report.to_json())
    assert sorted(data) == [
        "check",
        "details",
        "passed",
        "samples",
        "statistic",
        "tolerance",
    ]
    assert HypothesisReport.from_dict(data) == report


def test_report_rejects_non_finite_statistic():
    with pytest.raises(ValueError):
        HypothesisReport("esp", False, float("nan"), 1.0, 1)


def test_takens_is_reachable():
    report = check_reachability(build_takens(3))
    assert report.passed
    assert report.statistic == 1.0
    assert report.details == "rank 7 of 7"


def test_zero_matrix_is_not_reachable():
    report = check_reachability(from_matrices(np.zeros((2, 2)), np.ones(2)))
    assert not report.passed
    assert report.details == "rank 1 of 2"
    assert report.statistic == 0.0


def test_diagonal_reservoirs_are_reachable(rng):
    assert check_reachability(build_diagonal(6, 0.8, rng)).passed


def test_reachability_monte_carlo(rng):
    report = monte_carlo_reachability(7, 200, rng, tol=1e-10)
    assert report.passed
    assert report.samples == 200
    assert report.details == "200/200 draws passed"


def test_reachability_is_invariant_under_isomorphism(rng):
    good = build_uniform(7, rng)
    bad = from_matrices(np.zeros((3, 3)), np.array([1.0, 2.0, 0.0]))
    for res in (good, bad):
        p = rng.standard_normal((res.n, res.n)) + 3.0 * np.eye(res.n)
        before = check_reachability(res).passed
        assert check_reachability(conjugate(res, p)).passed == before


def test_periodic_independence_single_eigenvalue(rng):
    report = check_periodic_independence(build_uniform(7, rng), [0.4], n=3)
    assert report.passed
    assert report.details == "rank 1 of 1"


def test_periodic_independence_uniform_draw(rng):
    res = build_uniform(7, rng)
    report = check_periodic_independence(res, PERIOD_EIGENVALUES, n=2)
    assert report.passed
    family = periodic_orbit_family(res.a, res.c, PERIOD_EIGENVALUES, 2)
    assert family.shape == (7, 3)


def test_periodic_independence_degenerates_for_nilpotent_reservoirs():
    res = build_takens(1)
    report = check_periodic_independence(res, PERIOD_EIGENVALUES, n=3)
    assert not report.passed
    assert "rank 1 of 3" in report.details
    assert "all vectors coincide" in report.details
    family = periodic_orbit_family(res.a, res.c, PERIOD_EIGENVALUES, 3)
    assert np.array_equal(family[:, 0], family[:, 1])
    assert check_periodic_independence(res, [0.3], n=3).passed


def test_periodic_independence_repeated_eigenvalue_fails(rng):
    res = build_uniform(7, rng)
    report = check_periodic_independence(res, [0.3, 0.3], n=2)
    assert not report.passed


def test_periodic_independence_complex_pair(rng):
    res = build_uniform(7, rng)
    eigenvalues = [0.3 + 0.2j, 0.3 - 0.2j, -0.1]
    report = check_periodic_independence(res, eigenvalues, n=2)
    assert report.passed
    assert report.details == "rank 3 of 3"


def test_periodic_independence_precondition(haar7):
    with pytest.raises(HypothesisViolatedError):
        check_periodic_independence(haar7, [5.0], n=1)
    with pytest.raises(ValueError):
        check_periodic_independence(haar7, [], n=1)
    with pytest.raises(ValueError):
        check_periodic_independence(haar7, [0.1], n=0)


def test_periodic_independence_is_invariant_under_isomorphism(rng):
    res = build_uniform(7, rng)
    p = rng.standard_normal((7, 7)) + 3.0 * np.eye(7)
    for eigenvalues in (PERIOD_EIGENVALUES, (0.3, 0.3)):
        before = check_periodic_independence(res, eigenvalues, 2).passed
        twin = conjugate(res, p)
        after = check_periodic_independence(twin, eigenvalues, 2).passed
        assert before == after


def test_periodic_independence_monte_carlo(rng):
    report = monte_carlo_periodic_independence(
        7, PERIOD_EIGENVALUES, 2, 200, rng
    )
    assert report.passed
    assert report.details == "200/200 draws passed"


def test_periodic_independence_monte_carlo_negative_control(rng):
    report = monte_carlo_periodic_independence(7, (0.3, 0.3), 2, 20, rng)
    assert not report.passed
    assert report.details == "0/20 draws passed"


def test_esp_contracts(rng):
    res = build_haar(20, 0.9, rng)
    report = check_esp(res, rng.standard_normal(1000), trials=2, rng=rng)
    assert report.passed
    assert report.check == "echo_state_property"
    # the gap bottoms out at the rounding level of the states
    assert report.statistic < 1e-12


def test_esp_is_exact_for_nilpotent_reservoirs(rng):
    report = check_esp(build_takens(2), rng.standard_normal(20), 4, rng)
    assert report.passed
    assert report.statistic == 0.0


def test_esp_negative_control(rng):
    res = build_haar(20, 0.999, rng)
    report = check_esp(res, rng.standard_normal(100), trials=2, rng=rng)
    assert not report.passed
    spread = report.tolerance / ESP_REL_TOL
    assert report.statistic > 0.5 * spread


@pytest.mark.parametrize(
    "scale,steps", [(0.5, 1000), (0.9, 300), (0.99, 300), (0.999, 100)]
)
def test_esp_reports_the_bound_it_decides_on(rng, scale, steps):
    res = build_haar(10, scale, rng)
    report = check_esp(res, rng.standard_normal(steps), trials=3, rng=rng)
    assert report.passed == (report.statistic <= report.tolerance)
    spread = float(report.details.split(",")[0].split()[-1])
    assert report.tolerance <= ESP_REL_TOL * spread * (1 + 1e-5)


def test_esp_needs_two_trials(haar7, rng):
    with pytest.raises(ValueError):
        check_esp(haar7, np.zeros(10), trials=1, rng=rng)


def test_immersion_rank_on_lorenz(haar7, lorenz, u_obs, lorenz_attractor):
    samples = lorenz_attractor[::300]
    report = check_immersion_rank(haar7, lorenz, u_obs, samples, depth=30)
    assert report.passed
    assert report.samples == 10
    assert report.statistic > 1e-8
    assert "hypothesis warning" not in report.details


def test_immersion_rank_of_constant_observation(
    haar7, lorenz, lorenz_attractor
):
    const = ObservationFn.constant(1.0, 3)
    samples = lorenz_attractor[:5]
    report = check_immersion_rank(haar7, lorenz, const, samples, depth=10)
    assert not report.passed
    assert report.statistic == 0.0
    assert report.details.startswith("5 rank-deficient samples")


def test_immersion_rank_needs_enough_dimensions(
    lorenz, u_obs, lorenz_attractor
):
    res = build_haar(2, 0.5, np.random.default_rng(0))
    report = check_immersion_rank(
        res, lorenz, u_obs, lorenz_attractor[:5], depth=20
    )
    assert not report.passed
    assert "hypothesis warning: N=2 < 2q=6" in report.details


def test_delay_map_is_injective_on_a_cycle(vanderpol, u_obs, vdp_cycle):
    report = check_injectivity(build_takens(2), vanderpol, u_obs, vdp_cycle)
    assert report.passed
    assert report.samples == len(vdp_cycle)
    assert report.tolerance == 0.05


def test_collapsed_reservoir_is_not_injective(lorenz, u_obs, lorenz_attractor):
    res = from_matrices(0.5 * np.eye(3), np.zeros(3))
    report = check_injectivity(
        res, lorenz, u_obs, lorenz_attractor[:200], depth=10
    )
    assert not report.passed
    assert "embedding collapsed to a point" in report.details


def test_injectivity_ignores_reservoir_coordinates(
    haar7, lorenz, u_obs, lorenz_attractor, rng
):
    samples = lorenz_attractor[::3]
    p = rng.standard_normal((7, 7)) + 3.0 * np.eye(7)
    first = check_injectivity(haar7, lorenz, u_obs, samples, depth=40)
    second = check_injectivity(
        conjugate(haar7, p), lorenz, u_obs, samples, depth=40
    )
    assert first.passed and second.passed
    assert second.statistic == pytest.approx(first.statistic, rel=1e-6)
    assert second.details == first.details


def test_scalar_embedding_of_lorenz_is_not_injective(
    lorenz, u_obs, lorenz_attractor
):
    res = from_matrices(np.array([[0.5]]), np.ones(1))
    report = check_injectivity(res, lorenz, u_obs, lorenz_attractor[:2000])
    assert not report.passed
    assert "0 false neighbours" not in report.details


def test_injectivity_needs_samples(haar7, lorenz, u_obs, lorenz_attractor):
    with pytest.raises(ValueError):
        check_injectivity(haar7, lorenz, u_obs, lorenz_attractor[:99])


def test_polynomial_independence_with_monomials(rng):
    report = monte_carlo_polynomial_independence(5, monomials(5), 200, rng)
    assert report.passed
    assert report.check == "polynomial_independence"


def test_polynomial_independence_with_chebyshev_polynomials(rng):
    report = monte_carlo_polynomial_independence(5, CHEBYSHEV, 500, rng)
    assert report.passed
    assert report.details == "500/500 full-rank draws"


def test_polynomial_independence_negative_control(rng):
    dependent = [[1.0], [0.0, 1.0], [1.0, 1.0]]
    report = monte_carlo_polynomial_independence(3, dependent, 50, rng)
    assert not report.passed
    assert "0/50 full-rank draws" in report.details
    assert "linearly dependent" in report.details


@pytest.mark.parametrize(
    "polynomials",
    [
        [],
        [[0.0, 0.0, 0.0, 1.0]],
        [[1.0]] * 4,
        [[float("inf")]],
    ],
)
def test_polynomial_independence_rejects_bad_families(rng, polynomials):
    with pytest.raises(PolynomialSpecError):
        monte_carlo_polynomial_independence(3, polynomials, 5, rng)


def test_spectrum_avoidance(rng):
    report = monte_carlo_spectrum_avoidance(7, PERIOD_EIGENVALUES, 200, rng)
    assert report.passed
    with pytest.raises(ValueError):
        monte_carlo_spectrum_avoidance(7, [], 10, rng)


@pytest.mark.parametrize(
    "n,periods,passed",
    [(7, (), True), (6, (), False), (5, (), False), (7, (2, 3), True)],
)
def test_embedding_dimension(n, periods, passed):
    res = build_haar(n, 0.5, np.random.default_rng(0))
    report = check_embedding_dimension(res, 3, periods)
    assert report.passed is passed


def test_embedding_dimension_uses_period_lcm():
    res = build_haar(7, 0.5, np.random.default_rng(0))
    report = check_embedding_dimension(res, 3, (4, 5))
    assert not report.passed
    assert report.tolerance == 20.0


def test_monte_carlo_reports_are_deterministic():
    first = monte_carlo_reachability(7, 20, np.random.default_rng(1))
    second = monte_carlo_reachability(7, 20, np.random.default_rng(1))
    assert first == second


@pytest.mark.slow
def test_immersion_rank_across_seeds(lorenz, u_obs, lorenz_attractor):
    passes = 0
    for seed in range(20):
        res = build_uniform(7, np.random.default_rng(seed), seed=seed)
        idx = np.random.default_rng([seed, 3]).choice(
            len(lorenz_attractor), size=50, replace=False
        )
        report = check_immersion_rank(
            res, lorenz, u_obs, lorenz_attractor[np.sort(idx)], depth=60
        )
        passes += report.passed
    assert passes >= 18


@pytest.mark.slow
def test_injectivity_across_seeds(lorenz, u_obs, lorenz_attractor):
    passes = 0
    for seed in range(20):
        res = build_uniform(7, np.random.default_rng(seed), seed=seed)
        idx = np.random.default_rng([seed, 3]).choice(
            len(lorenz_attractor), size=2000, replace=False
        )
        report = check_injectivity(
            res, lorenz, u_obs, lorenz_attractor[np.sort(idx)], depth=60
        )
        passes += report.passed
    assert passes >= 18
