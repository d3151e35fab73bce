import dataclasses
import math

import numpy as np
import pytest

from soswall.analysis import (
    AnalysisConfig,
    cascade_box_side,
    cascade_stats,
    concentration_report,
    fit_exponent,
    fluctuation_stats,
    loop_census,
    predicted_plateau,
    radius_fits,
    shape_convergence,
    subbox_domination,
)
from soswall.errors import ConfigError
from soswall.lattice import SimConfig, field_from_array, new_field
from soswall.levellines import LevelLoop, LoopEnsemble, extract_ensemble, macroscopic_cutoff
from soswall.sampler import sample
from soswall.wulff import SurfaceTension, predicted_ensemble, wulff_body


@pytest.fixture
def config():
    # H = ln(20) / 2 ~ 1.50, so floor(H) = 1
    return SimConfig(side_length=20, beta=0.5)


def _ensemble(heights, beta):
    return extract_ensemble(field_from_array(np.asarray(heights), height_cap=8), beta)


def _curve_ensemble(curve, L, top, shift=(0.0, 0.0)):
    vertices = np.asarray(curve) * L + 0.5 + np.asarray(shift)
    loop = LevelLoop(level=top, sign=1, vertices=vertices, area=float(L * L), macroscopic=True)
    return LoopEnsemble(side_length=L, beta=None, cutoff=macroscopic_cutoff(L), levels={top: [loop]})


def test_analysis_config_validation():
    with pytest.raises(ConfigError, match="ci"):
        AnalysisConfig(ci=1.5)
    config = AnalysisConfig(radii=[0.2, 0.3])
    assert config.radii == (0.2, 0.3)
    assert config.to_dict()["radii"] == [0.2, 0.3]
    assert AnalysisConfig(alpha_c=0.1).critical_value(1.0) == 0.1
    assert AnalysisConfig().critical_value(1.0) == pytest.approx(math.log(4.0) / 4.0)
    with pytest.raises(ConfigError, match="unknown keys"):
        AnalysisConfig.from_mapping({"epsilon": 0.1, "delta": 2})


def test_analysis_config_cascade_settings():
    config = AnalysisConfig(xi=[0, 0.25])
    assert config.xi == (0.0, 0.25)
    assert config.to_dict()["xi"] == [0.0, 0.25]
    assert AnalysisConfig().xi == (0.5,)
    with pytest.raises(ConfigError, match="xi must lie"):
        AnalysisConfig(xi=[1.0])
    with pytest.raises(ConfigError, match="subbox_sweeps"):
        AnalysisConfig(subbox_sweeps=-1)


def test_concentration_on_the_top_plateau(config):
    samples = [new_field(config, 1) for _ in range(3)]
    report = concentration_report(samples, config)
    assert report.fraction_top == 1.0
    assert report.fraction_below == 0.0
    assert report.fraction_union == 1.0
    assert report.observed == "E_1"
    assert report.predicted == "E_1"
    assert report.mean_height_fraction(1) == 1.0


def test_concentration_on_the_lower_plateau(config):
    samples = [new_field(config, 0) for _ in range(2)]
    report = concentration_report(samples, config)
    assert report.fraction_below == 1.0
    assert report.observed == "E_0"
    rows = report.rows(config)
    assert len(rows) == 2
    assert rows[1]["sample_index"] == 1
    assert rows[0]["h0"] == 400
    assert rows[0]["in_below"] is True


def test_concentration_near_the_critical_point(config):
    report = concentration_report([new_field(config, 1)], config, AnalysisConfig(alpha_c=0.49, critical_band=0.02))
    assert report.predicted == "near-critical"


def test_concentration_needs_samples(config):
    with pytest.raises(ConfigError):
        concentration_report([], config)


def test_predicted_plateau():
    assert predicted_plateau(0.5, 0.3, 2, 0.02) == "E_2"
    assert predicted_plateau(0.1, 0.3, 2, 0.02) == "E_1"
    assert predicted_plateau(0.31, 0.3, 2, 0.02) == "near-critical"


def test_predicted_plateau_with_nothing_below_the_wall_level():
    assert predicted_plateau(0.1, 0.3, 0, 0.02) == "no-lower-plateau"
    assert predicted_plateau(0.5, 0.3, 0, 0.02) == "E_0"
    # L = 20 at beta = 2: H ~ 0.37, so floor(H) = 0 and alpha < 0.6
    config = SimConfig(side_length=20, beta=2.0)
    report = concentration_report([new_field(config, 0)], config, AnalysisConfig(alpha_c=0.6))
    assert report.predicted == "no-lower-plateau"
    assert report.observed == "E_0"


@pytest.mark.slow
@pytest.mark.parametrize("seed", [0, 1])
def test_concentration_trend_across_the_critical_point(seed):
    # beta = 1.25: H(148) is about 1 and the surface settles at 0; at L = 1100 alpha ~ 0.40 > alpha_c and it stays at 1
    below = SimConfig(side_length=148, beta=1.25, burn_in=20_000, sweeps=50, seed=seed)
    above = SimConfig(side_length=1100, beta=1.25, burn_in=300, sweeps=10, seed=seed)
    low = concentration_report(sample(below, 20), below)
    high = concentration_report(sample(above, 20), above)
    assert low.mean_height_fraction(0) > low.mean_height_fraction(1)
    assert high.mean_height_fraction(1) > high.mean_height_fraction(0)
    assert high.observed == "E_1"


def test_census_of_nested_rectangles():
    # beta = 0.3 at L = 20 gives floor(H) = 2
    heights = np.zeros((20, 20))
    heights[0:18, 0:18] = 1
    heights[3:15, 3:15] = 2
    heights[8, 8] = 3
    report = loop_census([_ensemble(heights, 0.3)])
    assert report.counts == [{0: 1, 1: 1}]
    assert report.max_area_above == [{3: 1.0}]
    assert report.passes().tolist() == [True]
    assert report.to_record()["pass_rate"] == 1.0


def test_census_flags_two_plateaus():
    heights = np.zeros((20, 20))
    heights[2:10, 2:10] = 1
    heights[12:18, 12:18] = 1
    report = loop_census([_ensemble(heights, 0.3)])
    assert report.counts == [{0: 0, 1: 2}]
    assert report.single_loops().tolist() == [False]
    assert report.top_at_most_one().tolist() == [True]
    assert report.passes().tolist() == [False]


def test_census_flags_a_large_loop_above_the_top():
    heights = np.full((20, 20), 2)
    heights[5:10, 5:10] = 3
    report = loop_census([_ensemble(heights, 0.3)])
    assert report.max_area_above == [{3: 25.0}]
    assert report.microscopic_above().tolist() == [False]
    assert report.to_record()["max_area_above"] == {"3": 25.0}
    rows = report.rows(SimConfig(side_length=20, beta=0.3))
    assert rows[0]["count_0"] == 1
    assert rows[0]["microscopic_above"] is False
    assert rows[0]["max_area_h3"] == 25.0


def test_census_keeps_the_largest_loop_per_height():
    # floor(H) = 2: two bumps at height 3, the larger holding a 2x2 step to height 4
    heights = np.full((20, 20), 2)
    heights[2:12, 2:12] = 3
    heights[4:6, 4:6] = 4
    heights[14:17, 14:17] = 3
    report = loop_census([_ensemble(heights, 0.3)])
    assert report.max_area_above == [{3: 100.0, 4: 4.0}]
    assert report.largest_above() == {3: 100.0, 4: 4.0}
    assert report.microscopic_above().tolist() == [False]


def test_shape_convergence_on_the_limit_curve():
    body = wulff_body(SurfaceTension.constant(), 64)
    limit = predicted_ensemble(1.0, 0.0, [0.2], SurfaceTension.constant(), 64, body=body)
    L = 50
    exact = _curve_ensemble(limit.curve(0), L, top=2)
    shifted = _curve_ensemble(limit.curve(0), L, top=2, shift=(0.0, 0.5))
    report = shape_convergence([exact, shifted], limit, L, top=2)
    assert report.indices == [0]
    assert report.distances[0, 0] < 1e-9
    assert report.distances[1, 0] == pytest.approx(0.5 / L, abs=1e-9)
    assert report.flags == []
    assert report.sup_per_sample.tolist() == pytest.approx([0.0, 0.01], abs=1e-9)


def test_shape_convergence_flags_missing_curves():
    body = wulff_body(SurfaceTension.constant(), 64)
    limit = predicted_ensemble(1.0, 0.0, [0.2], SurfaceTension.constant(), 64, body=body)
    L = 50
    ensemble = _curve_ensemble(limit.curve(0), L, top=2)
    ensemble.levels[1] = [dataclasses.replace(loop, level=1) for loop in ensemble.levels[2]]
    report = shape_convergence([ensemble], limit, L, top=2)
    assert report.indices == [0, 1]
    assert math.isinf(report.distances[0, 1])
    assert report.flags == [{"sample_index": 0, "index": 1, "reason": "no limit curve"}]


def test_radius_fits_recover_the_opening_radius():
    tension = SurfaceTension.constant()
    limit = predicted_ensemble(1.0, 0.0, [0.25], tension, 64, body=wulff_body(tension, 64))
    ensemble = _curve_ensemble(limit.curve(0), 50, top=2)
    report = radius_fits(ensemble, tension, K=64, top=2, sample_index=3)
    assert list(report.radii) == [0]
    assert report.radii[0] == pytest.approx(0.25, abs=5e-3)
    assert report.fits[0]["residual"] < 5e-3
    assert report.to_record()["sample_index"] == 3


def test_radius_fits_skip_empty_collections():
    report = radius_fits(_ensemble(np.zeros((8, 8)), 0.5), SurfaceTension.constant(), K=64)
    assert report.fits == []


def test_fluctuations_of_the_top_loop():
    # L = 8, beta = 0.5: floor(H) = 1
    ensembles = [_ensemble(np.ones((8, 8)), 0.5), _ensemble(np.zeros((8, 8)), 0.5)]
    report = fluctuation_stats(ensembles, 8)
    assert report.sup_rho == [0.5]
    assert report.excluded == 1
    assert report.level_index == 0
    assert report.mean == 0.5


def test_fluctuations_fall_back_to_the_next_level_when_allowed():
    # L = 8, beta = 0.25: floor(H) = 2, the field only reaches height 1
    ensembles = [_ensemble(np.ones((8, 8)), 0.25)]
    strict = fluctuation_stats(ensembles, 8)
    assert strict.sup_rho == [] and strict.excluded == 1
    relaxed = fluctuation_stats(ensembles, 8, AnalysisConfig(allow_subcritical_top=True))
    assert relaxed.sup_rho == [0.5]
    assert relaxed.level_index == 1


def test_fit_exponent_recovers_a_power_law():
    sweep = {L: [2.0 * L ** (1.0 / 3.0)] * 5 for L in (128, 256, 512)}
    fit = fit_exponent(sweep)
    assert fit.exponent == pytest.approx(1.0 / 3.0, abs=1e-6)
    assert fit.intercept == pytest.approx(math.log(2.0), abs=1e-6)
    assert fit.ci == pytest.approx((fit.exponent, fit.exponent))
    assert fit.n_points == 15


def test_fit_exponent_bootstrap_interval():
    rng = np.random.default_rng(1)
    sweep = {L: 2.0 * L ** (1.0 / 3.0) * rng.lognormal(0.0, 0.05, size=20) for L in (128, 256, 512, 1024)}
    fit = fit_exponent(sweep, n_bootstrap=200, seed=3)
    assert 0.25 < fit.exponent < 0.42
    assert fit.ci[0] < fit.exponent < fit.ci[1]
    again = fit_exponent(sweep, n_bootstrap=200, seed=3)
    assert again.ci == fit.ci


def test_fit_exponent_needs_three_side_lengths():
    with pytest.raises(ConfigError, match="at least 3"):
        fit_exponent({128: [1.0], 256: [1.2]})
    with pytest.raises(ConfigError, match="positive"):
        fit_exponent([(128, [1.0]), (256, [0.0]), (512, [2.0])])


def test_cascade_box_side():
    assert cascade_box_side(1100, 1.25, 1, alpha_c=0.3) == 21
    with pytest.raises(ConfigError):
        cascade_box_side(1100, 1.25, 2, alpha_c=0.3)


def test_cascade_index_zero_is_the_top_loop():
    ensembles = [_ensemble(np.ones((8, 8)), 0.5)]
    report = cascade_stats(ensembles, 0.0, 8)
    assert report.level_index == 0
    assert report.sup_rho == [0.5]
    assert report.baseline == pytest.approx(2.0)
    assert report.threshold == pytest.approx(8 ** (1.0 / 3.0 + 0.05))
    assert report.exceedance_rate == 0.0
    assert report.n_exceeding == 0
    assert report.to_record()["n_exceeding"] == 0


def test_cascade_deeper_index():
    # beta = 0.25 at L = 8: H ~ 2.08, xi = 0.5 selects i = 1 at height 1
    heights = np.ones((8, 8))
    heights[2:6, 2:6] = 2
    report = cascade_stats([_ensemble(heights, 0.25)], 0.5, 8)
    assert report.level_index == 1
    assert report.sup_rho == [0.5]
    with pytest.raises(ConfigError):
        cascade_stats([], 1.5, 8)


def test_cascade_index_zero_with_an_explicit_height():
    # No beta on the ensembles: the top level comes from H alone
    ensembles = [extract_ensemble(field_from_array(np.ones((8, 8))))]
    report = cascade_stats(ensembles, 0.1, 8, H=1.5)
    assert report.level_index == 0
    assert report.sup_rho == [0.5]
    assert report.excluded == 0


def test_subbox_domination():
    config = SimConfig(side_length=30, beta=0.5, burn_in=5, seed=4)
    report = subbox_domination(config, 1, 20, AnalysisConfig(alpha_c=0.3))
    assert report.box_side == 4
    assert report.box_origin == (14, 1)
    assert report.ordering_violations == 0
    assert report.to_record()["level_index"] == 1
