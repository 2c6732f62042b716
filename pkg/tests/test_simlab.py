import json

import numpy as np
import pytest

from sdid.core import SubgroupContrast, subgroup_stats
from sdid.errors import ConfigError, DataError, NumericalError
from sdid.estimators import EstimatorSpec, SaturatedIndicators, sdid_categorical
from sdid.simlab import (
    DgpSpec,
    LevelSpec,
    NoiseDist,
    NoiseSpec,
    generate,
    generate_multiperiod,
    monte_carlo,
    oracle,
    pretrends_monte_carlo,
)

AB = SubgroupContrast("A", "B")


def dgp(**kw):
    levels = kw.pop("levels", (LevelSpec("A", 0.5, alpha=0, beta=2), LevelSpec("B", 0.5, alpha=0, beta=1)))
    return DgpSpec(levels=levels, **kw)


def test_noise_free_deltas():
    spec = dgp(tau=3, noise=NoiseSpec(sd_pre=0, sd_post=0), n=50, seed=1)
    panel, ledger = generate(spec)
    d = panel.deltas
    assert set(d[panel.x == "A"]) == {5.0}
    assert set(d[panel.x == "B"]) == {4.0}
    np.testing.assert_array_equal(ledger.y1_treated - ledger.y1_untreated, np.where(panel.x == "A", 2.0, 1.0))


def test_consistency_observed_post_is_treated_outcome():
    panel, ledger = generate(dgp(tau=1, n=100))
    np.testing.assert_array_equal(panel.y_post, ledger.y1_treated)
    np.testing.assert_array_equal(panel.y_pre, ledger.y_pre)
    assert not hasattr(panel, "y1_untreated")


def test_generate_deterministic_and_boundary():
    a, _ = generate(dgp(n=200, seed=9))
    b, _ = generate(dgp(n=200, seed=9))
    assert a.same_as(b)
    c, _ = generate(dgp(n=200, seed=10))
    assert not a.same_as(c)
    one, _ = generate(dgp(n=1))
    assert len(one) == 1


@pytest.mark.parametrize("dist,df", [(NoiseDist.GAUSSIAN, None), (NoiseDist.UNIFORM, None), (NoiseDist.STUDENT_T, 5.0)])
def test_noise_has_requested_sd(dist, df):
    panel, _ = generate(dgp(noise=NoiseSpec(dist, sd_pre=2.0, sd_post=2.0, df=df), n=200_000, seed=3))
    e0 = panel.y_pre  # alpha = 0 for both levels
    assert np.std(e0) == pytest.approx(2.0, rel=0.02)


def test_invalid_specs():
    with pytest.raises(ConfigError):
        dgp(levels=(LevelSpec("A", 0.6), LevelSpec("B", 0.6)))
    with pytest.raises(ConfigError):
        dgp(levels=(LevelSpec("A", 1.0), LevelSpec("B", 0.0)))
    with pytest.raises(ConfigError):
        dgp(n=0)
    with pytest.raises(ConfigError):
        NoiseSpec(sd_pre=-1)
    with pytest.raises(ConfigError):
        NoiseSpec(NoiseDist.STUDENT_T, df=2)


def test_oracle_values():
    spec = dgp(tau=3, levels=(LevelSpec("A", 0.5, beta=2, delta=0), LevelSpec("B", 0.5, beta=1, delta=0)))
    truth = oracle(spec, AB)
    assert truth.true_effect_modification == 1.0
    assert truth.true_trend_gap == 0.0 and truth.parallel_trends_holds
    assert truth.naive_expectation["A"] == 5.0
    with pytest.raises(DataError):
        oracle(spec, SubgroupContrast("A", "Z"))


def test_dgp_json_round_trip(tmp_path):
    spec = dgp(tau=1.5, shock=2.0, n=77, seed=4, noise=NoiseSpec(NoiseDist.STUDENT_T, 1.0, 2.0, df=6.0))
    path = tmp_path / "dgp.json"
    path.write_text(spec.to_json())
    assert DgpSpec.load(path) == spec
    doc = json.loads(spec.to_json())
    assert doc["noise"]["dist"] == "student_t" and doc["levels"][0]["label"] == "A"


def test_dgp_bad_document(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"levels": [{"label": "A"}]}')
    with pytest.raises(ConfigError):
        DgpSpec.load(path)


def test_monte_carlo_noise_free_exact():
    spec = dgp(tau=3, noise=NoiseSpec(sd_pre=0, sd_post=0), n=40)
    s = monte_carlo(spec, AB, reps=20, master_seed=1)
    assert s.bias == 0.0 and s.empirical_sd == 0.0
    assert s.coverage_normal == 1.0
    assert s.rejection_rate is None  # se = 0 leaves the Wald test undefined


def test_monte_carlo_deterministic_across_workers():
    spec = dgp(tau=3, n=300)
    a = monte_carlo(spec, AB, reps=12, master_seed=5, bootstrap_B=30, workers=1)
    b = monte_carlo(spec, AB, reps=12, master_seed=5, bootstrap_B=30, workers=3)
    assert a.outcomes == b.outcomes
    assert a.to_dict() == b.to_dict()


def test_monte_carlo_violation_shows_up_as_bias():
    spec = dgp(
        tau=1,
        levels=(LevelSpec("A", 0.5, beta=1, delta=0.7), LevelSpec("B", 0.5, beta=1)),
        noise=NoiseSpec(sd_pre=0.5, sd_post=0.5),
        n=2000,
    )
    s = monte_carlo(spec, AB, reps=100, master_seed=2)
    assert abs(s.bias - 0.7) < 3 * s.mc_se + 1e-12
    assert s.truth.true_trend_gap == pytest.approx(0.7)


def test_monte_carlo_saturated_spec_and_failures():
    spec = dgp(n=400)
    s = monte_carlo(spec, AB, EstimatorSpec(AB, SaturatedIndicators()), reps=5, master_seed=1, bootstrap_B=50)
    assert s.method == "delta_regression" and s.n_failed == 0 and s.coverage_normal is not None
    tiny = dgp(n=2, levels=(LevelSpec("A", 0.5), LevelSpec("B", 0.5)))
    with pytest.raises(NumericalError, match="reps failed"):
        monte_carlo(tiny, AB, reps=40, master_seed=0)


def test_multiperiod_reduces_to_two_period_means():
    spec = dgp(tau=3, noise=NoiseSpec(sd_pre=0, sd_post=0), n=30, shock=2.0)
    mp = generate_multiperiod(spec, n_pre=1, n_post=1)
    assert mp.times == (0, 1) and mp.treatment_time == 1
    d = mp.two_period(0, 1).deltas
    assert set(d[mp.x == "A"]) == {7.0} and set(d[mp.x == "B"]) == {6.0}


def test_multiperiod_pre_gap():
    spec = dgp(
        tau=1,
        levels=(LevelSpec("A", 0.5, pre_delta=0.5), LevelSpec("B", 0.5)),
        noise=NoiseSpec(sd_pre=0, sd_post=0),
        n=20,
    )
    mp = generate_multiperiod(spec, n_pre=3, n_post=2)
    assert mp.pre_times == (0, 1, 2) and mp.post_times == (3, 4)
    panel = mp.two_period(0, 1)
    assert sdid_categorical(panel, AB).point == 0.5


def test_pretrends_monte_carlo_runs():
    spec = dgp(n=200)
    res = pretrends_monte_carlo(spec, AB, n_pre=3, reps=30, master_seed=0)
    assert res.df == 2 and 0.0 <= res.rejection_rate <= 1.0
    with pytest.raises(ConfigError):
        pretrends_monte_carlo(spec, AB, n_pre=1, reps=3)


def test_naive_means_tracked():
    spec = dgp(tau=3, noise=NoiseSpec(sd_pre=0, sd_post=0), n=50)
    s = monte_carlo(spec, AB, reps=3, master_seed=0)
    assert s.naive_means == {"A": 5.0, "B": 4.0}
    panel, _ = generate(spec)
    assert {st.level: st.mean for st in subgroup_stats(panel)} == {"A": 5.0, "B": 4.0}
