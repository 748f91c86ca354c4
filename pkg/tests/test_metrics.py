import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats
from skimage.metrics import structural_similarity

from jointdiffusion.metrics import (
    MetricReport,
    ensemble_moments,
    ks_critical_value,
    ks_statistic,
    ks_statistic_columns,
    seam_energy,
    ssim,
)


def test_seam_energy_constant_grid():
    assert seam_energy(np.full((4, 10), 3.0), [4]) == 0.0


def test_seam_energy_step_edge():
    g = np.zeros((3, 8))
    g[:, 5:] = 1.0
    assert seam_energy(g, [4]) == 1.0


@settings(max_examples=30)
@given(shift=st.floats(-1e3, 1e3), seed=st.integers(0, 1000))
def test_seam_energy_shift_invariant(shift, seed):
    g = np.random.default_rng(seed).standard_normal((5, 12))
    assert seam_energy(g + shift, [3, 7]) == pytest.approx(seam_energy(g, [3, 7]), abs=1e-9)


def test_seam_energy_errors():
    with pytest.raises(ValueError):
        seam_energy(np.zeros((2, 5)), [])
    with pytest.raises(ValueError):
        seam_energy(np.zeros((2, 5)), [4])


def test_ensemble_moments_two_samples():
    mean, var = ensemble_moments([np.zeros((2, 3)), np.full((2, 3), 2.0)])
    np.testing.assert_array_equal(mean, 1.0)
    np.testing.assert_array_equal(var, 2.0)


def test_ensemble_moments_identical():
    g = np.random.default_rng(0).standard_normal((3, 3))
    _, var = ensemble_moments([g, g, g])
    np.testing.assert_array_equal(var, 0.0)


def test_ensemble_moments_standard_normal():
    samples = np.random.default_rng(1).standard_normal((100_000, 4, 4))
    _, var = ensemble_moments(samples)
    assert np.mean(np.abs(var - 1.0) < 0.02) >= 0.99


def test_ensemble_moments_needs_two():
    with pytest.raises(ValueError):
        ensemble_moments([np.zeros((2, 2))])


def test_ks_self_sample_small():
    x = np.random.default_rng(2).standard_normal(10_000)
    d = ks_statistic(x, stats.norm.cdf)
    assert d < 0.02
    assert d == pytest.approx(stats.kstest(x, "norm").statistic, abs=1e-12)


def test_ks_identical_samples_at_median():
    assert ks_statistic(np.zeros(20), stats.norm.cdf) == pytest.approx(0.5)


def test_ks_shifted_normal():
    x = np.random.default_rng(3).standard_normal(10_000)
    analytic = stats.norm.cdf(0.5) - stats.norm.cdf(-0.5)
    d = ks_statistic(x, lambda v: stats.norm.cdf(v, loc=1.0))
    assert d == pytest.approx(analytic, abs=0.015)
    assert d == pytest.approx(0.38, abs=0.02)


def test_ks_invariant_under_monotone_transform():
    x = np.random.default_rng(4).standard_normal(500)
    d = ks_statistic(x, stats.norm.cdf)
    assert ks_statistic(np.exp(x), lambda v: stats.norm.cdf(np.log(v))) == pytest.approx(d, abs=1e-12)


def test_ks_columns_match_scalar():
    x = np.random.default_rng(5).normal(0.2, 1.0, size=(300, 3, 2))
    cols = ks_statistic_columns(x, stats.norm.cdf)
    for i in range(3):
        for j in range(2):
            assert cols[i, j] == pytest.approx(ks_statistic(x[:, i, j], stats.norm.cdf), abs=1e-15)


def test_ks_empty():
    with pytest.raises(ValueError):
        ks_statistic([], stats.norm.cdf)


def test_ks_critical_value():
    # asymptotic Kolmogorov value 1.6276 / sqrt(n) at the 1% level
    assert ks_critical_value(5000, 0.01) == pytest.approx(1.6276 / np.sqrt(5000), rel=0.01)


def _skimage_ssim(a, b):
    rng = max(a.max(), b.max()) - min(a.min(), b.min())
    return structural_similarity(a, b, data_range=rng, gaussian_weights=True, sigma=1.5,
                                 use_sample_covariance=False)


@pytest.mark.parametrize("shape", [(11, 11), (20, 33), (64, 64)])
def test_ssim_matches_reference_implementation(shape):
    rng = np.random.default_rng(6)
    a = rng.standard_normal(shape)
    b = 0.6 * a + 0.4 * rng.standard_normal(shape)
    assert ssim(a, b) == pytest.approx(_skimage_ssim(a, b), abs=1e-10)


def test_ssim_identity_and_sign():
    rng = np.random.default_rng(7)
    a = rng.standard_normal((32, 32))
    assert ssim(a, a) == pytest.approx(1.0, abs=1e-12)
    # locally zero-mean texture; with sizeable local means the luminance term
    # flips sign too and the product comes out positive
    i, j = np.indices((32, 32))
    checker = (-1.0) ** (i + j) * (1 + 0.01 * rng.standard_normal((32, 32)))
    assert ssim(checker, -checker) < 0


def test_ssim_symmetric():
    rng = np.random.default_rng(8)
    a, b = rng.standard_normal((2, 24, 24))
    assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-12)


def test_ssim_monotone_in_noise():
    rng = np.random.default_rng(9)
    a = np.cumsum(np.cumsum(rng.standard_normal((48, 48)), 0), 1)
    a /= a.std()
    noise = rng.standard_normal(a.shape)
    scores = [ssim(a, a + amp * noise) for amp in (0.05, 0.3, 1.5)]
    assert scores[0] > scores[1] > scores[2]
    assert scores[2] < scores[0] - 0.3


def test_ssim_errors():
    with pytest.raises(ValueError):
        ssim(np.zeros((12, 12)), np.zeros((12, 13)))
    with pytest.raises(ValueError):
        ssim(np.zeros((10, 10)), np.zeros((10, 10)))


def test_report_serialisation():
    r = MetricReport(meta={"run": "x"})
    r.add("b", 2.0)
    r.add("a", 1.5)
    r.add_map("m", np.eye(2))
    doc = json.loads(r.to_json())
    assert doc["scalars"] == {"a": 1.5, "b": 2.0}
    assert doc["maps"]["m"] == [[1.0, 0.0], [0.0, 1.0]]
    assert r.to_csv().splitlines() == ["metric,value", "a,1.5", "b,2.0"]


def test_report_rejects_non_finite():
    r = MetricReport()
    with pytest.raises(FloatingPointError):
        r.add("x", float("nan"))
    with pytest.raises(FloatingPointError):
        r.add_map("m", np.array([[np.inf]]))
