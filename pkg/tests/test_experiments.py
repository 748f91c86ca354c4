import numpy as np
import pytest

from jointdiffusion.denoiser import GpPrior, zero_eps
from jointdiffusion.experiments import (
    ChainVarianceResult,
    SeamResult,
    StepVarianceResult,
    chain_variance,
    desk_panorama,
    ensemble,
    expected_step_variance,
    overlap_variance_ratio,
    seam_experiment,
    single_step_variance,
    stacked_layout,
    style_sweep,
)
from jointdiffusion.fusion import FusionConfig
from jointdiffusion.sampler import SamplerKind
from jointdiffusion.schedule import default_schedule, sigma
from jointdiffusion.tiling import coverage_count, make_guidance_map, make_layout

SCHED = default_schedule(100)
DDPM = SamplerKind("ddpm", "beta")


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_stacked_layout_centre_sees_every_patch(n):
    cov = coverage_count(stacked_layout(n))
    assert cov.shape == (1, 2 * n - 1)
    assert cov[0, n - 1] == n == cov.max()


def test_expected_variance_closed_forms():
    s2 = sigma(SCHED, 30, "beta") ** 2
    w = [1.0, 3.0]
    assert expected_step_variance(DDPM, SCHED, 30, FusionConfig("md"), w) == pytest.approx(s2 / 2)
    assert expected_step_variance(DDPM, SCHED, 30, FusionConfig("gf"), w) == pytest.approx(s2 * 10 / 16)
    assert expected_step_variance(DDPM, SCHED, 30, FusionConfig("gf", "corrected"), w) == pytest.approx(s2)
    assert expected_step_variance(SamplerKind("ddim"), SCHED, 30, FusionConfig(), w) == 0.0


def test_single_step_tilde_variant():
    kind = SamplerKind("ddpm", "tilde")
    r = single_step_variance(3, FusionConfig("md"), trials=60_000, t=20, schedule=SCHED, kind=kind)
    assert r.expected == pytest.approx(sigma(SCHED, 20, "tilde") ** 2 / 3)
    assert r.ratio == pytest.approx(1.0, abs=0.04)


def test_single_step_rejects_bad_weights():
    with pytest.raises(ValueError):
        single_step_variance(2, FusionConfig("gf"), trials=10, schedule=SCHED, kind=DDPM, weights=[1.0, 0.0])


def test_step_ratio_deterministic_cases():
    assert StepVarianceResult("MD", 2, 5, 10, 0.0, 0.0).ratio == 1.0
    assert StepVarianceResult("MD", 2, 5, 10, 0.1, 0.0).ratio == np.inf


def test_ensemble_members_and_determinism():
    layout = make_layout((4, 10), (4, 4), (4, 3))
    g = make_guidance_map((4, 4))
    a = ensemble(zero_eps, DDPM, SCHED, layout, g, FusionConfig(), [1, 2], batch=3)
    b = ensemble(zero_eps, DDPM, SCHED, layout, g, FusionConfig(), [1, 2], batch=3)
    assert a.shape == (6, 4, 10)
    np.testing.assert_array_equal(a, b)
    assert ensemble(zero_eps, DDPM, SCHED, layout, g, FusionConfig(), [1, 2]).shape == (2, 4, 10)


def test_overlap_variance_ratio_on_synthetic_ensemble():
    layout = make_layout((2, 5), (2, 3), (2, 2))
    rng = np.random.default_rng(0)
    samples = rng.standard_normal((50_000, 2, 5))
    samples[:, :, 2] *= np.sqrt(0.5)
    top, single = overlap_variance_ratio(samples, layout)
    assert top / single == pytest.approx(0.5, rel=0.03)
    with pytest.raises(ValueError):
        overlap_variance_ratio(samples, make_layout((2, 5), (2, 5), (1, 1)))


def test_chain_variance_small_run_orders_modes():
    layout = make_layout((8, 20), (8, 8), (8, 6))
    g = make_guidance_map((8, 8))
    prior = GpPrior.squared_exponential((8, 8), 3.0)
    seeds = [0, 1]
    plain = chain_variance(prior, DDPM, SCHED, layout, g, FusionConfig("md"), seeds, 200)
    corr = chain_variance(prior, DDPM, SCHED, layout, g, FusionConfig("md", "corrected"), seeds, 200)
    assert isinstance(plain, ChainVarianceResult) and plain.members == 400
    assert plain.ratio < corr.ratio
    assert corr.to_dict()["ratio"] == corr.ratio


def test_seam_experiment_pairs_seeds():
    layout = make_layout((8, 20), (8, 8), (8, 6))
    g = make_guidance_map((8, 8))
    prior = GpPrior.squared_exponential((8, 8), 3.0)
    res = seam_experiment(prior, SamplerKind("ddim", steps=10), SCHED, layout, g,
                          [FusionConfig("md"), FusionConfig("gf")], [0, 1, 2])
    assert res.labels == ["MD", "GF"]
    assert len(res.energies["MD"]) == 3
    assert 0.0 < res.sign_test("GF", "MD") <= 1.0
    with pytest.raises(ValueError):
        seam_experiment(prior, DDPM, SCHED, layout, g, [FusionConfig()], [0])


def test_sign_test_all_wins():
    r = SeamResult(["MD", "GF"], list(range(20)), {"MD": [1.0] * 20, "GF": [0.0] * 20})
    assert r.wins("GF", "MD") == 20
    assert r.sign_test("GF", "MD") == pytest.approx(0.5**20)


def test_style_sweep_endpoints():
    res = style_sweep((4, 12), (4, 4), trials=5, seed=3)
    assert res.cosines.shape == (5, 11)
    np.testing.assert_allclose(res.cosines[:, -1], 1.0)
    assert res.to_dict()["trials"] == 5


def test_desk_panorama_shape():
    layout, g = desk_panorama()
    assert len(layout) == 9 and g.shape == (64, 64)


@pytest.mark.parametrize("config, factor", [
    (FusionConfig("md"), 1.0),
    (FusionConfig("md", "corrected"), 3.0),
])
def test_shared_noise_single_step(config, factor):
    s2 = sigma(SCHED, 40, "beta") ** 2
    r = single_step_variance(3, config, trials=60_000, t=40, schedule=SCHED, kind=DDPM,
                             shared_noise=True, seed=5)
    assert r.expected == pytest.approx(s2 * factor)
    assert r.ratio == pytest.approx(1.0, abs=0.03)
