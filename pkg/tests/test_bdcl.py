"""Moment transfer and the back-door fusion blend."""

import numpy as np
import pytest

import sdcl.autodiff as ad
from sdcl import bdcl
from sdcl.autodiff import Tensor
from sdcl.bdcl import (
    FusionConfig,
    NoisePolicy,
    adain_transfer,
    causal_fuse,
    nwgm_gap_report,
)
from sdcl.errors import ConfigError, ContractError, ShapeError
from sdcl.sgem import ConfounderSet


def _moments(arr: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return arr.mean(axis=(2, 3)), arr.std(axis=(2, 3))


def _filled_set(rng, n: int, channels: int, count: int | None = None) -> ConfounderSet:
    conf = ConfounderSet(n, channels)
    conf.mu[:] = rng.standard_normal((n, channels))
    conf.sigma[:] = 0.5 + rng.random((n, channels))
    conf.initialized[: (count if count is not None else n)] = True
    return conf


OFF = NoisePolicy(mode="off")


# ------------------------------------------------------------- noise policy


def test_noise_off_is_unit():
    assert np.all(OFF.sample(5, np.random.default_rng(0)) == 1.0)


def test_noise_bounded_respects_bounds():
    pol = NoisePolicy(mode="bounded", scale=5.0, bounds=(0.5, 1.5))
    draw = pol.sample(1000, np.random.default_rng(1))
    assert draw.min() >= 0.5 and draw.max() <= 1.5


def test_noise_literal_is_raw_gaussian():
    pol = NoisePolicy(mode="paper_literal")
    draw = pol.sample(4000, np.random.default_rng(2))
    assert draw.min() < 0.0
    assert abs(draw.mean()) < 0.1 and abs(draw.std() - 1.0) < 0.1


def test_noise_validation():
    with pytest.raises(ConfigError):
        NoisePolicy(mode="wild").validate()
    with pytest.raises(ConfigError):
        NoisePolicy(scale=-0.1).validate()
    with pytest.raises(ConfigError):
        NoisePolicy(bounds=(2.0, 1.0)).validate()
    with pytest.raises(ConfigError):
        FusionConfig(alpha=1.2).validate()


# ------------------------------------------------------------ adain transfer


def test_adain_hits_target_moments():
    # (mu, sigma) (0, 1) -> (5, 2) with unit noise
    rng = np.random.default_rng(3)
    base = rng.standard_normal((1, 1, 8, 8))
    base = (base - base.mean()) / base.std()
    out = adain_transfer(
        Tensor(base), (np.array([5.0]), np.array([2.0])), OFF, seed=0
    )
    mu, sigma = _moments(out.data)
    assert abs(mu[0, 0] - 5.0) < 1e-9
    assert abs(sigma[0, 0] - 2.0) < 1e-9


def test_adain_own_stats_is_identity(rng):
    f = rng.random((2, 3, 6, 6)) * 2.0 + 1.0
    mu, sigma = _moments(f)
    for b in range(2):
        out = adain_transfer(Tensor(f[b : b + 1]), (mu[b], sigma[b]), OFF, seed=0)
        assert np.abs(out.data - f[b : b + 1]).max() < 1e-9


def test_adain_constant_input_maps_to_target_mean():
    out = adain_transfer(
        Tensor(np.full((1, 1, 4, 4), 9.0)),
        (np.array([3.0]), np.array([1.0])),
        OFF,
        seed=0,
    )
    assert np.abs(out.data - 3.0).max() < 1e-9


def test_adain_moment_match_invariant_with_fixed_noise(rng):
    # 100 random maps with non-degenerate channels: post-transfer moments
    # equal (mu_s, |eps| * sigma_s) within 1e-6 for any fixed noise draw.
    for trial in range(100):
        local = np.random.default_rng(trial)
        f = local.standard_normal((2, 3, 5, 7)) * (1.0 + local.random())
        mu_s = local.standard_normal(3) * 2.0
        sigma_s = 0.2 + local.random(3)
        pol = NoisePolicy(mode="bounded", scale=0.2)
        eps = pol.sample(3, np.random.default_rng(1000 + trial))
        out = adain_transfer(Tensor(f), (mu_s, sigma_s), pol, seed=1000 + trial)
        mu, sigma = _moments(out.data)
        assert np.abs(mu - mu_s).max() < 1e-6
        assert np.abs(sigma - np.abs(eps) * sigma_s).max() < 1e-6


def test_adain_gradients_only_through_features(rng):
    f = Tensor(rng.random((1, 2, 4, 4)), requires_grad=True)
    out = adain_transfer(f, (np.zeros(2), np.ones(2)), OFF, seed=0)
    ad.sum_all(out * out).backward()
    assert f.grad is not None and np.all(np.isfinite(f.grad))


def test_adain_shape_errors(rng):
    with pytest.raises(ShapeError):
        adain_transfer(Tensor(np.zeros((2, 3))), (np.zeros(3), np.ones(3)), OFF, 0)
    with pytest.raises(ShapeError):
        adain_transfer(
            Tensor(np.zeros((1, 3, 4, 4))), (np.zeros(2), np.ones(2)), OFF, 0
        )


# -------------------------------------------------------------- causal fuse


def test_fuse_alpha_one_returns_input_exactly(rng):
    conf = _filled_set(rng, 3, 2)
    f = Tensor(rng.random((2, 2, 4, 4)))
    out = causal_fuse(f, conf, FusionConfig(alpha=1.0), OFF, seed=0)
    assert out.data.tobytes() == f.data.tobytes()


def test_fuse_alpha_zero_own_stats_is_identity(rng):
    # One stratum holding exactly the input's own moments: restyled == input.
    f = rng.random((1, 2, 5, 5)) + 0.5
    mu, sigma = _moments(f)
    conf = ConfounderSet(1, 2)
    conf.mu[0] = mu[0]
    conf.sigma[0] = sigma[0]
    conf.initialized[0] = True
    out = causal_fuse(Tensor(f), conf, FusionConfig(alpha=0.0), OFF, seed=0)
    assert np.abs(out.data - f).max() < 1e-9


def test_fuse_scalar_toy_blend(rng):
    # alpha 0.7, features 1.0, single stratum restyling to 2.0: 1.3.
    conf = ConfounderSet(1, 1)
    conf.mu[0] = 2.0
    conf.sigma[0] = 0.0
    conf.initialized[0] = True
    f = Tensor(np.ones((1, 1, 4, 4)))
    out = causal_fuse(f, conf, FusionConfig(alpha=0.7), OFF, seed=0)
    assert np.abs(out.data - 1.3).max() < 1e-9


def test_fuse_empty_set_passthrough_and_counter(rng):
    conf = ConfounderSet(4, 2)
    before = bdcl.counters["empty_confounder_set"]
    f = Tensor(rng.random((1, 2, 4, 4)))
    out = causal_fuse(f, conf, FusionConfig(), OFF, seed=0)
    assert out is f
    assert bdcl.counters["empty_confounder_set"] == before + 1


def test_fuse_call_counter_increments(rng):
    conf = _filled_set(rng, 2, 2)
    before = bdcl.counters["fuse_calls"]
    causal_fuse(Tensor(rng.random((1, 2, 4, 4))), conf, FusionConfig(), OFF, 0)
    assert bdcl.counters["fuse_calls"] == before + 1


def test_fuse_matches_per_stratum_average(rng):
    # Moment averaging must equal averaging the individually restyled maps.
    conf = _filled_set(rng, 4, 3, count=3)
    f = rng.random((2, 3, 4, 4)) + 0.2
    alpha = 0.6
    out = causal_fuse(Tensor(f), conf, FusionConfig(alpha=alpha), OFF, seed=0)
    per = [
        adain_transfer(Tensor(f), (conf.mu[s], conf.sigma[s]), OFF, 0).data
        for s in range(3)
    ]
    expected = alpha * f + (1 - alpha) * np.mean(per, axis=0)
    assert np.abs(out.data - expected).max() < 1e-12


def test_fuse_alpha_term_linearity(rng):
    # Two-point check: out(alpha) is affine in alpha for fixed strata.
    conf = _filled_set(rng, 3, 2)
    f = Tensor(rng.random((1, 2, 4, 4)))
    o0 = causal_fuse(f, conf, FusionConfig(alpha=0.0), OFF, 1).data
    o1 = causal_fuse(f, conf, FusionConfig(alpha=1.0), OFF, 1).data
    mid = causal_fuse(f, conf, FusionConfig(alpha=0.3), OFF, 1).data
    assert np.abs(mid - (0.3 * o1 + 0.7 * o0)).max() < 1e-9


def test_fuse_unit_noise_is_bit_reproducible(rng):
    conf = _filled_set(rng, 3, 2)
    f = Tensor(rng.random((2, 2, 4, 4)))
    a = causal_fuse(f, conf, FusionConfig(), OFF, seed=5).data
    b = causal_fuse(f, conf, FusionConfig(), OFF, seed=5).data
    assert a.tobytes() == b.tobytes()


def test_fuse_seeded_noise_is_reproducible_and_seed_sensitive(rng):
    conf = _filled_set(rng, 3, 2)
    f = Tensor(rng.random((2, 2, 4, 4)))
    pol = NoisePolicy(mode="bounded", scale=0.3)
    a = causal_fuse(f, conf, FusionConfig(), pol, seed=5).data
    b = causal_fuse(f, conf, FusionConfig(), pol, seed=5).data
    c = causal_fuse(f, conf, FusionConfig(), pol, seed=6).data
    assert a.tobytes() == b.tobytes()
    assert not np.array_equal(a, c)


def test_fuse_channel_mismatch(rng):
    conf = _filled_set(rng, 2, 3)
    with pytest.raises(ShapeError):
        causal_fuse(Tensor(rng.random((1, 2, 4, 4))), conf, FusionConfig(), OFF, 0)


def test_fuse_gradient_flows(rng):
    conf = _filled_set(rng, 3, 2)
    f = Tensor(rng.random((1, 2, 4, 4)), requires_grad=True)
    out = causal_fuse(f, conf, FusionConfig(), OFF, seed=0)
    ad.mean_all(out).backward()
    assert f.grad is not None and np.all(np.isfinite(f.grad))


# ---------------------------------------------------------------- nwgm gap


def _linear_logit_fn(rng, channels: int, classes: int):
    w = rng.standard_normal((classes, channels)) * 0.3

    def fn(f: Tensor) -> Tensor:
        return ad.linear(ad.spatial_mean(f), Tensor(w), Tensor(np.zeros(classes)))

    return fn


def test_gap_zero_for_identical_strata(rng):
    # All strata equal: single-stratum blends coincide with the average.
    conf = ConfounderSet(3, 2)
    conf.mu[:] = np.tile(rng.standard_normal(2), (3, 1))
    conf.sigma[:] = np.tile(0.5 + rng.random(2), (3, 1))
    conf.initialized[:] = True
    f = Tensor(rng.random((4, 2, 4, 4)))
    report = nwgm_gap_report(_linear_logit_fn(rng, 2, 3), f, conf)
    assert report.max_tv < 1e-9


def test_gap_zero_when_logits_insensitive(rng):
    conf = _filled_set(rng, 3, 2)
    f = Tensor(rng.random((3, 2, 4, 4)))

    def constant_fn(t: Tensor) -> Tensor:
        return ad.spatial_mean(t) * Tensor(0.0)

    report = nwgm_gap_report(constant_fn, f, conf)
    assert report.max_tv < 1e-12


def test_gap_requires_two_strata(rng):
    conf = _filled_set(rng, 3, 2, count=1)
    with pytest.raises(ContractError):
        nwgm_gap_report(_linear_logit_fn(rng, 2, 3), Tensor(rng.random((1, 2, 4, 4))), conf)


def test_gap_positive_for_distinct_strata(rng):
    conf = _filled_set(rng, 4, 3)
    conf.mu *= 3.0
    f = Tensor(rng.random((5, 3, 4, 4)))
    report = nwgm_gap_report(_linear_logit_fn(rng, 3, 4), f, conf)
    assert report.max_tv > 0.0
    assert report.mean_tv <= report.max_tv
    assert report.per_sample.shape == (5,)
    assert np.all(report.per_sample >= 0.0) and np.all(report.per_sample <= 1.0)


def test_gap_report_deterministic(rng):
    conf = _filled_set(rng, 3, 2)
    f = Tensor(rng.random((2, 2, 4, 4)))
    fn = _linear_logit_fn(rng, 2, 3)
    a = nwgm_gap_report(fn, f, conf)
    b = nwgm_gap_report(fn, f, conf)
    assert a.per_sample.tobytes() == b.per_sample.tobytes()
