"""Tests for band-power estimators, test statistics, and subsampling."""

import math
import warnings

import numpy as np
import pytest

from spinlets import (build_cubature, build_window, draw_alm, estimate_ap,
                      estimate_asymmetry, estimate_cp, estimate_masked,
                      estimate_unfeasible, gamma_noise_theoretical,
                      gamma_theoretical, hausman_statistic, hemispheres,
                      needlet_analyze, masked_analyze, power_law,
                      subsampling_variance)
from spinlets.errors import (EmptyRegionError, InvalidChannelCountError,
                             MaskedFlagMismatchError, MissingNoiseModelError,
                             NonpositiveVarianceError, TooFewBlocksError)
from spinlets.estimators import PAPER_KIND, estimate_hausman
from spinlets.fields import PowerSpectrumModel
from spinlets.grid import empty_mask
from spinlets.transform import synthesize_on_grid
from spinlets.window import band_profile, window_support

B, S = 2.0, 2


@pytest.fixture(scope="module")
def win():
    return build_window(B)


@pytest.fixture(scope="module")
def grid4():
    return build_cubature(4, B)


def _coeffs(win, grid, j, seed, L=None):
    half = power_law(3.0, l_min=2).scaled(0.5)
    sup = window_support(win, j, S)
    L = L or sup.stop - 1
    alm = draw_alm(half, half, S, L, seed)
    return needlet_analyze(alm, win, grid, j)


def test_gamma_single_degree_spectrum(win):
    # spectrum concentrated where b = 1 exactly would give (2 l0 + 1); our
    # window peaks at b = 1 only at sqrt(e) = B^j, so check the sum directly
    j = 4
    sup = window_support(win, j, S)
    l0 = sup.start + len(sup) // 2
    spike = PowerSpectrumModel(alpha=0.0, l_min=l0,
                               g=lambda l: np.where(l == l0, 1.0, 0.0))
    got = gamma_theoretical(win, spike, j, S)
    b0 = band_profile(win, j, S, np.array([l0]))[0]
    assert got == pytest.approx(b0 ** 2 * (2 * l0 + 1), rel=1e-12)
    assert got >= 0.0


def test_gamma_scaling_across_levels(win):
    # log Gamma vs j slope approaches (2 - alpha) log B
    model = power_law(3.0, l_min=2)
    js = np.arange(3, 9)
    gammas = [gamma_theoretical(win, model, j, S) for j in js]
    slope = np.polyfit(js, np.log(gammas), 1)[0]
    want = (2 - 3.0) * math.log(B)
    assert abs(slope - want) < 0.1 * abs(want)


def test_gamma_empty_support_warns(win):
    model = power_law(3.0, l_min=2)
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        val = gamma_theoretical(win, model, 0, 25)
    assert val == 0.0
    assert any("empty window support" in str(w.message) for w in rec)


def test_gamma_noise_matches_gamma_when_spectra_equal(win):
    model = power_law(2.5, l_min=2, kind="noise")
    assert gamma_noise_theoretical(win, model, 5, S) == \
        gamma_theoretical(win, model, 5, S)
    silent = power_law(2.5, l_min=2, kind="noise", amplitude=0.0)
    assert gamma_noise_theoretical(win, silent, 5, S) == 0.0


def test_masked_flag_contracts(win, grid4):
    model = power_law(3.0, l_min=2)
    mask = empty_mask(grid4)
    plain = _coeffs(win, grid4, 4, 1)
    with pytest.raises(MaskedFlagMismatchError):
        estimate_masked(plain, mask, model)
    pix = synthesize_on_grid(
        draw_alm(model.scaled(0.5), model.scaled(0.5), S, 31, 1).full_coeffs(),
        grid4, S)
    star = masked_analyze(pix, mask, win, grid4, 4, S)
    with pytest.raises(MaskedFlagMismatchError):
        estimate_unfeasible(star, mask, model)


def test_masked_zero_map_gives_zero(win, grid4):
    model = power_law(3.0, l_min=2)
    mask = empty_mask(grid4)
    star = masked_analyze(np.zeros(grid4.n_pixels, dtype=complex), mask,
                          win, grid4, 4, S)
    rep = estimate_masked(star, mask, model)
    assert rep.value == 0.0
    assert rep.kind == "masked" and PAPER_KIND[rep.kind] == "masked_spectral"


def test_unfeasible_equals_masked_on_empty_mask(win, grid4):
    model = power_law(3.0, l_min=2)
    mask = empty_mask(grid4)
    half = model.scaled(0.5)
    alm = draw_alm(half, half, S, 31, 2)
    pix = synthesize_on_grid(alm.full_coeffs(), grid4, S)
    star = masked_analyze(pix, mask, win, grid4, 4, S)
    plain = needlet_analyze(alm, win, grid4, 4)
    a = estimate_masked(star, mask, model)
    b = estimate_unfeasible(plain, mask, model)
    assert a.value == pytest.approx(b.value, rel=1e-10)
    assert a.theoretical_target == b.theoretical_target


def test_estimator_phase_invariance(win, grid4):
    model = power_law(3.0, l_min=2)
    mask = empty_mask(grid4)
    coeffs = _coeffs(win, grid4, 4, 3)
    base = estimate_unfeasible(coeffs, mask, model)
    rng = np.random.default_rng(0)
    coeffs.values = coeffs.values * 1j ** rng.integers(0, 4, coeffs.values.size)
    rotated = estimate_unfeasible(coeffs, mask, model)
    assert rotated.value == base.value  # bit-level for |.|^2 statistics


def test_masked_expectation_full_sky(win):
    # empty mask: E masked-estimate = Gamma within 3 standard errors
    j, R = 3, 400
    grid = build_cubature(j, B)
    model = power_law(3.0, l_min=2)
    half = model.scaled(0.5)
    mask = empty_mask(grid)
    sup = window_support(win, j, S)
    vals = []
    for r in range(R):
        alm = draw_alm(half, half, S, sup.stop - 1, (50, r))
        pix = synthesize_on_grid(alm.full_coeffs(), grid, S)
        star = masked_analyze(pix, mask, win, grid, j, S)
        vals.append(estimate_masked(star, mask, model).value)
    vals = np.array(vals)
    gamma = gamma_theoretical(win, model, j, S)
    se = vals.std(ddof=1) / math.sqrt(R)
    assert abs(vals.mean() - gamma) < 3 * se


def test_subsampling_constant_and_scaling(win):
    grid = build_cubature(5, B)
    # zero map -> zero coefficients -> zero variance estimate
    assert subsampling_variance(np.zeros(grid.n_pixels), grid) == 0.0
    # a deterministic power profile E|beta_k|^2 = lambda_k * const has the
    # same block statistic everywhere, so the spread is exactly zero
    assert subsampling_variance(0.37 * grid.weights, grid) == pytest.approx(0.0, abs=1e-20)
    rng = np.random.default_rng(4)
    x = grid.weights * rng.standard_normal(grid.n_pixels) ** 2
    v1 = subsampling_variance(x, grid)
    v2 = subsampling_variance(4.0 * x, grid)  # doubled field amplitude
    assert v2 == pytest.approx(16.0 * v1, rel=1e-12)
    assert v1 > 0.0


def test_subsampling_matches_mc_variance_iid(win):
    # iid-like regime: per-pixel powers with mean proportional to lambda_k
    # (as needlet power at high j, where correlations are negligible)
    grid = build_cubature(5, B)
    rng = np.random.default_rng(9)
    lam = grid.weights
    stats, subs = [], []
    for _ in range(200):
        x = lam * rng.standard_normal(grid.n_pixels) ** 2
        stats.append(4 * math.pi * np.sum(x) / lam.sum())
        subs.append(subsampling_variance(x, grid))
    ratio = np.mean(subs) / np.var(stats, ddof=1)
    assert 0.5 < ratio < 2.0


def test_subsampling_too_few_blocks(win):
    grid = build_cubature(1, B)  # 15 pixels only
    with pytest.raises(TooFewBlocksError):
        subsampling_variance(np.ones(grid.n_pixels), grid)


def test_asymmetry_regions_and_errors(win, grid4):
    model = power_law(3.0, l_min=2)
    coeffs = _coeffs(win, grid4, 4, 5)
    regions = hemispheres(grid4, epsilon=3.0 * B ** (-4))
    rep = estimate_asymmetry(coeffs, regions, model)
    assert rep.theoretical_target == 0.0
    assert rep.variance_estimate == pytest.approx(
        rep.meta["region1_variance"] + rep.meta["region2_variance"])
    assert rep.value == pytest.approx(
        rep.meta["region1_value"] - rep.meta["region2_value"])
    big = hemispheres(grid4, epsilon=2.0)  # interiors empty
    with pytest.raises(EmptyRegionError):
        estimate_asymmetry(coeffs, big, model)


def test_ap_cp_zero_noise_consistency(win, grid4):
    # two identical noiseless channels: AP == CP == plain band-power sum
    model = power_law(3.0, l_min=2)
    coeffs = _coeffs(win, grid4, 4, 6)
    silent = [power_law(2.5, l_min=2, kind="noise", amplitude=0.0)] * 2
    ap = estimate_ap([coeffs, coeffs], silent, model)
    cp = estimate_cp([coeffs, coeffs], model)
    direct = float(np.sum(np.abs(coeffs.values) ** 2))
    assert ap.value == pytest.approx(direct, rel=1e-12)
    assert ap.value == pytest.approx(cp.value, rel=1e-10)


def test_ap_noise_model_count(win, grid4):
    model = power_law(3.0, l_min=2)
    coeffs = _coeffs(win, grid4, 4, 7)
    with pytest.raises(MissingNoiseModelError):
        estimate_ap([coeffs, coeffs], [power_law(2.5, kind="noise")], model)


def test_cp_needs_two_channels(win, grid4):
    model = power_law(3.0, l_min=2)
    coeffs = _coeffs(win, grid4, 4, 8)
    with pytest.raises(InvalidChannelCountError):
        estimate_cp([coeffs], model)


def test_cp_common_phase_invariance(win, grid4):
    model = power_law(3.0, l_min=2)
    c1 = _coeffs(win, grid4, 4, 9)
    c2 = _coeffs(win, grid4, 4, 10)
    base = estimate_cp([c1, c2], model)
    rng = np.random.default_rng(1)
    shared = np.exp(1j * S * rng.uniform(0, 2 * math.pi, grid4.n_pixels))
    c1.values = c1.values * shared
    c2.values = c2.values * shared
    rotated = estimate_cp([c1, c2], model)
    assert rotated.value == pytest.approx(base.value, rel=1e-12)


def test_coupling_at_fixed_dilation(win):
    # polar-cap mask with a fixed 0.2 rad dilation at j = 5: the masked and
    # gap-free estimators couple tightly (mean |diff|/sd < 0.1) and their
    # variances agree within 5%
    from spinlets.mc import ExperimentPlan, run_experiment
    j = 5
    eps_scale = 0.2 / (B ** (-j))
    plan = ExperimentPlan(B=B, s=S, j_list=(j,), alpha=3.0, replicates=150,
                          base_seed=808, kinds=("masked", "unfeasible"),
                          mask_fraction=0.10, epsilon_scale=eps_scale)
    _, rows = run_experiment(plan)
    vals = {"masked": [], "unfeasible": []}
    for r in rows:
        vals[r[2]].append(r[3])
    m = np.array(vals["masked"])
    u = np.array(vals["unfeasible"])
    assert np.mean(np.abs(m - u)) / m.std(ddof=1) < 0.1
    assert 0.95 < u.var(ddof=1) / m.var(ddof=1) < 1.05


def test_asymmetry_power_on_stitched_field(win):
    # two independent draws stitched at the equator, northern spectrum
    # doubled: the standardized statistic strays far positive
    j, R = 5, 25
    grid = build_cubature(j, B)
    model = power_law(3.0, l_min=2)
    half, boosted = model.scaled(0.5), model.scaled(1.0)
    regions = hemispheres(grid, epsilon=3.0 * B ** (-j))
    mask = empty_mask(grid)
    north = grid.cos_theta_pixels > 0.0
    sup = window_support(win, j, S)
    stats = []
    for r in range(R):
        south_alm = draw_alm(half, half, S, sup.stop - 1, (61, r, 0))
        north_alm = draw_alm(boosted, boosted, S, sup.stop - 1, (61, r, 1))
        pix = np.where(north,
                       synthesize_on_grid(north_alm.full_coeffs(), grid, S),
                       synthesize_on_grid(south_alm.full_coeffs(), grid, S))
        coeffs = masked_analyze(pix, mask, win, grid, j, S)
        stats.append(estimate_asymmetry(coeffs, regions, model).standardized)
    assert np.mean(stats) > 3.0


def _channel_setup(win, grid, j, seed, d=3, bias_factor=1.0):
    model = power_law(3.0, l_min=2)
    noise = [power_law(2.5, l_min=2, kind="noise", amplitude=1.0)] * d
    half = model.scaled(0.5)
    sup = window_support(win, j, S)
    signal = draw_alm(half, half, S, sup.stop - 1, (seed, 0))
    from spinlets.fields import observe_channels
    chans = observe_channels(signal, noise, (seed, 1))
    coeffs = [needlet_analyze(chans.channel(r), win, grid, j) for r in range(d)]
    adopted = [m.scaled(bias_factor) for m in noise]
    return model, adopted, coeffs


def test_hausman_identity_machine_precision(win, grid4):
    for seed in (11, 12, 13):
        model, noise, coeffs = _channel_setup(win, grid4, 4, seed)
        rep = estimate_hausman(coeffs, noise, model)
        assert rep.meta["identity_residual"] < 1e-10
        assert rep.kind == "hausman"


def test_hausman_identity_holds_even_when_bias_misspecified(win, grid4):
    model, noise, coeffs = _channel_setup(win, grid4, 4, 14, bias_factor=1.5)
    rep = estimate_hausman(coeffs, noise, model)
    assert rep.meta["identity_residual"] < 1e-10


def test_hausman_requires_positive_variance(win, grid4):
    model, noise, coeffs = _channel_setup(win, grid4, 4, 15)
    ap = estimate_ap(coeffs, noise, model)
    cp = estimate_cp(coeffs, model)
    with pytest.raises(NonpositiveVarianceError):
        hausman_statistic(ap, cp, 0.0)


def test_report_serialization(win, grid4):
    model = power_law(3.0, l_min=2)
    mask = empty_mask(grid4)
    coeffs = _coeffs(win, grid4, 4, 16)
    rep = estimate_unfeasible(coeffs, mask, model)
    d = rep.to_dict()
    assert set(d) == {"j", "s", "kind", "paper_kind", "value",
                      "theoretical_target", "variance_estimate",
                      "standardized", "meta"}
    assert d["paper_kind"] == "gapfree_spectral"
    assert d["standardized"] == pytest.approx(
        (d["value"] - d["theoretical_target"])
        / math.sqrt(d["variance_estimate"]))
