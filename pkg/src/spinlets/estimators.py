"""Spectral estimators and test statistics: masked, two-region, AP, CP, Hausman.

The level-j band power is Gamma_{j;s} = sum_l b^2(sqrt(e_ls)/B^j) C_l (2l+1).
The masked estimator is normalized so that its expectation is Gamma exactly:

    (4pi / sum_{k in obs} lambda_k) * sum_{k in obs} |beta*_{jk;s}|^2

with obs the pixels outside the dilated region G^eps (the written form of
the estimator divides by sum lambda only; the extra 4pi makes the full-sky
expectation match the band power, since sum_k lambda_k = 4pi).  The noise
bias of the auto-power estimator carries the same per-pixel lambda factor,
E|beta_{jk;sN}|^2 = lambda_k GammaN_{j;s} / 4pi.

Variance normalizers come from block subsampling: observed pixels are split
into latitude-band x longitude-sector blocks, the statistic is recomputed on
each block (weight-normalized), and

    Var(S) = [sum_b w_b^2 (S_b - S)^2 / (1 - sum_b w_b^2)] * nu/(nu - 2)

with w_b = W_b / W and nu = N_blocks - 1; the trailing factor keeps the
*standardized* statistic at unit variance (the block spread enters a
denominator, as in a t statistic).  Block correlations are negligible
because coefficient correlations decay like (1 + B^j d)^(-M) while the
blocks are much wider than B^-j.

Final scalar reductions use math.fsum, so estimator values do not depend on
pixel ordering or parallel scheduling.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (EmptyObservedRegionError, InvalidChannelCountError,
                     MaskedFlagMismatchError, MissingNoiseModelError,
                     NonpositiveVarianceError, TooFewBlocksError)
from .fields import PowerSpectrumModel, cl_profile
from .grid import CubatureGrid, RegionPair, SkyMask
from .transform import NeedletCoefficients
from .window import NeedletWindow, band_profile, window_support

FOUR_PI = 4.0 * math.pi

PAPER_KIND = {
    "masked": "masked_spectral",
    "unfeasible": "gapfree_spectral",
    "ap": "auto_power",
    "cp": "cross_power",
    "asymmetry": "two_region_difference",
    "hausman": "hausman_difference",
}


@dataclass(eq=False)
class EstimateReport:
    """One estimator evaluation: value, target, variance, standardized form."""

    j: int
    s: int
    kind: str
    value: float
    theoretical_target: float
    variance_estimate: float
    standardized: float
    meta: dict = field(default_factory=dict)
    # per-pixel statistic contributions, kept for composition (difference
    # statistics, subsampling of differences); not serialized
    pixel_values: np.ndarray | None = field(default=None, repr=False)
    channel_values: list | None = field(default=None, repr=False)
    noise_bias: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "j": self.j, "s": self.s, "kind": self.kind,
            "paper_kind": PAPER_KIND.get(self.kind, self.kind),
            "value": self.value,
            "theoretical_target": self.theoretical_target,
            "variance_estimate": self.variance_estimate,
            "standardized": self.standardized,
            "meta": self.meta,
        }


def _standardize(value, target, variance):
    if variance > 0.0:
        return (value - target) / math.sqrt(variance)
    return 0.0


def gamma_theoretical(window: NeedletWindow, model: PowerSpectrumModel,
                      j: int, s: int) -> float:
    """Band power Gamma_{j;s} = sum_l b^2 C_l (2l+1) over the window support."""
    support = window_support(window, j, s)
    if len(support) == 0:
        warnings.warn(f"empty window support at level j={j}, spin s={s}",
                      RuntimeWarning, stacklevel=2)
        return 0.0
    ells = np.asarray(support)
    b2 = band_profile(window, j, s, ells) ** 2
    cl = cl_profile(model, ells)
    return float(np.sum(b2 * cl * (2 * ells + 1)))


def gamma_noise_theoretical(window: NeedletWindow, noise_model: PowerSpectrumModel,
                            j: int, s: int) -> float:
    """Noise band power GammaN_{j;s}, same convention applied to C_lN."""
    return gamma_theoretical(window, noise_model, j, s)


def _grid_meta(grid: CubatureGrid, window: NeedletWindow) -> dict:
    return {"grid": f"j={grid.j} B={grid.B:g} npix={grid.n_pixels}",
            "window": f"B={window.B:g} order={window.smoothness_order}"}


def block_labels(grid: CubatureGrid, observed: np.ndarray,
                 n_blocks: int | None = None) -> np.ndarray:
    """Latitude-band x longitude-sector partition of the observed pixels.

    Returns an int array over all pixels: block id for observed pixels, -1
    elsewhere.  Bands are weight-quantiles (pixel order is already
    theta-major), sectors are equal phi intervals; undersized blocks merge
    into their band neighbour.
    """
    obs_idx = np.flatnonzero(observed)
    n_obs = obs_idx.size
    if n_blocks is None:
        n_blocks = max(8, math.ceil(math.sqrt(n_obs) / 4.0))
    n_lat = max(2, int(round(math.sqrt(n_blocks / 2.0))))
    n_lon = max(2, math.ceil(n_blocks / n_lat))

    w = grid.weights[obs_idx]
    cum = np.cumsum(w) - 0.5 * w
    band = np.minimum((cum / cum[-1] * n_lat).astype(int)
                      if cum[-1] > 0 else np.zeros(n_obs, int), n_lat - 1)
    sector = np.minimum((grid.phi_pixels[obs_idx] / (2.0 * math.pi)
                         * n_lon).astype(int), n_lon - 1)
    raw = band * n_lon + sector

    labels = np.full(grid.n_pixels, -1, dtype=np.int64)
    # merge undersized blocks into the next sector of the same band
    final = {}
    next_id = 0
    for b in range(n_lat):
        ids = [b * n_lon + c for c in range(n_lon)]
        counts = {i: int(np.sum(raw == i)) for i in ids}
        carry = None
        for i in ids:
            if counts[i] == 0 and carry is None:
                continue
            if carry is not None:
                raw[raw == carry] = i
                counts[i] += counts.pop(carry)
                carry = None
            if counts[i] < 16:
                carry = i
        if carry is not None:  # fold a trailing runt into the previous block
            others = [i for i in ids if counts.get(i, 0) >= 16]
            if others:
                raw[raw == carry] = others[-1]
        for i in ids:
            if counts.get(i, 0) >= 16 and np.any(raw == i):
                final[i] = next_id
                next_id += 1
    mapped = np.array([final.get(r, -1) for r in raw])
    labels[obs_idx] = mapped
    return labels


def subsampling_variance(pixel_values: np.ndarray, grid: CubatureGrid,
                         observed: np.ndarray | None = None,
                         n_blocks: int | None = None) -> float:
    """Block-subsampling estimate of Var of S = 4pi sum(v) / sum(lambda).

    pixel_values are the per-pixel contributions of the statistic being
    normalized (|beta|^2 terms, bias-corrected channel averages, or
    differences of such).
    """
    if observed is None:
        observed = np.ones(grid.n_pixels, dtype=bool)
    labels = block_labels(grid, observed, n_blocks)
    used = labels >= 0
    if not used.any():
        raise TooFewBlocksError("no admissible subsampling blocks")
    n_b = labels[used].max() + 1
    if n_b < 8:
        raise TooFewBlocksError(f"only {n_b} blocks of >= 16 pixels (need 8)")

    w = grid.weights
    vals = np.asarray(pixel_values, dtype=np.float64)
    w_b = np.bincount(labels[used], weights=w[used], minlength=n_b)
    v_b = np.bincount(labels[used], weights=vals[used], minlength=n_b)
    W = w_b.sum()
    s_b = FOUR_PI * v_b / w_b
    s_full = FOUR_PI * v_b.sum() / W
    shares = w_b / W
    denom = 1.0 - float(np.sum(shares ** 2))
    if denom <= 0.0:
        raise TooFewBlocksError("degenerate block weights")
    var = float(np.sum(shares ** 2 * (s_b - s_full) ** 2) / denom)
    # small-sample correction: the spread over ~N_b blocks enters a
    # denominator, so scale by nu/(nu-2) (t-statistic variance) to keep the
    # standardized statistic at unit variance
    nu = n_b - 1
    if nu > 2:
        var *= nu / (nu - 2.0)
    return var


def _weighted_estimate(pixel_values: np.ndarray, grid: CubatureGrid,
                       selection: np.ndarray) -> float:
    """S = 4pi sum_sel(v) / sum_sel(lambda), compensated summation."""
    idx = np.flatnonzero(selection)
    if idx.size == 0:
        raise EmptyObservedRegionError("estimator selection is empty")
    num = math.fsum(pixel_values[idx].tolist())
    den = math.fsum(grid.weights[idx].tolist())
    return FOUR_PI * num / den


def _spectral_report(coeffs: NeedletCoefficients, selection: np.ndarray,
                     model: PowerSpectrumModel, kind: str) -> EstimateReport:
    grid, window = coeffs.grid, coeffs.window
    x = np.abs(coeffs.values) ** 2
    value = _weighted_estimate(x, grid, selection)
    target = gamma_theoretical(window, model, coeffs.j, coeffs.s)
    meta = _grid_meta(grid, window)
    if len(window_support(window, coeffs.j, coeffs.s)) == 0:
        meta["empty_support"] = True
        variance = 0.0
    else:
        variance = subsampling_variance(x, grid, observed=selection)
    return EstimateReport(
        j=coeffs.j, s=coeffs.s, kind=kind, value=value,
        theoretical_target=target, variance_estimate=variance,
        standardized=_standardize(value, target, variance),
        meta=meta, pixel_values=x)


def estimate_masked(coeffs: NeedletCoefficients, mask: SkyMask,
                    model: PowerSpectrumModel) -> EstimateReport:
    """Masked band-power estimate over pixels outside the dilated region."""
    if not coeffs.masked:
        raise MaskedFlagMismatchError(
            "estimate_masked needs coefficients computed with the mask "
            "(use estimate_unfeasible for gap-free coefficients)")
    if mask.grid.fingerprint != coeffs.grid.fingerprint:
        raise ValueError("mask and coefficients use different grids")
    rep = _spectral_report(coeffs, mask.observed, model, "masked")
    rep.meta["mask"] = f"excluded={int(mask.excluded.sum())} eps={mask.epsilon:g}"
    return rep


def estimate_unfeasible(coeffs: NeedletCoefficients, mask: SkyMask,
                        model: PowerSpectrumModel) -> EstimateReport:
    """Gap-free coefficients summed over the same observed pixel set."""
    if coeffs.masked:
        raise MaskedFlagMismatchError(
            "estimate_unfeasible needs gap-free (unmasked) coefficients")
    if mask.grid.fingerprint != coeffs.grid.fingerprint:
        raise ValueError("mask and coefficients use different grids")
    rep = _spectral_report(coeffs, mask.observed, model, "unfeasible")
    rep.meta["mask"] = f"excluded={int(mask.excluded.sum())} eps={mask.epsilon:g}"
    return rep


def estimate_asymmetry(coeffs: NeedletCoefficients, regions: RegionPair,
                       model: PowerSpectrumModel) -> EstimateReport:
    """Difference of per-region band-power estimates over eps-interiors."""
    if regions.grid.fingerprint != coeffs.grid.fingerprint:
        raise ValueError("regions and coefficients use different grids")
    grid, window = coeffs.grid, coeffs.window
    x = np.abs(coeffs.values) ** 2
    gamma = gamma_theoretical(window, model, coeffs.j, coeffs.s)
    vals, variances = [], []
    for which in (1, 2):
        sel = regions.interior(which)
        vals.append(_weighted_estimate(x, grid, sel))
        variances.append(subsampling_variance(x, grid, observed=sel))
    value = vals[0] - vals[1]
    variance = variances[0] + variances[1]
    meta = _grid_meta(grid, window)
    meta.update({
        "regions": f"|A1|={int(regions.a1.sum())} |A2|={int(regions.a2.sum())} "
                   f"eps={regions.epsilon:g}",
        "region1_value": vals[0], "region2_value": vals[1],
        "region1_variance": variances[0], "region2_variance": variances[1],
        "gamma_target": gamma,
    })
    return EstimateReport(
        j=coeffs.j, s=coeffs.s, kind="asymmetry", value=value,
        theoretical_target=0.0, variance_estimate=variance,
        standardized=_standardize(value, 0.0, variance),
        meta=meta, pixel_values=x)


def _channel_beta(channel_coeffs) -> tuple:
    coeffs = list(channel_coeffs)
    if not coeffs:
        raise InvalidChannelCountError("no channels provided")
    first = coeffs[0]
    for c in coeffs[1:]:
        if (c.j, c.s) != (first.j, first.s) or \
                c.grid.fingerprint != first.grid.fingerprint:
            raise ValueError("channel coefficients must share (j, s, grid)")
    return coeffs, np.stack([c.values for c in coeffs])


def estimate_ap(channel_coeffs, noise_models, signal_model: PowerSpectrumModel
                ) -> EstimateReport:
    """Auto-power estimator: channel-averaged |beta|^2 minus the known noise bias."""
    coeffs, beta = _channel_beta(channel_coeffs)
    d = len(coeffs)
    noise_models = list(noise_models)
    if len(noise_models) != d:
        raise MissingNoiseModelError(
            f"got {len(noise_models)} noise spectra for {d} channels")
    first = coeffs[0]
    grid, window = first.grid, first.window
    lam = grid.weights
    gamma_n = np.array([gamma_noise_theoretical(window, nm, first.j, first.s)
                        for nm in noise_models])
    bias = lam[None, :] * (gamma_n[:, None] / FOUR_PI)  # E|beta_N|^2 per (r, k)
    x = (np.sum(np.abs(beta) ** 2, axis=0) - np.sum(bias, axis=0)) / d
    value = math.fsum(x.tolist())
    target = gamma_theoretical(window, signal_model, first.j, first.s)
    variance = subsampling_variance(x, grid)
    meta = _grid_meta(grid, window)
    meta["channels"] = d
    return EstimateReport(
        j=first.j, s=first.s, kind="ap", value=value,
        theoretical_target=target, variance_estimate=variance,
        standardized=_standardize(value, target, variance),
        meta=meta, pixel_values=x, channel_values=[c.values for c in coeffs],
        noise_bias=np.sum(bias, axis=0))


def estimate_cp(channel_coeffs, signal_model: PowerSpectrumModel) -> EstimateReport:
    """Cross-power estimator over ordered channel pairs; needs no noise model."""
    coeffs, beta = _channel_beta(channel_coeffs)
    d = len(coeffs)
    if d < 2:
        raise InvalidChannelCountError("cross-power needs at least 2 channels")
    first = coeffs[0]
    acc = np.zeros(beta.shape[1], dtype=np.complex128)
    for r1 in range(d):
        for r2 in range(d):
            if r1 != r2:
                acc += beta[r1] * np.conj(beta[r2])
    acc /= d * (d - 1)
    total = complex(math.fsum(acc.real.tolist()), math.fsum(acc.imag.tolist()))
    if abs(total.imag) > 1e-10 * max(abs(total.real), 1e-300):
        raise RuntimeError(f"cross-power came out non-real: {total!r}")
    x = acc.real
    value = total.real
    grid, window = first.grid, first.window
    target = gamma_theoretical(window, signal_model, first.j, first.s)
    variance = subsampling_variance(x, grid)
    meta = _grid_meta(grid, window)
    meta["channels"] = d
    return EstimateReport(
        j=first.j, s=first.s, kind="cp", value=value,
        theoretical_target=target, variance_estimate=variance,
        standardized=_standardize(value, target, variance),
        meta=meta, pixel_values=x, channel_values=[c.values for c in coeffs])


def hausman_statistic(ap: EstimateReport, cp: EstimateReport,
                      variance: float) -> EstimateReport:
    """Standardized CP - AP difference, with the algebraic identity verified.

    CP - AP = (1/(D(D-1))) sum_k { (D-1) sum_r E|beta_{jk;sN_r}|^2
              - sum_{r1<r2} |beta_{jk;sr1} - beta_{jk;sr2}|^2 }
    must hold per realization to machine precision (the pair sum runs over
    unordered pairs; over ordered pairs it carries a factor 1/2).
    """
    if (ap.j, ap.s) != (cp.j, cp.s):
        raise ValueError("AP and CP reports are for different (j, s)")
    if ap.kind != "ap" or cp.kind != "cp":
        raise ValueError("hausman_statistic needs one AP and one CP report")
    if not variance > 0.0:
        raise NonpositiveVarianceError(f"variance={variance} must be > 0")
    value = cp.value - ap.value

    meta = dict(ap.meta)
    if ap.channel_values is not None and ap.noise_bias is not None:
        beta = np.stack(ap.channel_values)
        d = beta.shape[0]
        pair = np.zeros(beta.shape[1])
        for r1 in range(d):
            for r2 in range(r1 + 1, d):
                pair += np.abs(beta[r1] - beta[r2]) ** 2
        per_pixel = ((d - 1) * ap.noise_bias - pair) / (d * (d - 1))
        identity = math.fsum(per_pixel.tolist())
        scale = max(abs(ap.value), abs(cp.value), abs(identity), 1e-300)
        residual = abs(value - identity) / scale
        if residual > 1e-10:
            raise RuntimeError(
                f"hausman identity violated: relative residual {residual:.3e}")
        meta["identity_residual"] = residual

    return EstimateReport(
        j=ap.j, s=ap.s, kind="hausman", value=value,
        theoretical_target=0.0, variance_estimate=variance,
        standardized=_standardize(value, 0.0, variance), meta=meta)


def estimate_hausman(channel_coeffs, noise_models,
                     signal_model: PowerSpectrumModel) -> EstimateReport:
    """AP, CP, subsampled variance of their difference, then the test statistic."""
    ap = estimate_ap(channel_coeffs, noise_models, signal_model)
    cp = estimate_cp(channel_coeffs, signal_model)
    diff = cp.pixel_values - ap.pixel_values
    variance = subsampling_variance(diff, channel_coeffs[0].grid)
    if variance <= 0.0:
        raise NonpositiveVarianceError("subsampling variance of CP-AP is zero")
    return hausman_statistic(ap, cp, variance)
