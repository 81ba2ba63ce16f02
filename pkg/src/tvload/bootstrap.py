"""Residual bootstrap bands for the fitted loading curves.

Whole cross-section residual vectors are resampled with replacement over the
grid, synthetic panels are refitted with the factors and basis held fixed,
and pointwise quantile bands are read off the refitted loading fields.  Each
draw owns an RNG derived from (seed, draw index), so results do not depend
on execution order and any draw can be reproduced in isolation.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import NumericError, ParameterError
from .factors import FactorEstimate, Panel, make_panel, nonstationary_factors, pca_factors
from .gls import common_component, fit_iterative
from .wavelet import WaveletBasis

__all__ = ["BandSet", "residual_bootstrap", "write_bands_csv", "write_plot_csv"]


@dataclass(frozen=True)
class BandSet:
    """Pointwise bootstrap bands for the loading field (shapes T x N x r)."""

    level: float
    lower: np.ndarray
    upper: np.ndarray
    B: int
    failed: tuple[tuple[int, str], ...] = ()


def _one_draw(b, seed, E, X_hat, panel, factors, basis, delta, max_iter, refit_factors):
    rng = np.random.default_rng([seed, b])
    idx = rng.integers(0, E.shape[0], size=E.shape[0])
    Y_star = X_hat + E[idx]
    panel_star = make_panel(Y_star, panel.series_ids)
    f_star = factors
    if refit_factors:
        if factors.method == "pca":
            f_star = pca_factors(panel_star, factors.r)
        else:
            f_star = nonstationary_factors(panel_star, factors.r, **factors.params)
    fit_star = fit_iterative(panel_star, f_star, basis, delta=delta, max_iter=max_iter)
    return fit_star.Lambda


def residual_bootstrap(
    panel: Panel,
    fit,
    factors: FactorEstimate,
    basis: WaveletBasis,
    B: int = 100,
    level: float = 0.95,
    seed: int = 0,
    refit_factors: bool = False,
    delta: float = 1e-6,
    max_iter: int = 50,
    n_threads: int = 1,
) -> BandSet:
    """Bootstrap pointwise bands around the estimated loading curves.

    Parameters
    ----------
    panel : Panel
        The panel the fit was computed on.
    fit : GlsFit
        Point estimate whose residuals are resampled.
    factors : FactorEstimate
        Held fixed across draws unless ``refit_factors`` is set.
    basis : WaveletBasis
    B : int
        Number of draws, >= 1.
    level : float
        Band coverage in (0, 1); quantiles (1 - level)/2 and (1 + level)/2
        with linear interpolation.
    seed : int
        Base seed; draw b uses an RNG derived from (seed, b).
    refit_factors : bool
        Experimental: re-extract factors from every synthetic panel with the
        original method.  Off by default.
    delta, max_iter :
        Passed through to the refit.
    n_threads : int
        Draws run in a thread pool when > 1; results are identical to the
        serial order because of per-draw seeding.

    Returns
    -------
    BandSet

    Raises
    ------
    NumericError
        If more than 10% of the draws fail.
    """
    if B < 1:
        raise ParameterError(f"need at least one draw, got B={B}")
    if not 0.0 < level < 1.0:
        raise ParameterError(f"level must lie in (0, 1), got {level}")
    X_hat = common_component(fit.Lambda, factors)
    E = panel.values - X_hat

    args = dict(
        seed=seed, E=E, X_hat=X_hat, panel=panel, factors=factors, basis=basis,
        delta=delta, max_iter=max_iter, refit_factors=refit_factors,
    )
    draws: list[np.ndarray | None] = [None] * B
    failed: list[tuple[int, str]] = []
    if n_threads > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            futures = {pool.submit(_one_draw, b + 1, **args): b for b in range(B)}
            for fut, b in futures.items():
                try:
                    draws[b] = fut.result()
                except Exception as exc:  # noqa: BLE001 - failures are data here
                    failed.append((b + 1, repr(exc)))
    else:
        for b in range(B):
            try:
                draws[b] = _one_draw(b + 1, **args)
            except Exception as exc:  # noqa: BLE001
                failed.append((b + 1, repr(exc)))
    good = [d for d in draws if d is not None]
    if len(failed) > 0.1 * B or not good:
        raise NumericError(
            f"{len(failed)} of {B} bootstrap draws failed; first: "
            f"{failed[0] if failed else 'none'}"
        )
    stack = np.stack(good, axis=0)
    lo, hi = np.quantile(
        stack, [(1.0 - level) / 2.0, (1.0 + level) / 2.0], axis=0, method="linear"
    )
    return BandSet(level=level, lower=lo, upper=hi, B=B, failed=tuple(sorted(failed)))


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def write_bands_csv(bands: BandSet, fit, panel: Panel, path) -> None:
    """Band table: t,series,factor,lower,point,upper,level."""
    T, N, r = fit.Lambda.shape
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("t,series,factor,lower,point,upper,level\n")
        for t in range(T):
            for m in range(N):
                for i in range(r):
                    fh.write(
                        ",".join(
                            [
                                str(t + 1),
                                panel.series_ids[m],
                                str(i + 1),
                                _fmt(bands.lower[t, m, i]),
                                _fmt(fit.Lambda[t, m, i]),
                                _fmt(bands.upper[t, m, i]),
                                _fmt(bands.level),
                            ]
                        )
                        + "\n"
                    )


def write_plot_csv(bands: BandSet, fit, panel: Panel, series: str, factor: int, path) -> None:
    """Single-curve plot data: t,point,lower,upper."""
    try:
        m = panel.series_ids.index(series)
    except ValueError:
        raise ParameterError(f"unknown series {series!r}") from None
    i = factor - 1
    if not 0 <= i < fit.Lambda.shape[2]:
        raise ParameterError(f"factor index {factor} outside 1..{fit.Lambda.shape[2]}")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("t,point,lower,upper\n")
        for t in range(fit.Lambda.shape[0]):
            fh.write(
                f"{t + 1},{_fmt(fit.Lambda[t, m, i])},"
                f"{_fmt(bands.lower[t, m, i])},{_fmt(bands.upper[t, m, i])}\n"
            )
