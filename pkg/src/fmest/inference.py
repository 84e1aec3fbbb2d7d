"""Bootstrap inference: L2-norm group comparison and trend intervals.

Resampling always moves whole curves (values and mask together) with
replacement.  The group-comparison test normalizes the integrated
between-group sum of squares by a pooled bootstrap estimate of the pointwise
variance and calibrates it against a chi-square mixture whose weights are the
normalized eigenvalues of the weighted bootstrap covariance.  The trend test
is a percentile bootstrap for one linear functional of the location curve.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, DataFormatError, Grid, PartialCurve, integrate
from .estimator import (
    DEFAULT_MAX_ITER,
    DEFAULT_TOL_ROOT,
    NumericalError,
    fit_marginal,
    interpolate_rows,
    interpolate_undefined,
    mad_cutoffs,
    resolve_loss,
    solve_locations,
)
from .losses import LossSpec, ScaledHuber, huber
from .seeding import as_key, make_rng

MIN_BOOTSTRAP = 100
_MIXTURE_STREAM = 2 ** 40 + 7  # reserved label, clear of replicate indices
EIGEN_TRACE_SHARE = 0.999
SYMMETRY_TOL = 1e-8


# -- probes -------------------------------------------------------------------

def constant_probe(points) -> np.ndarray:
    """phi_0 = 1."""
    return np.ones_like(np.asarray(points, dtype=float))


def linear_probe(points) -> np.ndarray:
    """phi_1 = sqrt(3) (2t - 1), unit norm on [0, 1]."""
    t = np.asarray(points, dtype=float)
    return np.sqrt(3.0) * (2.0 * t - 1.0)


def quadratic_probe(points) -> np.ndarray:
    """phi_2 = sqrt(5) (6t^2 - 6t + 1), unit norm on [0, 1]."""
    t = np.asarray(points, dtype=float)
    return np.sqrt(5.0) * (6.0 * t * t - 6.0 * t + 1.0)


def step_probe(x0: float, grid: Grid) -> np.ndarray:
    """Indicator 1{t >= x0}; x0 must be interior to (0, 1)."""
    if not 0.0 < x0 < 1.0:
        raise DataFormatError(f"step location x0={x0:g} must lie strictly inside (0, 1)")
    return (grid.points >= x0).astype(float)


def parse_probe(text: str, grid: Grid) -> tuple[str, np.ndarray]:
    """Parse ``constant | linear | quadratic | step:<x0>`` to (name, values)."""
    text = text.strip()
    if text == "constant":
        return text, constant_probe(grid.points)
    if text == "linear":
        return text, linear_probe(grid.points)
    if text == "quadratic":
        return text, quadratic_probe(grid.points)
    name, _, arg = text.partition(":")
    if name.strip() == "step":
        try:
            x0 = float(arg)
        except ValueError:
            raise DataFormatError(f"bad step probe {text!r}") from None
        return f"step:{x0:g}", step_probe(x0, grid)
    raise DataFormatError(
        f"unknown probe {text!r} (constant | linear | quadratic | step:<x0>)"
    )


# -- resampling ----------------------------------------------------------------

def _resample_indices(n: int, seed, replicate_index: int) -> np.ndarray:
    rng = make_rng((*as_key(seed), int(replicate_index)))
    return rng.integers(0, n, size=n)


def resample(dataset: Dataset, seed, replicate_index: int) -> Dataset:
    """One with-replacement resample of whole curves (values + mask together)."""
    idx = _resample_indices(dataset.n, seed, replicate_index)
    curves = []
    for pos, i in enumerate(idx):
        src = dataset.curves[int(i)]
        curves.append(PartialCurve(f"{pos}:{src.id}", src.group, src.values, src.mask))
    return Dataset(dataset.grid, tuple(curves))


@dataclass(frozen=True, eq=False)
class BootstrapEnsemble:
    """B interpolation-completed bootstrap location fits, stacked (B, J)."""

    replicates: np.ndarray
    B: int
    seed: tuple


def bootstrap_ensemble(dataset: Dataset, loss, B: int, seed,
                       tol_root: float = DEFAULT_TOL_ROOT,
                       max_iter: int = DEFAULT_MAX_ITER,
                       batch: int = 64) -> BootstrapEnsemble:
    """Fit the location on B whole-curve resamples (replicate b uses the
    substream (seed, b)).  Scaled-huber losses recompute their MAD cutoffs on
    every resample."""
    if B < MIN_BOOTSTRAP:
        raise DataFormatError(f"B={B} too small, need at least {MIN_BOOTSTRAP}")
    values = dataset.values_matrix
    mask = dataset.mask_matrix
    n = dataset.n
    key = as_key(seed)
    idx = np.empty((B, n), dtype=np.int64)
    for b in range(B):
        idx[b] = _resample_indices(n, key, b)
    out = np.empty((B, dataset.grid.size))
    scaled = isinstance(loss, ScaledHuber)
    resolved = resolve_loss(loss, dataset)
    warm = None
    if resolved.kind in ("huber", "squantile"):
        # replicate roots cluster around the full-sample fit, so start there
        warm = solve_locations(values, mask, resolved, tol_root=tol_root,
                               max_iter=max_iter)
    for start in range(0, B, batch):
        stop = min(start + batch, B)
        sel = idx[start:stop]
        v = values[sel]
        m = mask[sel]
        if scaled:
            c = mad_cutoffs(v, m, loss.r, points=dataset.grid.points)
            theta = _solve_profile_batch(v, m, c, tol_root, max_iter, theta0=warm)
        else:
            theta = solve_locations(v, m, loss, tol_root=tol_root,
                                    max_iter=max_iter, theta0=warm)
        out[start:stop] = theta
    out = interpolate_rows(out, dataset.grid.points)
    return BootstrapEnsemble(replicates=out, B=B, seed=key)


def _solve_profile_batch(values, mask, cutoffs, tol_root, max_iter, theta0=None):
    """Huber solve where every replicate carries its own cutoff profile (B, J)."""
    B = values.shape[0]
    theta = np.empty((B, values.shape[-1]))
    for b in range(B):
        loss_b = huber(tuning_profile=cutoffs[b])
        theta[b] = solve_locations(values[b], mask[b], loss_b,
                                   tol_root=tol_root, max_iter=max_iter,
                                   theta0=theta0)
    return theta


# -- chi-square mixture calibration --------------------------------------------

def eigen_mixture(xi_star: np.ndarray, grid: Grid, k: int, M: int, seed):
    """Normalized eigenvalues of the weighted covariance and a null sampler.

    The covariance is mapped to A = W^{1/2} xi W^{1/2} (W = diagonal trapezoid
    weights); eigenvalues are clamped at zero, truncated once they cover
    99.9% of the trace, and normalized by the trace, so they sum to ~1.
    Returns (lambdas, sampler) where sampler(m) draws m variates of
    sum_r lambda_r * chisq_{k-1, r}.
    """
    xi = np.asarray(xi_star, dtype=float)
    J = grid.size
    if xi.shape != (J, J):
        raise DataFormatError("covariance not aligned with grid")
    asym = float(np.max(np.abs(xi - xi.T)))
    if asym > SYMMETRY_TOL:
        raise DataFormatError(f"covariance is asymmetric (max deviation {asym:.3e})")
    if k < 2:
        raise DataFormatError("need at least 2 groups")
    xi = 0.5 * (xi + xi.T)
    sqw = np.sqrt(grid.weights)
    A = xi * sqw[:, None] * sqw[None, :]
    trace = float(np.dot(grid.weights, np.diag(xi)))
    if not trace > 0:
        raise NumericalError("bootstrap variance trace is not positive")
    eigvals = np.linalg.eigvalsh(A)[::-1]
    eigvals = np.clip(eigvals, 0.0, None)
    cum = np.cumsum(eigvals)
    target = EIGEN_TRACE_SHARE * trace
    r_keep = int(np.searchsorted(cum, target) + 1)
    r_keep = min(r_keep, eigvals.size)
    lambdas = eigvals[:r_keep] / trace
    key = as_key(seed)

    def sampler(m: int) -> np.ndarray:
        rng = make_rng(key)
        draws = rng.chisquare(k - 1, size=(int(m), lambdas.size))
        return draws @ lambdas

    return lambdas, sampler


# -- L2-norm group comparison ----------------------------------------------------

@dataclass(frozen=True, eq=False)
class TestResult:
    """Outcome of the bootstrap-calibrated L2 group-comparison test."""

    statistic: float
    p_value: float
    eigenvalues: np.ndarray
    trace: float
    groups: int
    B: int
    mixture_draws: int


def anova_l2_test(groups, loss, B: int, seed, mixture_draws: int = 50_000,
                  tol_root: float = DEFAULT_TOL_ROOT,
                  max_iter: int = DEFAULT_MAX_ITER) -> TestResult:
    """Test equality of the k location functions by the integrated
    between-group sum of squares, bootstrap-normalized and calibrated
    against a chi-square mixture.

    Group g's replicate b resamples on the substream (seed, g, b).  The
    pooled pointwise variance weights each group's bootstrap spread by its
    sample size, which keeps the normalization consistent for balanced and
    unbalanced designs alike.
    """
    groups = list(groups)
    k = len(groups)
    if k < 2:
        raise DataFormatError("need at least 2 groups")
    if B < MIN_BOOTSTRAP:
        raise DataFormatError(f"B={B} too small, need at least {MIN_BOOTSTRAP}")
    if mixture_draws < 1:
        raise DataFormatError("mixture_draws must be positive")
    grid = groups[0].grid
    for g, ds in enumerate(groups[1:], start=1):
        if not grid.same_points(ds.grid):
            raise DataFormatError(f"group {g} is on a different grid")
    sizes = np.array([ds.n for ds in groups], dtype=float)
    if np.any(sizes < 2):
        raise DataFormatError("every group needs at least 2 curves")
    n_total = float(sizes.sum())
    key = as_key(seed)

    theta_hat = []
    for ds in groups:
        resolved = resolve_loss(loss, ds)
        est = interpolate_undefined(fit_marginal(ds, resolved, tol_root=tol_root,
                                                 max_iter=max_iter))
        theta_hat.append(est.theta)
    theta_hat = np.stack(theta_hat)
    # center on the first group's fit so byte-identical groups give SSR == 0
    # exactly instead of picking up grand-mean rounding noise
    dev = theta_hat - theta_hat[0]
    grand_dev = (sizes[:, None] * dev).sum(axis=0) / n_total
    ssr = (sizes[:, None] * (dev - grand_dev) ** 2).sum(axis=0)
    numerator = integrate(ssr, grid)

    J = grid.size
    xi = np.zeros((J, J))
    for g, ds in enumerate(groups):
        ens = bootstrap_ensemble(ds, loss, B, (*key, g), tol_root=tol_root,
                                 max_iter=max_iter)
        dev = ens.replicates - ens.replicates.mean(axis=0)
        xi += sizes[g] * (dev.T @ dev)
    xi /= k * B
    trace = float(np.dot(grid.weights, np.diag(xi)))
    if not trace > 0:
        raise NumericalError("bootstrap variance trace is not positive")
    statistic = numerator / trace

    lambdas, sampler = eigen_mixture(xi, grid, k, mixture_draws, (*key, _MIXTURE_STREAM))
    null_draws = sampler(mixture_draws)
    p_value = (1.0 + float(np.count_nonzero(null_draws >= statistic))) / (mixture_draws + 1.0)
    return TestResult(statistic=float(statistic), p_value=float(p_value),
                      eigenvalues=lambdas, trace=trace, groups=k, B=B,
                      mixture_draws=mixture_draws)


# -- percentile bootstrap for one linear functional -----------------------------

@dataclass(frozen=True, eq=False)
class TrendCI:
    """Percentile bootstrap interval for the probe coefficient."""

    probe: str
    coefficient: float
    lower: float
    upper: float
    alpha: float
    B: int
    boot_median: float

    @property
    def significant(self) -> bool:
        """True when the interval excludes zero."""
        return self.lower > 0.0 or self.upper < 0.0


def trend_ci(dataset: Dataset, loss, probe, B: int, seed, alpha: float = 0.05,
             probe_name: str = "", tol_root: float = DEFAULT_TOL_ROOT,
             max_iter: int = DEFAULT_MAX_ITER,
             ensemble: BootstrapEnsemble | None = None) -> TrendCI:
    """Percentile interval for integral( theta(t) * probe(t) dt ).

    Replicate b resamples on the substream (seed, b).  Pass ``ensemble`` to
    reuse precomputed bootstrap fits (it must come from the same dataset,
    loss, and seed).
    """
    probe = np.asarray(probe, dtype=float)
    if probe.shape != dataset.grid.points.shape:
        raise DataFormatError("probe not aligned with grid")
    if not np.all(np.isfinite(probe)):
        raise DataFormatError("probe must be finite")
    if not 0.0 < alpha < 1.0:
        raise DataFormatError("alpha must lie in (0, 1)")
    if B < MIN_BOOTSTRAP:
        raise DataFormatError(f"B={B} too small, need at least {MIN_BOOTSTRAP}")
    resolved = resolve_loss(loss, dataset)
    est = interpolate_undefined(fit_marginal(dataset, resolved, tol_root=tol_root,
                                             max_iter=max_iter))
    coefficient = integrate(est.theta * probe, dataset.grid)
    if ensemble is None:
        ensemble = bootstrap_ensemble(dataset, loss, B, seed, tol_root=tol_root,
                                      max_iter=max_iter)
    elif ensemble.B != B:
        raise DataFormatError("ensemble size does not match B")
    weighted = dataset.grid.weights * probe
    coeffs = ensemble.replicates @ weighted
    lower, upper = np.quantile(coeffs, [alpha / 2.0, 1.0 - alpha / 2.0])
    return TrendCI(probe=probe_name, coefficient=float(coefficient),
                   lower=float(lower), upper=float(upper), alpha=float(alpha),
                   B=B, boot_median=float(np.median(coeffs)))
