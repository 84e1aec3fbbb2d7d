"""Pointwise marginal M-estimation on a shared grid.

At each grid point t the location estimate solves

    sum_i  mask_i(t) * psi(X_i(t) - theta)  =  0

over the curves that are observed at t.  Square loss has the closed form
(weighted mean), quantile loss is an exact weighted quantile computed by
sorting, and huber / smoothed-quantile losses are solved by bracketed
bisection accelerated with safeguarded Newton steps.  Grid points nobody
observes are flagged ``undefined`` and can be filled afterwards by linear
interpolation.

Array-level entry points (``solve_locations``) accept stacked value/mask
arrays of shape (..., n, J) so bootstrap replicates can be fitted in batch.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .data import Dataset, DataFormatError, Grid, PartialCurve
from .losses import LossSpec, ScaledHuber, huber, psi as loss_psi, psi_dot as loss_psi_dot

STATUS_SOLVED = "solved"
STATUS_INTERPOLATED = "interpolated"
STATUS_UNDEFINED = "undefined"

DEFAULT_TOL_ROOT = 1e-10
DEFAULT_MAX_ITER = 200
D_FLOOR = 1e-8
C_FLOOR = 1e-6


class NumericalError(RuntimeError):
    """A solver or denominator failed numerically."""


@dataclass(frozen=True, eq=False)
class MEstimate:
    """Pointwise location fit: theta over the grid with per-point diagnostics."""

    grid: Grid
    theta: np.ndarray
    n_eff: np.ndarray
    status: np.ndarray

    @property
    def is_complete(self) -> bool:
        return not np.any(self.status == STATUS_UNDEFINED)


@dataclass(frozen=True, eq=False)
class TuningProfile:
    """Per-grid-point huber cutoff c(t) derived from the data."""

    c_of_t: np.ndarray
    r: float


# -- array-level solvers ------------------------------------------------------

def _quantile_locations(values: np.ndarray, mask: np.ndarray, tau: float) -> np.ndarray:
    """Exact weighted tau-quantile along the curve axis (lower convention,
    midpoint averaging when tau * n_eff splits the mass exactly)."""
    big = np.where(mask, values, np.inf)
    srt = np.sort(big, axis=-2)
    m = mask.sum(axis=-2)
    km = tau * m
    k_round = np.rint(km)
    exact = (np.abs(km - k_round) <= 1e-9) & (k_round >= 1) & (k_round <= m - 1)
    k_ceil = np.ceil(km - 1e-9).astype(int)
    k_sel = np.where(exact, k_round.astype(int), np.clip(k_ceil, 1, np.maximum(m, 1)))
    lower = np.take_along_axis(srt, (k_sel - 1)[..., None, :], axis=-2)[..., 0, :]
    upper_idx = np.where(exact, k_sel, k_sel - 1)
    upper = np.take_along_axis(srt, upper_idx[..., None, :], axis=-2)[..., 0, :]
    theta = np.where(exact, 0.5 * (lower + upper), lower)
    return np.where(m > 0, theta, np.nan)


def _prep_cutoff(loss: LossSpec, grid_size: int, lead_ndim: int):
    """Cutoff broadcastable against residuals of shape (..., n, J)."""
    if loss.kind == "squantile":
        return float(loss.h)
    prof = loss.tuning_profile
    if prof is None:
        return float(loss.c)
    prof = np.asarray(prof, dtype=float)
    if prof.shape[-1] != grid_size:
        raise DataFormatError("tuning profile not aligned with grid")
    return prof


def _cutoff_at(c, index: tuple):
    """Cutoff value for one (..., j) location given the prepared cutoff."""
    if np.ndim(c) == 0:
        return float(c)
    c = np.asarray(c)
    if c.ndim == 1:
        return float(c[index[-1]])
    return float(c[index])


class _RootProblem:
    """Reusable buffers and fused scoring for the bracketed root solve.

    For both kinked losses the score is a clip of an affine function z of the
    residual, so the Newton slope indicator comes for free as (psi == z).
    """

    def __init__(self, values0, maskf, loss: LossSpec, c):
        self.v0 = values0
        self.maskf = maskf
        self.kind = loss.kind
        if np.ndim(c) == 0:
            self.cb = float(c)
        else:
            c = np.asarray(c, dtype=float)
            self.cb = c[..., None, :] if c.ndim > 1 else c
        if self.kind == "squantile":
            self.tau, self.h = loss.tau, loss.h
        self._r = np.empty_like(values0)
        self._z = self._r  # alias: z overwrites the residual buffer
        self._p = np.empty_like(values0)

    def score(self, theta):
        """(psi-sum, slope) where slope = -d(psi-sum)/d theta >= 0."""
        np.subtract(self.v0, theta[..., None, :], out=self._r)
        if self.kind == "huber":
            np.clip(self._r, -self.cb, self.cb, out=self._p)
            g = np.einsum("...nj,...nj->...j", self._p, self.maskf)
            s = np.einsum("...nj,...nj->...j", self._p == self._r, self.maskf)
        else:
            inv = 1.0 / (2.0 * self.h)
            np.multiply(self._r, inv, out=self._z)
            self._z += self.tau - 0.5
            np.clip(self._z, self.tau - 1.0, self.tau, out=self._p)
            g = np.einsum("...nj,...nj->...j", self._p, self.maskf)
            s = np.einsum("...nj,...nj->...j", self._p == self._z, self.maskf) * inv
        return g, s


def _flat_fixup(theta, values, mask, flat, c):
    """Center theta on its flat root interval.

    Where no observed residual falls inside the psi kink window, the root of
    the psi-sum is a whole interval delimited by the nearest breakpoints
    x_i +- c; the estimate is taken as that interval's midpoint (this is what
    makes tiny-cutoff huber agree with the midpoint median convention).
    """
    for idx in np.argwhere(flat):
        key = tuple(idx)
        lead, j = key[:-1], key[-1]
        col_mask = mask[(*lead, slice(None), j)]
        x = values[(*lead, slice(None), j)][col_mask]
        w = _cutoff_at(c, key)
        bps = np.concatenate([x - w, x + w])
        t0 = theta[key]
        below = bps[bps <= t0]
        above = bps[bps >= t0]
        if below.size and above.size:
            theta[key] = 0.5 * (np.max(below) + np.min(above))
    return theta


def solve_locations(values, mask, loss: LossSpec, tol_root: float = DEFAULT_TOL_ROOT,
                    max_iter: int = DEFAULT_MAX_ITER, theta0: np.ndarray | None = None) -> np.ndarray:
    """Location estimates along axis -2 (curves) for every grid point.

    ``values`` may hold NaN at masked-out entries.  Returns an array of shape
    values.shape minus the curve axis, NaN where no curve is observed.
    ``theta0`` warm-starts the kinked-loss root solve (clipped into the data
    bracket); it does not change what is being solved.
    """
    mask = np.asarray(mask, dtype=bool)
    values = np.asarray(values, dtype=float)
    if values.shape != mask.shape or values.ndim < 2:
        raise DataFormatError("values/mask must share a (..., n, J) shape")
    n_eff = mask.sum(axis=-2)
    active = n_eff > 0

    if loss.kind == "square":
        v0 = np.where(mask, values, 0.0)
        with np.errstate(invalid="ignore"):
            theta = v0.sum(axis=-2) / np.where(active, n_eff, 1)
        return np.where(active, theta, np.nan)

    if loss.kind == "quantile":
        return _quantile_locations(values, mask, loss.tau)

    c = _prep_cutoff(loss, values.shape[-1], values.ndim - 2)
    v0 = np.where(mask, values, 0.0)
    lo = np.min(np.where(mask, values, np.inf), axis=-2)
    hi = np.max(np.where(mask, values, -np.inf), axis=-2)
    lo = np.where(active, lo, 0.0)
    hi = np.where(active, hi, 0.0)
    if loss.kind == "squantile":
        # root may sit up to h outside the data range when tau != 1/2
        lo = lo - loss.h
        hi = hi + loss.h

    problem = _RootProblem(v0, mask.astype(float), loss, c)
    tol_vec = tol_root * np.maximum(n_eff, 1)
    if theta0 is None:
        theta = 0.5 * (lo + hi)
    else:
        theta = np.clip(np.broadcast_to(theta0, lo.shape), lo, hi)
        theta = np.where(np.isfinite(theta), theta, 0.5 * (lo + hi))
    g, s = problem.score(theta)
    conv = ~active | (np.abs(g) <= tol_vec)
    eps = np.finfo(float).eps

    for it in range(max_iter):
        if conv.all():
            break
        pos = g >= 0
        lo = np.where(conv, lo, np.where(pos, theta, lo))
        hi = np.where(conv, hi, np.where(pos, hi, theta))
        mid = 0.5 * (lo + hi)
        if it % 4 == 3:
            cand = mid  # periodic pure bisection guarantees bracket shrinkage
        else:
            with np.errstate(divide="ignore", invalid="ignore"):
                newton = theta + g / s
            ok = (s > 0) & np.isfinite(newton) & (newton > lo) & (newton < hi)
            cand = np.where(ok, newton, mid)
        theta = np.where(conv, theta, cand)
        g_new, s_new = problem.score(theta)
        g = np.where(conv, g, g_new)
        s = np.where(conv, s, s_new)
        conv |= np.abs(g) <= tol_vec
        width_floor = 8 * eps * np.maximum(1.0, np.maximum(np.abs(lo), np.abs(hi)))
        conv |= (hi - lo) <= width_floor

    bad = active & (np.abs(g) > tol_vec)
    if np.any(bad):
        key = tuple(np.argwhere(bad)[0])
        raise NumericalError(
            f"root solve did not reach tolerance at grid point {key[-1]} (|psi-sum|={abs(g[key]):.3e})"
        )

    flat = active & (s == 0)
    if np.any(flat):
        theta = _flat_fixup(theta, values, mask, flat, c)

    return np.where(active, theta, np.nan)


def interpolate_rows(theta: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Fill NaN entries of each row by linear interpolation over ``points``
    (constant extension beyond the first/last defined point)."""
    theta = np.asarray(theta, dtype=float)
    single = theta.ndim == 1
    out = np.atleast_2d(theta).copy()
    for row in out:
        bad = np.isnan(row)
        if not bad.any():
            continue
        good = ~bad
        if not good.any():
            raise NumericalError("no defined points to interpolate from")
        row[bad] = np.interp(points[bad], points[good], row[good])
    return out[0] if single else out


# -- dataset-level API --------------------------------------------------------

def resolve_loss(choice, dataset: Dataset, c_floor: float = C_FLOOR) -> LossSpec:
    """Materialize a loss choice; ScaledHuber gets its MAD-based profile here."""
    if isinstance(choice, ScaledHuber):
        profile = mad_profile(dataset, choice.r, c_floor=c_floor)
        return huber(tuning_profile=profile.c_of_t)
    if isinstance(choice, LossSpec):
        return choice
    raise TypeError(f"not a loss: {choice!r}")


def fit_marginal(dataset: Dataset, loss: LossSpec, tol_root: float = DEFAULT_TOL_ROOT,
                 max_iter: int = DEFAULT_MAX_ITER) -> MEstimate:
    """Pointwise M-fit of the dataset; undefined points are left NaN."""
    if loss.tuning_profile is not None and loss.tuning_profile.shape[0] != dataset.grid.size:
        raise DataFormatError("tuning profile not aligned with dataset grid")
    values = dataset.values_matrix
    mask = dataset.mask_matrix
    n_eff = mask.sum(axis=0)
    if not np.any(n_eff > 0):
        raise NumericalError("every grid point is unobserved")
    theta = solve_locations(values, mask, loss, tol_root=tol_root, max_iter=max_iter)
    status = np.where(n_eff > 0, STATUS_SOLVED, STATUS_UNDEFINED).astype(object)
    return MEstimate(dataset.grid, theta, n_eff.astype(int), status)


def interpolate_undefined(estimate: MEstimate) -> MEstimate:
    """Fill undefined grid points by linear interpolation between solved ones
    (constant extension at the boundary)."""
    und = estimate.status == STATUS_UNDEFINED
    if not und.any():
        return estimate
    if und.all():
        raise NumericalError("cannot interpolate: no solved grid points")
    theta = interpolate_rows(estimate.theta, estimate.grid.points)
    status = estimate.status.copy()
    status[und] = STATUS_INTERPOLATED
    return MEstimate(estimate.grid, theta, estimate.n_eff, status)


def mad_profile(dataset: Dataset, r: float, c_floor: float = C_FLOOR) -> TuningProfile:
    """Huber cutoffs c(t) = max(r * MAD(t), c_floor) from pointwise medians.

    MAD is the raw median absolute deviation of the observed values (no
    normal-consistency factor).  Points nobody observes inherit interpolated
    cutoffs from their neighbors.
    """
    if not np.isfinite(r) or r <= 0:
        raise ValueError("scale factor r must be positive")
    values = dataset.values_matrix
    mask = dataset.mask_matrix
    with warnings.catch_warnings():
        # all-NaN columns are expected: nobody observes them, we interpolate
        warnings.simplefilter("ignore", RuntimeWarning)
        masked = np.where(mask, values, np.nan)
        med = np.nanmedian(masked, axis=0)
        mad = np.nanmedian(np.abs(masked - med), axis=0)
    c = np.where(np.isnan(mad), np.nan, np.maximum(r * mad, c_floor))
    if np.isnan(c).any():
        c = interpolate_rows(c, dataset.grid.points)
        c = np.maximum(c, c_floor)
    return TuningProfile(c_of_t=c, r=float(r))


def mad_cutoffs(values: np.ndarray, mask: np.ndarray, r: float,
                c_floor: float = C_FLOOR, points: np.ndarray | None = None) -> np.ndarray:
    """Array-level MAD cutoffs along the curve axis; shape (..., J)."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        masked = np.where(mask, values, np.nan)
        med = np.nanmedian(masked, axis=-2)
        mad = np.nanmedian(np.abs(masked - med[..., None, :]), axis=-2)
    c = np.maximum(r * mad, c_floor)
    if np.isnan(c).any():
        if points is None:
            raise NumericalError("undefined cutoffs need grid points to interpolate")
        c = interpolate_rows(c, points)
        c = np.maximum(c, c_floor)
    return c


def influence_function(dataset: Dataset, loss: LossSpec, theta_hat: np.ndarray,
                       y_star: PartialCurve, d_floor: float = D_FLOOR) -> np.ndarray:
    """First-order effect of adding the curve ``y_star`` to the sample.

        IF(t) = mask*(t) psi(Y*(t) - theta(t)) / D(t),
        D(t)  = (1/n) sum_i mask_i(t) psi_dot(X_i(t) - theta(t))

    Raises NumericalError when the denominator D falls to ``d_floor`` or
    below at any grid point.
    """
    theta_hat = np.asarray(theta_hat, dtype=float)
    if theta_hat.shape != dataset.grid.points.shape:
        raise DataFormatError("theta_hat not aligned with grid")
    if not np.all(np.isfinite(theta_hat)):
        raise DataFormatError("theta_hat must be finite (interpolate undefined points first)")
    values = dataset.values_matrix
    mask = dataset.mask_matrix
    resid = np.where(mask, values, theta_hat) - theta_hat
    pd = loss_psi_dot(loss, resid, point_index=None) if loss.tuning_profile is None \
        else _profile_psi_dot(loss, resid)
    d = np.where(mask, pd, 0.0).sum(axis=0) / dataset.n
    low = d <= d_floor
    if low.any():
        j = int(np.flatnonzero(low)[0])
        raise NumericalError(
            f"estimating-equation denominator D(t)={d[j]:.3e} at grid point {j} "
            f"(t={dataset.grid.points[j]:g}) is at or below {d_floor:g}"
        )
    y_res = np.where(y_star.mask, y_star.values, theta_hat) - theta_hat
    num = loss_psi(loss, y_res, point_index=None) if loss.tuning_profile is None \
        else _profile_psi(loss, y_res)
    return np.where(y_star.mask, num, 0.0) / d


def _profile_psi(loss: LossSpec, resid: np.ndarray) -> np.ndarray:
    c = loss.tuning_profile
    return np.clip(resid, -c, c)


def _profile_psi_dot(loss: LossSpec, resid: np.ndarray) -> np.ndarray:
    c = loss.tuning_profile
    return (np.abs(resid) <= c).astype(float)
