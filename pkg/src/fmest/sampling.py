"""Observation-mask generators and coverage diagnostics.

Masks are drawn per curve from independent substreams keyed by
(seed, curve index), so parallel and serial generation agree.  A draw whose
mask has no observed point is rejected and redrawn (the redraw count is
available on request); the analytic coverage functions returned by
:func:`analytic_b` condition on that rejection so they describe exactly what
:func:`generate_masks` produces.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import beta as beta_dist

from .data import DataFormatError, Grid
from .seeding import as_key, make_rng

SCHEME_KINDS = ("complete", "random-interval", "fixed-intervals", "snippet", "sparse")

_MAX_REDRAWS = 10_000


@dataclass(frozen=True)
class MissingScheme:
    """How observation masks are generated on a grid.

    kind = "complete":        every point observed.
    kind = "random-interval": one interval with Beta(a, b) endpoints, each
        draw affinely rescaled into [epsilon_trim, 1 - epsilon_trim].
    kind = "fixed-intervals": one interval picked uniformly among the pieces
        cut by ``breakpoints`` (pieces are half-open, the last one closed).
    kind = "snippet":         an interval of fixed width d with uniform start.
    kind = "sparse":          iid Bernoulli(p) points inside a random-interval
        envelope with Beta(beta_a, beta_b) endpoints.
    """

    kind: str
    beta_a: float = 0.3
    beta_b: float = 0.3
    breakpoints: tuple = ()
    d: float | None = None
    p: float | None = None
    epsilon_trim: float = 0.0

    def __post_init__(self):
        if self.kind not in SCHEME_KINDS:
            raise DataFormatError(f"unknown missing scheme {self.kind!r}")
        if not 0 <= self.epsilon_trim < 0.5:
            raise DataFormatError("epsilon_trim must lie in [0, 0.5)")
        if self.kind in ("random-interval", "sparse"):
            if self.beta_a <= 0 or self.beta_b <= 0:
                raise DataFormatError("Beta parameters must be positive")
        if self.kind == "fixed-intervals":
            bp = tuple(float(b) for b in self.breakpoints)
            object.__setattr__(self, "breakpoints", bp)
            if not bp:
                raise DataFormatError("fixed-intervals needs at least one breakpoint")
            if any(not 0 < b < 1 for b in bp) or any(b2 <= b1 for b1, b2 in zip(bp, bp[1:])):
                raise DataFormatError("breakpoints must be strictly increasing inside (0, 1)")
        if self.kind == "snippet":
            if self.d is None or not 0 < self.d < 1:
                raise DataFormatError("snippet width d must lie in (0, 1)")
        if self.kind == "sparse":
            if self.p is None or not 0 < self.p < 1:
                raise DataFormatError("sparse observation probability p must lie in (0, 1)")

    def describe(self) -> str:
        if self.kind == "complete":
            return "complete"
        if self.kind == "random-interval":
            return f"random-interval:{self.beta_a:g},{self.beta_b:g}"
        if self.kind == "fixed-intervals":
            return "fixed-intervals:" + ",".join(f"{b:g}" for b in self.breakpoints)
        if self.kind == "snippet":
            return f"snippet:{self.d:g}"
        return f"sparse:{self.p:g}"


def complete() -> MissingScheme:
    return MissingScheme("complete")


def random_interval(beta_a: float = 0.3, beta_b: float = 0.3,
                    epsilon_trim: float = 0.0) -> MissingScheme:
    return MissingScheme("random-interval", beta_a=beta_a, beta_b=beta_b,
                         epsilon_trim=epsilon_trim)


def fixed_intervals(breakpoints, epsilon_trim: float = 0.0) -> MissingScheme:
    return MissingScheme("fixed-intervals", breakpoints=tuple(breakpoints),
                         epsilon_trim=epsilon_trim)


def snippet(d: float, epsilon_trim: float = 0.0) -> MissingScheme:
    return MissingScheme("snippet", d=d, epsilon_trim=epsilon_trim)


def bernoulli_sparse(p: float, beta_a: float = 1.0, beta_b: float = 1.0,
                     epsilon_trim: float = 0.0) -> MissingScheme:
    return MissingScheme("sparse", p=p, beta_a=beta_a, beta_b=beta_b,
                         epsilon_trim=epsilon_trim)


def parse_scheme(text: str, epsilon_trim: float = 0.0) -> MissingScheme:
    """Parse a CLI scheme string such as ``random-interval:0.3,0.3``."""
    text = text.strip()
    name, _, arg = text.partition(":")
    name = name.strip()
    try:
        if name == "complete":
            if arg:
                raise DataFormatError("complete takes no parameters")
            return complete()
        if name == "random-interval":
            a_s, _, b_s = arg.partition(",")
            return random_interval(float(a_s), float(b_s), epsilon_trim)
        if name == "fixed-intervals":
            bps = tuple(float(x) for x in arg.split(",") if x.strip())
            return fixed_intervals(bps, epsilon_trim)
        if name == "snippet":
            return snippet(float(arg), epsilon_trim)
        if name == "sparse":
            return bernoulli_sparse(float(arg), epsilon_trim=epsilon_trim)
    except (ValueError, TypeError) as exc:
        raise DataFormatError(f"bad scheme spec {text!r}: {exc}") from None
    raise DataFormatError(
        f"unknown scheme {text!r} (complete | random-interval:<a>,<b> | "
        f"fixed-intervals:<b1>,... | snippet:<d> | sparse:<p>)"
    )


def _interval_edges(scheme: MissingScheme):
    return (0.0, *scheme.breakpoints, 1.0)


def _rescale(v: np.ndarray, eps: float) -> np.ndarray:
    return eps + (1.0 - 2.0 * eps) * v


def _draw_mask(scheme: MissingScheme, rng: np.random.Generator, points: np.ndarray) -> np.ndarray:
    if scheme.kind == "random-interval":
        v = _rescale(rng.beta(scheme.beta_a, scheme.beta_b, size=2), scheme.epsilon_trim)
        lo, hi = min(v), max(v)
        return (points >= lo) & (points <= hi)
    if scheme.kind == "fixed-intervals":
        edges = _interval_edges(scheme)
        m = len(edges) - 1
        j = int(rng.integers(0, m))
        inside = (points >= edges[j]) & (points < edges[j + 1])
        if j == m - 1:
            inside |= points == edges[-1]
        return inside
    if scheme.kind == "snippet":
        start = rng.uniform(0.0, 1.0 - scheme.d)
        return (points >= start) & (points <= start + scheme.d)
    # sparse
    v = _rescale(rng.beta(scheme.beta_a, scheme.beta_b, size=2), scheme.epsilon_trim)
    lo, hi = min(v), max(v)
    envelope = (points >= lo) & (points <= hi)
    return envelope & (rng.random(points.size) < scheme.p)


def generate_masks(scheme: MissingScheme, n: int, grid: Grid, rng_seed,
                   return_redraws: bool = False):
    """(n, J) boolean masks; every row has at least one observed point."""
    if n < 1:
        raise DataFormatError("need at least one curve")
    points = grid.points
    masks = np.zeros((n, points.size), dtype=bool)
    key = as_key(rng_seed)
    redraws = 0
    if scheme.kind == "complete":
        masks[:] = True
        return (masks, 0) if return_redraws else masks
    for i in range(n):
        rng = make_rng((*key, i))
        for _ in range(_MAX_REDRAWS):
            m = _draw_mask(scheme, rng, points)
            if m.any():
                masks[i] = m
                break
            redraws += 1
        else:
            raise DataFormatError(
                f"scheme {scheme.describe()} produced {_MAX_REDRAWS} empty masks in a row; "
                f"it is incompatible with this grid"
            )
    return (masks, redraws) if return_redraws else masks


def empirical_b(masks: np.ndarray, grid: Grid) -> np.ndarray:
    """Pointwise observation frequency over curves."""
    masks = np.asarray(masks, dtype=bool)
    if masks.ndim != 2 or masks.shape[1] != grid.size:
        raise DataFormatError("masks not aligned with grid")
    return masks.mean(axis=0)


def sup_deviation(masks: np.ndarray, b_true: np.ndarray) -> float:
    """sup_t | mean_i mask_i(t) - b_true(t) |, the W_n diagnostic."""
    masks = np.asarray(masks, dtype=bool)
    b_true = np.asarray(b_true, dtype=float)
    if masks.shape[1] != b_true.size:
        raise DataFormatError("masks/b_true misaligned")
    return float(np.max(np.abs(masks.mean(axis=0) - b_true)))


def _empty_prob(scheme: MissingScheme, points: np.ndarray) -> float:
    """Probability that a raw draw observes no grid point (the redraw event)."""
    if scheme.kind == "random-interval":
        u = np.clip((points - scheme.epsilon_trim) / (1.0 - 2.0 * scheme.epsilon_trim), 0.0, 1.0)
        F = beta_dist.cdf(u, scheme.beta_a, scheme.beta_b)
        gaps = np.diff(F)
        return float(F[0] ** 2 + (1.0 - F[-1]) ** 2 + np.sum(gaps ** 2))
    if scheme.kind == "snippet":
        d = scheme.d
        total = 0.0
        lo_gap = points[0] - d
        if lo_gap > 0:
            total += lo_gap
        hi_gap = (1.0 - d) - points[-1]
        if hi_gap > 0:
            total += hi_gap
        for t1, t2 in zip(points[:-1], points[1:]):
            if t2 - t1 > d:
                total += (t2 - t1) - d
        return total / (1.0 - d)
    return 0.0


def analytic_b(scheme: MissingScheme, grid: Grid) -> np.ndarray:
    """Closed-form observation probability b(t) at the grid points.

    The value is conditioned on the mask being nonempty, matching the redraw
    rule of :func:`generate_masks`.  For the sparse scheme the (tiny) redraw
    correction has no closed form and is omitted.
    """
    points = grid.points
    if scheme.kind == "complete":
        return np.ones_like(points)
    if scheme.kind == "random-interval":
        u = np.clip((points - scheme.epsilon_trim) / (1.0 - 2.0 * scheme.epsilon_trim), 0.0, 1.0)
        F = beta_dist.cdf(u, scheme.beta_a, scheme.beta_b)
        raw = 1.0 - F ** 2 - (1.0 - F) ** 2
        return raw / (1.0 - _empty_prob(scheme, points))
    if scheme.kind == "fixed-intervals":
        edges = _interval_edges(scheme)
        m = len(edges) - 1
        nonempty = []
        for j in range(m):
            inside = (points >= edges[j]) & (points < edges[j + 1])
            if j == m - 1:
                inside |= points == edges[-1]
            nonempty.append(inside.any())
        m_eff = sum(nonempty)
        if m_eff == 0:
            raise DataFormatError("no interval contains a grid point")
        b = np.zeros_like(points)
        for j in range(m):
            if not nonempty[j]:
                continue
            inside = (points >= edges[j]) & (points < edges[j + 1])
            if j == m - 1:
                inside |= points == edges[-1]
            b[inside] = 1.0 / m_eff
        return b
    if scheme.kind == "snippet":
        d = scheme.d
        raw = np.clip(np.minimum(points, 1.0 - d) - np.maximum(0.0, points - d), 0.0, None) / (1.0 - d)
        return raw / (1.0 - _empty_prob(scheme, points))
    # sparse: Bernoulli(p) inside the raw envelope
    u = np.clip((points - scheme.epsilon_trim) / (1.0 - 2.0 * scheme.epsilon_trim), 0.0, 1.0)
    F = beta_dist.cdf(u, scheme.beta_a, scheme.beta_b)
    return scheme.p * (1.0 - F ** 2 - (1.0 - F) ** 2)
