"""Synthetic curve models and Monte Carlo study drivers.

Curves follow X(t) = mu(t) + sigma(t) * e(t) on a uniform grid.  The error
process e is either white noise or an elliptical process with exponential
correlation exp(-|t1 - t2| / d): a correlated Gaussian draw, optionally
divided per curve by sqrt(chisq_nu / nu) to give Student-t (nu = 1: Cauchy)
margins.  A contamination segment, when present, overwrites the curve by
mu + Cauchy noise on that segment only.

Three independent substreams (base draw / scale draw / contamination) keep
the uncontaminated part of a contaminated draw bit-identical to the plain
draw under the same seed.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import DataFormatError, Grid, integrate, matrix_dataset, restrict_dataset
from .estimator import (
    NumericalError,
    STATUS_UNDEFINED,
    MEstimate,
    fit_marginal,
    interpolate_undefined,
    resolve_loss,
)
from .inference import bootstrap_ensemble, parse_probe, trend_ci
from .losses import parse_loss
from .sampling import MissingScheme, generate_masks, parse_scheme
from .seeding import as_key, make_rng

CHOL_JITTER = 1e-10


@dataclass(frozen=True)
class ConstantScale:
    sigma: float

    def __post_init__(self):
        if not np.isfinite(self.sigma) or self.sigma < 0:
            raise DataFormatError("sigma must be finite and nonnegative")


@dataclass(frozen=True)
class RandomScale:
    """sigma(t) ~ Normal(mean, sd^2) iid per grid point, one draw per call
    shared by all curves; negative draws are kept."""

    mean: float
    sd: float

    def __post_init__(self):
        if self.sd <= 0:
            raise DataFormatError("scale sd must be positive")


@dataclass(frozen=True)
class ErrorModel:
    """Error process: family in {gaussian, student, cauchy}; ``d`` is the
    exponential-correlation range (None = white noise); ``df`` the Student
    degrees of freedom."""

    family: str
    d: float | None = None
    df: float | None = None

    def __post_init__(self):
        if self.family not in ("gaussian", "student", "cauchy"):
            raise DataFormatError(f"unknown error family {self.family!r}")
        if self.family == "student" and (self.df is None or self.df <= 0):
            raise DataFormatError("student errors need positive df")
        if self.d is not None and self.d <= 0:
            raise DataFormatError("correlation range d must be positive")


def gaussian_exp(d: float) -> ErrorModel:
    return ErrorModel("gaussian", d=d)


def student_exp(df: float, d: float) -> ErrorModel:
    return ErrorModel("student", d=d, df=df)


def cauchy_exp(d: float) -> ErrorModel:
    return ErrorModel("cauchy", d=d)


def white_student(df: float) -> ErrorModel:
    return ErrorModel("student", df=df)


def white_cauchy() -> ErrorModel:
    return ErrorModel("cauchy")


@dataclass(frozen=True)
class Contamination:
    """Replace X by mu + scale * (Cauchy noise) on [lo, hi]; correlated noise
    uses the exponential correlation with range ``d`` (None = white)."""

    lo: float
    hi: float
    scale: float = 1.0
    d: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.lo < self.hi <= 1.0:
            raise DataFormatError("contamination segment must satisfy 0 <= lo < hi <= 1")
        if self.scale <= 0:
            raise DataFormatError("contamination scale must be positive")
        if self.d is not None and self.d <= 0:
            raise DataFormatError("contamination range d must be positive")


@dataclass(frozen=True)
class ProcessModel:
    """Mean + scale + error process (+ optional contamination)."""

    mean_kind: str  # "smooth" | "probe"
    error: ErrorModel
    scale: object = ConstantScale(2.0)
    contamination: Contamination | None = None

    def __post_init__(self):
        if self.mean_kind not in ("smooth", "probe"):
            raise DataFormatError(f"unknown mean kind {self.mean_kind!r}")
        if not isinstance(self.scale, (ConstantScale, RandomScale)):
            raise DataFormatError("scale must be ConstantScale or RandomScale")


def smooth_mean(points) -> np.ndarray:
    """mu(t) = 5 sin(2 pi t) + 3."""
    t = np.asarray(points, dtype=float)
    return 5.0 * np.sin(2.0 * np.pi * t) + 3.0


def probe_mean(points) -> np.ndarray:
    """mu = phi_0 + 2 phi_1 + 0.5 phi_2 in the shifted Legendre basis."""
    from .inference import constant_probe, linear_probe, quadratic_probe

    t = np.asarray(points, dtype=float)
    return constant_probe(t) + 2.0 * linear_probe(t) + 0.5 * quadratic_probe(t)


def model_mean(model: ProcessModel, points) -> np.ndarray:
    return smooth_mean(points) if model.mean_kind == "smooth" else probe_mean(points)


_PRESETS = {
    # Smooth-mean benchmark suite: sigma = 2 throughout.
    "model1": ProcessModel("smooth", gaussian_exp(0.3)),
    "model2": ProcessModel("smooth", student_exp(3.0, 0.3)),
    "model3": ProcessModel("smooth", cauchy_exp(0.3)),
    "model4": ProcessModel("smooth", white_student(3.0), scale=RandomScale(2.0, 10.0)),
    "model5": ProcessModel("smooth", gaussian_exp(0.3),
                           contamination=Contamination(0.2, 0.4, scale=1.0)),
    "model6": ProcessModel("smooth", gaussian_exp(0.3),
                           contamination=Contamination(0.2, 0.4, scale=1.0, d=0.3)),
    # Probe-mean (trend) suite.
    "probe-gaussian": ProcessModel("probe", gaussian_exp(0.3)),
    "probe-t3": ProcessModel("probe", student_exp(3.0, 0.3)),
    "probe-cauchy": ProcessModel("probe", cauchy_exp(0.3)),
}


def model_preset(name: str) -> ProcessModel:
    try:
        return _PRESETS[name]
    except KeyError:
        raise DataFormatError(
            f"unknown model {name!r} (choose from {', '.join(sorted(_PRESETS))})"
        ) from None


def _correlated_factor(points: np.ndarray, d: float) -> np.ndarray:
    gap = np.abs(points[:, None] - points[None, :])
    cov = np.exp(-gap / d)
    cov[np.diag_indices_from(cov)] += CHOL_JITTER
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"correlation matrix is not positive definite: {exc}") from exc


def _draw_errors(error: ErrorModel, rng: np.random.Generator, n: int,
                 points: np.ndarray) -> np.ndarray:
    if error.d is None:
        if error.family == "gaussian":
            return rng.standard_normal((n, points.size))
        if error.family == "student":
            return rng.standard_t(error.df, size=(n, points.size))
        return rng.standard_cauchy(size=(n, points.size))
    L = _correlated_factor(points, error.d)
    z = rng.standard_normal((n, points.size)) @ L.T
    if error.family == "gaussian":
        return z
    df = 1.0 if error.family == "cauchy" else error.df
    mix = rng.chisquare(df, size=n)
    return z / np.sqrt(mix / df)[:, None]


def generate_curves(model: ProcessModel, n: int, grid: Grid, seed) -> np.ndarray:
    """(n, J) fully observed curves from the model.

    Substreams: (seed, 0) error draws, (seed, 1) random scale, (seed, 2)
    contamination, so dropping the contamination leaves the rest untouched.
    """
    if n < 1:
        raise DataFormatError("need at least one curve")
    key = as_key(seed)
    points = grid.points
    mu = model_mean(model, points)
    eps = _draw_errors(model.error, make_rng((*key, 0)), n, points)
    if isinstance(model.scale, ConstantScale):
        sigma = model.scale.sigma
    else:
        sigma = make_rng((*key, 1)).normal(model.scale.mean, model.scale.sd, size=points.size)
    x = mu + sigma * eps
    cont = model.contamination
    if cont is not None:
        seg = (points >= cont.lo) & (points <= cont.hi)
        m = int(seg.sum())
        if m:
            rng_c = make_rng((*key, 2))
            if cont.d is None:
                noise = rng_c.standard_cauchy(size=(n, m))
            else:
                L = _correlated_factor(points[seg], cont.d)
                z = rng_c.standard_normal((n, m)) @ L.T
                mix = rng_c.chisquare(1.0, size=n)
                noise = z / np.sqrt(mix)[:, None]
            x[:, seg] = mu[seg] + cont.scale * noise
    return x


def ise(estimate, mu_true: np.ndarray) -> float:
    """Mean squared error over grid points (uniform average, not quadrature)."""
    if isinstance(estimate, MEstimate):
        if np.any(estimate.status == STATUS_UNDEFINED):
            raise NumericalError("estimate has undefined points; interpolate first")
        theta = estimate.theta
    else:
        theta = np.asarray(estimate, dtype=float)
    mu_true = np.asarray(mu_true, dtype=float)
    if theta.shape != mu_true.shape:
        raise DataFormatError("estimate/truth misaligned")
    diff = theta - mu_true
    return float(np.mean(diff * diff))


# -- scenario configuration ------------------------------------------------------

@dataclass(frozen=True)
class ScenarioConfig:
    """One Monte Carlo scenario (shared by the ISE and coverage studies)."""

    model: ProcessModel
    scheme: MissingScheme
    n: int = 80
    grid_size: int = 100
    losses: tuple = ("square", "huber:0.8")
    B: int = 400
    repetitions: int = 100
    seed: int = 0
    probes: tuple = ()
    alpha: float = 0.05
    threads: int = 1
    model_name: str = ""
    mixture_draws: int = 50_000

    def __post_init__(self):
        if self.n < 2:
            raise DataFormatError("need n >= 2 curves")
        if self.grid_size < 2:
            raise DataFormatError("need at least 2 grid points")
        if self.repetitions < 1:
            raise DataFormatError("need at least one repetition")
        if not self.losses:
            raise DataFormatError("need at least one loss")
        if not 0 < self.alpha < 1:
            raise DataFormatError("alpha must lie in (0, 1)")
        if self.threads < 1:
            raise DataFormatError("threads must be >= 1")
        object.__setattr__(self, "losses", tuple(self.losses))
        object.__setattr__(self, "probes", tuple(self.probes))
        for loss in self.losses:
            parse_loss(loss)  # fail fast on typos


def _scenario_grid(config: ScenarioConfig) -> Grid:
    return Grid.uniform(config.grid_size)


def _analysis_window(scheme: MissingScheme):
    eps = scheme.epsilon_trim
    return (eps, 1.0 - eps) if eps > 0 else None


def _run_reps(worker, repetitions: int, threads: int) -> list:
    if threads <= 1:
        return [worker(r) for r in range(repetitions)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(worker, range(repetitions)))


def run_ise_study(config: ScenarioConfig) -> list[dict]:
    """Median ISE per estimator plus ratios against the square-loss fit.

    Repetition r draws curves on substream (seed, r, 0) and masks on
    (seed, r, 1); the analysis restricts to [eps, 1-eps] when the scheme
    carries a trim.
    """
    grid = _scenario_grid(config)
    window = _analysis_window(config.scheme)
    losses = [(text, parse_loss(text)) for text in config.losses]
    key = as_key(config.seed)

    def worker(r: int) -> dict:
        values = generate_curves(config.model, config.n, grid, (*key, r, 0))
        masks = generate_masks(config.scheme, config.n, grid, (*key, r, 1))
        dataset = matrix_dataset(grid, values, masks)
        if window is not None:
            dataset = restrict_dataset(dataset, *window)
        mu = model_mean(config.model, dataset.grid.points)
        out = {}
        for text, choice in losses:
            resolved = resolve_loss(choice, dataset)
            est = interpolate_undefined(fit_marginal(dataset, resolved))
            out[text] = ise(est, mu)
        return out

    per_rep = _run_reps(worker, config.repetitions, config.threads)
    name = config.model_name or config.model.mean_kind
    rows = []
    medians = {}
    for text, _ in losses:
        med = float(np.median([rep[text] for rep in per_rep]))
        medians[text] = med
        rows.append({"scenario": name, "estimator": text, "probe": "",
                     "metric": "median_ise", "value": med})
    if "square" in medians:
        for text, _ in losses:
            if text == "square":
                continue
            rows.append({"scenario": name, "estimator": text, "probe": "",
                         "metric": "median_ise_ratio_square_over_this",
                         "value": medians["square"] / medians[text]})
    return rows


def run_coverage_study(config: ScenarioConfig) -> list[dict]:
    """Empirical coverage and median length of trend intervals.

    The target is the probe coefficient of the true mean computed by the same
    quadrature the estimator uses, on the same analysis grid.  Repetition r
    uses substreams (seed, r, 0) curves, (seed, r, 1) masks, (seed, r, 2)
    bootstrap.
    """
    if not config.probes:
        raise DataFormatError("coverage study needs at least one probe")
    grid = _scenario_grid(config)
    window = _analysis_window(config.scheme)
    losses = [(text, parse_loss(text)) for text in config.losses]
    key = as_key(config.seed)

    def worker(r: int) -> dict:
        values = generate_curves(config.model, config.n, grid, (*key, r, 0))
        masks = generate_masks(config.scheme, config.n, grid, (*key, r, 1))
        dataset = matrix_dataset(grid, values, masks)
        if window is not None:
            dataset = restrict_dataset(dataset, *window)
        mu = model_mean(config.model, dataset.grid.points)
        out = {}
        for li, (text, choice) in enumerate(losses):
            ens = bootstrap_ensemble(dataset, choice, config.B, (*key, r, 2, li))
            for probe_text in config.probes:
                pname, pvals = parse_probe(probe_text, dataset.grid)
                ci = trend_ci(dataset, choice, pvals, config.B, (*key, r, 2, li),
                              alpha=config.alpha, probe_name=pname, ensemble=ens)
                truth = integrate(mu * pvals, dataset.grid)
                out[(text, probe_text)] = (
                    ci.lower <= truth <= ci.upper,
                    ci.upper - ci.lower,
                )
        return out

    per_rep = _run_reps(worker, config.repetitions, config.threads)
    name = config.model_name or config.model.mean_kind
    rows = []
    for text, _ in losses:
        for probe_text in config.probes:
            hits = [rep[(text, probe_text)][0] for rep in per_rep]
            lengths = [rep[(text, probe_text)][1] for rep in per_rep]
            rows.append({"scenario": name, "estimator": text, "probe": probe_text,
                         "metric": "coverage", "value": float(np.mean(hits))})
            rows.append({"scenario": name, "estimator": text, "probe": probe_text,
                         "metric": "median_ci_length", "value": float(np.median(lengths))})
    return rows


# -- flat key=value scenario files -------------------------------------------------

_STUDY_KINDS = ("ise", "coverage")


def read_scenario_config(path) -> tuple[str, ScenarioConfig]:
    """Parse a flat ``key = value`` scenario file; returns (study, config).

    Keys: study, model, scheme, trim, n, grid_size, losses, B, R, seed,
    probes, alpha, threads.  List values (losses, probes) are separated by
    semicolons, since loss specs may contain commas.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataFormatError(f"{path}: cannot read ({exc})") from exc
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise DataFormatError(f"{path}:{lineno}: expected key = value")
        k, _, v = line.partition("=")
        k = k.strip()
        if k in raw:
            raise DataFormatError(f"{path}:{lineno}: duplicate key {k!r}")
        raw[k] = v.strip()

    def take(key, default=None):
        return raw.pop(key, default)

    study = take("study", "ise")
    if study not in _STUDY_KINDS:
        raise DataFormatError(f"{path}: study must be one of {_STUDY_KINDS}")
    model_name = take("model")
    if model_name is None:
        raise DataFormatError(f"{path}: missing required key 'model'")
    model = model_preset(model_name)
    trim = float(take("trim", "0"))
    scheme = parse_scheme(take("scheme", "complete"), epsilon_trim=trim)
    seed_raw = take("seed")
    if seed_raw is None:
        raise DataFormatError(f"{path}: missing required key 'seed'")
    try:
        config = ScenarioConfig(
            model=model,
            scheme=scheme,
            n=int(take("n", "80")),
            grid_size=int(take("grid_size", "100")),
            losses=tuple(s.strip() for s in take("losses", "square;huber:0.8").split(";") if s.strip()),
            B=int(take("B", "400")),
            repetitions=int(take("R", "100")),
            seed=int(seed_raw),
            probes=tuple(s.strip() for s in take("probes", "").split(";") if s.strip()),
            alpha=float(take("alpha", "0.05")),
            threads=int(take("threads", "1")),
            model_name=model_name,
        )
    except ValueError as exc:
        raise DataFormatError(f"{path}: {exc}") from None
    if raw:
        raise DataFormatError(f"{path}: unknown keys {sorted(raw)}")
    return study, config
