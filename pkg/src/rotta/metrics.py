"""Dataset-level evaluation of augmented predictions.

Three families of quantities, all over von Mises paths unless stated:

* error scalars, per rotation index and for the aggregated path: mean
  relative error (``mere``), maximum relative error (``mare``), their
  average / spread over rotation indices, and a histogram with a normal
  fit of the per-rotation means;
* shape consistency: Pearson correlation of first-order differences
  between prediction and target, and the improvement ratio
  ``(1 - r_initial) / (1 - r_aggregated)`` per sample and channel
  (von Mises plus the six tensor components);
* uncertainty-vs-error curves: dataset-averaged per-step spread against
  dataset-averaged per-step absolute (and relative) error, with their
  correlation coefficients.

Nomenclature: "initial" always means the prediction at rotation index 0
(the unrotated input); "aggregated" means the mean path of the augmented
pass.  Relative quantities guard divisions with ``EPS_DIV`` and report
excluded steps instead of dropping them silently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .voigt import COMPONENT_NAMES, von_mises

EPS_DIV = 1e-9
SHAPE_EPS = 1e-12
DEFAULT_BIN_WIDTH = 1e-5
CHANNEL_NAMES = ("von_mises",) + COMPONENT_NAMES


class ZeroTargetMax(ValueError):
    """A target von Mises path is identically zero, so relative error is undefined."""


class DegenerateSequence(ValueError):
    """A sequence fed to the correlation coefficient has zero variance."""


class AllStepsExcluded(ValueError):
    """Every time step fell below the division guard for relative curves."""


def _as_paths(target_vm, predicted_vm):
    t = np.atleast_2d(np.asarray(target_vm, dtype=float))
    p = np.atleast_2d(np.asarray(predicted_vm, dtype=float))
    if t.shape != p.shape:
        raise ValueError(f"target {t.shape} and prediction {p.shape} shapes differ")
    return t, p


def _target_max(target_paths):
    m = np.max(target_paths, axis=-1)
    if np.any(m <= 0.0):
        raise ZeroTargetMax("a target von Mises path has no positive values")
    return m


def mere(target_vm, predicted_vm, rms=False):
    """Mean relative error of von Mises paths over a dataset.

    Per sample the error is sqrt(sum_t (target - prediction)^2) divided by
    max_t(target) * T, with the T outside the square root; the dataset value
    is the mean over samples.  The denominator placement makes the value
    shrink as 1/sqrt(T) for a fixed per-step error; ``rms=True`` switches to
    the root-mean-square variant sqrt(mean_t e^2) / max_t(target) instead.

    Parameters
    ----------
    target_vm, predicted_vm : array_like, shape (M, T) or (T,)
        Von Mises paths; a single path is treated as a one-sample dataset.
    rms : bool
        Use the per-step-normalized variant rather than the verbatim form.
    """
    t, p = _as_paths(target_vm, predicted_vm)
    n_steps = t.shape[-1]
    root = np.sqrt(np.sum((t - p) ** 2, axis=-1))
    if rms:
        per_sample = root / (np.sqrt(n_steps) * _target_max(t))
    else:
        per_sample = root / (_target_max(t) * n_steps)
    return float(np.mean(per_sample))


def mare(target_vm, predicted_vm, absolute=False):
    """Maximum relative error: per-sample max_t of (target - prediction)
    over max_t(target), averaged over samples.

    The difference is signed by default (a prediction that only overshoots
    gives a negative value); ``absolute=True`` takes |target - prediction|.
    """
    t, p = _as_paths(target_vm, predicted_vm)
    diff = np.abs(t - p) if absolute else t - p
    per_sample = np.max(diff, axis=-1) / _target_max(t)
    return float(np.mean(per_sample))


def mere_av(values):
    """Mean of per-rotation error values over indices 0..N (N+1 terms)."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("need at least one value")
    return float(np.mean(values))


def sd_mere(values, center):
    """Spread of the random-rotation error values about ``center``.

    ``values`` holds indices 1..N only (the identity prediction is excluded
    from the sum); the divisor is their count N, and ``center`` is the
    average over all indices 0..N.
    """
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("need at least one random-rotation value")
    return float(np.sqrt(np.mean((values - center) ** 2)))


@dataclass(frozen=True)
class Histogram:
    """Density histogram of error values with a moment-fit normal overlay."""

    bin_edges: np.ndarray
    density: np.ndarray
    counts: np.ndarray
    bin_width: float
    fit_mean: float
    fit_sd: float

    def pdf(self, x):
        """Normal density with the fitted mean and SD, evaluated at x."""
        x = np.asarray(x, dtype=float)
        if self.fit_sd == 0.0:
            return np.where(x == self.fit_mean, np.inf, 0.0)
        z = (x - self.fit_mean) / self.fit_sd
        return np.exp(-0.5 * z * z) / (self.fit_sd * math.sqrt(2.0 * math.pi))

    def to_rows(self):
        """(left, right, density, fit density at center) per bin."""
        centers = 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])
        fit = self.pdf(centers)
        return [
            (float(self.bin_edges[i]), float(self.bin_edges[i + 1]),
             float(self.density[i]), float(fit[i]))
            for i in range(self.density.size)
        ]


def mere_histogram(values, bin_width=DEFAULT_BIN_WIDTH):
    """Histogram of error values on a grid aligned to multiples of ``bin_width``.

    The density integrates to 1 over the binned range.  The normal fit uses
    the sample mean and the population (divide-by-n) standard deviation of
    the raw values, so the fitted mean coincides with their plain average.
    """
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        raise ValueError("histogram needs at least 2 values")
    if bin_width <= 0:
        raise ValueError("bin_width must be positive")
    first = math.floor(np.min(values) / bin_width)
    last = math.floor(np.max(values) / bin_width)
    edges = (first + np.arange(last - first + 2)) * bin_width
    counts, _ = np.histogram(values, bins=edges)
    density = counts / (values.size * bin_width)
    return Histogram(
        bin_edges=edges,
        density=density,
        counts=counts,
        bin_width=float(bin_width),
        fit_mean=float(np.mean(values)),
        fit_sd=float(np.std(values)),
    )


def percentile_of(value, population):
    """Percentile rank of ``value``: percent of the population strictly below it."""
    population = np.asarray(population, dtype=float)
    if population.size == 0:
        raise ValueError("population must be non-empty")
    return float(100.0 * np.count_nonzero(population < value) / population.size)


def first_differences(x):
    """Step-to-step differences d(t) = x(t+1) - x(t) of a path."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] < 2:
        raise ValueError("need at least 2 steps")
    return np.diff(x, axis=-1)


def pearson_r(x, y):
    """Pearson linear correlation coefficient of two equal-length sequences.

    Raises :class:`DegenerateSequence` when either sequence has zero
    variance instead of returning a silent 0.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("sequences must be 1-d and of equal length")
    if x.size < 2:
        raise ValueError("need at least 2 points")
    dx = x - np.mean(x)
    dy = y - np.mean(y)
    sxx = np.sum(dx * dx)
    syy = np.sum(dy * dy)
    if sxx == 0.0 or syy == 0.0:
        raise DegenerateSequence("zero-variance sequence in correlation")
    return float(np.sum(dx * dy) / (np.sqrt(sxx) * np.sqrt(syy)))


@dataclass(frozen=True)
class ShapeRatio:
    """Shape-consistency comparison of one predicted channel against its target.

    ``r_initial`` and ``r_aggregated`` correlate the first-order differences
    of the respective prediction with those of the target; ``c_ratio`` is
    (1 - r_initial) / (1 - r_aggregated), +inf (``perfect`` set) when the
    aggregated correlation is 1 within ``SHAPE_EPS``.
    """

    r_initial: float
    r_aggregated: float
    c_ratio: float
    perfect: bool


def shape_ratio(target, initial, aggregated) -> ShapeRatio:
    """Correlation-improvement ratio of aggregated over initial prediction.

    All three arguments are same-length paths of one channel.  Values above
    1 mean the aggregated path tracks the target's step-to-step shape more
    closely than the initial prediction does.
    """
    target = np.asarray(target, dtype=float)
    if target.shape[-1] < 3:
        raise ValueError("need at least 3 steps for difference correlation")
    d_target = first_differences(target)
    r0 = pearson_r(first_differences(np.asarray(initial, dtype=float)), d_target)
    rt = pearson_r(first_differences(np.asarray(aggregated, dtype=float)), d_target)
    if 1.0 - rt < SHAPE_EPS:
        return ShapeRatio(r0, rt, math.inf, True)
    return ShapeRatio(r0, rt, (1.0 - r0) / (1.0 - rt), False)


@dataclass(frozen=True)
class ShapeReport:
    """Per-sample, per-channel shape ratios and their dataset summary.

    Arrays are (M, 7) over channels :data:`CHANNEL_NAMES`.  Channels whose
    difference sequences had zero variance are NaN with ``degenerate`` set
    and are left out of the summary statistics, as are +inf ``perfect``
    entries (counted separately).
    """

    c_ratio: np.ndarray
    r_initial: np.ndarray
    r_aggregated: np.ndarray
    perfect: np.ndarray
    degenerate: np.ndarray
    mean_c_ratio: float
    fraction_below_one: float
    n_perfect: int
    n_degenerate: int

    def to_dict(self):
        return {
            "channels": list(CHANNEL_NAMES),
            "c_ratio": jsonable(self.c_ratio),
            "r_initial": jsonable(self.r_initial),
            "r_aggregated": jsonable(self.r_aggregated),
            "mean_c_ratio": jsonable(self.mean_c_ratio),
            "fraction_below_one": jsonable(self.fraction_below_one),
            "n_perfect": self.n_perfect,
            "n_degenerate": self.n_degenerate,
        }


def shape_report(target_paths, initial_paths, aggregated_paths) -> ShapeReport:
    """Shape ratios for every sample and channel of a dataset.

    Parameters
    ----------
    target_paths, initial_paths, aggregated_paths : ndarray, shape (M, T, 6)
        Stress paths; the von Mises channel is derived internally.
    """
    target_paths = np.asarray(target_paths, dtype=float)
    initial_paths = np.asarray(initial_paths, dtype=float)
    aggregated_paths = np.asarray(aggregated_paths, dtype=float)
    n_samples = target_paths.shape[0]
    n_channels = len(CHANNEL_NAMES)
    c_ratio = np.full((n_samples, n_channels), np.nan)
    r_init = np.full((n_samples, n_channels), np.nan)
    r_aggr = np.full((n_samples, n_channels), np.nan)
    perfect = np.zeros((n_samples, n_channels), dtype=bool)
    degenerate = np.zeros((n_samples, n_channels), dtype=bool)

    for m in range(n_samples):
        channels = [
            (von_mises(target_paths[m]),
             von_mises(initial_paths[m]),
             von_mises(aggregated_paths[m])),
        ]
        channels += [
            (target_paths[m, :, c], initial_paths[m, :, c], aggregated_paths[m, :, c])
            for c in range(6)
        ]
        for k, (tgt, init, aggr) in enumerate(channels):
            try:
                res = shape_ratio(tgt, init, aggr)
            except DegenerateSequence:
                degenerate[m, k] = True
                continue
            c_ratio[m, k] = res.c_ratio
            r_init[m, k] = res.r_initial
            r_aggr[m, k] = res.r_aggregated
            perfect[m, k] = res.perfect

    usable = np.isfinite(c_ratio)
    if np.any(usable):
        mean_c = float(np.mean(c_ratio[usable]))
        frac_below = float(np.count_nonzero(c_ratio[usable] < 1.0) / np.count_nonzero(usable))
    else:
        mean_c = math.nan
        frac_below = math.nan
    return ShapeReport(
        c_ratio=c_ratio,
        r_initial=r_init,
        r_aggregated=r_aggr,
        perfect=perfect,
        degenerate=degenerate,
        mean_c_ratio=mean_c,
        fraction_below_one=frac_below,
        n_perfect=int(np.count_nonzero(perfect)),
        n_degenerate=int(np.count_nonzero(degenerate)),
    )


@dataclass(frozen=True)
class UncertaintyReport:
    """Dataset-averaged per-step spread and error curves plus their correlation.

    ``sd_curve`` and ``e_abs_curve`` cover every step; the relative curves
    are NaN at steps where any sample's aggregated von Mises fell below the
    division guard (``included`` marks the usable steps).  ``r_abs`` and
    ``r_rel`` are correlation coefficients over steps of (spread, error)
    pairs; a NaN value with the matching ``*_degenerate`` flag means a
    curve was constant and the coefficient is undefined.
    """

    sd_curve: np.ndarray
    e_abs_curve: np.ndarray
    e_rel_curve: np.ndarray
    sd_rel_curve: np.ndarray
    included: np.ndarray
    n_excluded: int
    r_abs: float
    r_rel: float
    r_abs_degenerate: bool = False
    r_rel_degenerate: bool = False

    def to_dict(self):
        return {
            "sd_curve": jsonable(self.sd_curve),
            "e_abs_curve": jsonable(self.e_abs_curve),
            "e_rel_curve": jsonable(self.e_rel_curve),
            "sd_rel_curve": jsonable(self.sd_rel_curve),
            "n_excluded": self.n_excluded,
            "r_abs": jsonable(self.r_abs),
            "r_rel": jsonable(self.r_rel),
            "r_abs_degenerate": self.r_abs_degenerate,
            "r_rel_degenerate": self.r_rel_degenerate,
        }


def uncertainty_curves(sd_paths, target_vm, aggregated_vm) -> UncertaintyReport:
    """Compare per-step prediction spread with per-step prediction error.

    Parameters
    ----------
    sd_paths : ndarray, shape (M, T)
        Per-sample, per-step spread of individual von Mises paths about the
        aggregated one.
    target_vm, aggregated_vm : ndarray, shape (M, T)
        Target and aggregated von Mises paths.

    The absolute curves average |target - aggregated| and the spread over
    samples at each step.  The relative curves divide both per sample by
    the aggregated von Mises value first; any step where that divisor is
    at or below ``EPS_DIV`` for some sample is excluded from the relative
    curves (NaN) and counted.  Raises :class:`AllStepsExcluded` if no step
    survives.
    """
    sd_paths = np.atleast_2d(np.asarray(sd_paths, dtype=float))
    target_vm = np.atleast_2d(np.asarray(target_vm, dtype=float))
    aggregated_vm = np.atleast_2d(np.asarray(aggregated_vm, dtype=float))
    if not (sd_paths.shape == target_vm.shape == aggregated_vm.shape):
        raise ValueError("all inputs must share the (M, T) shape")

    e_abs = np.abs(target_vm - aggregated_vm)
    sd_curve = np.mean(sd_paths, axis=0)
    e_abs_curve = np.mean(e_abs, axis=0)

    included = np.all(aggregated_vm > EPS_DIV, axis=0)
    n_excluded = int(np.count_nonzero(~included))
    if not np.any(included):
        raise AllStepsExcluded("no step has all aggregated von Mises values above the guard")

    e_rel_curve = np.full(included.shape, np.nan)
    sd_rel_curve = np.full(included.shape, np.nan)
    safe = aggregated_vm[:, included]
    e_rel_curve[included] = np.mean(e_abs[:, included] / safe, axis=0)
    sd_rel_curve[included] = np.mean(sd_paths[:, included] / safe, axis=0)

    def _corr(a, b):
        try:
            return pearson_r(a, b), False
        except DegenerateSequence:
            return math.nan, True

    r_abs, abs_degen = _corr(sd_curve, e_abs_curve)
    r_rel, rel_degen = _corr(sd_rel_curve[included], e_rel_curve[included])
    return UncertaintyReport(
        sd_curve=sd_curve,
        e_abs_curve=e_abs_curve,
        e_rel_curve=e_rel_curve,
        sd_rel_curve=sd_rel_curve,
        included=included,
        n_excluded=n_excluded,
        r_abs=r_abs,
        r_rel=r_rel,
        r_abs_degenerate=abs_degen,
        r_rel_degenerate=rel_degen,
    )


def component_error_correlation(sd_components, target_paths, aggregated_paths):
    """Correlation of spread vs error pooled over samples, steps, and components.

    Pairs (SD_c(t), |target_c(t) - aggregated_c(t)|) from every sample,
    step, and tensor component are concatenated into two flat sequences
    whose Pearson coefficient is returned.  This measures how well the
    per-component spread tracks per-component error for individual
    predictions rather than dataset averages.
    """
    sd = np.asarray(sd_components, dtype=float).ravel()
    err = np.abs(
        np.asarray(target_paths, dtype=float) - np.asarray(aggregated_paths, dtype=float)
    ).ravel()
    return pearson_r(sd, err)


def jsonable(value):
    """Recursively convert to JSON-safe builtins; non-finite floats become strings."""
    if isinstance(value, np.ndarray):
        return [jsonable(v) for v in value.tolist()]
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (np.floating, float)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.bool_,)):
        return bool(value)
    return value


@dataclass(frozen=True)
class MetricsReport:
    """Full evaluation bundle of one augmented-inference run over a dataset."""

    mere_per_rotation: dict = field(default_factory=dict)
    mare_per_rotation: dict = field(default_factory=dict)
    mere_av: float = math.nan
    sd_mere: float = math.nan
    mere_tta: float = math.nan
    mare_tta: float = math.nan
    mere_i0: float = math.nan
    mare_i0: float = math.nan
    mere_tta_percentile: float = math.nan
    histogram: Histogram | None = None
    shape: ShapeReport | None = None
    uncertainty: UncertaintyReport | None = None
    component_r: float = math.nan
    component_r_degenerate: bool = False
    n_samples: int = 0
    n_steps: int = 0
    n_rotations: int = 0

    def to_dict(self):
        d = {
            "n_samples": self.n_samples,
            "n_steps": self.n_steps,
            "n_rotations": self.n_rotations,
            "mere_per_rotation": {str(k): jsonable(v) for k, v in self.mere_per_rotation.items()},
            "mare_per_rotation": {str(k): jsonable(v) for k, v in self.mare_per_rotation.items()},
            "mere_av": jsonable(self.mere_av),
            "sd_mere": jsonable(self.sd_mere),
            "mere_tta": jsonable(self.mere_tta),
            "mare_tta": jsonable(self.mare_tta),
            "mere_i0": jsonable(self.mere_i0),
            "mare_i0": jsonable(self.mare_i0),
            "mere_tta_percentile": jsonable(self.mere_tta_percentile),
            "component_r": jsonable(self.component_r),
            "component_r_degenerate": self.component_r_degenerate,
        }
        if self.histogram is not None:
            d["histogram"] = {
                "bin_width": self.histogram.bin_width,
                "bin_edges": jsonable(self.histogram.bin_edges),
                "density": jsonable(self.histogram.density),
                "counts": jsonable(self.histogram.counts),
                "fit_mean": jsonable(self.histogram.fit_mean),
                "fit_sd": jsonable(self.histogram.fit_sd),
            }
        if self.shape is not None:
            d["shape"] = self.shape.to_dict()
        if self.uncertainty is not None:
            d["uncertainty"] = self.uncertainty.to_dict()
        return d

    def to_text(self):
        """Aligned-column human summary of the headline numbers."""
        rows = [
            ("samples", f"{self.n_samples}"),
            ("steps", f"{self.n_steps}"),
            ("rotations", f"{self.n_rotations}"),
            ("mere_i0", f"{self.mere_i0:.6f}"),
            ("mere_av", f"{self.mere_av:.6f}"),
            ("sd_mere", f"{self.sd_mere:.6f}"),
            ("mere_tta", f"{self.mere_tta:.6f}"),
            ("mere_tta_pctile", f"{self.mere_tta_percentile:.2f}"),
            ("mare_i0", f"{self.mare_i0:.6f}"),
            ("mare_tta", f"{self.mare_tta:.6f}"),
        ]
        if self.shape is not None:
            rows.append(("mean_c_ratio", f"{self.shape.mean_c_ratio:.4f}"))
            rows.append(("c_ratio_below_1", f"{self.shape.fraction_below_one:.4f}"))
        if self.uncertainty is not None:
            rows.append(("r_abs", f"{self.uncertainty.r_abs:.4f}"))
            rows.append(("r_rel", f"{self.uncertainty.r_rel:.4f}"))
            rows.append(("excluded_steps", f"{self.uncertainty.n_excluded}"))
        rows.append(("component_r", f"{self.component_r:.4f}"))
        width = max(len(name) for name, _ in rows)
        return "\n".join(f"{name:<{width}}  {value}" for name, value in rows)


def evaluate_dataset(
    target_paths,
    results,
    mare_abs=False,
    bin_width=DEFAULT_BIN_WIDTH,
) -> MetricsReport:
    """Evaluate augmented-inference results of a whole dataset.

    Parameters
    ----------
    target_paths : ndarray, shape (M, T, 6)
        Target stress paths, one per sample.
    results : sequence of TTAResult
        One result per sample, all with the identity prediction at index 0
        and the same number of rotations.
    mare_abs : bool
        Take the absolute instead of the signed per-step difference in the
        maximum-relative-error family.
    bin_width : float
        Bin width of the per-rotation error histogram.
    """
    target_paths = np.asarray(target_paths, dtype=float)
    if target_paths.ndim != 3 or target_paths.shape[-1] != 6:
        raise ValueError(f"expected target paths of shape (M, T, 6), got {target_paths.shape}")
    if len(results) != target_paths.shape[0]:
        raise ValueError("one result per target path required")
    if len(results) == 0:
        raise ValueError("empty dataset")
    for res in results:
        if not res.has_identity:
            raise ValueError("dataset evaluation needs the identity prediction at index 0")
    n_pred = results[0].predictions.shape[0]
    if any(r.predictions.shape[0] != n_pred for r in results):
        raise ValueError("all results must use the same number of rotations")

    target_vm = von_mises(target_paths)
    vm_pred = np.stack([r.vm_individual for r in results])  # (M, P, T)
    vm_tta = np.stack([r.vm_aggregated for r in results])  # (M, T)

    tmax = _target_max(target_vm)  # (M,)
    n_steps = target_vm.shape[-1]
    err = vm_pred - target_vm[:, None, :]
    per_sample = np.sqrt(np.sum(err * err, axis=-1)) / (tmax[:, None] * n_steps)
    mere_vec = np.mean(per_sample, axis=0)  # (P,)
    diff = np.abs(err) if mare_abs else -err
    mare_vec = np.mean(np.max(diff, axis=-1) / tmax[:, None], axis=0)

    av = mere_av(mere_vec)
    spread = sd_mere(mere_vec[1:], av) if n_pred > 1 else math.nan
    tta_mere = mere(target_vm, vm_tta)
    tta_mare = mare(target_vm, vm_tta, absolute=mare_abs)
    hist = mere_histogram(mere_vec, bin_width) if n_pred > 1 else None

    shape = shape_report(
        target_paths,
        np.stack([r.predictions[0] for r in results]),
        np.stack([r.aggregated for r in results]),
    )
    uncertainty = uncertainty_curves(
        np.stack([r.vm_sd for r in results]), target_vm, vm_tta
    )
    try:
        comp_r = component_error_correlation(
            np.stack([r.sd for r in results]),
            target_paths,
            np.stack([r.aggregated for r in results]),
        )
        comp_degen = False
    except DegenerateSequence:
        comp_r, comp_degen = math.nan, True

    return MetricsReport(
        mere_per_rotation={i: float(v) for i, v in enumerate(mere_vec)},
        mare_per_rotation={i: float(v) for i, v in enumerate(mare_vec)},
        mere_av=av,
        sd_mere=spread,
        mere_tta=tta_mere,
        mare_tta=tta_mare,
        mere_i0=float(mere_vec[0]),
        mare_i0=float(mare_vec[0]),
        mere_tta_percentile=percentile_of(tta_mere, mere_vec),
        histogram=hist,
        shape=shape,
        uncertainty=uncertainty,
        component_r=comp_r,
        component_r_degenerate=comp_degen,
        n_samples=int(target_paths.shape[0]),
        n_steps=int(n_steps),
        n_rotations=int(n_pred - 1),
    )
