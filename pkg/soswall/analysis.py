"""Reports that turn sampled fields and loop ensembles into verdicts.

Every report is a plain dataclass with a ``to_record`` (JSON summary) and, where the data is
per sample, a ``rows`` method producing flat CSV rows keyed by (L, beta, seed, sample_index).
"""

import dataclasses
import math
from typing import Any, Iterable, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import stats

from soswall.errors import ConfigError
from soswall.lattice import (
    HeightField,
    SimConfig,
    H_of_L,
    alpha_c_approx,
    alpha_of_L,
    field_from_array,
    in_event,
    level_counts,
)
from soswall.levellines import LevelLoop, LoopEnsemble, extract_ensemble, hausdorff, rescale, sup_rho
from soswall.logging import logger as log
from soswall.sampler import ChainState, box_mask, run_sweeps, subbox_coupled_sweep
from soswall.wulff import LimitShape, SurfaceTension, fit_radius, wulff_body


@dataclasses.dataclass(frozen=True)
class AnalysisConfig:
    epsilon: float = 0.05
    critical_band: float = 0.02
    alpha_c: Optional[float] = None
    allow_subcritical_top: bool = False
    n_bootstrap: int = 1000
    ci: float = 0.95
    bootstrap_seed: int = 0
    hausdorff_resolution: float = 1e-3
    radii: Optional[Tuple[float, ...]] = None
    tension: str = "constant"
    K: int = 512
    xi: Tuple[float, ...] = (0.5,)
    subbox_sweeps: int = 0

    def __post_init__(self) -> None:
        if self.radii is not None:
            object.__setattr__(self, "radii", tuple(float(r) for r in self.radii))
        object.__setattr__(self, "xi", tuple(float(x) for x in self.xi))
        for message in self.violations():
            raise ConfigError(f"AnalysisConfig: {message}")

    def violations(self) -> list[str]:
        problems = []
        if self.epsilon < 0:
            problems.append(f"epsilon must be nonnegative, got {self.epsilon}")
        if self.critical_band < 0:
            problems.append(f"critical_band must be nonnegative, got {self.critical_band}")
        if self.n_bootstrap < 1:
            problems.append(f"n_bootstrap must be >= 1, got {self.n_bootstrap}")
        if not 0.0 < self.ci < 1.0:
            problems.append(f"ci must lie in (0, 1), got {self.ci}")
        if self.hausdorff_resolution <= 0:
            problems.append(f"hausdorff_resolution must be positive, got {self.hausdorff_resolution}")
        if self.K < 8:
            problems.append(f"K must be >= 8, got {self.K}")
        bad_xi = [x for x in self.xi if not 0.0 <= x < 1.0]
        if bad_xi:
            problems.append(f"xi must lie in [0, 1), got {bad_xi}")
        if self.subbox_sweeps < 0:
            problems.append(f"subbox_sweeps must be nonnegative, got {self.subbox_sweeps}")
        return problems

    def critical_value(self, beta: float) -> float:
        """Configured alpha_c, or the leading-order ln(4 beta) / (4 beta)."""
        return alpha_c_approx(beta) if self.alpha_c is None else self.alpha_c

    @classmethod
    def from_mapping(cls, values: Mapping[str, Any], strict: bool = True) -> "AnalysisConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(values) - names)
        if unknown and strict:
            raise ConfigError(f"AnalysisConfig: unknown keys {unknown}")
        return cls(**{k: v for k, v in values.items() if k in names and v is not None})

    def to_dict(self) -> dict[str, Any]:
        record = dataclasses.asdict(self)
        record["radii"] = list(self.radii) if self.radii is not None else None
        record["xi"] = list(self.xi)
        return record


def _row_key(config: SimConfig, index: int) -> dict[str, Any]:
    return {"L": config.side_length, "beta": config.beta, "seed": config.seed, "sample_index": index}


@dataclasses.dataclass
class ConcentrationReport:
    side_length: int
    beta: float
    seed: int
    H: float
    alpha: float
    alpha_c: float
    floor_H: int
    threshold: float
    histograms: np.ndarray
    in_top: np.ndarray
    in_below: np.ndarray
    predicted: str

    @property
    def n_samples(self) -> int:
        return len(self.histograms)

    @property
    def fraction_top(self) -> float:
        """Fraction of samples in E_floor(H)."""
        return float(self.in_top.mean())

    @property
    def fraction_below(self) -> float:
        """Fraction of samples in E_floor(H)-1."""
        return float(self.in_below.mean())

    @property
    def fraction_union(self) -> float:
        return float((self.in_top | self.in_below).mean())

    def mean_height_fraction(self, h: int) -> float:
        if not 0 <= h < self.histograms.shape[1]:
            return 0.0
        return float((self.histograms[:, h] / self.histograms.sum(axis=1)).mean())

    @property
    def observed(self) -> str:
        """Which of the two plateaus holds the larger mean share of sites."""
        top = self.mean_height_fraction(self.floor_H)
        below = self.mean_height_fraction(self.floor_H - 1)
        return f"E_{self.floor_H}" if top >= below else f"E_{self.floor_H - 1}"

    def to_record(self) -> dict[str, Any]:
        return {
            "L": self.side_length,
            "beta": self.beta,
            "seed": self.seed,
            "H": self.H,
            "alpha": self.alpha,
            "alpha_c": self.alpha_c,
            "floor_H": self.floor_H,
            "threshold": self.threshold,
            "n_samples": self.n_samples,
            "fraction_top": self.fraction_top,
            "fraction_below": self.fraction_below,
            "fraction_union": self.fraction_union,
            "mean_fraction_top": self.mean_height_fraction(self.floor_H),
            "mean_fraction_below": self.mean_height_fraction(self.floor_H - 1),
            "predicted": self.predicted,
            "observed": self.observed,
        }

    def rows(self, config: SimConfig) -> list[dict[str, Any]]:
        rows = []
        for k, histogram in enumerate(self.histograms):
            row = _row_key(config, k)
            row.update({f"h{h}": int(count) for h, count in enumerate(histogram)})
            row.update({"in_top": bool(self.in_top[k]), "in_below": bool(self.in_below[k])})
            rows.append(row)
        return rows


def predicted_plateau(alpha: float, alpha_c: float, floor_H: int, band: float) -> str:
    """Plateau the surface should sit on. Below alpha_c with floor(H) = 0 nothing lies under E_0."""
    if abs(alpha - alpha_c) < band:
        return "near-critical"
    if alpha > alpha_c:
        return f"E_{floor_H}"
    return f"E_{floor_H - 1}" if floor_H >= 1 else "no-lower-plateau"


def concentration_report(
    samples: Sequence[HeightField], config: SimConfig, analysis: Optional[AnalysisConfig] = None
) -> ConcentrationReport:
    """Height histograms and E_h frequencies for h = floor(H) and floor(H) - 1.

    Raises:
        ConfigError: If there are no samples.
    """
    analysis = analysis or AnalysisConfig()
    if not samples:
        raise ConfigError("concentration_report needs at least one sample")
    top = config.floor_H
    width = max(config.height_cap, max(s.height_cap for s in samples)) + 1
    histograms = np.zeros((len(samples), width), dtype=np.int64)
    for k, field in enumerate(samples):
        counts = level_counts(field)
        histograms[k, : len(counts)] = counts
    threshold = config.e_h_threshold
    in_top = np.array([in_event(f, top, threshold) for f in samples], dtype=bool)
    in_below = np.array([top >= 1 and in_event(f, top - 1, threshold) for f in samples], dtype=bool)
    alpha_c = analysis.critical_value(config.beta)
    report = ConcentrationReport(
        side_length=config.side_length,
        beta=config.beta,
        seed=config.seed,
        H=config.H,
        alpha=config.alpha,
        alpha_c=alpha_c,
        floor_H=top,
        threshold=threshold,
        histograms=histograms,
        in_top=in_top,
        in_below=in_below,
        predicted=predicted_plateau(config.alpha, alpha_c, top, analysis.critical_band),
    )
    log.info(
        f"Concentration L={config.side_length}: predicted {report.predicted}, observed {report.observed} "
        f"(E_top {report.fraction_top:.3f}, E_below {report.fraction_below:.3f})"
    )
    return report


def _resolve_top(ensemble: LoopEnsemble, top: Optional[int]) -> int:
    if top is not None:
        return top
    if ensemble.floor_H is None:
        raise ConfigError("ensemble has no beta; pass the top level explicitly")
    return ensemble.floor_H


@dataclasses.dataclass
class CensusReport:
    side_length: int
    floor_H: int
    cutoff: float
    counts: list[dict[int, int]]
    max_area_above: list[dict[int, float]]

    @property
    def n_samples(self) -> int:
        return len(self.counts)

    def microscopic_above(self) -> np.ndarray:
        """Per sample: every loop above floor(H) encloses at most (ln L)^2."""
        return np.array([all(a <= self.cutoff for a in areas.values()) for areas in self.max_area_above], dtype=bool)

    def largest_above(self) -> dict[int, float]:
        """Largest loop area at each height above floor(H), over all samples."""
        largest: dict[int, float] = {}
        for areas in self.max_area_above:
            for h, area in areas.items():
                largest[h] = max(largest.get(h, 0.0), area)
        return dict(sorted(largest.items()))

    def single_loops(self) -> np.ndarray:
        """Per sample: exactly one macroscopic loop in every L_i with i >= 1."""
        return np.array([all(c == 1 for i, c in sample.items() if i >= 1) for sample in self.counts], dtype=bool)

    def top_at_most_one(self) -> np.ndarray:
        """Per sample: L_0 is empty or a single loop."""
        return np.array([sample.get(0, 0) <= 1 for sample in self.counts], dtype=bool)

    def passes(self) -> np.ndarray:
        return self.microscopic_above() & self.single_loops() & self.top_at_most_one()

    def to_record(self) -> dict[str, Any]:
        return {
            "L": self.side_length,
            "floor_H": self.floor_H,
            "cutoff": self.cutoff,
            "n_samples": self.n_samples,
            "microscopic_above_rate": float(self.microscopic_above().mean()),
            "single_loops_rate": float(self.single_loops().mean()),
            "top_at_most_one_rate": float(self.top_at_most_one().mean()),
            "pass_rate": float(self.passes().mean()),
            "max_area_above": {str(h): area for h, area in self.largest_above().items()},
        }

    def rows(self, config: SimConfig) -> list[dict[str, Any]]:
        rows = []
        micro, single, top = self.microscopic_above(), self.single_loops(), self.top_at_most_one()
        for k, sample in enumerate(self.counts):
            row = _row_key(config, k)
            row.update({f"count_{i}": int(c) for i, c in sorted(sample.items())})
            row.update({f"max_area_h{h}": float(a) for h, a in sorted(self.max_area_above[k].items())})
            row.update(
                {
                    "microscopic_above": bool(micro[k]),
                    "single_loops": bool(single[k]),
                    "top_at_most_one": bool(top[k]),
                }
            )
            rows.append(row)
        return rows


def loop_census(ensembles: Sequence[LoopEnsemble], top: Optional[int] = None) -> CensusReport:
    """Count macroscopic loops per L_i and the largest loop above floor(H), sample by sample."""
    if not ensembles:
        raise ConfigError("loop_census needs at least one ensemble")
    L = ensembles[0].side_length
    floor_H = _resolve_top(ensembles[0], top)
    counts, max_areas = [], []
    for ensemble in ensembles:
        if ensemble.side_length != L:
            raise ConfigError("loop_census needs ensembles from equal-config samples")
        counts.append({i: len(loops) for i, loops in ensemble.collections(floor_H).items()})
        max_areas.append(
            {h: max(loop.area for loop in loops) for h, loops in sorted(ensemble.levels.items()) if h > floor_H and loops}
        )
    return CensusReport(L, floor_H, ensembles[0].cutoff, counts, max_areas)


@dataclasses.dataclass
class ShapeReport:
    side_length: int
    indices: list[int]
    distances: np.ndarray
    flags: list[dict[str, Any]]

    @property
    def sup_per_sample(self) -> np.ndarray:
        return self.distances.max(axis=1) if self.distances.size else np.zeros(len(self.distances))

    def median(self, i: int) -> float:
        return float(np.median(self.distances[:, self.indices.index(i)]))

    def to_record(self) -> dict[str, Any]:
        return {
            "L": self.side_length,
            "indices": self.indices,
            "median_by_index": {str(i): self.median(i) for i in self.indices},
            "median_sup": float(np.median(self.sup_per_sample)),
            "flags": self.flags,
        }

    def rows(self, config: SimConfig) -> list[dict[str, Any]]:
        rows = []
        for k, distances in enumerate(self.distances):
            row = _row_key(config, k)
            row.update({f"d_{i}": float(d) for i, d in zip(self.indices, distances)})
            row["d_sup"] = float(self.sup_per_sample[k])
            rows.append(row)
        return rows


def shape_convergence(
    ensembles: Sequence[LoopEnsemble],
    limit: LimitShape,
    L: int,
    resolution: float = 1e-3,
    top: Optional[int] = None,
) -> ShapeReport:
    """Hausdorff distance between each rescaled L_i and W_i, per sample.

    A collection with no limit curve, or a limit curve with no loops, counts as an infinite
    distance and is flagged.
    """
    if not limit.curves:
        raise ConfigError("shape_convergence needs a nonempty limit shape")
    collections = [ensemble.collections(_resolve_top(ensemble, top)) for ensemble in ensembles]
    observed = {i for c in collections for i, loops in c.items() if loops}
    indices = sorted(observed | set(limit.indices))
    distances = np.zeros((len(ensembles), len(indices)))
    flags = []
    for k, collection in enumerate(collections):
        for j, i in enumerate(indices):
            loops = collection.get(i, [])
            curve = limit.curve(i)
            if loops and curve is not None:
                distances[k, j] = hausdorff(rescale(loops, L), curve, resolution)
                continue
            distances[k, j] = math.inf
            reason = "no limit curve" if curve is None else "no observed loop"
            flags.append({"sample_index": k, "index": i, "reason": reason})
    if flags:
        log.warning(f"Shape convergence at L={L}: {len(flags)} index mismatches")
    return ShapeReport(L, indices, distances, flags)


@dataclasses.dataclass
class RadiusFitReport:
    side_length: int
    tension: str
    sample_index: int
    fits: list[dict[str, Any]]

    @property
    def radii(self) -> dict[int, float]:
        return {fit["index"]: fit["radius"] for fit in self.fits}

    def to_record(self) -> dict[str, Any]:
        return {"L": self.side_length, "tension": self.tension, "sample_index": self.sample_index, "fits": self.fits}


def radius_fits(
    ensemble: LoopEnsemble,
    tension: SurfaceTension,
    K: int = 512,
    resolution: float = 1e-3,
    top: Optional[int] = None,
    sample_index: int = 0,
) -> RadiusFitReport:
    """Fitted dilation radius and Hausdorff residual for every nonempty L_i of one sample.

    Used when no radii are configured, so the observed loops themselves say which limit
    curves they sit near.
    """
    body = wulff_body(tension, K)
    L = ensemble.side_length
    fits = []
    for i, loops in sorted(ensemble.collections(_resolve_top(ensemble, top)).items()):
        if not loops:
            continue
        radius, residual = fit_radius(rescale(loops, L), tension, body=body, resolution=resolution)
        fits.append({"index": i, "radius": radius, "residual": residual, "n_loops": len(loops)})
    log.info(f"Radius fits at L={L}: " + ", ".join(f"r_{f['index']}={f['radius']:.4f}" for f in fits))
    return RadiusFitReport(L, tension.name, sample_index, fits)


@dataclasses.dataclass
class FluctuationReport:
    side_length: int
    level_index: Optional[int]
    sup_rho: list[float]
    excluded: int

    @property
    def n_included(self) -> int:
        return len(self.sup_rho)

    @property
    def mean(self) -> Optional[float]:
        return float(np.mean(self.sup_rho)) if self.sup_rho else None

    @property
    def median(self) -> Optional[float]:
        return float(np.median(self.sup_rho)) if self.sup_rho else None

    def to_record(self) -> dict[str, Any]:
        return {
            "L": self.side_length,
            "level_index": self.level_index,
            "n_included": self.n_included,
            "excluded": self.excluded,
            "mean_sup_rho": self.mean,
            "median_sup_rho": self.median,
            "sup_rho": self.sup_rho,
        }


def _top_loops(ensemble: LoopEnsemble, allow_subcritical: bool, top: Optional[int]) -> Tuple[Optional[int], list[LevelLoop]]:
    top = _resolve_top(ensemble, top)
    loops = ensemble.collection(0, top)
    if loops:
        return 0, loops
    if allow_subcritical:
        loops = ensemble.collection(1, top)
        if loops:
            return 1, loops
    return None, []


def fluctuation_stats(
    ensembles: Sequence[LoopEnsemble],
    L: int,
    analysis: Optional[AnalysisConfig] = None,
    top: Optional[int] = None,
) -> FluctuationReport:
    """sup of rho over the middle half of the bottom side for the top macroscopic collection.

    Samples without a top loop are excluded and counted; L_1 stands in for an empty L_0 only
    when allow_subcritical_top is set.
    """
    analysis = analysis or AnalysisConfig()
    values, excluded, used = [], 0, set()
    for ensemble in ensembles:
        index, loops = _top_loops(ensemble, analysis.allow_subcritical_top, top)
        value = sup_rho(loops, L) if loops else None
        if value is None:
            excluded += 1
            continue
        used.add(index)
        values.append(value)
    if excluded:
        log.warning(f"Fluctuations at L={L}: {excluded} of {len(ensembles)} samples have no top loop")
    level_index = min(used) if used else None
    return FluctuationReport(L, level_index, values, excluded)


@dataclasses.dataclass
class ExponentFit:
    exponent: float
    intercept: float
    ci: Tuple[float, float]
    confidence: float
    side_lengths: list[int]
    n_points: int
    r_value: float

    def to_record(self) -> dict[str, Any]:
        return {
            "exponent": self.exponent,
            "intercept": self.intercept,
            "ci_low": self.ci[0],
            "ci_high": self.ci[1],
            "confidence": self.confidence,
            "side_lengths": self.side_lengths,
            "n_points": self.n_points,
            "r_value": self.r_value,
        }


def _log_slope(log_L: np.ndarray, *groups: np.ndarray) -> float:
    x = np.concatenate([np.full(len(g), lx) for lx, g in zip(log_L, groups)])
    y = np.log(np.concatenate(groups))
    return float(stats.linregress(x, y).slope)


def fit_exponent(
    sweep: Union[Mapping[int, Sequence[float]], Iterable[Tuple[int, Sequence[float]]]],
    n_bootstrap: int = 1000,
    confidence: float = 0.95,
    seed: int = 0,
) -> ExponentFit:
    """Least-squares slope of log sup-rho against log L, with a percentile bootstrap CI.

    The bootstrap resamples within each L independently.

    Raises:
        ConfigError: With fewer than three distinct L values or non-positive observations.
    """
    items = sorted((dict(sweep) if not isinstance(sweep, Mapping) else sweep).items())
    items = [(int(L), np.asarray(values, dtype=np.float64)) for L, values in items if len(values)]
    if len(items) < 3:
        raise ConfigError(f"fit_exponent needs at least 3 distinct L values, got {len(items)}")
    side_lengths = [L for L, _ in items]
    groups = [values for _, values in items]
    if any(np.any(g <= 0) for g in groups):
        raise ConfigError("fit_exponent needs positive sup-rho values")
    log_L = np.log(np.asarray(side_lengths, dtype=np.float64))
    x = np.concatenate([np.full(len(g), lx) for lx, g in zip(log_L, groups)])
    fit = stats.linregress(x, np.log(np.concatenate(groups)))
    exponent = float(fit.slope)
    if any(len(g) < 2 for g in groups) or all(np.ptp(g) == 0 for g in groups):
        # Nothing to resample
        ci = (exponent, exponent)
    else:
        result = stats.bootstrap(
            tuple(groups),
            lambda *g: _log_slope(log_L, *g),
            n_resamples=n_bootstrap,
            confidence_level=confidence,
            method="percentile",
            vectorized=False,
            rng=np.random.default_rng(seed),
        )
        ci = (float(result.confidence_interval.low), float(result.confidence_interval.high))
    log.info(f"Exponent fit over L={side_lengths}: {exponent:.4f} CI [{ci[0]:.4f}, {ci[1]:.4f}]")
    return ExponentFit(exponent, float(fit.intercept), ci, confidence, side_lengths, len(x), float(fit.rvalue))


@dataclasses.dataclass
class CascadeReport:
    side_length: int
    xi: float
    level_index: int
    epsilon: float
    sup_rho: list[float]
    excluded: int

    @property
    def baseline(self) -> float:
        """L^((1 - xi) / 3)."""
        return self.side_length ** ((1.0 - self.xi) / 3.0)

    @property
    def threshold(self) -> float:
        return self.side_length ** ((1.0 - self.xi) / 3.0 + self.epsilon)

    @property
    def n_exceeding(self) -> int:
        return int(np.count_nonzero(np.asarray(self.sup_rho) > self.threshold))

    @property
    def exceedance_rate(self) -> Optional[float]:
        if not self.sup_rho:
            return None
        return self.n_exceeding / len(self.sup_rho)

    def to_record(self) -> dict[str, Any]:
        return {
            "L": self.side_length,
            "xi": self.xi,
            "level_index": self.level_index,
            "epsilon": self.epsilon,
            "baseline": self.baseline,
            "threshold": self.threshold,
            "n_exceeding": self.n_exceeding,
            "exceedance_rate": self.exceedance_rate,
            "excluded": self.excluded,
            "sup_rho": self.sup_rho,
        }


def cascade_stats(
    ensembles: Sequence[LoopEnsemble],
    xi: float,
    L: int,
    analysis: Optional[AnalysisConfig] = None,
    H: Optional[float] = None,
) -> CascadeReport:
    """sup rho of L_i for i = floor(xi H) against the threshold L^((1 - xi)/3 + epsilon).

    Index 0 is the top-loop statistic of fluctuation_stats.
    """
    analysis = analysis or AnalysisConfig()
    if not 0.0 <= xi < 1.0:
        raise ConfigError(f"xi must lie in [0, 1), got {xi}")
    if H is None:
        beta = ensembles[0].beta if ensembles else None
        if beta is None:
            raise ConfigError("cascade_stats needs beta on the ensembles or an explicit H")
        H = H_of_L(L, beta)
    i = math.floor(xi * H)
    if i == 0:
        report = fluctuation_stats(ensembles, L, analysis, top=math.floor(H))
        return CascadeReport(L, xi, 0, analysis.epsilon, report.sup_rho, report.excluded)
    values, excluded = [], 0
    top = math.floor(H)
    for ensemble in ensembles:
        loops = ensemble.collection(i, top)
        value = sup_rho(loops, L) if loops else None
        if value is None:
            excluded += 1
        else:
            values.append(value)
    return CascadeReport(L, xi, i, analysis.epsilon, values, excluded)


def cascade_box_side(L: int, beta: float, i: int, alpha_c: Optional[float] = None) -> int:
    """Smallest side ell with floor(H(ell)) = floor(H(L)) - i and alpha(ell) > 2 alpha_c.

    Raises:
        ConfigError: If no such ell exists at or below L.
    """
    alpha_c = alpha_c_approx(beta) if alpha_c is None else alpha_c
    m = math.floor(H_of_L(L, beta)) - i
    if i < 0 or m < 0:
        raise ConfigError(f"level index {i} is outside 0..floor(H(L)) at L={L}, beta={beta}")
    if 2 * alpha_c >= 1.0:
        raise ConfigError(f"2 alpha_c = {2 * alpha_c:.4f} leaves no admissible fractional part")
    ell = max(math.floor(math.exp(4.0 * beta * (m + 2.0 * alpha_c))), 1)
    while ell <= L:
        H = H_of_L(ell, beta)
        if math.floor(H) > m:
            break
        if math.floor(H) == m and alpha_of_L(ell, beta) > 2.0 * alpha_c:
            return ell
        ell += 1
    raise ConfigError(f"no sub-box side at or below L={L} for level index {i} at beta={beta}")


@dataclasses.dataclass
class DominationReport:
    side_length: int
    box_side: int
    box_origin: Tuple[int, int]
    level_index: int
    sweeps: int
    ordering_violations: int
    subbox_sup_rho: Optional[float]
    full_sup_rho: Optional[float]

    def to_record(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


def subbox_domination(
    config: SimConfig, i: int, sweeps: int, analysis: Optional[AnalysisConfig] = None
) -> DominationReport:
    """Run the full-box chain against a chain with zero boundary on the bottom-centred sub-box.

    The sub-box side comes from cascade_box_side. Both chains share variates, so the sub-box
    surface stays below the full one; its top loop is compared with L_i of the full box.
    """
    analysis = analysis or AnalysisConfig()
    L = config.side_length
    ell = cascade_box_side(L, config.beta, i, analysis.critical_value(config.beta))
    x0 = (L - ell) // 2 + 1
    mask = box_mask(L, (x0, x0 + ell - 1), (1, ell))
    high = ChainState.from_config(config)
    low = ChainState.from_config(config, 0)
    run_sweeps(high, config.burn_in)
    for _ in range(sweeps):
        subbox_coupled_sweep(low, high, mask)
    violations = int(np.count_nonzero(low.field.heights > high.field.heights))
    inner = field_from_array(low.field.heights[x0 - 1 : x0 - 1 + ell, 0:ell], config.height_cap)
    inner_ensemble = extract_ensemble(inner, config.beta)
    inner_top = inner_ensemble.collection(0)
    full_ensemble = extract_ensemble(high.field, config.beta)
    full_loops = full_ensemble.collection(i)
    report = DominationReport(
        side_length=L,
        box_side=ell,
        box_origin=(x0, 1),
        level_index=i,
        sweeps=sweeps,
        ordering_violations=violations,
        subbox_sup_rho=sup_rho(inner_top, ell) if inner_top else None,
        full_sup_rho=sup_rho(full_loops, L) if full_loops else None,
    )
    log.info(f"Sub-box domination L={L} ell={ell} i={i}: {violations} ordering violations")
    return report

