"""Command-line surface: sample, analyze, wulff, sweep and oracle runs.

Each invocation becomes an ExperimentSpec, which is validated against the owning modules'
preconditions before any work starts. Parameters come from an optional flat JSON config file,
overridden by flags. Exit codes: 0 success, 2 validation failure, 3 runtime failure.
"""

import argparse
import dataclasses
import logging
import math
import os
import sys
from typing import Any, Callable, Optional, Sequence

import numpy as np
import pyarrow as pa

from soswall.analysis import AnalysisConfig
from soswall.cell import Cell
from soswall.errors import EXIT_OK, EXIT_VALIDATION, ConfigError, SOSError, exit_code
from soswall.lattice import SimConfig, alpha_c_approx, matched_side_lengths
from soswall.logging import _logger_setup
from soswall.logging import logger as log
from soswall.manifest import MANIFEST_NAME, Manifest
from soswall.plotting import export_svg
from soswall.processor import Processor
from soswall.sampler import ENUMERATION_GUARD, ORACLE_GUARD, empirical_distribution, enumerate_exact
from soswall.storage import Storage
from soswall.wulff import (
    BUILTIN_TENSIONS,
    corner_distances,
    enclosed_area,
    predicted_ensemble,
    side_overlaps,
    symmetry_report,
    tension_by_name,
    wulff_body,
)

COMMANDS = ("sample", "analyze", "wulff", "sweep", "oracle")
DEFAULT_OUTPUT_ROOT = "runs"
ERROR_RECORD = "error.json"

_SIM_FIELDS = tuple(f.name for f in dataclasses.fields(SimConfig))
_ANALYSIS_FIELDS = tuple(f.name for f in dataclasses.fields(AnalysisConfig))

# Column types of a --config file; seeds are uint64 and counts int64 so they read back exact
_INTS = pa.list_(pa.int64())
CONFIG_SCHEMA = pa.schema(
    [
        ("side_length", pa.int64()),
        ("beta", pa.float64()),
        ("height_cap", pa.int64()),
        ("sweeps", pa.int64()),
        ("burn_in", pa.int64()),
        ("seed", pa.uint64()),
        ("e_h_threshold", pa.float64()),
        ("initial_level", pa.int64()),
        ("checkerboard", pa.bool_()),
        ("epsilon", pa.float64()),
        ("critical_band", pa.float64()),
        ("alpha_c", pa.float64()),
        ("allow_subcritical_top", pa.bool_()),
        ("n_bootstrap", pa.int64()),
        ("ci", pa.float64()),
        ("bootstrap_seed", pa.uint64()),
        ("hausdorff_resolution", pa.float64()),
        ("radii", pa.list_(pa.float64())),
        ("xi", pa.list_(pa.float64())),
        ("subbox_sweeps", pa.int64()),
        ("tension", pa.string()),
        ("K", pa.int64()),
        ("samples", pa.int64()),
        ("thinning", pa.int64()),
        ("side_lengths", _INTS),
        ("alpha_target", pa.float64()),
        ("levels", _INTS),
        ("seeds", pa.list_(pa.uint64())),
        ("alpha_star", pa.float64()),
        ("input", pa.string()),
        ("svg", pa.bool_()),
        ("write_fields", pa.bool_()),
        ("parallel", pa.bool_()),
    ]
)


@dataclasses.dataclass
class ExperimentSpec:
    command: str
    out_dir: str
    sim: dict[str, Any] = dataclasses.field(default_factory=dict)
    analysis: dict[str, Any] = dataclasses.field(default_factory=dict)
    params: dict[str, Any] = dataclasses.field(default_factory=dict)
    svg: bool = False
    write_fields: bool = True
    parallel: bool = False

    def sim_config(self, **overrides: Any) -> SimConfig:
        return SimConfig.from_mapping({**self.sim, **overrides})

    def analysis_config(self) -> AnalysisConfig:
        return AnalysisConfig.from_mapping(self.analysis)

    def side_lengths(self) -> list[int]:
        """Explicit side_lengths, or the matched-alpha list from alpha_target and levels."""
        if self.params.get("side_lengths"):
            return [int(L) for L in self.params["side_lengths"]]
        if self.params.get("alpha_target") is not None and self.params.get("levels"):
            return matched_side_lengths(self.sim.get("beta", 0.0), self.params["alpha_target"], self.params["levels"])
        return [int(self.sim["side_length"])] if "side_length" in self.sim else []

    def seeds(self) -> list[int]:
        return [int(s) for s in self.params.get("seeds") or [self.sim.get("seed", 0)]]

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


def _collect(check: Callable[[], Any], problems: list[str]) -> Any:
    try:
        return check()
    except ConfigError as e:
        problems.append(str(e))
        return None


def _validate_samples(spec: ExperimentSpec, problems: list[str]) -> None:
    if int(spec.params.get("samples") or 0) < 1:
        problems.append(f"sample_chain: samples must be >= 1, got {spec.params.get('samples')}")
    thinning = spec.params.get("thinning")
    if thinning is not None and int(thinning) < 1:
        problems.append(f"sample_chain: thinning must be >= 1, got {thinning}")


def _validate_wulff(spec: ExperimentSpec, analysis: AnalysisConfig, problems: list[str]) -> None:
    radii = list(analysis.radii or [])
    if not radii:
        problems.append("predicted_ensemble: at least one radius is required")
    bad = [r for r in radii if not 0.0 < r < 1.0]
    if bad:
        problems.append(f"predicted_ensemble: radii must lie strictly in (0, 1), got {bad}")
    if len(set(radii)) != len(radii):
        problems.append(f"predicted_ensemble: radii must be distinct, got {radii}")
    if analysis.tension not in BUILTIN_TENSIONS:
        problems.append(f"SurfaceTension: unknown tension '{analysis.tension}', expected one of {BUILTIN_TENSIONS}")
    elif analysis.tension == "numeric-sos" and not spec.sim.get("beta", 0) > 0:
        problems.append("SurfaceTension: numeric-sos needs a positive beta")
    alpha_star = spec.params.get("alpha_star")
    if alpha_star is not None:
        alpha_c = analysis.alpha_c
        if alpha_c is None and spec.sim.get("beta", 0) > 0:
            alpha_c = alpha_c_approx(spec.sim["beta"])
        if alpha_c is None:
            problems.append("predicted_ensemble: alpha_star needs alpha_c or beta")
        elif math.isclose(alpha_star, alpha_c, rel_tol=0.0, abs_tol=1e-12):
            problems.append(f"predicted_ensemble: alpha_star = alpha_c = {alpha_c} is critical, no limit shape")
    if problems or not radii:
        return
    tension = _collect(lambda: tension_by_name(analysis.tension, spec.sim.get("beta")), problems)
    if tension is None:
        return
    width = _collect(lambda: wulff_body(tension, analysis.K).width, problems)
    too_large = [r for r in radii if width is not None and r * width > 1.0 + 1e-9]
    if too_large:
        problems.append(f"opening_boundary: body dilated by {too_large} does not fit in the unit square")


def _validate_oracle(spec: ExperimentSpec, problems: list[str]) -> None:
    L, M = spec.sim.get("side_length"), spec.sim.get("height_cap")
    if L is None or M is None:
        problems.append("enumerate_exact: side_length and height_cap are both required")
        return
    size = (int(M) + 1) ** (int(L) ** 2)
    if size > ENUMERATION_GUARD:
        problems.append(f"enumerate_exact: (M+1)^(L^2) = {size} exceeds the guard {ENUMERATION_GUARD}")
    if int(spec.params.get("samples") or 0) > 0 and size > ORACLE_GUARD:
        problems.append(f"empirical_distribution: (M+1)^(L^2) = {size} exceeds the guard {ORACLE_GUARD}")


def validate(spec: ExperimentSpec) -> list[str]:
    """Every precondition the experiment breaks; empty iff run would start."""
    if spec.command not in COMMANDS:
        return [f"ExperimentSpec: unknown command '{spec.command}', expected one of {COMMANDS}"]
    problems: list[str] = []
    analysis = _collect(spec.analysis_config, problems)
    if spec.command == "sample":
        _collect(spec.sim_config, problems)
        _validate_samples(spec, problems)
    elif spec.command == "oracle":
        _collect(spec.sim_config, problems)
        _validate_oracle(spec, problems)
    elif spec.command == "wulff" and analysis is not None:
        _validate_wulff(spec, analysis, problems)
    elif spec.command == "sweep":
        _validate_samples(spec, problems)
        sides = _collect(spec.side_lengths, problems) or []
        if len(set(sides)) < 3:
            problems.append(f"fit_exponent: a sweep needs at least 3 distinct L values, got {sorted(set(sides))}")
        for L in sorted(set(sides)):
            for seed in spec.seeds():
                _collect(lambda: spec.sim_config(side_length=L, seed=seed), problems)
    elif spec.command == "analyze":
        source = spec.params.get("input")
        if not source:
            problems.append("analyze: an input run directory is required")
        elif not os.path.isfile(os.path.join(source, MANIFEST_NAME)):
            problems.append(f"analyze: no {MANIFEST_NAME} in {source}")
    return problems


def _run_sample(spec: ExperimentSpec, storage: Storage, manifest: Manifest) -> None:
    cell = Cell(
        spec.sim_config(),
        spec.analysis_config(),
        storage,
        storage.root,
        int(spec.params["samples"]),
        spec.params.get("thinning"),
        write_fields=spec.write_fields,
        svg=spec.svg,
    )
    cell.process_cell()
    manifest.add_artifact(cell.manifest.path, "manifest")
    if cell.error is not None:
        raise cell.error


def _run_analyze(spec: ExperimentSpec, storage: Storage, manifest: Manifest) -> None:
    source_dir = os.path.abspath(spec.params["input"])
    source = Manifest.load(storage, source_dir)
    if not source.is_complete():
        raise ConfigError(f"analyze: {source_dir} is {source.status}, not complete")
    broken = source.verify()
    if broken:
        raise ConfigError(f"analyze: stored artifacts in {source_dir} are missing or changed: {broken}")
    fields, meta = [], None
    for artifact in source.get_artifacts("field"):
        field, meta = storage.read_field(os.path.join(source_dir, artifact["path"]))
        fields.append(field)
    if not fields:
        raise ConfigError(f"analyze: {source_dir} holds no stored fields")
    config = SimConfig(
        side_length=meta["side_length"], beta=meta["beta"], height_cap=meta["height_cap"], seed=meta["seed"]
    )
    cell = Cell(config, spec.analysis_config(), storage, storage.root, len(fields), write_fields=False, svg=spec.svg)
    cell.analyze_samples(fields)
    manifest.add_artifact(cell.manifest.path, "manifest")
    if cell.error is not None:
        raise cell.error


def _run_wulff(spec: ExperimentSpec, storage: Storage, manifest: Manifest) -> None:
    analysis = spec.analysis_config()
    tension = tension_by_name(analysis.tension, spec.sim.get("beta"))
    body = wulff_body(tension, analysis.K)
    alpha_star = spec.params.get("alpha_star")
    if alpha_star is None:
        # No plateau information: index the curves from W_0
        alpha_star, alpha_c = 1.0, 0.0
    else:
        alpha_c = analysis.critical_value(spec.sim.get("beta"))
    limit = predicted_ensemble(alpha_star, alpha_c, analysis.radii, tension, analysis.K, body=body)
    body_record = {
        "tension": tension.name,
        "K": body.K,
        "area": body.area,
        "vertices": body.vertices.tolist(),
    }
    path = storage.write_json(os.path.join(storage.root, "body.json"), body_record)
    manifest.add_artifact(path, "report")
    records = []
    for i in limit.indices:
        curve = limit.curve(i)
        records.append(
            {
                "index": i,
                "radius": limit.radius(i),
                "area": enclosed_area(curve),
                "side_overlaps": side_overlaps(curve),
                "corner_distances": corner_distances(curve),
                "symmetry": symmetry_report(curve, analysis.hausdorff_resolution),
                "vertices": curve.tolist(),
            }
        )
    path = storage.write_jsonl(os.path.join(storage.root, "curves.jsonl"), records)
    manifest.add_artifact(path, "loops")
    log.info(f"Limit curves {limit.indices} nested: {limit.is_nested()}")
    if spec.svg:
        predicted = {i: limit.curve(i) for i in limit.indices}
        path = export_svg(storage, os.path.join(storage.root, "wulff.svg"), predicted=predicted, title=f"{tension.name} tension")
        manifest.add_artifact(path, "svg")


def _run_oracle(spec: ExperimentSpec, storage: Storage, manifest: Manifest) -> None:
    config = spec.sim_config()
    L, M = config.side_length, config.height_cap
    exact = enumerate_exact(L, M, config.beta)
    rows = {
        "index": np.arange(len(exact.probabilities)),
        "energy": exact.energies,
        "probability": exact.probabilities,
    }
    record = {
        "L": L,
        "M": M,
        "beta": config.beta,
        "partition_function": exact.partition_function,
        "n_configurations": int(len(exact.probabilities)),
        "energy_orbits": {str(e): p for e, p in sorted(exact.energy_orbits().items())},
    }
    samples = int(spec.params.get("samples") or 0)
    if samples > 0:
        thinning = int(spec.params.get("thinning") or 5)
        counts = empirical_distribution(config, samples, thinning)
        rows["empirical"] = counts / counts.sum()
        record.update({"samples": samples, "thinning": thinning, "total_variation": exact.total_variation(counts)})
        log.info(f"Oracle L={L} M={M} beta={config.beta}: total variation {record['total_variation']:.4g}")
    table = [{k: v[n].item() for k, v in rows.items()} for n in range(len(exact.probabilities))]
    manifest.add_artifact(storage.write_csv(os.path.join(storage.root, "exact.csv"), table), "table")
    manifest.add_artifact(storage.write_json(os.path.join(storage.root, "oracle.json"), record), "report")


def _run_sweep(spec: ExperimentSpec, storage: Storage, manifest: Manifest) -> None:
    analysis = spec.analysis_config()
    cells = [
        Cell(
            spec.sim_config(side_length=L, seed=seed),
            analysis,
            storage,
            storage.root,
            int(spec.params["samples"]),
            spec.params.get("thinning"),
            write_fields=spec.write_fields,
            svg=spec.svg,
        )
        for L in spec.side_lengths()
        for seed in spec.seeds()
    ]
    processor = Processor(cells, parallel=spec.parallel, analysis=analysis)
    results = processor.run()
    for cell, result in zip(cells, results):
        if result is not None and result.ok:
            manifest.add_artifact(cell.manifest.path, "manifest")
    rows = [
        {
            "L": r.side_length,
            "beta": r.beta,
            "seed": r.seed,
            "n_samples": r.n_samples,
            "n_sup_rho": len(r.sup_rho),
            "mean_sup_rho": float(np.mean(r.sup_rho)) if r.sup_rho else None,
            "cap_hit_rate": r.cap_hit_rate,
            **{f"exceeding_xi{c['xi']:g}": c["n_exceeding"] for c in r.cascade},
            "ok": r.ok,
        }
        for r in results
        if r is not None
    ]
    manifest.add_artifact(storage.write_csv(os.path.join(storage.root, "sweep.csv"), rows), "table")
    manifest.add_artifact(storage.write_json(os.path.join(storage.root, "aggregate.json"), processor.aggregate()), "report")
    if processor.failed:
        raise SOSError(f"{len(processor.failed)} of {len(cells)} cells failed")


RUNNERS: dict[str, Callable[[ExperimentSpec, Storage, Manifest], None]] = {
    "sample": _run_sample,
    "analyze": _run_analyze,
    "wulff": _run_wulff,
    "sweep": _run_sweep,
    "oracle": _run_oracle,
}


def _fail(storage: Storage, manifest: Manifest, record: dict[str, Any]) -> int:
    log.error(f"{record['type']}: {record['message'] or record['violations']}")
    storage.write_json(os.path.join(storage.root, ERROR_RECORD), record)
    manifest.fail(record)
    return record["exit_code"]


def run(spec: ExperimentSpec) -> int:
    """Validate, execute and record an experiment; returns the process exit status."""
    storage = Storage(spec.out_dir)
    manifest = Manifest(storage, storage.root, command=spec.command)
    violations = validate(spec)
    if violations:
        record = {"type": "ValidationError", "message": "", "violations": violations, "exit_code": EXIT_VALIDATION}
        return _fail(storage, manifest, record)
    manifest.write()
    log.info(f"Running {spec.command} into {storage.root}")
    try:
        RUNNERS[spec.command](spec, storage, manifest)
    except Exception as e:
        record = {"type": type(e).__name__, "message": str(e), "violations": [], "exit_code": exit_code(e)}
        return _fail(storage, manifest, record)
    manifest.complete()
    return EXIT_OK


def _add_sim_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("chain")
    group.add_argument("--L", dest="side_length", type=int, help="Box side length")
    group.add_argument("--beta", type=float, help="Inverse temperature")
    group.add_argument("--height-cap", dest="height_cap", type=int, help="Height cap M")
    group.add_argument("--sweeps", type=int, help="Default sweeps between samples")
    group.add_argument("--burn-in", dest="burn_in", type=int, help="Sweeps before the first sample")
    group.add_argument("--seed", type=int, help="Random seed")
    group.add_argument("--e-h-threshold", dest="e_h_threshold", type=float, help="Site fraction defining E_h")
    group.add_argument("--initial-level", dest="initial_level", type=int, help="Warm-start height")
    group.add_argument("--checkerboard", action="store_true", default=None, help="Checkerboard sweep order")


def _add_analysis_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("analysis")
    group.add_argument("--epsilon", type=float)
    group.add_argument("--critical-band", dest="critical_band", type=float)
    group.add_argument("--alpha-c", dest="alpha_c", type=float)
    group.add_argument("--allow-subcritical-top", dest="allow_subcritical_top", action="store_true", default=None)
    group.add_argument("--n-bootstrap", dest="n_bootstrap", type=int)
    group.add_argument("--ci", type=float)
    group.add_argument("--bootstrap-seed", dest="bootstrap_seed", type=int)
    group.add_argument("--resolution", dest="hausdorff_resolution", type=float)
    group.add_argument("--radii", type=float, nargs="+")
    group.add_argument("--tension", choices=BUILTIN_TENSIONS)
    group.add_argument("--K", type=int, help="Wulff direction count")
    group.add_argument("--xi", type=float, nargs="+", help="Cascade depths; each selects L_i with i = floor(xi H)")
    group.add_argument("--subbox-sweeps", dest="subbox_sweeps", type=int, help="Coupled sweeps for the sub-box comparison (0 skips it)")


def _add_common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="Flat JSON file of parameters; flags override it")
    parser.add_argument("--out", help=f"Output directory (default $SOSWALL_OUTPUT_ROOT or ./{DEFAULT_OUTPUT_ROOT})")
    parser.add_argument("--svg", action="store_true", default=None, help="Export SVG overlays")
    parser.add_argument("--log-file", help="Also log to this file")
    parser.add_argument("--log-level", help="Logging level name")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="soswall", description="SOS surface above a wall: sampling and analysis")
    commands = parser.add_subparsers(dest="command", required=True)

    sample = commands.add_parser("sample", help="Sample one (L, seed) cell and report on it")
    _add_sim_flags(sample)
    _add_analysis_flags(sample)
    sample.add_argument("--samples", type=int)
    sample.add_argument("--thinning", type=int)
    sample.add_argument("--no-fields", dest="write_fields", action="store_false", default=None)

    analyze = commands.add_parser("analyze", help="Report on fields stored by an earlier run")
    _add_analysis_flags(analyze)
    analyze.add_argument("--input", help="Cell directory holding a manifest and fields")

    wulff = commands.add_parser("wulff", help="Build Wulff bodies and predicted limit curves")
    _add_analysis_flags(wulff)
    wulff.add_argument("--beta", type=float, help="Inverse temperature (numeric-sos tension, alpha_c)")
    wulff.add_argument("--alpha-star", dest="alpha_star", type=float)

    sweep = commands.add_parser("sweep", help="Run cells over several L and seeds, then fit the exponent")
    _add_sim_flags(sweep)
    _add_analysis_flags(sweep)
    sweep.add_argument("--side-lengths", dest="side_lengths", type=int, nargs="+")
    sweep.add_argument("--alpha-target", dest="alpha_target", type=float)
    sweep.add_argument("--levels", type=int, nargs="+")
    sweep.add_argument("--seeds", type=int, nargs="+")
    sweep.add_argument("--samples", type=int)
    sweep.add_argument("--thinning", type=int)
    sweep.add_argument("--parallel", action="store_true", default=None)
    sweep.add_argument("--no-fields", dest="write_fields", action="store_false", default=None)

    oracle = commands.add_parser("oracle", help="Exact distribution of a tiny box, optionally against the sampler")
    _add_sim_flags(oracle)
    oracle.add_argument("--samples", type=int, help="Sampled configurations to compare (0 for exact only)")
    oracle.add_argument("--thinning", type=int)

    for sub in (sample, analyze, wulff, sweep, oracle):
        _add_common_flags(sub)
    return parser


_FLAGS = ("svg", "write_fields", "parallel")
_IGNORED = ("command", "config", "out", "log_file", "log_level")


def build_spec(args: argparse.Namespace, storage: Optional[Storage] = None) -> ExperimentSpec:
    """Merge the config file (if any) with the parsed flags into an ExperimentSpec."""
    values: dict[str, Any] = {}
    if args.config:
        stored = (storage or Storage()).read_json(os.path.abspath(args.config), schema=CONFIG_SCHEMA)
        # Keys the file leaves out come back as null columns
        values.update((k, v) for k, v in stored.items() if v is not None)
    values.update({k: v for k, v in vars(args).items() if v is not None and k not in _IGNORED})
    out_dir = args.out or os.environ.get("SOSWALL_OUTPUT_ROOT") or DEFAULT_OUTPUT_ROOT
    flags = {k: bool(values.pop(k)) for k in _FLAGS if k in values}
    sim = {k: values.pop(k) for k in _SIM_FIELDS if k in values}
    analysis = {k: values.pop(k) for k in _ANALYSIS_FIELDS if k in values}
    return ExperimentSpec(command=args.command, out_dir=out_dir, sim=sim, analysis=analysis, params=values, **flags)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.log_file or args.log_level:
        level = logging.getLevelName(args.log_level.upper()) if args.log_level else None
        _logger_setup(log_level=level if isinstance(level, int) else None, log_file=args.log_file)
    try:
        spec = build_spec(args)
    except (OSError, ValueError) as e:
        log.error(f"Cannot read config {args.config}: {e}")
        return EXIT_VALIDATION
    return run(spec)


if __name__ == "__main__":
    sys.exit(main())
