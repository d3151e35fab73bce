import os
from datetime import datetime
from typing import Optional, Sequence

from soswall.analysis import (
    AnalysisConfig,
    cascade_stats,
    concentration_report,
    fluctuation_stats,
    loop_census,
    radius_fits,
    shape_convergence,
    subbox_domination,
)
from soswall.errors import ConfigError, CriticalPointError, InvariantError, SOSError
from soswall.lattice import HeightField, SimConfig, describe
from soswall.levellines import extract_ensemble, rescale
from soswall.logging import cell_logger
from soswall.manifest import Manifest
from soswall.plotting import export_svg
from soswall.results import CellResult
from soswall.sampler import cap_audit, sample_chain
from soswall.storage import Storage
from soswall.wulff import predicted_ensemble, tension_by_name


def cell_directory(out_dir: str, config: SimConfig) -> str:
    return os.path.join(out_dir, f"L{config.side_length}_b{config.beta:g}_s{config.seed}")


class Cell:
    def __init__(
        self,
        config: SimConfig,
        analysis: AnalysisConfig,
        storage: Storage,
        out_dir: str,
        n_samples: int,
        thinning: Optional[int] = None,
        write_fields: bool = True,
        svg: bool = False,
    ):
        """Initialize one (L, seed) cell of a run.

        Args:
            config: Chain configuration of the cell
            analysis: Analysis parameters
            storage: Storage the cell writes through
            out_dir: Run directory; the cell writes below its own subdirectory
            n_samples: Number of thinned samples to collect
            thinning: Sweeps between samples (defaults to config.sweeps)
            write_fields: Whether to persist every sampled field
            svg: Whether to export an overlay of the last sample's loops
        Raises:
            ValueError: If required parameters are invalid
        """
        if n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if not out_dir or not isinstance(out_dir, str):
            raise ValueError("out_dir must be a non-empty string")

        self.config = config
        self.analysis = analysis
        self.storage = storage
        self.directory = cell_directory(out_dir, config)
        self.n_samples = n_samples
        self.thinning = thinning
        self.write_fields = write_fields
        self.svg = svg
        self.manifest = Manifest(storage, self.directory, command="cell")
        self.error: Optional[BaseException] = None
        self.result = CellResult(
            side_length=config.side_length,
            beta=config.beta,
            seed=config.seed,
            process_start_time=datetime.now(),
            process_finish_time=None,
            n_samples=n_samples,
            artifacts=[],
            sup_rho=[],
            cap_hit_rate=None,
            errors=[],
            warnings=[],
        )
        if os.environ.get("SHOW_CELL_PROGRESS") == "0":
            self.show_progress = False
            self._progress_bar = None
        else:
            self.show_progress = True
            self._progress_bar = self._get_progress_bar_class()

    @property
    def log(self):
        return cell_logger(self.config.side_length, self.config.beta, self.config.seed)

    def _log_error(self, error_message: str) -> None:
        """Log an error message and add it to the result's errors list."""
        self.log.error(error_message)
        self.result.add_error(error_message)

    def _log_warning(self, warning_message: str) -> None:
        """Log a warning message and add it to the result's warnings list."""
        self.log.warning(warning_message)
        self.result.add_warning(warning_message)

    def _get_progress_bar_class(self):
        """Determine which tqdm class to use based on Ray availability and initialization."""
        try:
            import ray
            if ray.is_initialized():
                from ray.experimental.tqdm_ray import tqdm
                return tqdm
            else:
                from tqdm import tqdm
                return tqdm
        except (ImportError, AttributeError):
            from tqdm import tqdm
            return tqdm

    def _write(self, name: str, kind: str, writer, *args) -> str:
        path = os.path.join(self.directory, name)
        writer(path, *args)
        self.manifest.add_artifact(path, kind)
        self.result.add_artifact(path)
        return path

    def _sample(self):
        pbar = None
        if self.show_progress and self._progress_bar:
            pbar = self._progress_bar(
                total=self.n_samples, desc=f"L={self.config.side_length} seed={self.config.seed}", unit="sample"
            )
        try:
            return sample_chain(self.config, self.n_samples, self.thinning, progress=pbar.update if pbar else None)
        finally:
            if pbar:
                pbar.close()

    def _radius_report(self, ensembles) -> dict:
        tension = tension_by_name(self.analysis.tension, self.config.beta)
        k = len(ensembles) - 1
        report = radius_fits(ensembles[k], tension, self.analysis.K, self.analysis.hausdorff_resolution, sample_index=k)
        return report.to_record()

    def _cascade_report(self, ensembles) -> list[dict]:
        records = []
        for xi in self.analysis.xi:
            report = cascade_stats(ensembles, xi, self.config.side_length, self.analysis, H=self.config.H)
            record = report.to_record()
            if self.analysis.subbox_sweeps and report.level_index >= 1:
                record["domination"] = self._domination(report.level_index)
            records.append(record)
        summary = [
            {"xi": r["xi"], "level_index": r["level_index"], "n": len(r["sup_rho"]), "n_exceeding": r["n_exceeding"]}
            for r in records
        ]
        self.result.update(cascade=summary)
        return records

    def _domination(self, i: int) -> Optional[dict]:
        try:
            report = subbox_domination(self.config, i, self.analysis.subbox_sweeps, self.analysis)
        except ConfigError as e:
            self._log_warning(f"No sub-box comparison for level index {i}: {e}")
            return None
        if report.ordering_violations:
            raise InvariantError(f"sub-box chain rose above the full chain at {report.ordering_violations} sites")
        return report.to_record()

    def _limit_report(self, ensembles) -> Optional[dict]:
        radii = self.analysis.radii
        if not radii:
            return None
        alpha_c = self.analysis.critical_value(self.config.beta)
        try:
            tension = tension_by_name(self.analysis.tension, self.config.beta)
            limit = predicted_ensemble(self.config.alpha, alpha_c, radii, tension, self.analysis.K)
        except CriticalPointError as e:
            self._log_warning(f"No limit shape for L={self.config.side_length}: {e}")
            return None
        report = shape_convergence(ensembles, limit, self.config.side_length, self.analysis.hausdorff_resolution)
        self._write("shape.csv", "table", self.storage.write_csv, report.rows(self.config))
        if self.svg:
            top = ensembles[-1].floor_H
            observed = {i: rescale(loops, self.config.side_length) for i, loops in ensembles[-1].collections(top).items()}
            predicted = {i: limit.curve(i) for i in limit.indices}
            self._write("overlay.svg", "svg", lambda p: export_svg(self.storage, p, observed, predicted, f"L={self.config.side_length}"))
        return report.to_record()

    def _analyze(self, samples, cap_hit_rate: Optional[float]) -> None:
        L = self.config.side_length
        ensembles = []
        for k, field in enumerate(samples):
            if self.write_fields:
                self._write(
                    f"fields/sample_{k:05d}.sosf", "field", self.storage.write_field, field, self.config.beta, self.config.seed, k
                )
            ensemble = extract_ensemble(field, self.config.beta)
            records = [loop.to_record() for loop in ensemble.loops]
            self._write(f"loops/sample_{k:05d}.jsonl", "loops", self.storage.write_jsonl, records)
            ensembles.append(ensemble)

        concentration = concentration_report(samples, self.config, self.analysis)
        census = loop_census(ensembles)
        fluctuations = fluctuation_stats(ensembles, L, self.analysis)
        if fluctuations.excluded:
            self._log_warning(f"{fluctuations.excluded} samples at L={L} have no top loop")
        self.result.update(sup_rho=list(fluctuations.sup_rho))
        self._write("concentration.csv", "table", self.storage.write_csv, concentration.rows(self.config))
        self._write("census.csv", "table", self.storage.write_csv, census.rows(self.config))
        report = {
            "config": self.config.to_dict(),
            "analysis": self.analysis.to_dict(),
            "summary": describe(self.config),
            "cap_hit_rate": cap_hit_rate,
            "concentration": concentration.to_record(),
            "census": census.to_record(),
            "fluctuations": fluctuations.to_record(),
            "cascade": self._cascade_report(ensembles),
            "shape": self._limit_report(ensembles),
            "radius_fit": None if self.analysis.radii else self._radius_report(ensembles),
        }
        self._write("report.json", "report", self.storage.write_json, report)

    def _guarded(self, work) -> CellResult:
        L = self.config.side_length
        try:
            work()
            self.manifest.complete()
        except SOSError as e:
            self.error = e
            self._log_error(f"Cell L={L} seed={self.config.seed} failed: {type(e).__name__}: {e}")
            self.manifest.fail({"type": type(e).__name__, "message": str(e)})
        except Exception as e:
            self.error = e
            self._log_error(f"Error processing cell L={L} seed={self.config.seed}: {e} processing abandoned")
            self.manifest.fail({"type": type(e).__name__, "message": str(e)})
        self.result.update(process_finish_time=datetime.now())
        return self.result

    def process_cell(self) -> CellResult:
        """Sample, extract level lines, persist everything and build the cell's reports."""
        self.log.info("Processing cell")

        def work() -> None:
            samples, state = self._sample()
            self.result.update(cap_hit_rate=state.cap_hit_rate)
            if not cap_audit(state):
                self._log_warning(f"Height cap {self.config.height_cap} was hit at rate {state.cap_hit_rate:.3g}")
            self._analyze(samples, state.cap_hit_rate)

        return self._guarded(work)

    def analyze_samples(self, samples: Sequence[HeightField]) -> CellResult:
        """Build the reports for fields that were sampled earlier."""
        self.log.info(f"Analyzing {len(samples)} stored samples")
        return self._guarded(lambda: self._analyze(list(samples), None))
