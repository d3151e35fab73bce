from typing import Any, Optional, Sequence
import ray
from soswall.analysis import AnalysisConfig, ExponentFit, fit_exponent
from soswall.cell import Cell
from soswall.errors import ConfigError
from soswall.logging import logger as log
from soswall.results import CellResult


class Processor:
    """A class to run the cells of a sweep and reduce them into one aggregate report."""

    def __init__(self, cells: Sequence[Cell], parallel: bool = False, analysis: Optional[AnalysisConfig] = None) -> None:
        """
        Initialize the Processor with the cells of a run.
        if parallel is False, the cells will be processed sequentially.
        if parallel is True, the cells will be processed in parallel using Ray.

        Args:
            cells: Cells to process, each owning its chain and output directory
            parallel: Whether to process cells in parallel using Ray (default: False)
            analysis: Analysis parameters for the reducer (defaults to the first cell's)
        """
        if not cells:
            raise ValueError("At least one cell must be provided")
        self.cells = list(cells)
        self.parallel = parallel
        self.analysis = analysis or self.cells[0].analysis
        self.results: list[Optional[CellResult]] = []
        self.exponent_fit: Optional[ExponentFit] = None

    @staticmethod
    @ray.remote
    def process_cell_async(cell: Cell) -> Optional[CellResult]:
        """
        Process a single cell using Ray distributed computing.

        Args:
            cell: The cell to process
        """
        return Processor.process_cell(cell)

    @staticmethod
    def process_cell(cell: Cell) -> Optional[CellResult]:
        """
        Process a single cell sequentially (non-parallel).

        Args:
            cell: The cell to process
        """
        try:
            result = cell.process_cell()
            if result.ok:
                log.info(f"Successfully processed cell L={result.side_length} seed={result.seed} in {result.duration:.1f}s")
            return result
        except Exception as e:
            log.error(f"Error processing cell L={cell.config.side_length} seed={cell.config.seed}: {str(e)}")
            return cell.result

    def run(self) -> list[Optional[CellResult]]:
        """Execute every cell, then reduce."""
        try:
            if self.parallel:
                ray.init(ignore_reinit_error=True, log_to_driver=True)
                futures = [self.process_cell_async.remote(cell) for cell in self.cells]
                self.results = ray.get(futures)
                ray.shutdown()
            else:
                self.results = [self.process_cell(cell) for cell in self.cells]
        except Exception as e:
            log.error(f"Application error: {str(e)}")
            if hasattr(ray, "is_initialized") and ray.is_initialized():
                ray.shutdown()
            raise
        self.exponent_fit = self.reduce()
        return self.results

    def sweep_data(self) -> dict[int, list[float]]:
        """sup-rho samples pooled by side length over every successful cell."""
        data: dict[int, list[float]] = {}
        for result in self.results:
            if result is None or not result.ok:
                continue
            data.setdefault(result.side_length, []).extend(result.sup_rho)
        return {L: values for L, values in sorted(data.items()) if values}

    def reduce(self) -> Optional[ExponentFit]:
        """Fit the sup-rho exponent across side lengths once all cells are done."""
        data = self.sweep_data()
        try:
            return fit_exponent(data, self.analysis.n_bootstrap, self.analysis.ci, self.analysis.bootstrap_seed)
        except ConfigError as e:
            log.warning(f"No exponent fit: {e}")
            return None

    @property
    def failed(self) -> list[CellResult]:
        return [r for r in self.results if r is not None and not r.ok]

    def cascade_rates(self) -> list[dict[str, Any]]:
        """Exceedance of the cascade threshold pooled over the seeds of each (L, xi)."""
        pooled: dict[tuple[int, float], dict[str, Any]] = {}
        for result in self.results:
            if result is None or not result.ok:
                continue
            for record in result.cascade:
                key = (result.side_length, record["xi"])
                entry = pooled.setdefault(
                    key, {"L": key[0], "xi": key[1], "level_index": record["level_index"], "n": 0, "n_exceeding": 0}
                )
                entry["n"] += record["n"]
                entry["n_exceeding"] += record["n_exceeding"]
        rates = []
        for _, entry in sorted(pooled.items()):
            entry["exceedance_rate"] = entry["n_exceeding"] / entry["n"] if entry["n"] else None
            rates.append(entry)
        return rates

    def aggregate(self) -> dict[str, Any]:
        return {
            "cells": [r.to_record() for r in self.results if r is not None],
            "cascade": self.cascade_rates(),
            "exponent_fit": self.exponent_fit.to_record() if self.exponent_fit else None,
            "failed_cells": len(self.failed),
        }
