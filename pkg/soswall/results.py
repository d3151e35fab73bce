from datetime import datetime
from typing import Any, Optional
import dataclasses


@dataclasses.dataclass
class CellResult:
    """What one (L, beta, seed) cell hands back to the processor."""

    side_length: int
    beta: float
    seed: int
    process_start_time: datetime
    process_finish_time: Optional[datetime] = None
    n_samples: int = 0
    artifacts: list[str] = dataclasses.field(default_factory=list)
    sup_rho: list[float] = dataclasses.field(default_factory=list)
    cap_hit_rate: Optional[float] = None
    cascade: list[dict[str, Any]] = dataclasses.field(default_factory=list)
    errors: list[str] = dataclasses.field(default_factory=list)
    warnings: list[str] = dataclasses.field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    @property
    def duration(self) -> Optional[float]:
        """Wall-clock seconds, once the cell has finished."""
        if self.process_finish_time is None:
            return None
        return (self.process_finish_time - self.process_start_time).total_seconds()

    def update(self, **kwargs: Any) -> None:
        """Set known fields; unknown keys are ignored."""
        names = {f.name for f in dataclasses.fields(self)}
        for key, value in kwargs.items():
            if key in names:
                setattr(self, key, value)

    def add_error(self, error_message: str) -> None:
        self.errors.append(error_message)

    def add_warning(self, warning_message: str) -> None:
        self.warnings.append(warning_message)

    def add_artifact(self, path: str) -> None:
        self.artifacts.append(path)

    def to_record(self) -> dict[str, Any]:
        """Summary without timestamps, for deterministic reports."""
        return {
            "L": self.side_length,
            "beta": self.beta,
            "seed": self.seed,
            "n_samples": self.n_samples,
            "sup_rho": list(self.sup_rho),
            "cap_hit_rate": self.cap_hit_rate,
            "cascade": [dict(record) for record in self.cascade],
            "errors": list(self.errors),
            "warnings": list(self.warnings),
        }
