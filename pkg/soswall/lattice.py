"""Height fields of the SOS surface above a wall and their elementary arithmetic.

Sites are addressed as (x, y) with 1 <= x, y <= L; the array stores them with axis 0 = x.
Every site outside the box has height 0, so boundary bonds are always evaluated against
an external zero layer.
"""

import dataclasses
import math
from typing import Any, Mapping, Optional, Tuple

import numpy as np

from soswall.errors import ConfigError
from soswall.logging import logger as log

HEIGHT_DTYPE = np.int32
DEFAULT_E_H_THRESHOLD = 0.9
CAP_MARGIN = 5


def H_of_L(L: int, beta: float) -> float:
    """Typical surface height ln(L) / (4 beta)."""
    if L < 1 or beta <= 0:
        raise ConfigError(f"H_of_L needs L >= 1 and beta > 0, got L={L}, beta={beta}")
    return math.log(L) / (4.0 * beta)


def alpha_of_L(L: int, beta: float) -> float:
    """Fractional part of H(L)."""
    H = H_of_L(L, beta)
    return H - math.floor(H)


def alpha_c_approx(beta: float) -> float:
    """Leading-order critical fractional value ln(4 beta) / (4 beta)."""
    if beta <= 0:
        raise ConfigError(f"beta must be positive, got {beta}")
    return math.log(4.0 * beta) / (4.0 * beta)


def default_height_cap(L: int, beta: float) -> int:
    return math.ceil(H_of_L(L, beta)) + CAP_MARGIN


def matched_side_lengths(beta: float, alpha_target: float, levels) -> list[int]:
    """Side lengths L_k = round(exp(4 beta (m_k + alpha_target))) holding alpha near a target.

    Args:
        beta: Inverse temperature.
        alpha_target: Target fractional part in [0, 1).
        levels: Integer plateau levels m_k.

    Returns:
        list[int]: One side length per level, in the order given.
    """
    if not 0.0 <= alpha_target < 1.0:
        raise ConfigError(f"alpha_target must lie in [0, 1), got {alpha_target}")
    sides = []
    for m in levels:
        side = int(round(math.exp(4.0 * beta * (int(m) + alpha_target))))
        if side < 1:
            raise ConfigError(f"level {m} gives an empty box at beta={beta}")
        sides.append(side)
    return sides


_INTEGER_FIELDS = ("side_length", "height_cap", "sweeps", "burn_in", "seed", "initial_level")


@dataclasses.dataclass(frozen=True)
class SimConfig:
    side_length: int
    beta: float
    height_cap: Optional[int] = None
    sweeps: int = 0
    burn_in: int = 0
    seed: int = 0
    e_h_threshold: float = DEFAULT_E_H_THRESHOLD
    initial_level: Optional[int] = None
    checkerboard: bool = False

    def __post_init__(self) -> None:
        for message in self.violations():
            raise ConfigError(f"SimConfig: {message}")
        if self.height_cap is None:
            object.__setattr__(self, "height_cap", default_height_cap(self.side_length, self.beta))
        if self.initial_level is None:
            level = max(math.floor(H_of_L(self.side_length, self.beta)), 0)
            object.__setattr__(self, "initial_level", min(level, self.height_cap))
        if self.initial_level > self.height_cap:
            raise ConfigError(
                f"SimConfig: initial_level {self.initial_level} exceeds height_cap {self.height_cap}"
            )

    def violations(self) -> list[str]:
        """Return every SimConfig precondition the current values break."""
        problems = [
            f"{name} must be an integer, got {getattr(self, name)!r}"
            for name in _INTEGER_FIELDS
            if getattr(self, name) is not None and not isinstance(getattr(self, name), (int, np.integer))
        ]
        if problems:
            return problems
        if self.side_length < 1:
            problems.append(f"side_length must be a positive integer, got {self.side_length}")
        if not self.beta > 0:
            problems.append(f"beta must be positive, got {self.beta}")
        if self.height_cap is not None and self.height_cap < 1:
            problems.append(f"height_cap must be >= 1, got {self.height_cap}")
        if self.sweeps < 0:
            problems.append(f"sweeps must be nonnegative, got {self.sweeps}")
        if self.burn_in < 0:
            problems.append(f"burn_in must be nonnegative, got {self.burn_in}")
        if not 0 <= self.seed < 2**64:
            problems.append(f"seed must fit in 64 unsigned bits, got {self.seed}")
        if not 0.0 < self.e_h_threshold <= 1.0:
            problems.append(f"e_h_threshold must lie in (0, 1], got {self.e_h_threshold}")
        if self.initial_level is not None and self.initial_level < 0:
            problems.append(f"initial_level must be nonnegative, got {self.initial_level}")
        return problems

    @property
    def H(self) -> float:
        return H_of_L(self.side_length, self.beta)

    @property
    def alpha(self) -> float:
        return alpha_of_L(self.side_length, self.beta)

    @property
    def floor_H(self) -> int:
        return math.floor(self.H)

    def replace(self, **changes: Any) -> "SimConfig":
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_mapping(cls, values: Mapping[str, Any], strict: bool = True) -> "SimConfig":
        """Build a config from flat key/value data such as a parsed config file.

        Raises:
            ConfigError: If strict and the mapping holds unknown keys, or on invalid values.
        """
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(values) - names)
        if unknown and strict:
            raise ConfigError(f"SimConfig: unknown keys {unknown}")
        return cls(**{k: v for k, v in values.items() if k in names and v is not None})

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


@dataclasses.dataclass
class HeightField:
    side_length: int
    height_cap: int
    heights: np.ndarray

    def __post_init__(self) -> None:
        self.heights = np.ascontiguousarray(self.heights, dtype=HEIGHT_DTYPE)
        if self.heights.shape != (self.side_length, self.side_length):
            raise ConfigError(
                f"heights must have shape {(self.side_length, self.side_length)}, got {self.heights.shape}"
            )
        if self.heights.size and (self.heights.min() < 0 or self.heights.max() > self.height_cap):
            raise ConfigError(f"heights must lie in [0, {self.height_cap}]")

    def padded(self) -> np.ndarray:
        """Heights with the external zero layer attached, shape (L + 2, L + 2)."""
        return np.pad(self.heights, 1, mode="constant", constant_values=0)

    def copy(self) -> "HeightField":
        return HeightField(self.side_length, self.height_cap, self.heights.copy())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, HeightField):
            return NotImplemented
        return (
            self.side_length == other.side_length
            and self.height_cap == other.height_cap
            and np.array_equal(self.heights, other.heights)
        )


def new_field(config: SimConfig, initial_level: int = 0) -> HeightField:
    """Constant field at initial_level on the config's box.

    Raises:
        ConfigError: If initial_level is negative or above the height cap.
    """
    if not 0 <= initial_level <= config.height_cap:
        raise ConfigError(f"initial_level {initial_level} outside [0, {config.height_cap}]")
    L = config.side_length
    return HeightField(L, config.height_cap, np.full((L, L), initial_level, dtype=HEIGHT_DTYPE))


def field_from_array(heights, height_cap: Optional[int] = None) -> HeightField:
    """Wrap an existing square array; the cap defaults to its maximum (at least 1)."""
    heights = np.asarray(heights, dtype=HEIGHT_DTYPE)
    if heights.ndim != 2 or heights.shape[0] != heights.shape[1]:
        raise ConfigError(f"heights must be a square 2D array, got shape {heights.shape}")
    cap = max(int(heights.max(initial=0)), 1) if height_cap is None else height_cap
    return HeightField(heights.shape[0], cap, heights)


def energy(field: HeightField) -> int:
    """Hamiltonian sum over nearest-neighbour bonds of |eta_x - eta_y|, boundary bonds included."""
    padded = field.padded().astype(np.int64)
    # Bonds between two outside sites are zero, so the full padded grid can be summed
    horizontal = np.abs(np.diff(padded, axis=0)).sum()
    vertical = np.abs(np.diff(padded, axis=1)).sum()
    return int(horizontal + vertical)


def _check_site(field: HeightField, site: Tuple[int, int]) -> Tuple[int, int]:
    x, y = site
    if not (1 <= x <= field.side_length and 1 <= y <= field.side_length):
        raise ConfigError(f"site {site} outside the box 1..{field.side_length}")
    return x, y


def neighbor_heights(field: HeightField, site: Tuple[int, int]) -> np.ndarray:
    """Heights of the four neighbours of a site (outside the box reads 0)."""
    x, y = _check_site(field, site)
    padded = field.padded()
    return np.array(
        [padded[x + 1, y], padded[x - 1, y], padded[x, y + 1], padded[x, y - 1]], dtype=np.int64
    )


def local_energy_delta(field: HeightField, site: Tuple[int, int], new_height: int) -> int:
    """Energy change from setting one site to new_height, from its four neighbours only.

    Raises:
        ConfigError: If new_height is outside [0, M] or the site is outside the box.
    """
    if not 0 <= new_height <= field.height_cap:
        raise ConfigError(f"new_height {new_height} outside [0, {field.height_cap}]")
    x, y = _check_site(field, site)
    neighbors = neighbor_heights(field, site)
    old_height = int(field.heights[x - 1, y - 1])
    return int(np.abs(new_height - neighbors).sum() - np.abs(old_height - neighbors).sum())


def set_height(field: HeightField, site: Tuple[int, int], new_height: int) -> None:
    if not 0 <= new_height <= field.height_cap:
        raise ConfigError(f"new_height {new_height} outside [0, {field.height_cap}]")
    x, y = _check_site(field, site)
    field.heights[x - 1, y - 1] = new_height


def level_counts(field: HeightField) -> np.ndarray:
    """Number of sites at each height 0..M."""
    return np.bincount(field.heights.ravel(), minlength=field.height_cap + 1)


def height_fraction(field: HeightField, h: int) -> float:
    """Fraction of sites at height exactly h."""
    L = field.side_length
    return float(np.count_nonzero(field.heights == h)) / float(L * L)


def in_event(field: HeightField, h: int, threshold: float = DEFAULT_E_H_THRESHOLD) -> bool:
    """Indicator of E_h: at least a threshold fraction of the sites sit at height h."""
    return height_fraction(field, h) >= threshold


def rotate(field: HeightField, quarter_turns: int = 1) -> HeightField:
    return HeightField(field.side_length, field.height_cap, np.rot90(field.heights, quarter_turns).copy())


def reflect(field: HeightField) -> HeightField:
    """Mirror across the x = y diagonal."""
    return HeightField(field.side_length, field.height_cap, field.heights.T.copy())


def describe(config: SimConfig) -> dict[str, float]:
    """H, alpha and the leading-order alpha_c for a config, for logs and report headers."""
    summary = {
        "H": config.H,
        "alpha": config.alpha,
        "alpha_c_approx": alpha_c_approx(config.beta),
        "floor_H": config.floor_H,
    }
    log.debug(f"L={config.side_length} beta={config.beta}: {summary}")
    return summary
