"""Heat-bath Markov chain Monte Carlo for the SOS measure above a wall.

Every site update consumes exactly one uniform variate and draws the new height by
inverse CDF from the exact single-site conditional law. Two chains fed the same variates
in the same scan order therefore stay pointwise ordered (the SOS heat bath is attractive),
which is what monotone_coupled_sweep and subbox_coupled_sweep rely on.
"""

import dataclasses
from typing import Any, Callable, Optional, Sequence, Tuple

import numpy as np
from numba import njit, prange
from scipy.special import softmax

from soswall.errors import ConfigError, InvariantError, StateSpaceTooLarge
from soswall.lattice import HeightField, SimConfig, new_field
from soswall.logging import logger as log

CAP_AUDIT_THRESHOLD = 1e-6
ENUMERATION_GUARD = 2**24
ORACLE_GUARD = 4096
# Upper bound on uniforms generated per block when running many sweeps at once
VARIATE_BLOCK = 4_000_000


@njit
def _draw_height(n0, n1, n2, n3, beta, M, u, cum):
    # Costs are shifted by their minimum so the largest weight is exactly 1
    cmin = 1 << 30
    for h in range(M + 1):
        c = abs(h - n0) + abs(h - n1) + abs(h - n2) + abs(h - n3)
        if c < cmin:
            cmin = c
    total = 0.0
    for h in range(M + 1):
        c = abs(h - n0) + abs(h - n1) + abs(h - n2) + abs(h - n3)
        total += np.exp(-beta * (c - cmin))
        cum[h] = total
    target = u * total
    for h in range(M + 1):
        if target < cum[h]:
            return h
    return M


@njit
def _neighbors(heights, x, y, L):
    n0 = heights[x + 1, y] if x + 1 < L else 0
    n1 = heights[x - 1, y] if x > 0 else 0
    n2 = heights[x, y + 1] if y + 1 < L else 0
    n3 = heights[x, y - 1] if y > 0 else 0
    return n0, n1, n2, n3


@njit
def _sweep_kernel(heights, u, beta, M):
    L = heights.shape[0]
    cum = np.empty(M + 1)
    hits = 0
    k = 0
    for x in range(L):
        for y in range(L):
            n0, n1, n2, n3 = _neighbors(heights, x, y, L)
            h = _draw_height(n0, n1, n2, n3, beta, M, u[k], cum)
            heights[x, y] = h
            if h == M:
                hits += 1
            k += 1
    return hits


@njit(parallel=True)
def _checkerboard_kernel(heights, u, beta, M):
    L = heights.shape[0]
    hits = 0
    for color in range(2):
        for x in prange(L):
            cum = np.empty(M + 1)
            row_hits = 0
            for y in range((x + color) % 2, L, 2):
                n0, n1, n2, n3 = _neighbors(heights, x, y, L)
                h = _draw_height(n0, n1, n2, n3, beta, M, u[x * L + y], cum)
                heights[x, y] = h
                if h == M:
                    row_hits += 1
            hits += row_hits
    return hits


@njit
def _coupled_kernel(low, high, mask, u, beta, M):
    L = low.shape[0]
    cum = np.empty(M + 1)
    k = 0
    for x in range(L):
        for y in range(L):
            n0, n1, n2, n3 = _neighbors(high, x, y, L)
            high[x, y] = _draw_height(n0, n1, n2, n3, beta, M, u[k], cum)
            if mask[x, y]:
                n0, n1, n2, n3 = _neighbors(low, x, y, L)
                low[x, y] = _draw_height(n0, n1, n2, n3, beta, M, u[k], cum)
            else:
                low[x, y] = 0
            k += 1


@njit
def _histogram_kernel(heights, u, beta, M, thinning, powers, counts):
    L = heights.shape[0]
    cum = np.empty(M + 1)
    n_sweeps = u.shape[0]
    for s in range(n_sweeps):
        k = 0
        for x in range(L):
            for y in range(L):
                n0, n1, n2, n3 = _neighbors(heights, x, y, L)
                heights[x, y] = _draw_height(n0, n1, n2, n3, beta, M, u[s, k], cum)
                k += 1
        if (s + 1) % thinning == 0:
            index = 0
            k = 0
            for x in range(L):
                for y in range(L):
                    index += heights[x, y] * powers[k]
                    k += 1
            counts[index] += 1


def heat_bath_weights(neighbor_heights: Sequence[int], beta: float, M: int) -> np.ndarray:
    """Single-site conditional law p(h) proportional to exp(-beta * sum_y |h - eta_y|), h = 0..M.

    Args:
        neighbor_heights: The four neighbour heights (0 for neighbours outside the box).
        beta: Inverse temperature.
        M: Height cap.

    Returns:
        np.ndarray: Normalized probability vector of length M + 1.
    """
    neighbors = np.asarray(neighbor_heights, dtype=np.int64)
    if neighbors.shape != (4,):
        raise ConfigError(f"expected 4 neighbour heights, got {neighbors.shape}")
    if neighbors.min() < 0 or neighbors.max() > M:
        raise ConfigError(f"neighbour heights must lie in [0, {M}], got {neighbors.tolist()}")
    levels = np.arange(M + 1)
    costs = np.abs(levels[:, None] - neighbors[None, :]).sum(axis=1)
    return softmax(-beta * costs)


@dataclasses.dataclass
class ChainState:
    field: HeightField
    beta: float
    rng: np.random.Generator
    sweep_count: int = 0
    cap_hits: int = 0
    checkerboard: bool = False

    @classmethod
    def from_config(cls, config: SimConfig, initial_level: Optional[int] = None) -> "ChainState":
        level = config.initial_level if initial_level is None else initial_level
        return cls(
            field=new_field(config, level),
            beta=config.beta,
            rng=np.random.default_rng(config.seed),
            checkerboard=config.checkerboard,
        )

    @property
    def rng_state(self) -> dict[str, Any]:
        return self.rng.bit_generator.state

    @property
    def updates(self) -> int:
        return self.sweep_count * self.field.side_length ** 2

    @property
    def cap_hit_rate(self) -> float:
        return self.cap_hits / self.updates if self.updates else 0.0

    def copy(self) -> "ChainState":
        rng = np.random.default_rng()
        rng.bit_generator.state = self.rng.bit_generator.state
        return dataclasses.replace(self, field=self.field.copy(), rng=rng)


def _site_count(state: ChainState) -> int:
    return state.field.side_length ** 2


def _apply_sweep(state: ChainState, u: np.ndarray) -> None:
    kernel = _checkerboard_kernel if state.checkerboard else _sweep_kernel
    state.cap_hits += int(kernel(state.field.heights, u, state.beta, state.field.height_cap))
    state.sweep_count += 1


def sweep(state: ChainState) -> ChainState:
    """Resample every site once (row-major scan, or two sublattice passes in checkerboard mode)."""
    u = state.rng.random(_site_count(state))
    _apply_sweep(state, u)
    return state


def run_sweeps(state: ChainState, n_sweeps: int) -> ChainState:
    """Run n_sweeps sweeps, drawing variates in blocks; equivalent to repeated sweep calls."""
    if n_sweeps < 0:
        raise ConfigError(f"n_sweeps must be nonnegative, got {n_sweeps}")
    sites = _site_count(state)
    block = max(1, VARIATE_BLOCK // sites)
    done = 0
    while done < n_sweeps:
        count = min(block, n_sweeps - done)
        variates = state.rng.random((count, sites))
        for u in variates:
            _apply_sweep(state, u)
        done += count
    return state


def cap_audit(state: ChainState, threshold: float = CAP_AUDIT_THRESHOLD) -> bool:
    """Log a warning and return False when the chain hit the height cap too often."""
    rate = state.cap_hit_rate
    if rate > threshold:
        log.warning(
            f"Cap audit: {state.cap_hits} cap hits over {state.updates} updates "
            f"(rate {rate:.3g} > {threshold:g}) at M={state.field.height_cap}; raise height_cap"
        )
        return False
    log.debug(f"Cap audit passed: rate {rate:.3g} at M={state.field.height_cap}")
    return True


def sample_chain(
    config: SimConfig,
    n_samples: int,
    thinning: Optional[int] = None,
    progress: Optional[Callable[[int], None]] = None,
) -> Tuple[list[HeightField], ChainState]:
    """Burn in from the warm start, then collect n_samples fields spaced by thinning sweeps.

    progress, when given, is called with 1 after every collected sample.

    Returns:
        Tuple[list[HeightField], ChainState]: The samples and the final chain state.
    """
    if n_samples < 1:
        raise ConfigError(f"n_samples must be >= 1, got {n_samples}")
    thinning = thinning if thinning is not None else max(config.sweeps, 1)
    if thinning < 1:
        raise ConfigError(f"thinning must be >= 1, got {thinning}")
    state = ChainState.from_config(config)
    log.debug(
        f"Sampling L={config.side_length} beta={config.beta} M={config.height_cap} "
        f"from level {config.initial_level}: burn_in={config.burn_in} thinning={thinning}"
    )
    run_sweeps(state, config.burn_in)
    samples = []
    for _ in range(n_samples):
        run_sweeps(state, thinning)
        samples.append(state.field.copy())
        if progress is not None:
            progress(1)
    cap_audit(state)
    return samples, state


def sample(config: SimConfig, n_samples: int, thinning: Optional[int] = None) -> list[HeightField]:
    """Thinned samples of the chain after burn-in; see sample_chain."""
    samples, _ = sample_chain(config, n_samples, thinning)
    return samples


def _state_space_size(L: int, M: int) -> int:
    return (M + 1) ** (L * L)


def _index_powers(L: int, M: int) -> np.ndarray:
    return (M + 1) ** np.arange(L * L, dtype=np.int64)


def config_index(field: HeightField, M: Optional[int] = None) -> int:
    """Base-(M + 1) index of a configuration, row-major site order, least significant first."""
    M = field.height_cap if M is None else M
    digits = field.heights.ravel().astype(np.int64)
    return int(digits @ _index_powers(field.side_length, M))


def configuration_from_index(index: int, L: int, M: int) -> HeightField:
    digits = (index // _index_powers(L, M)) % (M + 1)
    return HeightField(L, M, digits.reshape(L, L))


@dataclasses.dataclass
class ExactDistribution:
    side_length: int
    height_cap: int
    beta: float
    partition_function: float
    probabilities: np.ndarray
    energies: np.ndarray
    marginals: np.ndarray

    def probability(self, field: HeightField) -> float:
        return float(self.probabilities[config_index(field, self.height_cap)])

    def marginal(self, site: Tuple[int, int]) -> np.ndarray:
        """Exact law of the height at site (x, y), 1-indexed."""
        x, y = site
        return self.marginals[x - 1, y - 1]

    def total_variation(self, counts: np.ndarray) -> float:
        """Total-variation distance between empirical counts over indices and the exact law."""
        counts = np.asarray(counts, dtype=np.float64)
        if counts.shape != self.probabilities.shape:
            raise ConfigError(f"counts shape {counts.shape} != {self.probabilities.shape}")
        empirical = counts / counts.sum()
        return 0.5 * float(np.abs(empirical - self.probabilities).sum())

    def energy_orbits(self) -> dict[int, float]:
        """Total probability of each energy level."""
        orbits: dict[int, float] = {}
        for e in np.unique(self.energies):
            orbits[int(e)] = float(self.probabilities[self.energies == e].sum())
        return orbits


def _check_guard(L: int, M: int, guard: int) -> None:
    if L < 1 or M < 1:
        raise ConfigError(f"enumeration needs L >= 1 and M >= 1, got L={L}, M={M}")
    size = _state_space_size(L, M)
    if size > guard:
        raise StateSpaceTooLarge(f"(M+1)^(L^2) = {size} exceeds the guard {guard} (L={L}, M={M})")


def enumerate_exact(L: int, M: int, beta: float, chunk: int = 1 << 16) -> ExactDistribution:
    """Brute-force the truncated SOS measure over all (M + 1)^(L^2) configurations.

    Raises:
        StateSpaceTooLarge: If the state space exceeds 2^24 configurations.
    """
    _check_guard(L, M, ENUMERATION_GUARD)
    if beta <= 0:
        raise ConfigError(f"beta must be positive, got {beta}")
    size = _state_space_size(L, M)
    powers = _index_powers(L, M)
    energies = np.empty(size, dtype=np.int64)
    for start in range(0, size, chunk):
        stop = min(start + chunk, size)
        index = np.arange(start, stop, dtype=np.int64)
        digits = (index[:, None] // powers[None, :]) % (M + 1)
        grids = np.pad(digits.reshape(-1, L, L), ((0, 0), (1, 1), (1, 1)))
        energies[start:stop] = (
            np.abs(np.diff(grids, axis=1)).sum(axis=(1, 2)) + np.abs(np.diff(grids, axis=2)).sum(axis=(1, 2))
        )
    weights = np.exp(-beta * energies.astype(np.float64))
    Z = float(weights.sum())
    probabilities = weights / Z
    marginals = np.zeros((L, L, M + 1))
    for k in range(L * L):
        digit = (np.arange(size, dtype=np.int64) // powers[k]) % (M + 1)
        marginals.flat[k * (M + 1):(k + 1) * (M + 1)] = np.bincount(digit, weights=probabilities, minlength=M + 1)
    log.debug(f"Enumerated {size} configurations for L={L} M={M} beta={beta}: Z={Z:.12g}")
    return ExactDistribution(L, M, beta, Z, probabilities, energies, marginals)


def empirical_distribution(
    config: SimConfig, n_samples: int, thinning: int = 5, initial_level: Optional[int] = None
) -> np.ndarray:
    """Counts of sampled configurations by config_index, for comparison with enumerate_exact.

    Raises:
        StateSpaceTooLarge: If the box exceeds the 4096-configuration oracle guard.
    """
    L, M = config.side_length, config.height_cap
    _check_guard(L, M, ORACLE_GUARD)
    if n_samples < 1 or thinning < 1:
        raise ConfigError(f"n_samples and thinning must be >= 1, got {n_samples}, {thinning}")
    state = ChainState.from_config(config, initial_level)
    run_sweeps(state, config.burn_in)
    counts = np.zeros(_state_space_size(L, M), dtype=np.int64)
    powers = _index_powers(L, M)
    sites = L * L
    per_block = max(1, VARIATE_BLOCK // (sites * thinning))
    remaining = n_samples
    while remaining > 0:
        block = min(per_block, remaining)
        u = state.rng.random((block * thinning, sites))
        _histogram_kernel(state.field.heights, u, state.beta, M, thinning, powers, counts)
        state.sweep_count += block * thinning
        remaining -= block
    return counts


def _check_ordered(low: ChainState, high: ChainState) -> None:
    if low.field.side_length != high.field.side_length or low.field.height_cap != high.field.height_cap:
        raise ConfigError("coupled chains must share the box and the height cap")
    if low.beta != high.beta:
        raise ConfigError("coupled chains must share beta")
    if np.any(low.field.heights > high.field.heights):
        raise ConfigError("coupled sweep needs low <= high pointwise")


def _coupled_step(
    low: ChainState, high: ChainState, mask: np.ndarray, shared_randomness: Optional[np.ndarray]
) -> Tuple[ChainState, ChainState]:
    sites = _site_count(low)
    u = low.rng.random(sites) if shared_randomness is None else np.asarray(shared_randomness, dtype=np.float64)
    if u.shape != (sites,):
        raise ConfigError(f"shared randomness must hold {sites} variates, got {u.shape}")
    _coupled_kernel(low.field.heights, high.field.heights, mask, u, low.beta, low.field.height_cap)
    low.sweep_count += 1
    high.sweep_count += 1
    if np.any(low.field.heights > high.field.heights):
        raise InvariantError(f"monotone coupling broke pointwise order after sweep {low.sweep_count}")
    return low, high


def monotone_coupled_sweep(
    low: ChainState, high: ChainState, shared_randomness: Optional[np.ndarray] = None
) -> Tuple[ChainState, ChainState]:
    """Sweep two ordered chains with the same variates; low <= high is preserved.

    When shared_randomness is None the variates are drawn from low's generator.

    Raises:
        ConfigError: If low <= high does not hold before the sweep.
        InvariantError: If the ordering fails afterwards.
    """
    _check_ordered(low, high)
    mask = np.ones(low.field.heights.shape, dtype=np.bool_)
    return _coupled_step(low, high, mask, shared_randomness)


def box_mask(L: int, x_range: Tuple[int, int], y_range: Tuple[int, int]) -> np.ndarray:
    """Boolean mask of the sub-box [x0, x1] x [y0, y1] (1-indexed, inclusive), clipped to the box."""
    mask = np.zeros((L, L), dtype=np.bool_)
    x0, x1 = max(x_range[0], 1), min(x_range[1], L)
    y0, y1 = max(y_range[0], 1), min(y_range[1], L)
    if x0 > x1 or y0 > y1:
        raise ConfigError(f"sub-box {x_range} x {y_range} does not meet the {L}x{L} box")
    mask[x0 - 1:x1, y0 - 1:y1] = True
    return mask


def subbox_coupled_sweep(
    low: ChainState, high: ChainState, mask: np.ndarray, shared_randomness: Optional[np.ndarray] = None
) -> Tuple[ChainState, ChainState]:
    """Couple a chain with zero boundary conditions on a sub-box to the full-box chain.

    Sites outside mask are pinned to 0 in the low chain; inside it both chains use the
    same variates, so the restricted surface stays below the original one.
    """
    _check_ordered(low, high)
    mask = np.asarray(mask, dtype=np.bool_)
    if mask.shape != low.field.heights.shape:
        raise ConfigError(f"mask shape {mask.shape} != field shape {low.field.heights.shape}")
    if np.any(low.field.heights[~mask] != 0):
        raise ConfigError("low chain must be zero outside the sub-box")
    return _coupled_step(low, high, mask, shared_randomness)


def coupled_pair(config: SimConfig, low_level: int = 0, high_level: Optional[int] = None) -> Tuple[ChainState, ChainState]:
    """Two constant-start chains on one config (high defaults to the cap)."""
    high_level = config.height_cap if high_level is None else high_level
    low = ChainState.from_config(config, low_level)
    high = ChainState.from_config(config, high_level)
    return low, high

