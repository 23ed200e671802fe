"""Monte Carlo checks of the first-passage machinery behind the duality identity.

For a subordinator Y the process X_t = t - Y_t has unit drift and only
downward jumps, so tau_y = inf{t : X_t >= y} is the first time its running
maximum M reaches y. Kendall's identity and the renewal density are checked
against paths of X; compound-Poisson paths are simulated exactly by their
jumps, everything else by exact increments on a uniform grid.
"""

import math
import os
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, TypeVar

import numpy as np
from loguru import logger
from pydantic import BaseModel, Field, model_validator
from scipy import integrate, optimize

from cbf_duality.cbf import Family, FamilyKind, cbf_derivative, cbf_eval
from cbf_duality.classical import ClassicalLaw, classical_cdf, sample_increments, stable_series_floor
from cbf_duality.config import config
from cbf_duality.errors import DegenerateCellError, DomainError, UnsupportedFamilyError
from cbf_duality.integrate import quad

MIN_KENDALL_PATHS = 10_000
MIN_CELL_HITS = 50
TAIL_PROBABILITY = 1e-3
# grid batches are capped at this many path nodes to bound memory
_MAX_BATCH_NODES = 4_000_000

T = TypeVar("T")


def make_generator(seed: int, stream: int) -> np.random.Generator:
    """Philox generator for stream `stream` of a run seeded with `seed`."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, stream])))


def _check_simulable(family: Family) -> None:
    if family.kind == FamilyKind.CUSTOM:
        raise UnsupportedFamilyError("custom families cannot be simulated")


def _grid(horizon: float, step: float) -> tuple[int, float]:
    """(number of steps, effective step) with the horizon on the grid."""
    n_steps = max(1, math.ceil(horizon / step - 1e-9))
    return n_steps, horizon / n_steps


# -- single paths -----------------------------------------------------------


@dataclass
class PathSample:
    """One path of Y up to horizon; jumps for compound families, grid increments otherwise."""

    horizon: float
    jump_times: np.ndarray = field(default_factory=lambda: np.empty(0))
    jump_sizes: np.ndarray = field(default_factory=lambda: np.empty(0))
    step: float | None = None
    increments: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def is_grid(self) -> bool:
        return self.step is not None

    def subordinator_at(self, s: float) -> float:
        """Y_s (on grid paths, at the grid node nearest to s)."""
        if self.is_grid:
            assert self.step is not None
            k = min(int(round(s / self.step)), len(self.increments))
            return float(self.increments[:k].sum())
        return float(self.jump_sizes[self.jump_times <= s].sum())


def simulate_path(
    family: Family, horizon: float, step: float | None, rng: np.random.Generator
) -> PathSample:
    """Simulate Y on [0, horizon].

    Args:
        family: Built-in family other than custom.
        horizon: Path length; 0 gives an empty path.
        step: Grid step for non-compound families, defaults to config.grid_step.
        rng: Caller-owned generator.

    Raises:
        DomainError: If horizon < 0 or step <= 0.
        UnsupportedFamilyError: For custom families.
    """
    _check_simulable(family)
    if horizon < 0 or not math.isfinite(horizon):
        raise DomainError(f"horizon must be finite and >= 0, got {horizon}")
    step = config.grid_step if step is None else step
    if step <= 0:
        raise DomainError(f"step must be positive, got {step}")
    if horizon == 0:
        return PathSample(horizon=0.0)

    if family.kind == FamilyKind.POISSON_EXP:
        count = rng.poisson(family.scale * horizon)
        times = np.sort(rng.uniform(0.0, horizon, size=count))
        sizes = rng.exponential(1.0, size=count)
        return PathSample(horizon=horizon, jump_times=times, jump_sizes=sizes)

    n_steps, h = _grid(horizon, step)
    increments = np.asarray(sample_increments(family, h, rng, size=n_steps), dtype=float)
    return PathSample(horizon=horizon, step=h, increments=increments)


def first_passage(path: PathSample, y: float) -> float:
    """tau_y = inf{t : t - Y_t >= y}, or inf if not reached by the horizon.

    Exact on jump paths; grid paths interpolate t - Y_t linearly inside a step.
    """
    if y <= 0:
        raise DomainError(f"first_passage needs y > 0, got {y}")
    if path.horizon == 0:
        return math.inf
    if path.is_grid:
        batch = _GridBatch(path.increments[None, :], path.horizon)
    else:
        batch = _JumpBatch(path.jump_times[None, :], path.jump_sizes[None, :], path.horizon)
    return float(batch.first_passage(y)[0])


# -- vectorised batches -----------------------------------------------------


class _JumpBatch:
    """Exact compound-Poisson paths, jump arrays padded with time=horizon, size=0."""

    def __init__(self, times: np.ndarray, sizes: np.ndarray, horizon: float):
        n = times.shape[0]
        self.horizon = horizon
        self.times = times
        self.levels = np.concatenate([np.zeros((n, 1)), np.cumsum(sizes, axis=1)], axis=1)
        self.starts = np.concatenate([np.zeros((n, 1)), times], axis=1)
        self.ends = np.concatenate([times, np.full((n, 1), horizon)], axis=1)

    @classmethod
    def simulate(cls, family: Family, horizon: float, n: int, rng: np.random.Generator) -> "_JumpBatch":
        counts = rng.poisson(family.scale * horizon, size=n)
        width = int(counts.max()) if n else 0
        padding = np.arange(width)[None, :] >= counts[:, None]
        times = np.where(padding, horizon, rng.uniform(0.0, horizon, size=(n, width)))
        times.sort(axis=1)
        # real jumps sort ahead of the padding, which occupies positions >= count
        sizes = np.where(padding, 0.0, rng.exponential(1.0, size=(n, width)))
        return cls(times, sizes, horizon)

    def running_max(self, s: float) -> tuple[np.ndarray, np.ndarray]:
        """(estimate, upper bracket) of sup_{u<=s} (u - Y_u); exact here."""
        before = self.times <= s
        peaks = np.where(before, self.times - self.levels[:, :-1], -np.inf)
        n_before = before.sum(axis=1)
        current = s - self.levels[np.arange(len(n_before)), n_before]
        m = np.maximum(np.maximum(peaks.max(axis=1, initial=-np.inf), current), 0.0)
        return m, m

    def lower_bracket(self, s: float) -> np.ndarray:
        return self.running_max(s)[0]

    def position(self, s: float) -> np.ndarray:
        n_before = (self.times <= s).sum(axis=1)
        return s - self.levels[np.arange(len(n_before)), n_before]

    def kendall_rhs(self, s_cell: tuple[float, float], y_cell: tuple[float, float]) -> np.ndarray:
        """Integral over s of (X_s / s) 1{X_s in y_cell}, exact segment by segment."""
        lo = np.maximum(np.maximum(self.starts, s_cell[0]), self.levels + y_cell[0])
        hi = np.minimum(np.minimum(self.ends, s_cell[1]), self.levels + y_cell[1])
        valid = hi > lo
        lo = np.where(valid, lo, 1.0)
        hi = np.where(valid, hi, 1.0)
        pieces = (hi - lo) - self.levels * np.log(hi / lo)
        return np.where(valid, pieces, 0.0).sum(axis=1)

    def first_passage(self, y: float) -> np.ndarray:
        candidates = self.levels + y
        reached = candidates < self.ends
        reached[:, -1] = candidates[:, -1] <= self.horizon
        index = reached.argmax(axis=1)
        hit = reached.any(axis=1)
        return np.where(hit, candidates[np.arange(len(index)), index], np.inf)


class _GridBatch:
    """Paths of X = t - Y on a uniform grid with brackets for the running maximum."""

    def __init__(self, increments: np.ndarray, horizon: float):
        n, n_steps = increments.shape
        self.horizon = horizon
        self.step = horizon / n_steps
        nodes = self.step * np.arange(n_steps + 1)
        self.x = nodes[None, :] - np.concatenate(
            [np.zeros((n, 1)), np.cumsum(increments, axis=1)], axis=1
        )
        self.m_lo = np.maximum.accumulate(self.x, axis=1)
        # sup of X over (t_j, t_{j+1}] is at most X_j + h = X_{j+1} + dY_j
        bound = np.concatenate([self.x[:, :1], self.x[:, 1:] + increments], axis=1)
        self.m_hi = np.maximum.accumulate(bound, axis=1)

    @classmethod
    def simulate(
        cls, family: Family, horizon: float, step: float, n: int, rng: np.random.Generator
    ) -> "_GridBatch":
        n_steps, h = _grid(horizon, step)
        increments = np.asarray(sample_increments(family, h, rng, size=(n, n_steps)), dtype=float)
        return cls(increments, horizon)

    def _node(self, s: float) -> int:
        return min(int(round(s / self.step)), self.x.shape[1] - 1)

    def running_max(self, s: float) -> tuple[np.ndarray, np.ndarray]:
        upper = min(math.ceil(s / self.step - 1e-9), self.x.shape[1] - 1)
        return self.m_lo[:, self._node(s)], self.m_hi[:, upper]

    def lower_bracket(self, s: float) -> np.ndarray:
        return self.m_lo[:, math.floor(s / self.step + 1e-9)]

    def position(self, s: float) -> np.ndarray:
        return self.x[:, self._node(s)]

    def kendall_rhs(self, s_cell: tuple[float, float], y_cell: tuple[float, float]) -> np.ndarray:
        """Trapezoid rule on the grid nodes inside s_cell."""
        k0 = math.ceil(s_cell[0] / self.step - 1e-9)
        k1 = min(math.floor(s_cell[1] / self.step + 1e-9), self.x.shape[1] - 1)
        if k1 <= k0:
            return np.zeros(self.x.shape[0])
        s = self.step * np.arange(k0, k1 + 1)
        x = self.x[:, k0 : k1 + 1]
        inside = (x >= y_cell[0]) & (x <= y_cell[1])
        return integrate.trapezoid(np.where(inside, x / s, 0.0), dx=self.step, axis=1)

    def first_passage(self, y: float) -> np.ndarray:
        hit = self.x >= y
        reached = hit.any(axis=1)
        k = np.maximum(hit.argmax(axis=1), 1)
        rows = np.arange(len(k))
        before, after = self.x[rows, k - 1], self.x[rows, k]
        with np.errstate(divide="ignore", invalid="ignore"):
            tau = self.step * (k - 1) + self.step * (y - before) / (after - before)
        return np.where(reached, tau, np.inf)


PathBatch = _JumpBatch | _GridBatch


def _simulate_batch(
    family: Family, horizon: float, step: float, n: int, rng: np.random.Generator
) -> PathBatch:
    if family.kind == FamilyKind.POISSON_EXP:
        return _JumpBatch.simulate(family, horizon, n, rng)
    return _GridBatch.simulate(family, horizon, step, n, rng)


def _batch_sizes(family: Family, n_paths: int, horizon: float, step: float) -> list[int]:
    rows = config.mc_batch_size
    if family.kind != FamilyKind.POISSON_EXP:
        n_steps, _ = _grid(horizon, step)
        rows = max(1, min(rows, _MAX_BATCH_NODES // (n_steps + 1)))
    sizes = [rows] * (n_paths // rows)
    if n_paths % rows:
        sizes.append(n_paths % rows)
    return sizes


def _run_batches(
    sizes: list[int], seed: int, threads: int | None, work: Callable[[int, np.random.Generator], T]
) -> list[T]:
    """Run work(n, rng) per batch in a thread pool; results come back in batch order."""
    workers = threads or config.threads or os.cpu_count() or 1
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(work, n, make_generator(seed, index)) for index, n in enumerate(sizes)]
        return [f.result() for f in futures]


@dataclass
class _Moments:
    count: int = 0
    total: float = 0.0
    total_sq: float = 0.0
    hits: int = 0

    @classmethod
    def of(cls, values: np.ndarray) -> "_Moments":
        return cls(len(values), float(values.sum()), float((values * values).sum()), int((values > 0).sum()))

    def merge(self, other: "_Moments") -> "_Moments":
        return _Moments(
            self.count + other.count,
            self.total + other.total,
            self.total_sq + other.total_sq,
            self.hits + other.hits,
        )

    @property
    def mean(self) -> float:
        return self.total / self.count if self.count else math.nan

    @property
    def stderr(self) -> float:
        if self.count < 2:
            return math.nan
        var = (self.total_sq - self.count * self.mean**2) / (self.count - 1)
        return math.sqrt(max(var, 0.0) / self.count)


# -- Kendall's identity -----------------------------------------------------


class KendallCell(BaseModel):
    """Both sides of Kendall's identity integrated over one (s, y) rectangle."""

    family: str
    s_lo: float = Field(gt=0)
    s_hi: float
    y_lo: float = Field(gt=0)
    y_hi: float
    lhs: float = math.nan
    rhs: float = math.nan
    stderr: float = math.nan
    hits_lhs: int = 0
    hits_rhs: int = 0
    bias_bound: float = 0.0
    bias_ok: bool = True
    passed: bool = False

    @model_validator(mode="after")
    def validate_cell(self) -> "KendallCell":
        if self.s_hi <= self.s_lo or self.y_hi <= self.y_lo:
            raise ValueError(f"empty cell s=[{self.s_lo}, {self.s_hi}] y=[{self.y_lo}, {self.y_hi}]")
        return self

    @property
    def s_cell(self) -> tuple[float, float]:
        return self.s_lo, self.s_hi

    @property
    def y_cell(self) -> tuple[float, float]:
        return self.y_lo, self.y_hi

    def to_dict(self) -> dict[str, Any]:
        return self.model_dump()


def _overlap(lo: np.ndarray, hi: np.ndarray, cell: tuple[float, float]) -> np.ndarray:
    return np.clip(np.minimum(hi, cell[1]) - np.maximum(lo, cell[0]), 0.0, None)


def _kendall_batch(batch: PathBatch, cells: list[KendallCell]) -> list[tuple[_Moments, _Moments, float]]:
    """Per cell: moments of both sides and the summed half-width of the left-side bracket.

    The left side of a path lies between the overlaps of the narrowest and the widest
    interval the running-maximum brackets allow; its midpoint is the estimate.
    """
    out = []
    for cell in cells:
        m_start_hi = batch.running_max(cell.s_lo)[1]
        m_end_hi = batch.running_max(cell.s_hi)[1]
        widest = _overlap(batch.lower_bracket(cell.s_lo), m_end_hi, cell.y_cell)
        narrowest = _overlap(m_start_hi, batch.lower_bracket(cell.s_hi), cell.y_cell)
        lhs = 0.5 * (widest + narrowest)
        rhs = batch.kendall_rhs(cell.s_cell, cell.y_cell)
        out.append((_Moments.of(lhs), _Moments.of(rhs), float(0.5 * (widest - narrowest).sum())))
    return out


def kendall_cells(
    family: Family,
    cells: list[tuple[tuple[float, float], tuple[float, float]]],
    n_paths: int | None = None,
    seed: int | None = None,
    step: float | None = None,
    threads: int | None = None,
    strict: bool = True,
) -> list[KendallCell]:
    """Kendall's identity on several cells using one set of paths.

    Args:
        family: Built-in, non-custom family.
        cells: ((s_lo, s_hi), (y_lo, y_hi)) rectangles away from 0.
        n_paths: Number of paths, at least 10^4.
        seed: Run seed.
        step: Grid step for non-compound families.
        threads: Worker threads.
        strict: Raise DegenerateCellError on a cell with too few hits instead of
            reporting it as failed.

    Raises:
        DegenerateCellError: If strict and a side of a cell has fewer than 50 hits.
    """
    _check_simulable(family)
    n_paths = config.n_paths if n_paths is None else n_paths
    seed = config.seed if seed is None else seed
    step = config.grid_step if step is None else step
    if n_paths < MIN_KENDALL_PATHS:
        raise DomainError(f"kendall checks need at least {MIN_KENDALL_PATHS} paths, got {n_paths}")
    reports = [
        KendallCell(family=family.label, s_lo=s[0], s_hi=s[1], y_lo=y[0], y_hi=y[1]) for s, y in cells
    ]
    horizon = max(c.s_hi for c in reports)
    logger.info(f"kendall {family.label}: {len(reports)} cell(s), {n_paths} paths, seed {seed}")

    def work(n: int, rng: np.random.Generator) -> list[tuple[_Moments, _Moments, float]]:
        return _kendall_batch(_simulate_batch(family, horizon, step, n, rng), reports)

    results = _run_batches(_batch_sizes(family, n_paths, horizon, step), seed, threads, work)
    for i, cell in enumerate(reports):
        left, right, bias = _Moments(), _Moments(), 0.0
        for batch_result in results:
            left = left.merge(batch_result[i][0])
            right = right.merge(batch_result[i][1])
            bias += batch_result[i][2]
        cell.hits_lhs, cell.hits_rhs = left.hits, right.hits
        if min(left.hits, right.hits) < MIN_CELL_HITS:
            message = (
                f"cell s={cell.s_cell} y={cell.y_cell}: {left.hits}/{right.hits} hits, "
                f"need {MIN_CELL_HITS}"
            )
            if strict:
                raise DegenerateCellError(message, min(left.hits, right.hits))
            logger.warning(message)
            continue
        cell.lhs, cell.rhs = left.mean, right.mean
        cell.stderr = math.hypot(left.stderr, right.stderr)
        cell.bias_bound = bias / n_paths
        cell.bias_ok = cell.bias_bound <= cell.stderr / 3.0
        if not cell.bias_ok:
            logger.warning(
                f"cell s={cell.s_cell} y={cell.y_cell}: grid bias bound {cell.bias_bound:.3g} "
                f"exceeds a third of the standard error {cell.stderr:.3g}"
            )
        cell.passed = cell.bias_ok and abs(cell.lhs - cell.rhs) <= 3.0 * cell.stderr
        logger.debug(
            f"cell s={cell.s_cell} y={cell.y_cell}: lhs={cell.lhs:.6g} rhs={cell.rhs:.6g} "
            f"se={cell.stderr:.3g}"
        )
    return reports


def kendall_check(
    family: Family,
    s_cell: tuple[float, float],
    y_cell: tuple[float, float],
    n_paths: int | None = None,
    seed: int | None = None,
    step: float | None = None,
    threads: int | None = None,
) -> KendallCell:
    """MC estimate of both sides of P(tau_y in ds) dy = (y/s) P(s - Y_s in dy) ds on one cell.

    Raises:
        DegenerateCellError: If either side has fewer than 50 contributing paths.
    """
    return kendall_cells(family, [(s_cell, y_cell)], n_paths, seed, step, threads)[0]


# -- renewal density --------------------------------------------------------


class RenewalEstimate(BaseModel):
    """MC estimate of the renewal density u on a grid of times."""

    family: str
    s_grid: list[float] = Field(default_factory=list)
    u_hat: list[float] = Field(default_factory=list)
    std_err: list[float] = Field(default_factory=list)
    u_formula: list[float | None] = Field(default_factory=list)
    n_paths: int = Field(ge=0)
    seed: int
    y_max: float | None = None
    tail_probability: float | None = None
    error: str | None = None

    def rows(self) -> list[dict[str, Any]]:
        formula = self.u_formula or [None] * len(self.s_grid)
        return [
            {"s": s, "u_hat": u, "stderr": se, "u_formula": f}
            for s, u, se, f in zip(self.s_grid, self.u_hat, self.std_err, formula, strict=True)
        ]

    def to_dict(self) -> dict[str, Any]:
        return self.model_dump()


def renewal_density_formula(family: Family, s: float) -> float:
    """(1/s) * integral over [0, s] of nu^{*s}[0, y] dy."""
    if s <= 0 or not math.isfinite(s):
        raise DomainError(f"renewal density needs s > 0, got {s}")
    law = ClassicalLaw(family=family, t=s)
    lo = 0.0
    if family.kind == FamilyKind.FREE_STABLE:
        lo = min(stable_series_floor(law, s), s)
    return quad(lambda y: classical_cdf(law, y), lo, s, label="renewal density") / s


def renewal_mc(
    family: Family,
    s_grid: list[float],
    n_paths: int | None = None,
    y_max: float | None = None,
    seed: int | None = None,
    step: float | None = None,
    bin_width: float | None = None,
    threads: int | None = None,
) -> RenewalEstimate:
    """u_hat(s) = E[M(s + d) - M(s - d)] / (2d), M the running maximum.

    With y_max the levels above y_max are dropped, i.e. M is capped at y_max, and
    the share of paths whose maximum at the horizon reaches y_max is reported as
    tail_probability; a share of 1e-3 or more is logged as a warning. Without
    y_max nothing is truncated and tail_probability is None.

    The killing of inverse-gaussian is applied as the weight e^{-kappa s}.
    """
    _check_simulable(family)
    n_paths = config.n_paths if n_paths is None else n_paths
    seed = config.seed if seed is None else seed
    step = config.grid_step if step is None else step
    half = 0.5 * (config.renewal_bin_width if bin_width is None else bin_width)
    if any(s <= 0 for s in s_grid):
        raise DomainError(f"renewal grid must be positive, got {s_grid}")
    s_grid = sorted(s_grid)
    if n_paths == 0 or not s_grid:
        logger.warning(f"renewal MC for {family.label} has nothing to estimate")
        return RenewalEstimate(
            family=family.label, s_grid=s_grid, n_paths=0, seed=seed, error="no paths requested"
        )

    if y_max is not None and y_max <= 0:
        raise DomainError(f"y_max must be positive, got {y_max}")
    horizon = s_grid[-1] + half
    cap = math.inf if y_max is None else y_max

    def work(n: int, rng: np.random.Generator) -> tuple[list[_Moments], int]:
        batch = _simulate_batch(family, horizon, step, n, rng)
        moments = []
        for s in s_grid:
            upper = np.minimum(batch.running_max(s + half)[0], cap)
            lower = np.minimum(batch.running_max(max(s - half, 0.0))[0], cap)
            moments.append(_Moments.of((upper - lower) / (2.0 * half)))
        tail = int((batch.running_max(horizon)[0] >= cap).sum())
        return moments, tail

    results = _run_batches(_batch_sizes(family, n_paths, horizon, step), seed, threads, work)
    tail_probability = None
    if y_max is not None:
        tail_probability = sum(r[1] for r in results) / n_paths
        if tail_probability >= TAIL_PROBABILITY:
            logger.warning(
                f"y_max={y_max} too small: P(M({horizon}) >= y_max) = {tail_probability:.3g}"
            )

    u_hat, std_err = [], []
    for i, s in enumerate(s_grid):
        total = _Moments()
        for r in results:
            total = total.merge(r[0][i])
        weight = math.exp(-family.killing_rate * s)
        u_hat.append(weight * total.mean)
        std_err.append(weight * total.stderr)
    logger.info(f"renewal MC {family.label}: {n_paths} paths on {len(s_grid)} times")
    return RenewalEstimate(
        family=family.label,
        s_grid=s_grid,
        u_hat=u_hat,
        std_err=std_err,
        n_paths=n_paths,
        seed=seed,
        y_max=y_max,
        tail_probability=tail_probability,
    )


# -- the exponent psi -------------------------------------------------------


def psi_root(family: Family, z: float) -> float:
    """The root psi > 0 of psi - f(psi) = z."""
    if z <= 0 or not math.isfinite(z):
        raise DomainError(f"psi_root needs z > 0, got {z}")

    def excess(p: float) -> float:
        return p - cbf_eval(family, p).real - z

    hi = max(1.0, 2.0 * z)
    while excess(hi) <= 0:
        hi *= 2.0
        if hi > 1e300:
            raise DomainError(f"psi - f(psi) stays below {z}; {family.label} is not flat")
    return optimize.brentq(excess, 0.0, hi, xtol=1e-15, rtol=4e-16)


class PsiEstimate(BaseModel):
    family: str
    z: float
    psi_hat: float
    std_err: float
    psi_root: float
    residual: float
    residual_stderr: float
    n_paths: int
    seed: int
    passed: bool


def psi_horizon(z: float, n_paths: int) -> float:
    """Horizon H with e^{-z H} at most a tenth of 1/sqrt(n_paths).

    Passages after H contribute at most e^{-z H} to E[exp(-z tau_1)], so the
    truncation stays below a fifth of the largest possible standard error. tau_1 >= 1
    always, so H is at least 1.
    """
    if z <= 0 or n_paths < 1:
        raise DomainError(f"psi_horizon needs z > 0 and n_paths >= 1, got z={z}, n_paths={n_paths}")
    return max(1.0, math.log(10.0 * math.sqrt(n_paths)) / z)


def psi_mc(
    family: Family,
    z: float,
    n_paths: int | None = None,
    seed: int | None = None,
    horizon: float | None = None,
    step: float | None = None,
    threads: int | None = None,
) -> PsiEstimate:
    """psi_hat(z) = -ln E[exp(-z tau_1)] from simulated first passages of level 1.

    Passages beyond the horizon (default psi_horizon) count as zero, a bias
    below e^{-z horizon}. Killing enters as the shift z -> z + kappa.
    """
    _check_simulable(family)
    n_paths = config.n_paths if n_paths is None else n_paths
    seed = config.seed if seed is None else seed
    step = config.grid_step if step is None else step
    if n_paths < 2:
        raise DomainError(f"psi_mc needs at least 2 paths, got {n_paths}")
    rate = z + family.killing_rate
    horizon = psi_horizon(rate, n_paths) if horizon is None else horizon

    def work(n: int, rng: np.random.Generator) -> _Moments:
        tau = _simulate_batch(family, horizon, step, n, rng).first_passage(1.0)
        return _Moments.of(np.exp(-rate * tau))

    total = _Moments()
    for part in _run_batches(_batch_sizes(family, n_paths, horizon, step), seed, threads, work):
        total = total.merge(part)
    psi_hat = -math.log(total.mean)
    std_err = total.stderr / total.mean
    residual = psi_hat - cbf_eval(family, psi_hat).real - z
    residual_stderr = abs(1.0 - cbf_derivative(family, psi_hat).real) * std_err
    return PsiEstimate(
        family=family.label,
        z=z,
        psi_hat=psi_hat,
        std_err=std_err,
        psi_root=psi_root(family, z),
        residual=residual,
        residual_stderr=residual_stderr,
        n_paths=n_paths,
        seed=seed,
        passed=abs(residual) <= 3.0 * residual_stderr,
    )
