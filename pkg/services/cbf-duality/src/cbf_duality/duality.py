"""Both sides of the classical/free duality identity and its derivative form.

For flat f, t > 0 and w > 0:

    integral of e^{-wx} mu^{boxplus t}(dx) = (1/w) integral_0^w nu^{*wt}[0, y] dy

The left side is computed only through the free pipeline and the right side
only through the classical one, so a bug in either cannot certify itself.
"""

import math
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Any

import numpy as np
from loguru import logger
from pydantic import BaseModel, Field, field_validator

from cbf_duality.cbf import Family, FamilyKind
from cbf_duality.classical import ClassicalLaw, classical_cdf, stable_series_floor
from cbf_duality.config import config
from cbf_duality.errors import DomainError, NumericalError, SeriesDivergenceError
from cbf_duality.free import FreeLaw, LaplaceMethod, free_laplace
from cbf_duality.integrate import quad

RHS_EPSABS = 1e-10
# the omitted [0, y_min] piece of the stable right side must stay below this share of the tolerance
CUTOFF_SHARE = 1e-2
MIN_COROLLARY_STEP = 1e-4


class GridSpec(BaseModel):
    """(t, w) grid with per-family tolerances."""

    t_values: list[float] = Field(min_length=1)
    w_values: list[float] = Field(min_length=1)
    tolerances: dict[str, float] = Field(default_factory=dict)

    @field_validator("t_values", "w_values")
    @classmethod
    def validate_positive(cls, v: list[float]) -> list[float]:
        if any(not math.isfinite(x) or x <= 0 for x in v):
            raise ValueError(f"grid values must be finite and positive, got {v}")
        return sorted(set(v))

    @field_validator("tolerances")
    @classmethod
    def validate_tolerances(cls, v: dict[str, float]) -> dict[str, float]:
        if any(tol <= 0 for tol in v.values()):
            raise ValueError(f"tolerances must be positive, got {v}")
        return v

    @classmethod
    def log_spaced(cls, t_values: list[float], lo: float, hi: float, n: int, **kwargs: Any) -> "GridSpec":
        """Grid with n log-spaced w values in [lo, hi]."""
        return cls(t_values=t_values, w_values=np.geomspace(lo, hi, n).tolist(), **kwargs)

    def tolerance_for(self, family: Family) -> float:
        if str(family.kind) in self.tolerances:
            return self.tolerances[str(family.kind)]
        if family.kind == FamilyKind.FREE_STABLE:
            return config.tolerance_free_stable
        return config.tolerance_closed_form


class VerificationRow(BaseModel):
    family: str
    t: float
    w: float
    lhs: float | None = None
    rhs: float | None = None
    residual: float | None = None
    lhs_method: str = ""
    rhs_method: str = ""
    tolerance: float
    testable: bool = True
    passed: bool = False
    note: str = ""
    error: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return self.model_dump()


class VerificationReport(BaseModel):
    """Rows of a verification run sorted by (family, t, w)."""

    command: str
    seed: int = Field(default_factory=lambda: config.seed)
    rows: list[VerificationRow] = Field(default_factory=list)

    @property
    def testable_rows(self) -> list[VerificationRow]:
        return [r for r in self.rows if r.testable]

    @property
    def testable_fraction(self) -> float:
        return len(self.testable_rows) / len(self.rows) if self.rows else 0.0

    @property
    def max_residual(self) -> float:
        residuals = [r.residual for r in self.testable_rows if r.residual is not None]
        return max(residuals, default=math.nan)

    @property
    def passed(self) -> bool:
        if not self.rows or self.testable_fraction < config.min_testable_fraction:
            return False
        return all(r.passed for r in self.testable_rows)

    def summary(self) -> dict[str, Any]:
        return {
            "command": self.command,
            "seed": self.seed,
            "cells": len(self.rows),
            "testable_fraction": self.testable_fraction,
            "max_residual": self.max_residual,
            "passed": self.passed,
        }

    def to_dict(self) -> dict[str, Any]:
        return {**self.summary(), "rows": [r.to_dict() for r in self.rows]}


# -- the two sides ----------------------------------------------------------


def theorem_lhs(family: Family, t: float, w: float, method: LaplaceMethod | None = None) -> tuple[float, str]:
    """(Laplace transform of mu^{boxplus t} at w, method tag)."""
    return free_laplace(FreeLaw(family=family, t=t), w, method=method)


def _stable_cutoff(law: ClassicalLaw, w: float) -> tuple[float, float]:
    """(y_min, bound on the omitted integral over [0, y_min] divided by w)."""
    y_min = stable_series_floor(law, w)
    return y_min, y_min * classical_cdf(law, y_min) / w


def theorem_rhs(
    family: Family, t: float, w: float, via_scaling: bool = False
) -> tuple[float, str, float]:
    """(average of nu^{*wt}[0, y] over y in [0, w], method tag, cutoff bound).

    Args:
        family: The family f.
        t: Time of the free side.
        w: Laplace variable.
        via_scaling: Evaluate nu^{*w}(t f) instead of nu^{*wt}(f).

    Returns:
        The right side, its method tag and a bound on the piece skipped near 0
        (nonzero only for free-stable, whose series fails at small y).

    Raises:
        SeriesDivergenceError: If the stable series is rejected already at y = w.
    """
    if via_scaling:
        law = ClassicalLaw(family=family.scaled(t), t=w)
    else:
        law = ClassicalLaw(family=family, t=w * t)
    lo, cutoff = 0.0, 0.0
    method = "classical-cdf-quadrature"
    if family.kind == FamilyKind.FREE_STABLE:
        lo, cutoff = _stable_cutoff(law, w)
        method = "stable-cdf-series-quadrature"
    elif family.kind == FamilyKind.CUSTOM:
        method = "bromwich-cdf-quadrature"

    value = quad(
        lambda y: classical_cdf(law, y),
        lo,
        w,
        epsabs=RHS_EPSABS,
        epsrel=1e-12,
        label="theorem rhs",
    )
    return value / w, method, cutoff


def evaluate_cell(family: Family, t: float, w: float, tolerance: float) -> VerificationRow:
    """One (t, w) cell; numerical failures turn into untestable or failed rows."""
    row = VerificationRow(family=family.label, t=t, w=w, tolerance=tolerance)
    try:
        row.lhs, row.lhs_method = theorem_lhs(family, t, w)
        row.rhs, row.rhs_method, cutoff = theorem_rhs(family, t, w)
    except SeriesDivergenceError as exc:
        row.testable = False
        row.note = str(exc)
        logger.warning(f"{family.label} t={t} w={w}: untestable, {exc}")
        return row
    except NumericalError as exc:
        row.error = type(exc).__name__
        row.note = str(exc)
        logger.error(f"{family.label} t={t} w={w}: {row.note}")
        return row
    if cutoff > CUTOFF_SHARE * tolerance:
        row.testable = False
        row.note = f"omitted stable piece bound {cutoff:.3g}"
        logger.warning(f"{family.label} t={t} w={w}: untestable, {row.note}")
    row.residual = abs(row.lhs - row.rhs)
    row.passed = row.testable and row.residual <= tolerance
    logger.debug(f"{family.label} t={t} w={w}: lhs={row.lhs:.12g} rhs={row.rhs:.12g}")
    return row


def _sorted_rows(rows: list[VerificationRow]) -> list[VerificationRow]:
    return sorted(rows, key=lambda r: (r.family, r.t, r.w))


def verify_theorem(
    grid: GridSpec,
    families: list[Family],
    threads: int | None = None,
    tolerance: float | None = None,
) -> VerificationReport:
    """Evaluate the identity on every (family, t, w) cell of the grid.

    Args:
        grid: The (t, w) grid.
        families: Families to check.
        threads: Worker threads, default all available.
        tolerance: Override of the per-family tolerance.

    Returns:
        VerificationReport with deterministic row order; failures are rows, not exceptions.
    """
    cells = [
        (family, t, w, tolerance or grid.tolerance_for(family))
        for family in families
        for t in grid.t_values
        for w in grid.w_values
    ]
    logger.info(f"verifying the identity on {len(cells)} cells")
    workers = threads or config.threads or os.cpu_count() or 1
    with ThreadPoolExecutor(max_workers=workers) as pool:
        rows = list(pool.map(lambda cell: evaluate_cell(*cell), cells))
    report = VerificationReport(command="verify-theorem", rows=_sorted_rows(rows))
    logger.info(
        f"identity: max residual {report.max_residual:.3g}, "
        f"testable {report.testable_fraction:.0%}, passed={report.passed}"
    )
    return report


# -- derivative form --------------------------------------------------------


def _g(family: Family, t: float, w: float) -> float:
    """w times the Laplace transform of mu^{boxplus t/w} at w."""
    value, _ = free_laplace(FreeLaw(family=family, t=t / w), w)
    return w * value


def corollary_derivative(family: Family, t: float, w: float, h: float | None = None) -> float:
    """d/dw [w * Laplace(mu^{boxplus t/w})(w)] by Richardson on central differences."""
    h = max(MIN_COROLLARY_STEP, 1e-3 * w) if h is None else h
    if h <= 0 or h > w / 10:
        raise DomainError(f"step h={h} must lie in (0, w/10] for w={w}")

    def central(step: float) -> float:
        return (_g(family, t, w + step) - _g(family, t, w - step)) / (2.0 * step)

    return (4.0 * central(h / 2) - central(h)) / 3.0


def verify_corollary(
    family: Family, t: float, w: float, h: float | None = None, tolerance: float | None = None
) -> VerificationRow:
    """Compare the derivative form against nu^{*t}[0, w]."""
    tolerance = config.tolerance_corollary if tolerance is None else tolerance
    row = VerificationRow(
        family=family.label,
        t=t,
        w=w,
        tolerance=tolerance,
        lhs_method="richardson-central-difference",
        rhs_method="classical-cdf",
    )
    try:
        row.lhs = corollary_derivative(family, t, w, h)
        row.rhs = classical_cdf(ClassicalLaw(family=family, t=t), w)
    except SeriesDivergenceError as exc:
        row.testable = False
        row.note = str(exc)
        logger.warning(f"corollary {family.label} t={t} w={w}: untestable, {exc}")
        return row
    except NumericalError as exc:
        row.error = type(exc).__name__
        row.note = str(exc)
        logger.error(f"corollary {family.label} t={t} w={w}: {row.note}")
        return row
    row.residual = abs(row.lhs - row.rhs)
    row.passed = row.residual <= tolerance
    return row


def verify_corollary_grid(
    families: list[Family],
    t_values: list[float],
    w_values: list[float],
    threads: int | None = None,
    tolerance: float | None = None,
) -> VerificationReport:
    """verify_corollary on every (family, t, w)."""
    cells = [(f, t, w) for f in families for t in t_values for w in w_values]
    workers = threads or config.threads or os.cpu_count() or 1
    with ThreadPoolExecutor(max_workers=workers) as pool:
        rows = list(pool.map(lambda c: verify_corollary(*c, tolerance=tolerance), cells))
    report = VerificationReport(command="verify-corollary", rows=_sorted_rows(rows))
    logger.info(f"corollary: max residual {report.max_residual:.3g}, passed={report.passed}")
    return report
