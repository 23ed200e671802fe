"""Complete Bernstein functions.

A complete Bernstein function is either one of four closed-form families or a
user-supplied Pick representation

    f(z) = a + b z + sum_i m_i (z x_i - 1) / (z + x_i),   a >= sum_i m_i / x_i.

Every value is taken on the principal branch with the cut (-inf, 0].
"""

import cmath
import math
from enum import StrEnum
from pathlib import Path

from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from cbf_duality.errors import DomainError, UnsupportedFamilyError
from cbf_duality.special import gamma_reciprocal

FLATNESS_PROBE = 1e12
FLATNESS_THRESHOLD = 1e-6
PICK_TOLERANCE = 1e-12


class FamilyKind(StrEnum):
    FREE_STABLE = "free-stable"
    GAMMA = "gamma"
    POISSON_EXP = "poisson-exp"
    INVERSE_GAUSSIAN = "inverse-gaussian"
    CUSTOM = "custom"


BUILT_IN_KINDS = (
    FamilyKind.FREE_STABLE,
    FamilyKind.GAMMA,
    FamilyKind.POISSON_EXP,
    FamilyKind.INVERSE_GAUSSIAN,
)


class CbfSpec(BaseModel):
    """Pick representation (a, b, finite atomic rho) of a complete Bernstein function."""

    model_config = ConfigDict(frozen=True)

    a: float = Field(ge=0, allow_inf_nan=False)
    b: float = Field(default=0.0, ge=0, allow_inf_nan=False)
    atoms: tuple[tuple[float, float], ...] = ()

    @field_validator("atoms")
    @classmethod
    def validate_atoms(cls, v: tuple[tuple[float, float], ...]) -> tuple[tuple[float, float], ...]:
        """Atom locations and masses must be positive and finite."""
        for x, m in v:
            if not (math.isfinite(x) and math.isfinite(m)):
                raise ValueError(f"atom ({x}, {m}) is not finite")
            if x <= 0 or m <= 0:
                raise ValueError(f"atom ({x}, {m}) needs positive location and mass")
        return v

    @model_validator(mode="after")
    def validate_constant_term(self) -> "CbfSpec":
        """a must dominate the integral of 1/x against rho."""
        required = sum(m / x for x, m in self.atoms)
        if self.a < required * (1.0 - 1e-12):
            raise ValueError(f"a={self.a} below sum of m/x = {required}")
        return self

    @property
    def is_flat(self) -> bool:
        return self.b == 0.0

    @property
    def value_at_zero(self) -> float:
        return max(0.0, self.a - sum(m / x for x, m in self.atoms))

    @property
    def value_at_infinity(self) -> float:
        if self.b > 0:
            return math.inf
        return self.a + sum(m * x for x, m in self.atoms)

    @classmethod
    def from_json(cls, text: str) -> "CbfSpec":
        """Parse {"a": ..., "b": ..., "atoms": [[x, m], ...]}."""
        return cls.model_validate_json(text)

    @classmethod
    def from_file(cls, path: str | Path) -> "CbfSpec":
        return cls.from_json(Path(path).read_text())


class Family(BaseModel):
    """A complete Bernstein function, optionally multiplied by a positive scale."""

    model_config = ConfigDict(frozen=True)

    kind: FamilyKind
    alpha: float | None = None
    spec: CbfSpec | None = None
    scale: float = Field(default=1.0, gt=0, allow_inf_nan=False)

    @model_validator(mode="after")
    def validate_parameters(self) -> "Family":
        """Only free-stable takes alpha, only custom takes a spec."""
        if self.kind == FamilyKind.FREE_STABLE:
            if self.alpha is None or not 0.0 < self.alpha < 1.0:
                raise ValueError(f"free-stable alpha must lie strictly inside (0, 1), got {self.alpha}")
        elif self.alpha is not None:
            raise ValueError(f"{self.kind} takes no alpha")
        if self.kind == FamilyKind.CUSTOM:
            if self.spec is None:
                raise ValueError("custom family needs a spec")
        elif self.spec is not None:
            raise ValueError(f"{self.kind} takes no spec")
        return self

    @classmethod
    def free_stable(cls, alpha: float) -> "Family":
        return cls(kind=FamilyKind.FREE_STABLE, alpha=alpha)

    @classmethod
    def gamma(cls) -> "Family":
        return cls(kind=FamilyKind.GAMMA)

    @classmethod
    def poisson_exp(cls) -> "Family":
        return cls(kind=FamilyKind.POISSON_EXP)

    @classmethod
    def inverse_gaussian(cls) -> "Family":
        return cls(kind=FamilyKind.INVERSE_GAUSSIAN)

    @classmethod
    def custom(cls, spec: CbfSpec) -> "Family":
        return cls(kind=FamilyKind.CUSTOM, spec=spec)

    def scaled(self, factor: float) -> "Family":
        """The function factor * f."""
        return self.model_copy(update={"scale": self.scale * factor})

    @property
    def stable_index(self) -> float:
        """Index 1 - alpha of the classical stable subordinator."""
        if self.alpha is None:
            raise UnsupportedFamilyError(f"{self.kind} has no stable index")
        return 1.0 - self.alpha

    @property
    def killing_rate(self) -> float:
        """kappa = f(0+); nonzero only for inverse-gaussian and killed custom specs."""
        if self.kind == FamilyKind.INVERSE_GAUSSIAN:
            return self.scale
        if self.kind == FamilyKind.CUSTOM:
            assert self.spec is not None
            return self.scale * self.spec.value_at_zero
        return 0.0

    @property
    def value_at_infinity(self) -> float:
        if self.kind == FamilyKind.POISSON_EXP:
            return self.scale
        if self.kind == FamilyKind.CUSTOM:
            assert self.spec is not None
            return self.scale * self.spec.value_at_infinity
        return math.inf

    @property
    def label(self) -> str:
        name = str(self.kind)
        if self.kind == FamilyKind.FREE_STABLE:
            name = f"{name}({self.alpha:g})"
        if self.scale != 1.0:
            name = f"{self.scale:g}*{name}"
        return name


def _check_off_cut(z: complex) -> complex:
    z = complex(z)
    if not (math.isfinite(z.real) and math.isfinite(z.imag)):
        raise DomainError(f"z must be finite, got {z}")
    if z.imag == 0.0 and z.real < 0.0:
        raise DomainError(f"z={z} lies on the cut (-inf, 0]")
    return z


def _custom_value(spec: CbfSpec, z: complex) -> complex:
    value = complex(spec.a) + spec.b * z
    for x, m in spec.atoms:
        value += m * (z * x - 1.0) / (z + x)
    return value


def _raw_eval(family: Family, z: complex) -> complex:
    """Unscaled f at any z where the formula is analytic (both half-planes)."""
    match family.kind:
        case FamilyKind.FREE_STABLE:
            if z == 0:
                return 0j
            assert family.alpha is not None
            return cmath.exp((1.0 - family.alpha) * cmath.log(z))
        case FamilyKind.GAMMA:
            return cmath.log(1.0 + z)
        case FamilyKind.POISSON_EXP:
            return z / (z + 1.0)
        case FamilyKind.INVERSE_GAUSSIAN:
            return cmath.sqrt(1.0 + 2.0 * z)
        case FamilyKind.CUSTOM:
            assert family.spec is not None
            if z == 0:
                return complex(family.spec.value_at_zero)
            return _custom_value(family.spec, z)
    raise UnsupportedFamilyError(f"unknown family {family.kind}")


def _raw_derivative(family: Family, z: complex) -> complex:
    match family.kind:
        case FamilyKind.FREE_STABLE:
            assert family.alpha is not None
            return (1.0 - family.alpha) * cmath.exp(-family.alpha * cmath.log(z))
        case FamilyKind.GAMMA:
            return 1.0 / (1.0 + z)
        case FamilyKind.POISSON_EXP:
            return 1.0 / (z + 1.0) ** 2
        case FamilyKind.INVERSE_GAUSSIAN:
            return 1.0 / cmath.sqrt(1.0 + 2.0 * z)
        case FamilyKind.CUSTOM:
            assert family.spec is not None
            value = complex(family.spec.b)
            for x, m in family.spec.atoms:
                value += m * (x * x + 1.0) / (z + x) ** 2
            return value
    raise UnsupportedFamilyError(f"unknown family {family.kind}")


def cbf_eval(family: Family, z: complex) -> complex:
    """Evaluate f(z) off the cut; z = 0 returns the limit f(0+).

    Raises:
        DomainError: If z lies on (-inf, 0).
    """
    z = _check_off_cut(z)
    return family.scale * _raw_eval(family, z)


def cbf_extended(family: Family, z: complex) -> complex:
    """f(z) without the cut check, for callers that stay off the cut themselves."""
    return family.scale * _raw_eval(family, complex(z))


def cbf_derivative_extended(family: Family, z: complex) -> complex:
    """f'(z) without the cut check."""
    return family.scale * _raw_derivative(family, complex(z))


def cbf_derivative(family: Family, z: complex) -> complex:
    """f'(z) off the cut."""
    z = _check_off_cut(z)
    if z == 0:
        raise DomainError("f' is not evaluated at the branch point 0")
    return family.scale * _raw_derivative(family, z)


def flatness_ratio(family: Family, probe: float = FLATNESS_PROBE) -> float:
    """|f(Z)| / Z at a large real probe Z."""
    return abs(cbf_eval(family, probe)) / probe


def is_flat(family: Family) -> bool:
    """True iff f has no linear drift, i.e. f(z)/z -> 0; built-in families always are."""
    if family.kind != FamilyKind.CUSTOM:
        return True
    assert family.spec is not None
    structural = family.spec.is_flat
    numeric = flatness_ratio(family) < FLATNESS_THRESHOLD
    if structural != numeric:
        logger.warning(
            f"{family.label}: structural flatness {structural} disagrees with "
            f"f(Z)/Z={flatness_ratio(family):.3g} at Z={FLATNESS_PROBE:g}"
        )
    return structural


class PickReport(BaseModel):
    """Minimum of Im f over an upper half-plane grid."""

    family: str
    n_points: int
    min_imag: float
    argmin: complex
    passed: bool


def pick_property_check(family: Family, grid: list[complex]) -> PickReport:
    """Check that f maps every grid point of the upper half-plane into its closure.

    Raises:
        DomainError: If the grid is empty or a point has Im z <= 0.
    """
    if not grid:
        raise DomainError("pick_property_check needs a nonempty grid")
    worst_value = math.inf
    worst_point = complex(grid[0])
    for z in grid:
        z = complex(z)
        if z.imag <= 0:
            raise DomainError(f"grid point {z} is not in the upper half-plane")
        im = cbf_eval(family, z).imag
        if im < worst_value:
            worst_value, worst_point = im, z
    return PickReport(
        family=family.label,
        n_points=len(grid),
        min_imag=worst_value,
        argmin=worst_point,
        passed=worst_value >= -PICK_TOLERANCE,
    )


def _levy_shape(family: Family) -> tuple[float, float, float]:
    """(c, p, lam) with Levy density c x^{-p} e^{-lam x}."""
    match family.kind:
        case FamilyKind.FREE_STABLE:
            assert family.alpha is not None
            return (1.0 - family.alpha) * gamma_reciprocal(family.alpha), 2.0 - family.alpha, 0.0
        case FamilyKind.GAMMA:
            return 1.0, 1.0, 1.0
        case FamilyKind.POISSON_EXP:
            return 1.0, 0.0, 1.0
        case FamilyKind.INVERSE_GAUSSIAN:
            return 1.0 / math.sqrt(2.0 * math.pi), 1.5, 0.5
    raise UnsupportedFamilyError(f"no Levy density available for {family.kind}")


def levy_density_derivative(family: Family, x: float, order: int) -> float:
    """order-th derivative of the Levy density by the Leibniz rule.

    Complete monotonicity means (-1)^order times this value is nonnegative.
    """
    c, p, lam = _levy_shape(family)
    if x <= 0:
        raise DomainError(f"Levy density needs x > 0, got {x}")
    total = 0.0
    rising = 1.0
    for k in range(order + 1):
        if k > 0:
            rising *= p + k - 1
        total += math.comb(order, k) * rising * lam ** (order - k) * x ** (-p - k)
    return family.scale * (-1) ** order * c * math.exp(-lam * x) * total


def levy_density(family: Family, x: float) -> float:
    """Completely monotone Levy density of a built-in family.

    Raises:
        UnsupportedFamilyError: For custom specs.
        DomainError: If x <= 0.
    """
    return levy_density_derivative(family, x, 0)
