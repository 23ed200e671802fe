"""Tests for cbf_duality.cbf module."""

import cmath
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from pydantic import ValidationError
from scipy import integrate

from cbf_duality.cbf import (
    CbfSpec,
    Family,
    FamilyKind,
    cbf_derivative,
    cbf_eval,
    is_flat,
    levy_density,
    levy_density_derivative,
    pick_property_check,
)
from cbf_duality.errors import DomainError, UnsupportedFamilyError

BUILT_INS = [
    Family.free_stable(0.5),
    Family.free_stable(0.2),
    Family.gamma(),
    Family.poisson_exp(),
    Family.inverse_gaussian(),
]
upper_half_plane = st.builds(
    complex,
    st.floats(min_value=-50.0, max_value=50.0),
    st.floats(min_value=1e-6, max_value=50.0),
)


class TestCbfSpec:
    """Tests for the Pick representation record."""

    def test_valid_spec(self, poisson_spec):
        """a = 1/2, rho = delta_1 / 2 is admissible."""
        assert poisson_spec.is_flat
        assert poisson_spec.value_at_zero == pytest.approx(0.0)
        assert poisson_spec.value_at_infinity == pytest.approx(1.0)

    def test_constant_term_too_small(self):
        """a below the integral of 1/x against rho is rejected."""
        with pytest.raises(ValidationError, match="below"):
            CbfSpec(a=0.5, atoms=((1.0, 1.0),))

    @pytest.mark.parametrize("atom", [(0.0, 1.0), (1.0, -1.0), (math.inf, 1.0)])
    def test_bad_atoms(self, atom):
        """Atoms need positive finite location and mass."""
        with pytest.raises(ValidationError):
            CbfSpec(a=10.0, atoms=(atom,))

    def test_from_file(self, spec_file, poisson_spec):
        """JSON file round trip."""
        assert CbfSpec.from_file(spec_file) == poisson_spec

    def test_from_json_lists(self):
        """Atoms may be given as JSON lists."""
        spec = CbfSpec.from_json('{"a": 1.0, "b": 0.5, "atoms": [[2.0, 1.0]]}')
        assert spec.atoms == ((2.0, 1.0),)
        assert not spec.is_flat


class TestFamily:
    """Tests for Family construction."""

    @pytest.mark.parametrize("alpha", [0.0, 1.0, 1.7, -0.2])
    def test_alpha_range(self, alpha):
        """free-stable alpha must lie strictly inside (0, 1)."""
        with pytest.raises(ValidationError, match="alpha"):
            Family.free_stable(alpha)

    def test_alpha_only_for_free_stable(self):
        """Other families take no alpha."""
        with pytest.raises(ValidationError, match="no alpha"):
            Family(kind=FamilyKind.GAMMA, alpha=0.5)

    def test_custom_needs_spec(self):
        """custom without a spec is rejected."""
        with pytest.raises(ValidationError, match="needs a spec"):
            Family(kind=FamilyKind.CUSTOM)

    def test_scaled(self):
        """scaled multiplies f."""
        family = Family.gamma().scaled(2.0)
        assert family.label == "2*gamma"
        assert cbf_eval(family, 1.0).real == pytest.approx(2.0 * math.log(2.0))

    def test_killing_rate(self, inverse_gaussian_family, gamma_family, poisson_spec):
        """kappa = f(0+)."""
        assert inverse_gaussian_family.killing_rate == 1.0
        assert gamma_family.killing_rate == 0.0
        assert Family.custom(poisson_spec).killing_rate == pytest.approx(0.0)


class TestCbfEval:
    """Tests for evaluating f."""

    @pytest.mark.parametrize(
        "family, z, expected",
        [
            (Family.free_stable(0.5), 4.0, 2.0),
            (Family.gamma(), math.e - 1.0, 1.0),
            (Family.poisson_exp(), 1.0, 0.5),
            (Family.inverse_gaussian(), 4.0, 3.0),
        ],
    )
    def test_values(self, family, z, expected):
        """Closed-form values on the positive axis."""
        assert cbf_eval(family, z).real == pytest.approx(expected, rel=1e-14)

    def test_value_at_zero(self, gamma_family, inverse_gaussian_family):
        """z = 0 returns f(0+)."""
        assert cbf_eval(gamma_family, 0.0) == 0.0
        assert cbf_eval(inverse_gaussian_family, 0.0).real == 1.0

    def test_cut_rejected(self, gamma_family):
        """The cut (-inf, 0) is outside the domain."""
        with pytest.raises(DomainError, match="cut"):
            cbf_eval(gamma_family, -1.0)

    @given(upper_half_plane)
    @settings(max_examples=100)
    def test_custom_matches_poisson(self, z):
        """a = 1/2, rho = delta_1 / 2 is z / (z + 1) everywhere."""
        custom = Family.custom(CbfSpec(a=0.5, atoms=((1.0, 0.5),)))
        assert cbf_eval(custom, z) == pytest.approx(cbf_eval(Family.poisson_exp(), z), rel=1e-12, abs=1e-14)

    @pytest.mark.parametrize("family", BUILT_INS, ids=lambda f: f.label)
    def test_derivative(self, family):
        """f' against a central difference."""
        z = complex(0.7, 0.4)
        h = 1e-6
        numeric = (cbf_eval(family, z + h) - cbf_eval(family, z - h)) / (2 * h)
        assert abs(cbf_derivative(family, z) - numeric) < 1e-8

    def test_derivative_at_branch_point(self, gamma_family):
        """f' is not evaluated at 0."""
        with pytest.raises(DomainError, match="branch point"):
            cbf_derivative(gamma_family, 0.0)

    def test_conjugate_symmetry(self, gamma_family):
        """f(conj z) = conj f(z)."""
        z = complex(1.3, 2.1)
        assert cbf_eval(gamma_family, z.conjugate()) == pytest.approx(cbf_eval(gamma_family, z).conjugate())


class TestFlatness:
    """Tests for is_flat."""

    @pytest.mark.parametrize("family", BUILT_INS, ids=lambda f: f.label)
    def test_built_ins_flat(self, family):
        """Every built-in family has zero drift."""
        assert is_flat(family)

    def test_custom_with_drift(self):
        """b > 0 is not flat."""
        assert not is_flat(Family.custom(CbfSpec(a=0.0, b=1.0)))

    def test_custom_flat(self, custom_poisson_family):
        """b = 0 is flat."""
        assert is_flat(custom_poisson_family)


class TestPickProperty:
    """Tests for pick_property_check."""

    @pytest.mark.parametrize("family", BUILT_INS, ids=lambda f: f.label)
    @given(points=st.lists(upper_half_plane, min_size=1, max_size=30))
    @settings(max_examples=30)
    def test_maps_upper_half_plane(self, family, points):
        """Im f(z) >= 0 whenever Im z > 0."""
        report = pick_property_check(family, points)
        assert report.passed
        assert report.n_points == len(points)

    def test_custom(self):
        """A spec with several atoms and drift."""
        family = Family.custom(CbfSpec(a=3.0, b=0.5, atoms=((0.5, 0.25), (2.0, 1.0), (7.0, 3.0))))
        grid = [complex(x, y) for x in (-5.0, -0.5, 0.0, 2.0) for y in (1e-3, 1.0, 10.0)]
        assert pick_property_check(family, grid).passed

    def test_empty_grid(self, gamma_family):
        """An empty grid is rejected."""
        with pytest.raises(DomainError, match="nonempty"):
            pick_property_check(gamma_family, [])

    def test_lower_half_plane_point(self, gamma_family):
        """Points must lie strictly above the axis."""
        with pytest.raises(DomainError, match="upper half-plane"):
            pick_property_check(gamma_family, [complex(1.0, -1.0)])


class TestLevyDensity:
    """Tests for the Levy density and its complete monotonicity."""

    @pytest.mark.parametrize(
        "family, z",
        [
            (Family.gamma(), 1.0),
            (Family.gamma(), 3.0),
            (Family.poisson_exp(), 2.0),
            (Family.inverse_gaussian(), 1.5),
            (Family.free_stable(0.5), 2.0),
        ],
    )
    def test_bernstein_representation(self, family, z):
        """f(z) = f(0+) + integral of (1 - e^{-zx}) Pi(dx)."""

        def integrand(x):
            return -math.expm1(-z * x) * levy_density(family, x)

        head, _ = integrate.quad(integrand, 0.0, 1.0, epsabs=1e-13, epsrel=1e-12, limit=200)
        tail, _ = integrate.quad(integrand, 1.0, math.inf, epsabs=1e-13, epsrel=1e-12, limit=200)
        expected = (cbf_eval(family, z) - cbf_eval(family, 0.0)).real
        assert head + tail == pytest.approx(expected, rel=1e-6)

    @pytest.mark.parametrize("family", BUILT_INS, ids=lambda f: f.label)
    @pytest.mark.parametrize("x", [0.1, 1.0, 5.0])
    def test_completely_monotone(self, family, x):
        """(-1)^n times the n-th derivative is nonnegative."""
        for order in range(6):
            assert (-1) ** order * levy_density_derivative(family, x, order) >= 0.0

    def test_derivative_against_difference(self, gamma_family):
        """First derivative against a central difference."""
        x, h = 1.3, 1e-6
        numeric = (levy_density(gamma_family, x + h) - levy_density(gamma_family, x - h)) / (2 * h)
        assert levy_density_derivative(gamma_family, x, 1) == pytest.approx(numeric, rel=1e-6)

    def test_custom_unsupported(self, custom_poisson_family):
        """Custom specs have no Levy density here."""
        with pytest.raises(UnsupportedFamilyError):
            levy_density(custom_poisson_family, 1.0)

    def test_nonpositive_x(self, gamma_family):
        """x must be positive."""
        with pytest.raises(DomainError):
            levy_density(gamma_family, 0.0)


def test_principal_branch_of_stable():
    """z^(1-alpha) uses the principal logarithm."""
    family = Family.free_stable(0.5)
    z = complex(-1.0, 1e-12)
    assert cbf_eval(family, z) == pytest.approx(cmath.sqrt(z))
