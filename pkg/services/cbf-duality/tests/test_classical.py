"""Tests for cbf_duality.classical module."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate
from scipy import special as sp

from cbf_duality.cbf import Family
from cbf_duality.classical import (
    ClassicalLaw,
    atoms,
    classical_cdf,
    classical_pdf,
    laplace_residual,
    sample_increment,
    sample_increments,
    stable_cdf_series,
    stable_pdf_series,
    stable_series_floor,
)
from cbf_duality.errors import DomainError, SeriesDivergenceError, UnsupportedFamilyError


class TestClassicalLaw:
    """Tests for the law record."""

    def test_killed_mass(self, inverse_gaussian_family):
        """Killing at rate 1 leaves mass e^{-t}."""
        law = ClassicalLaw(family=inverse_gaussian_family, t=2.0)
        assert law.total_mass == pytest.approx(math.exp(-2.0))
        assert law.core().total_mass == 1.0

    def test_scaled_time(self, gamma_family):
        """nu^{*t}(c f) has effective time c t."""
        law = ClassicalLaw(family=gamma_family.scaled(3.0), t=0.5)
        assert law.time == pytest.approx(1.5)

    def test_poisson_atom(self, poisson_family):
        """Compound Poisson puts mass e^{-t} at zero."""
        law = ClassicalLaw(family=poisson_family, t=1.5)
        assert atoms(law) == [(0.0, pytest.approx(math.exp(-1.5)))]

    def test_continuous_laws_have_no_atoms(self, gamma_family):
        """Gamma has no atom."""
        assert atoms(ClassicalLaw(family=gamma_family, t=1.0)) == []


class TestClassicalCdf:
    """Tests for classical_cdf."""

    @given(
        t=st.floats(min_value=0.05, max_value=20.0),
        y=st.floats(min_value=0.0, max_value=60.0),
    )
    @settings(max_examples=200)
    def test_gamma_matches_scipy(self, t, y):
        """Gamma(t, 1) CDF."""
        law = ClassicalLaw(family=Family.gamma(), t=t)
        assert classical_cdf(law, y) == pytest.approx(sp.gammainc(t, y), rel=1e-10, abs=1e-14)

    @pytest.mark.parametrize("y", [0.5, 1.0, 2.0, 5.0])
    def test_half_stable_is_levy(self, half_stable_family, y):
        """Index 1/2: nu^{*t}[0, y] = erfc(t / (2 sqrt y))."""
        law = ClassicalLaw(family=half_stable_family, t=1.0)
        assert classical_cdf(law, y) == pytest.approx(math.erfc(1.0 / (2.0 * math.sqrt(y))), rel=1e-10)

    def test_inverse_gaussian_total_mass(self, inverse_gaussian_family):
        """The killed CDF saturates at e^{-t}."""
        law = ClassicalLaw(family=inverse_gaussian_family, t=1.0)
        assert classical_cdf(law, 1000.0) == pytest.approx(math.exp(-1.0), rel=1e-12)
        assert classical_cdf(law.core(), 1000.0) == pytest.approx(1.0, rel=1e-12)

    def test_poisson_against_density(self, poisson_family):
        """Atom plus integrated density."""
        law = ClassicalLaw(family=poisson_family, t=1.0)
        integral, _ = integrate.quad(lambda y: classical_pdf(law, y), 0.0, 2.0, epsrel=1e-11)
        assert classical_cdf(law, 2.0) == pytest.approx(math.exp(-1.0) + integral, rel=1e-9)
        assert classical_cdf(law, 0.0) == pytest.approx(math.exp(-1.0))

    def test_custom_matches_poisson(self, custom_poisson_family, poisson_family):
        """Bromwich inversion reproduces the compound Poisson CDF."""
        custom = ClassicalLaw(family=custom_poisson_family, t=1.0)
        reference = ClassicalLaw(family=poisson_family, t=1.0)
        for y in (0.5, 1.0, 3.0):
            assert classical_cdf(custom, y) == pytest.approx(classical_cdf(reference, y), abs=1e-6)

    def test_monotone(self, poisson_family):
        """CDF values are nondecreasing."""
        law = ClassicalLaw(family=poisson_family, t=2.0)
        values = [classical_cdf(law, y) for y in np.linspace(0.0, 10.0, 41)]
        assert all(b >= a for a, b in zip(values, values[1:], strict=False))

    @pytest.mark.parametrize("y", [-1.0, math.nan])
    def test_bad_points(self, gamma_family, y):
        """Negative or NaN y is rejected."""
        with pytest.raises(DomainError):
            classical_cdf(ClassicalLaw(family=gamma_family, t=1.0), y)

    def test_stable_series_rejected_near_zero(self, half_stable_family):
        """The series refuses huge arguments."""
        law = ClassicalLaw(family=half_stable_family, t=1.0)
        with pytest.raises(SeriesDivergenceError):
            classical_cdf(law, 1e-6)


class TestClassicalPdf:
    """Tests for classical_pdf."""

    def test_inverse_gaussian_at_one(self, inverse_gaussian_family):
        """pdf(1) = e^{-1} / sqrt(2 pi) for the killed law at t = 1."""
        law = ClassicalLaw(family=inverse_gaussian_family, t=1.0)
        assert classical_pdf(law, 1.0) == pytest.approx(math.exp(-1.0) / math.sqrt(2.0 * math.pi))
        assert classical_pdf(law.core(), 1.0) == pytest.approx(1.0 / math.sqrt(2.0 * math.pi))

    @pytest.mark.parametrize("y", [0.3, 1.0, 4.0])
    def test_half_stable_is_levy(self, half_stable_family, y):
        """Levy density t / (2 sqrt pi) y^{-3/2} e^{-t^2 / (4y)}."""
        law = ClassicalLaw(family=half_stable_family, t=1.0)
        expected = 1.0 / (2.0 * math.sqrt(math.pi)) * y**-1.5 * math.exp(-1.0 / (4.0 * y))
        assert classical_pdf(law, y) == pytest.approx(expected, rel=1e-9)

    @pytest.mark.parametrize("y", [0.1, 1.0, 7.0])
    def test_poisson_mixture(self, poisson_family, y):
        """Poisson mixture of Erlang densities."""
        tau = 1.5
        law = ClassicalLaw(family=poisson_family, t=tau)
        expected = sum(
            math.exp(-tau + n * math.log(tau) - math.lgamma(n + 1))
            * math.exp((n - 1) * math.log(y) - y - math.lgamma(n))
            for n in range(1, 80)
        )
        assert classical_pdf(law, y) == pytest.approx(expected, rel=1e-9)

    def test_zero_rejected(self, gamma_family):
        """The density is not evaluated at 0."""
        with pytest.raises(DomainError, match="y > 0"):
            classical_pdf(ClassicalLaw(family=gamma_family, t=1.0), 0.0)


class TestLaplaceResidual:
    """The tabulated law reproduces exp(-t f(z))."""

    @pytest.mark.parametrize(
        "family",
        [Family.gamma(), Family.poisson_exp(), Family.inverse_gaussian(), Family.free_stable(0.5)],
        ids=lambda f: f.label,
    )
    @pytest.mark.parametrize("t, z", [(0.5, 1.0), (1.5, 2.0)])
    def test_residual_small(self, family, t, z):
        """Quadrature of the density plus atoms."""
        assert laplace_residual(ClassicalLaw(family=family, t=t), z) < 1e-7

    def test_nonpositive_z(self, gamma_family):
        """z must be positive."""
        with pytest.raises(DomainError):
            laplace_residual(ClassicalLaw(family=gamma_family, t=1.0), 0.0)


class TestStableSeriesFloor:
    """Tests for stable_series_floor."""

    def test_floor_is_accepted(self, half_stable_family):
        """The series works at the floor and fails well below it."""
        law = ClassicalLaw(family=half_stable_family, t=1.0)
        floor = stable_series_floor(law, 1.0)
        assert 0.0 < floor < 1.0
        classical_cdf(law, floor)
        with pytest.raises(SeriesDivergenceError):
            classical_cdf(law, floor / 4.0)

    def test_rejected_at_upper_end(self, half_stable_family):
        """No floor exists when y_hi itself is rejected."""
        law = ClassicalLaw(family=half_stable_family, t=1.0)
        with pytest.raises(SeriesDivergenceError):
            stable_series_floor(law, 1e-6)


class TestSampleIncrements:
    """Tests for the exact increment samplers."""

    N = 100_000

    @pytest.mark.parametrize(
        "family",
        [Family.gamma(), Family.poisson_exp(), Family.inverse_gaussian()],
        ids=lambda f: f.label,
    )
    def test_mean(self, family, rng):
        """E[Y_dt] = dt for these three families."""
        draws = sample_increments(family, 0.7, rng, size=self.N)
        stderr = draws.std() / math.sqrt(self.N)
        assert abs(draws.mean() - 0.7) < 5.0 * stderr

    def test_stable_laplace(self, half_stable_family, rng):
        """E[exp(-Y_t)] = exp(-t) for f(z) = sqrt(z)."""
        draws = np.exp(-sample_increments(half_stable_family, 1.0, rng, size=self.N))
        stderr = draws.std() / math.sqrt(self.N)
        assert abs(draws.mean() - math.exp(-1.0)) < 5.0 * stderr

    def test_poisson_zero_fraction(self, poisson_family, rng):
        """P(Y_t = 0) = e^{-t}."""
        draws = sample_increments(poisson_family, 1.0, rng, size=self.N)
        p = math.exp(-1.0)
        assert abs(np.mean(draws == 0.0) - p) < 5.0 * math.sqrt(p * (1 - p) / self.N)

    def test_scalar(self, gamma_family, rng):
        """sample_increment returns a float."""
        assert isinstance(sample_increment(gamma_family, 1.0, rng), float)

    def test_nonpositive_dt(self, gamma_family, rng):
        """dt must be positive."""
        with pytest.raises(DomainError):
            sample_increments(gamma_family, 0.0, rng)

    def test_custom_unsupported(self, custom_poisson_family, rng):
        """Custom specs have no sampler."""
        with pytest.raises(UnsupportedFamilyError):
            sample_increments(custom_poisson_family, 1.0, rng)


def poisson_exp_cdf_oracle(tau, y):
    """Poisson(tau) mixture of Erlang CDFs, weights from lgamma."""
    n_lo = max(1, int(tau - 20.0 * math.sqrt(tau)))
    n_hi = int(tau + 20.0 * math.sqrt(tau)) + 1
    total = math.exp(-tau) if n_lo == 1 else 0.0
    for n in range(n_lo, n_hi):
        total += math.exp(n * math.log(tau) - tau - math.lgamma(n + 1.0)) * sp.gammainc(n, y)
    return total


class TestCdfDensityConsistency:
    """The density is the derivative of the CDF."""

    @pytest.mark.parametrize("t", [0.5, 1.0, 2.0])
    @pytest.mark.parametrize("y", [0.5, 1.0, 2.0, 5.0])
    @pytest.mark.parametrize(
        "family", [Family.gamma(), Family.poisson_exp(), Family.inverse_gaussian()], ids=lambda f: f.label
    )
    def test_central_difference(self, family, t, y):
        """(F(y + h) - F(y - h)) / 2h against the density."""
        law = ClassicalLaw(family=family, t=t)
        h = 1e-4 * y
        slope = (classical_cdf(law, y + h) - classical_cdf(law, y - h)) / (2.0 * h)
        assert slope == pytest.approx(classical_pdf(law, y), rel=1e-5)

    @pytest.mark.parametrize("t1, t2", [(1.0, 1.0), (1.5, 1.0)])
    @pytest.mark.parametrize("y", [0.5, 1.0, 2.5, 5.0])
    def test_gamma_semigroup(self, t1, t2, y):
        """Convolving the t1 and t2 densities gives the t1 + t2 density."""
        first = ClassicalLaw(family=Family.gamma(), t=t1)
        second = ClassicalLaw(family=Family.gamma(), t=t2)
        inner = 1e-12 * y
        convolution, _ = integrate.quad(
            lambda u: classical_pdf(first, u) * classical_pdf(second, y - u), inner, y - inner, epsabs=1e-12
        )
        expected = classical_pdf(ClassicalLaw(family=Family.gamma(), t=t1 + t2), y)
        assert convolution == pytest.approx(expected, abs=1e-6)

    @pytest.mark.parametrize("alpha", [0.5, 0.3])
    @pytest.mark.parametrize("w1, w2", [(1.0, 2.0), (2.0, 8.0), (4.0, 40.0)])
    def test_stable_increments(self, alpha, w1, w2):
        """Density mass between w1 and w2 matches the CDF difference."""
        law = ClassicalLaw(family=Family.free_stable(alpha), t=1.0)
        mass, _ = integrate.quad(lambda y: stable_pdf_series(law, y), w1, w2, epsabs=1e-13, epsrel=1e-12)
        assert mass == pytest.approx(stable_cdf_series(law, w2) - stable_cdf_series(law, w1), abs=1e-10)

    @pytest.mark.parametrize("w", [1.0, 2.0, 4.0])
    def test_stable_tail(self, half_stable_family, w):
        """F(w) = 1 - integral of the density over [w, inf)."""
        law = ClassicalLaw(family=half_stable_family, t=1.0)
        tail, _ = integrate.quad(lambda y: stable_pdf_series(law, y), w, math.inf, epsabs=1e-12, limit=200)
        assert stable_cdf_series(law, w) == pytest.approx(1.0 - tail, abs=1e-8)


class TestPoissonLargeTime:
    """The compound Poisson CDF for large t."""

    def test_matches_mixture(self):
        """t = 1000 at its mean."""
        law = ClassicalLaw(family=Family.poisson_exp(), t=1000.0)
        value = classical_cdf(law, 1000.0)
        assert 0.3 < value < 0.7
        assert value == pytest.approx(poisson_exp_cdf_oracle(1000.0, 1000.0), rel=1e-8)

    @pytest.mark.parametrize("t", [800.0, 2000.0])
    def test_no_underflow(self, t):
        """e^{-t} underflows beyond 745; the CDF near the mean does not."""
        law = ClassicalLaw(family=Family.poisson_exp(), t=t)
        value = classical_cdf(law, t)
        assert value > 0.3
        assert value == pytest.approx(poisson_exp_cdf_oracle(t, t), rel=1e-8)
