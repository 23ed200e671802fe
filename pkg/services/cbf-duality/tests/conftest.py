"""Shared test fixtures for cbf-duality tests."""

import pytest

from cbf_duality.cbf import CbfSpec, Family
from cbf_duality.kendall import make_generator


@pytest.fixture
def gamma_family():
    """f(z) = log(1 + z)."""
    return Family.gamma()


@pytest.fixture
def poisson_family():
    """f(z) = z / (z + 1)."""
    return Family.poisson_exp()


@pytest.fixture
def inverse_gaussian_family():
    """f(z) = sqrt(1 + 2z), killed at rate 1."""
    return Family.inverse_gaussian()


@pytest.fixture
def half_stable_family():
    """f(z) = z^(1/2)."""
    return Family.free_stable(0.5)


@pytest.fixture
def poisson_spec():
    """Pick representation of z / (z + 1): a = 1/2, rho = delta_1 / 2."""
    return CbfSpec(a=0.5, atoms=((1.0, 0.5),))


@pytest.fixture
def custom_poisson_family(poisson_spec):
    """poisson-exp written as a custom spec."""
    return Family.custom(poisson_spec)


@pytest.fixture
def spec_file(tmp_path, poisson_spec):
    """poisson_spec written to a JSON file."""
    path = tmp_path / "spec.json"
    path.write_text(poisson_spec.model_dump_json())
    return path


@pytest.fixture
def rng():
    """Deterministic Philox generator."""
    return make_generator(20240601, 0)


@pytest.fixture
def env_vars(monkeypatch):
    """Set CBF_* environment variables for the duration of a test."""

    def _set_env(**kwargs):
        for key, value in kwargs.items():
            monkeypatch.setenv(key, value)

    return _set_env
