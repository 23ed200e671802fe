"""Configuration for the cbf-duality toolkit."""

from pathlib import Path
from typing import Any

import yaml
from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict

DEFAULT_SEED = 0x5EED_F00D


class Settings(BaseSettings):
    """Numerical defaults, overridable through CBF_* environment variables."""

    model_config = SettingsConfigDict(
        env_file="services/cbf-duality/settings.env",
        env_file_encoding="utf-8",
        env_prefix="CBF_",
    )

    log_level: str = "INFO"

    # Monte Carlo
    seed: int = Field(default=DEFAULT_SEED, ge=0, lt=2**64)
    n_paths: int = Field(default=100_000, ge=0)
    mc_batch_size: int = Field(default=5_000, gt=0)
    grid_step: float = Field(default=1e-3, gt=0)
    renewal_bin_width: float = Field(default=0.1, gt=0)
    threads: int | None = Field(default=None, gt=0)

    # Stable series truncation
    series_max_terms: int = Field(default=400, gt=0, le=400)
    series_tail_tol: float = Field(default=1e-15, ge=1e-15)
    series_max_cancellation: float = Field(default=1e6, gt=1)

    # Newton continuation
    continuation_waypoints: int = Field(default=20, gt=1)
    continuation_refinements: int = Field(default=3, ge=0)
    newton_tol: float = Field(default=1e-13, gt=0)
    newton_max_iter: int = Field(default=60, gt=0)

    # Stieltjes inversion
    stieltjes_ladder: tuple[float, float, float] = (1e-2, 1e-3, 1e-4)
    density_threshold: float = Field(default=1e-8, gt=0)

    # Quadrature
    quad_epsabs: float = Field(default=1e-12, gt=0)
    quad_epsrel: float = Field(default=1e-10, gt=0)
    quad_limit: int = Field(default=400, gt=0)

    # Acceptance tolerances
    tolerance_closed_form: float = Field(default=1e-6, gt=0)
    tolerance_free_stable: float = Field(default=1e-4, gt=0)
    tolerance_corollary: float = Field(default=1e-5, gt=0)
    min_testable_fraction: float = Field(default=0.8, ge=0, le=1)


def load_grid_presets(config_path: str | Path = "grids.yaml") -> dict[str, Any]:
    """Load named grid presets from a YAML file.

    Args:
        config_path: Path to the YAML file with a top-level ``presets`` mapping.

    Returns:
        Dictionary mapping preset name to its grid description.
    """
    # Try relative to service directory first
    service_dir = Path(__file__).parent.parent.parent
    full_path = service_dir / config_path

    if not full_path.exists():
        full_path = Path(config_path)

    with open(full_path) as f:
        return yaml.safe_load(f)["presets"]


config = Settings()
