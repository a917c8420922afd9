"""Toolkit defaults, overridable through the environment or a .env file."""

from typing import List

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Defaults for tests, forests, scenarios and studies."""
    # .env first, then the process environment; unknown keys are ignored
    model_config = SettingsConfigDict(env_file='.env', env_file_encoding='utf-8', extra='ignore')

    # --- Reproducibility / Parallelism ---
    DEFAULT_SEED: int = 1
    DEFAULT_JOBS: int = 1

    # --- Test Defaults ---
    DEFAULT_ALPHA: float = 0.05
    ALPHA_GRID: List[float] = [0.01, 0.05, 0.10]
    DEFAULT_PERMUTATIONS: int = 100      # K for the permutation (hypoRF) test
    DEFAULT_MMD_PERMUTATIONS: int = 200  # B for MMDboot
    USTAT_PARTITIONS: int = 2            # m disjoint subsets per replicate
    USTAT_REPLICATES: int = 50           # K partitions for the U-statistic test

    # --- Random Forest ---
    NUM_TREES: int = 600
    MIN_NODE_SIZE: int = 4

    # --- Scenario Construction ---
    BLOB_SAMPLE_CAP: int = 10_000
    CORRELATION_MAX_RETRIES: int = 1000
    SUBSET_MAX_RETRIES: int = 100

    # --- Study Harness ---
    FAILURE_ABORT_FRACTION: float = 0.10

    # Desk scale keeps a full grid within a workstation afternoon
    DESK_N: int = 100
    DESK_P: int = 20
    DESK_S: int = 100
    DESK_TREES: int = 300

    PAPER_N: int = 300
    PAPER_P: int = 200
    PAPER_S: int = 200
    PAPER_TREES: int = 600

# Shared instance
settings = Settings()
