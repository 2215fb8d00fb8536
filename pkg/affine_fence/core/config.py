from pydantic_settings import BaseSettings, SettingsConfigDict


class AppConfig(BaseSettings):
    seed: int = 0

    log_dir: str = "logs"
    log_level: str = "INFO"
    log_to_stderr: bool = True

    qp_tolerance: float = 1e-10
    qp_max_iter: int = 100_000

    jobs: int = 1
    verify_samples: int = 10_000

    model_config = SettingsConfigDict(
        env_file=".env", env_prefix="AFFINE_FENCE_", extra="ignore"
    )


config = AppConfig()
