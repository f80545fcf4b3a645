from pydantic_settings import BaseSettings, SettingsConfigDict
from typing import Optional


class Settings(BaseSettings):
    # Application Configuration
    APP_NAME: str = "capflux"
    APP_VERSION: str = "1.0.0"
    DEBUG: bool = False
    LOG_LEVEL: str = "INFO"
    LOGGING_CONFIG: str = "config/logging.yaml"
    LOG_DIR: str = "logs"

    # Scenario Configuration
    DEFAULT_CONFIG: str = "config/default.yaml"
    OUTPUT_ROOT: str = "runs"

    # Monitoring Configuration
    SENTRY_DSN: Optional[str] = None

    # Sweep workers (Celery). The in-memory broker with eager execution runs
    # sweep members in-process; point the URLs at a real broker to fan out.
    CELERY_BROKER_URL: str = "memory://"
    CELERY_RESULT_BACKEND: str = "cache+memory://"
    CELERY_TASK_ALWAYS_EAGER: bool = True
    SWEEP_MAX_WORKERS: int = 1

    model_config = SettingsConfigDict(env_file=".env", case_sensitive=True, extra="ignore")


settings = Settings()
