import logging
import os


class Settings:
    """Laboratory settings loaded from environment variables."""

    # Output
    OUTPUT_DIR: str = os.getenv("ZAKHAROV_OUTPUT_DIR", "results")
    SCHEMA_VERSION: str = "1.0"

    # Logging
    LOG_LEVEL: str = os.getenv("ZAKHAROV_LOG_LEVEL", "INFO").upper()

    # Thread pool width for per-block and per-k work
    WORKERS: int = int(os.getenv("ZAKHAROV_WORKERS", "1"))

    # HTTP surface
    PORT: int = int(os.getenv("PORT", "8000"))
    HOST: str = os.getenv("HOST", "0.0.0.0")

    @classmethod
    def validate(cls):
        """Validate environment-derived settings."""
        if cls.WORKERS < 1:
            raise ValueError("ZAKHAROV_WORKERS must be a positive integer")
        # getLevelNamesMapping() is 3.11+; it returns a copy of _nameToLevel
        names = getattr(logging, "getLevelNamesMapping", lambda: dict(logging._nameToLevel))()
        if cls.LOG_LEVEL not in names:
            raise ValueError(f"Unknown ZAKHAROV_LOG_LEVEL: {cls.LOG_LEVEL}")


def configure_logging(level: str | None = None):
    """Install the root logging configuration once per process."""
    logging.basicConfig(
        level=level or settings.LOG_LEVEL,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


settings = Settings()
