"""Branding configuration for RLCk MOR."""


class Branding:
    """Application identity used in reports and exported file headers."""

    APP_NAME = "RLCk MOR"
    APP_ID = "rlck-mor"
    APP_VERSION = "1.0.0"

    @classmethod
    def get_banner(cls) -> str:
        """One-line identification written into exported files."""
        return f"{cls.APP_NAME} v{cls.APP_VERSION}"

    @classmethod
    def get_description(cls) -> str:
        """Text shown by ``main.py --help``."""
        return (
            f"{cls.APP_NAME}: balanced-truncation model order reduction of "
            "multi-port RLCk circuits (dense reference and extended Krylov "
            "low-rank method)."
        )
