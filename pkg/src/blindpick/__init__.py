"""Tactile-only bin picking: simulator, localization, interaction, retrieval."""

__version__ = "0.1.0"
