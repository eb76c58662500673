"""Salt-and-pepper denoising with patch clustering and a switching non-local filter."""

from .pipeline import DenoiseConfig, RunStats, default_config_for_density, denoise

__all__ = ["DenoiseConfig", "RunStats", "default_config_for_density", "denoise"]
__version__ = "0.1.0"
