"""Learned sparse channel estimation and quantized hybrid precoding for
multi-user mmWave massive MIMO, with greedy and search baselines."""

from .channel import SystemConfig, build_dictionary, sample_channels

__version__ = "0.1.0"

__all__ = ["SystemConfig", "build_dictionary", "sample_channels", "__version__"]
