"""Privacy-aware joint source-channel coding over binary symmetric wiretap channels."""

from .channel import BandSpec, ChannelSpec
from .models import ModelDims
from .source import DiscreteSystem, GlyphSample
from .training import TrainConfig

__version__ = "0.1.0"

__all__ = [
    "BandSpec",
    "ChannelSpec",
    "DiscreteSystem",
    "GlyphSample",
    "ModelDims",
    "TrainConfig",
    "__version__",
]
