from .encoder import FeaturePyramid, build_encoder
from .network import DesmokeNet

__all__ = ["FeaturePyramid", "build_encoder", "DesmokeNet"]
