from .compositing import composite_frame, directional_box_blur
from .fields import simulate_ambient_smoke, simulate_diffusion_smoke
from .clip import SyntheticClip, generate_clip, make_test_pattern_clip, read_clip_dir, write_clip_dir

__all__ = [
    "composite_frame",
    "directional_box_blur",
    "simulate_ambient_smoke",
    "simulate_diffusion_smoke",
    "SyntheticClip",
    "generate_clip",
    "make_test_pattern_clip",
    "read_clip_dir",
    "write_clip_dir",
]
