from .io import CorrespondenceFile, format_scene, load_correspondences, load_scene, parse_scene, save_scene
from .contours import ContourCases, occluding_contour_cases
from .oracles import exhaustive_search, oracle_exhaustive_pose, oracle_level_set_distance
from .scene import SceneConfig, SyntheticScene, generate, random_pose, render_depth1, render_depth2
from .surfaces import FrontoPlane, Ramp, SmoothHeightfield, Surface, TwoPlanes

__all__ = [
    "ContourCases", "CorrespondenceFile", "FrontoPlane", "Ramp", "SceneConfig", "SmoothHeightfield", "Surface",
    "SyntheticScene", "TwoPlanes", "exhaustive_search", "format_scene", "generate",
    "load_correspondences", "load_scene", "occluding_contour_cases", "oracle_exhaustive_pose", "oracle_level_set_distance",
    "parse_scene", "random_pose", "render_depth1", "render_depth2", "save_scene",
]
