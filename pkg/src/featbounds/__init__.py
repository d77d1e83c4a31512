"""Performance bounds and pairwise significance testing for local feature detectors."""

from .bounds import BoundsCurves, compute_bounds, max_curve, median_curve, min_curve, region_areas
from .detectors import (
    DogParams,
    HarrisParams,
    Keypoint,
    KeypointSet,
    detect_dog,
    detect_harris,
    ingest_keypoints,
    write_csv_keypoints,
)
from .geometry import Homography, PlanarPoint, common_region_contains, project_point
from .imaging import (
    Image,
    SceneSequence,
    TransformSpec,
    blur_transform,
    brightness_transform,
    jpeg_transform,
    load_image,
    save_image,
    synthesize_sequence,
    textured_scene,
)
from .mcnemar import McNemarCounts, ZScoreGrid, mcnemar_z, outcome, z_grid, z_to_p
from .repeatability import MatchResult, RepeatabilityMatrix, build_matrix, match_keypoints, repeatability

__version__ = "0.1.0"
