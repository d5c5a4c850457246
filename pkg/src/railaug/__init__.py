"""Railway LiDAR augmentation and range-stratified segmentation evaluation."""

from .dataset import DatasetManifest, FrameRef, SensorNorm, fit_sensor_norm, normalize_intensity
from .frame import (
    BACKGROUND,
    DEFAULT_PERSON_CLASS,
    DEFAULT_TRACK_CLASS,
    NO_INSTANCE,
    UNLABELED,
    Aabb2D,
    ClassMap,
    Instance,
    LabeledFrame,
    MappingError,
    apply_class_map,
    extract_instances,
    footprint,
    planar_distance,
    planar_distances,
)
from .metrics import (
    ConfusionMatrix,
    GridSpec,
    RangeBinning,
    RecallGrid,
    RIoUReport,
    SegmentationEvaluator,
    accumulate,
    iou_per_class,
    mean_riou,
    miou,
    range_iou,
    recall_diff,
    recall_grid,
)
from .paste import (
    DensityProfile,
    InstanceRegistry,
    PasteParams,
    build_density_profile,
    build_registry,
    estimate_ground_height,
    flip_instance,
    paste_instances,
    rotate_instance,
    shift_x_with_downsample,
    shift_y,
    shift_z_to_ground,
)
from .pcd import PcdParseError, read_frame, write_frame
from .pipeline import PipelineConfig, inflate_dataset, load_config, online_augment_hook
from .rng import derive_rng
from .sparsify import SparsifyParams, sparsify_frame, sparsify_instance, window_count

__version__ = "0.1.0"
