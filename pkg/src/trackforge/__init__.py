"""trackforge: synchronized multi-camera capture simulation, pose-projection
auto-annotation, and multi-object tracking evaluation."""

__version__ = "0.1.0"

from trackforge.annotation import (
    SENTINEL_BBOX,
    AnnotationRow,
    BBox,
    EntityModel,
    annotate_frame,
    fit_bbox,
    project_model,
)
from trackforge.camera import (
    BEHIND_CAMERA,
    CameraRig,
    Intrinsics,
    RigCamera,
    demo_rig,
    distort,
    load_rig,
    project_point,
    save_rig,
)
from trackforge.errors import (
    ParseError,
    ProtocolError,
    TrackforgeError,
    UndefinedMetricError,
    ValidationError,
)
from trackforge.geometry import (
    EulerXYZ,
    Pose,
    compose,
    euler_to_rotation,
    inverse,
    relative_pose,
    rotation_to_euler,
)
from trackforge.metrics import (
    FrameTally,
    MetricReport,
    TrackEntry,
    TrackSequence,
    detection_ap_ar,
    evaluate,
    hota_alpha,
    hota_integrated,
    idf1,
    iou,
    match_frame,
    mota,
)
from trackforge.scenario import (
    CorruptionLedger,
    CorruptionSpec,
    Scenario,
    ScenarioSpec,
    corrupt_tracks,
    generate_scenario,
)
from trackforge.sync import (
    CameraLatency,
    ImageEvent,
    LatencyDist,
    PoseSample,
    achieved_fps,
    filter_invalid,
    match_pose,
    match_streams,
    simulate_capture,
)

__all__ = [
    "__version__",
    "AnnotationRow", "BBox", "EntityModel", "SENTINEL_BBOX",
    "annotate_frame", "fit_bbox", "project_model",
    "BEHIND_CAMERA", "CameraRig", "Intrinsics", "RigCamera",
    "demo_rig", "distort", "load_rig", "project_point", "save_rig",
    "ParseError", "ProtocolError", "TrackforgeError",
    "UndefinedMetricError", "ValidationError",
    "EulerXYZ", "Pose", "compose", "euler_to_rotation", "inverse",
    "relative_pose", "rotation_to_euler",
    "FrameTally", "MetricReport", "TrackEntry", "TrackSequence",
    "detection_ap_ar", "evaluate", "hota_alpha", "hota_integrated",
    "idf1", "iou", "match_frame", "mota",
    "CorruptionLedger", "CorruptionSpec", "Scenario", "ScenarioSpec",
    "corrupt_tracks", "generate_scenario",
    "CameraLatency", "ImageEvent", "LatencyDist", "PoseSample",
    "achieved_fps", "filter_invalid", "match_pose", "match_streams",
    "simulate_capture",
]
