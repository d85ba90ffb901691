"""Online 3D object proposals from RGB-D video.

Per-frame 2D objectness proposals are fused with depth and camera poses into
a global weighted 3D heatmap; supporting planes are detected and suppressed;
ranked points are clustered into gravity-aligned 3D bounding boxes, with the
full evaluation toolkit alongside.
"""

from .config import ConfigError, PipelineConfig
from .dataio import FrameRecord, SequenceReader, read_manifest
from .fusion import GlobalHeatmap3D
from .geometry import Intrinsics, Pose
from .pipeline import OnlinePipeline, PipelineResult, run_pipeline
from .plane import Plane, PlaneTracker
from .proposals2d import Proposal2D
from .proposals3d import Box3D, RankedCloud
from .synth import ObjectSpec, SceneSpec, tabletop_scene

__version__ = "0.1.0"

__all__ = [
    "Box3D",
    "ConfigError",
    "FrameRecord",
    "GlobalHeatmap3D",
    "Intrinsics",
    "ObjectSpec",
    "OnlinePipeline",
    "PipelineConfig",
    "PipelineResult",
    "Plane",
    "PlaneTracker",
    "Pose",
    "Proposal2D",
    "RankedCloud",
    "SceneSpec",
    "SequenceReader",
    "read_manifest",
    "run_pipeline",
    "tabletop_scene",
    "__version__",
]
