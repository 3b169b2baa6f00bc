"""tactipose: 6D rigid-object pose estimation from planar tactile sensors.

The pipeline filters candidate contact configurations on the object
surface with a latent tactile compatibility test, prunes them against the
sensors' pairwise world distances, refines each survivor with gradient
descent on SE(3), and ranks results by alignment loss plus object-sensor
penetration depth.
"""

__version__ = "0.1.0"

from .contacts import classify_patch, classify_surface_point
from .database import LatentDatabase, build_database, load_ldb, save_ldb, select_compatible
from .encoder import (
    AnalyticEncoder,
    EncoderWeights,
    ExternalEncoder,
    LatentFeature,
    auto_delta_h,
    compatible,
    encode_analytic,
    encode_external,
    load_encw,
    save_encw,
)
from .experiment import (
    EstimateResult,
    EvalReport,
    ExperimentConfig,
    RankingSettings,
    SelectionSettings,
    estimate_pose,
    run_experiment,
)
from .mesh import SurfaceSample, TriMesh, load_mesh, load_obj, load_ply, sample_surface
from .metrics import adi_auc, adi_distance, contact_accuracy, model_points, positional_error
from .optimizer import (
    GdConfig,
    PoseHypothesis,
    gradient,
    init_hypotheses,
    loss_of,
    optimize,
    optimize_tuples,
)
from .primitives import primitive_suite
from .ranking import RankedPose, penetration_depth, rank
from .render import Superquadric, generate_training_set, render_patch, render_superquadric_patch
from .scenes import Scene, make_scene
from .se3 import Pose, exp_map, sample_rotation_uniform, twist_of
from .selection import (
    CandidateTuple,
    SensorObservation,
    TupleStream,
    filter_by_distance,
    make_tuples,
)
from .sensor import (
    SensorModel,
    SensorPlacement,
    TactilePatch,
    load_tpat,
    place_sensor_at_sample,
    save_tpat,
)
from .spatial import raycast, raycast_batch, signed_distance, signed_distance_batch

__all__ = [name for name in dir() if not name.startswith("_")]
