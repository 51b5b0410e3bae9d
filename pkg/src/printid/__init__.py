"""printid: classify photographs of 3D-printed objects against an arbitrary
set of CAD models without retraining.

The pipeline renders each CAD model from controlled viewpoints, averages
encoder features into per-object prototypes, and classifies query images by
cosine similarity. A one-time contrastive fine-tuning stage with
rotation-aware positive pairs adapts an encoder to the rendered-object
domain.
"""

from . import errors
from .classify import (
    AGGREGATION_METHODS,
    PredictionRanking,
    aggregate,
    classify_image,
    classify_images,
    classify_multiview,
)
from .contrastive import (
    AugmentFlags,
    PairBatch,
    TrainConfig,
    TrainingLog,
    info_nce_loss,
    sample_pair_batch,
    train,
)
from .encoders import (
    Encoder,
    PixelEncoder,
    PretrainedEncoder,
    SmallConvEncoder,
    cosine_similarity,
    cosine_similarity_matrix,
    encode,
    load_checkpoint,
    probe_batch,
    save_checkpoint,
)
from .evaluation import (
    EvalReport,
    LabeledQuery,
    ManifestRecord,
    SweepTable,
    emit_report,
    evaluate,
    ingest_dataset,
    load_manifest,
    meshes_from_manifest,
    mine_similar_pairs,
    per_object_delta,
    queries_from_manifest,
    save_manifest,
    sweep_multiview,
    sweep_viewpoints,
    unique_pair_objects,
)
from .geometry import (
    Mesh,
    ViewGrid,
    ViewpointSpec,
    expand_grid,
    load_mesh,
    neighbor_view,
    normalize_mesh,
    save_stl,
)
from .prototypes import (
    ClassificationSet,
    Prototype,
    SamplingStrategy,
    build_prototype,
    build_set,
    load_set,
    sample_viewpoints,
    save_set,
)
from .renderer import (
    RenderConfig,
    Rendering,
    composite_background,
    render,
    render_batch,
    save_rendering,
)
from .sandbox import make_primitive, primitive_catalog, procedural_meshes, sandbox_meshes

__version__ = "0.1.0"
