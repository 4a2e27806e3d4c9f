"""Multi-dataset image segmentation toolkit.

Library for embedding-based classification over mixed label spaces,
set-based matching losses, overlap-aware panoptic fusion, a full metric
suite including panoptic instance quality, and mixed-label-space benchmark
construction.
"""

from .maskcore import (
    BinaryMask,
    LabelSpace,
    SegCategory,
    SoftMask,
    binarize_soft_mask,
    contains_with_slack,
    decode_rle,
    encode_rle,
    mask_iou,
)
from .semantics import (
    ClassEmbeddingTable,
    Prediction,
    QuerySet,
    StubDecoder,
    class_probabilities,
    compose_queries,
    multi_pass_inference,
    select_label_spaces,
)
from .matching import (
    Assignment,
    GroundTruthSegment,
    LossBreakdown,
    hungarian_assign,
    pair_cost,
    set_loss,
)
from .postproc import (
    FusionConfig,
    PanopticMap,
    ScoredMask,
    SegmentInfo,
    esf_omi_fusion,
    fuse_predictions,
    mask_nms,
    original_fusion,
    score_and_label,
)
from .metrics import (
    DetectionRecord,
    PIQReport,
    PQStats,
    benchmark_average,
    instance_ap,
    panoptic_quality,
    piq_score,
    semantic_metrics,
)
from .benchgen import (
    MixedDataset,
    PartWholeSpec,
    build_mixed_datasets,
    builtin_benchmark_labelspaces,
    equal_frequency_sampler,
    synthesize_super_mask,
    validate_mixed_labelspace,
)

__version__ = "0.1.0"
