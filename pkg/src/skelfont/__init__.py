"""Skeleton-guided unpaired font-to-font translation."""

from skelfont.imgcore import (
    BinaryGrid,
    RasterImage,
    binarize,
    decode_png,
    encode_png,
    resize,
    to_gray,
)
from skelfont.skeleton import PatchStats, deletable, patch_stats, ske, thin
from skelfont.expansion import ExpandedInput, expand, to_model_input
from skelfont.autodiff import AdamState, Tensor, adam_step, grad_check
from skelfont.models import (
    ModelSpec,
    build_discriminator,
    build_generator,
    desk_spec,
    init_params,
    paper_spec,
)
from skelfont.losses import (
    LossBreakdown,
    LossWeights,
    adv_loss_d,
    adv_loss_g,
    cycle_loss,
    ske_loss,
    total_loss,
)
from skelfont.trainer import (
    ModelBundle,
    TrainConfig,
    diversity_diagnostic,
    generate,
    train,
    train_step,
)
from skelfont.metrics import (
    FeatureStats,
    MetricReport,
    extract_features,
    feature_stats,
    fid,
    mse,
    psnr,
    ssim,
)
from skelfont.data import (
    Manifest,
    UnpairedBatch,
    build_manifest,
    load_batch,
    synth_fonts,
)

__version__ = "0.1.0"
