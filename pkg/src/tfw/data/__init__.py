from tfw.data.augment import (
    AugmentSpec,
    affine_frames,
    augment_sequence,
    auto_contrast,
    resize_bilinear,
    resize_then_crop,
    rotate,
)
from tfw.data.folds import FoldPlan, check_no_leakage, patient_holdout, patient_kfold
from tfw.data.index import (
    NED12,
    NED16,
    PRESETS,
    ClipRecord,
    DatasetIndex,
    load_index,
    read_frame,
    write_manifest,
)
from tfw.data.sampling import FrameSequence, load_sequence, sample_consecutive, sample_indices, sample_spaced
from tfw.data.synthetic import SyntheticSpec, gen_synthetic, render_frame, template_oracle
