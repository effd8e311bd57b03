from tfw.core.gradcheck import GradCheckReport, grad_check, numeric_grad, rel_error
from tfw.core.gradsuite import CASES, SuiteResult, run_suite
from tfw.core.layers import (
    Conv2d,
    Dense,
    Dropout,
    GlobalAvgPool,
    GRUCell,
    Layer,
    MaxPool2d,
    MeanPool,
    MultiHeadSelfAttention,
    ReLU,
    SoftmaxCrossEntropy,
    sigmoid,
    softmax,
)
from tfw.core.optim import LrSchedule, adam_step, lr_at, sgd_momentum_step
from tfw.core.params import (
    Param,
    ParamStore,
    count_macs,
    load_params,
    read_params,
    record_macs,
    save_params,
)
