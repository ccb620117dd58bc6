"""
Minimal numpy neural kit: parameters, tape-based reverse mode, layers,
losses, Adam, gradient checking and JCL1 checkpoints.

Usage:
    from joint_cache_lab.nnkit import ParamStore, Tape, backward, dense, sigmoid_bce, adam_step

    store = ParamStore()
    store.add("w", np.zeros((4, 1)))
    store.add("b", np.zeros(1))
    tape = Tape()
    loss = sigmoid_bce(tape, dense(tape, tape.constant(x), tape.param(store, "w"),
                                   tape.param(store, "b")), y)
    backward(tape, loss)
    adam_step(store, lr=1e-3)
"""

from joint_cache_lab.nnkit.checkpoint import MAGIC, VERSION, load_checkpoint, save_checkpoint
from joint_cache_lab.nnkit.gradcheck import (
    GradCheckReport,
    grad_check,
    grad_check_report,
    numeric_derivative,
    relative_error,
)
from joint_cache_lab.nnkit.layers import (
    LstmLayerParams,
    concat,
    dense,
    embedding,
    embedding_forward,
    init_lstm,
    last_step,
    lstm_forward,
    lstm_layer,
    lstm_param_names,
    lstm_stack,
    lstm_step_backward,
    lstm_step_forward,
    reshape,
    sigmoid,
    tanh,
)
from joint_cache_lab.nnkit.losses import (
    ContrastiveConfig,
    bce_loss,
    contrastive_loss,
    cosine_similarity,
    info_nce,
    log_softmax,
    sigmoid_bce,
    softmax,
    softmax_xent,
    softmax_xent_op,
    weighted_sum,
)
from joint_cache_lab.nnkit.optim import AdamConfig, adam_step, adam_step_with
from joint_cache_lab.nnkit.params import ParamStore
from joint_cache_lab.nnkit.tape import Node, Tape, backward


__all__ = [
    "MAGIC",
    "VERSION",
    "load_checkpoint",
    "save_checkpoint",
    "GradCheckReport",
    "grad_check",
    "grad_check_report",
    "numeric_derivative",
    "relative_error",
    "LstmLayerParams",
    "concat",
    "dense",
    "embedding",
    "embedding_forward",
    "init_lstm",
    "last_step",
    "lstm_forward",
    "lstm_layer",
    "lstm_param_names",
    "lstm_stack",
    "lstm_step_backward",
    "lstm_step_forward",
    "reshape",
    "sigmoid",
    "tanh",
    "ContrastiveConfig",
    "bce_loss",
    "contrastive_loss",
    "cosine_similarity",
    "info_nce",
    "log_softmax",
    "sigmoid_bce",
    "softmax",
    "softmax_xent",
    "softmax_xent_op",
    "weighted_sum",
    "AdamConfig",
    "adam_step",
    "adam_step_with",
    "ParamStore",
    "Node",
    "Tape",
    "backward",
]
