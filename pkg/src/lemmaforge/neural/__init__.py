"""Minimal float64 neural toolkit with exact backward passes."""

from .gradcheck import GradCheckReport, grad_check
from .layers import (
    LstmCell,
    Parameter,
    attention_backward,
    bilstm_backward,
    bilstm_encode,
    dropout_mask,
    embed,
    embed_backward,
    linear,
    linear_backward,
    lstm_step,
    lstm_step_backward,
    soft_dot_attention,
    softmax_xent,
)
from .optim import Adam, adam_step, clip_grad_norm
from .serialize import ParamFormatError, pack_params, unpack_params
