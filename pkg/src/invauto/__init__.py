"""Invertible autoencoders with tied weights, orthonormality diagnostics,
and a cycle-consistent domain translator."""

from .tensor import (Parameter, Tensor, conv2d, conv2d_transposed, grad_check,
                     matmul, set_default_dtype, using_dtype)
from .layers import (BiasLayer, InvLeakyReLU, InvResBlock, Network, Stack,
                     TiedConv, TiedLinear, build_inverted_stack, parameter_count)
from .diag import (identity_deviation, materialize_decoder, materialize_encoder,
                   materialize_stack, row_cosine_stats, row_norm_stats,
                   toeplitz_of_conv)
from .optim import Adam
from .training import (TrainConfig, adversarial_loss, cycle_loss, total_loss,
                       train_reconstruction, train_translator)
from .translator import (GeneratorConfig, TranslatorModel, build_translator,
                         evaluate_autoencoder_proxy, evaluate_l1_paired, translate)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
