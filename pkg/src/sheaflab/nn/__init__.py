from .autograd import Tensor, backward, parameter
from .models import ModelConfig, SheafNetwork
from .optim import AdamState, adam_step

__all__ = ["Tensor", "backward", "parameter", "ModelConfig", "SheafNetwork", "AdamState", "adam_step"]
