"""Minimal numpy network engine used by the estimator and precoder networks."""

from .layers import LayerSpec
from .network import Network, grad_check
from .optim import Adam, AdamState, StepDecay
from .losses import mse_loss, gain_loss, beam_gain
from .quantize import iq, aq, aq_grad
from .checkpoint import save_network, load_network, CheckpointError

__all__ = ["LayerSpec", "Network", "grad_check", "Adam", "AdamState",
           "StepDecay", "mse_loss", "gain_loss", "beam_gain", "iq", "aq",
           "aq_grad", "save_network", "load_network", "CheckpointError"]
