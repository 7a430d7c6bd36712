"""rdbev-trainer: learned RD-to-BEV occupancy mapping over rdbev datasets."""

from .model import DualChirpBevNet, ModelConfig, masked_focal_loss
from .train import train

__version__ = "0.1.0"
