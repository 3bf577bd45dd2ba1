"""Learned restoration backend for occlusion-suppressed thermal integrals.

Trains a small conditional encoder-decoder on datasets emitted by the
simulation pipeline and serves corrections through the TGR1/request.json
file-exchange protocol.
"""

from .model import RestorationModel, denormalize, load_checkpoint, normalize, save_checkpoint
from .serve import serve_batch, serve_request

__version__ = "0.1.0"
