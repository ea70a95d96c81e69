"""Minimal reverse-mode autodiff stack used by the encoder and denoiser.

kernels.py selects the compiled im2col/col2im core when available and falls
back to the pure-numpy implementation; both produce bitwise-identical arrays.
"""

from tidecast.nn.kernels import backend_name

__all__ = ["backend_name"]
