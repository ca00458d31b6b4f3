"""Volumetric MRI super-resolution toolkit.

Core operations (degradation, zero-fill upsampling, metrics, phantom data,
training/evaluation commands) are implemented in C++ and exposed through the
compiled `_volsr` module. Volumes cross the boundary as float32 numpy arrays
of shape (nz, ny, nx).
"""

from ._volsr import *  # noqa: F401,F403
from ._volsr import __version__  # noqa: F401
