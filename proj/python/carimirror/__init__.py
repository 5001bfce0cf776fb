# Copyright 2026 The carimirror Authors.
# SPDX-License-Identifier: Apache-2.0

"""carimirror: weights container and trainer corpus readers, plus the native engine when built."""

from . import dataset, weights
from .dataset import DomainManifest, read_manifest
from .weights import WeightsBundle

__all__ = ["dataset", "weights", "DomainManifest", "read_manifest", "WeightsBundle"]

try:
    from . import _core
    from ._core import StyleModel, smooth_latent

    __all__ += ["StyleModel", "smooth_latent"]
except ImportError:  # pure-Python install without the extension
    _core = None

__version__ = "0.1.0"
