"""View-consistent Gaussian splat editing.

Arrays are float64 numpy arrays: images are (H, W, C), per-Gaussian values (N, K).
Configuration is passed as a dict with the same keys as the JSON run configs.
"""

import json as _json

from ._consplat import (
    Camera,
    Error,
    GaussianCloud,
    ParseError,
    RemoteError,
    __version__,
    consolidate,
    decode_tensor,
    encode_tensor,
    grad_render,
    load_cameras,
    load_image,
    load_scene,
    look_at,
    render,
    save_cameras,
    save_image,
    save_scene,
    set_thread_count,
    synth_scene,
    thread_count,
    view_inconsistency,
)
from . import _consplat


def finetune(cloud, cameras, targets, config=None):
    """Fit a copy of `cloud` to one target per camera. Returns (cloud, loss records)."""
    return _consplat.finetune(cloud, cameras, list(targets), _json.dumps(config or {}))


def edit(cloud, cameras, config=None):
    """Run the editing loop with the in-process mock editor.

    Returns (cloud, per-iteration metrics, per-iteration renders).
    """
    return _consplat.edit(cloud, cameras, _json.dumps(config or {}))


def cli(*args):
    """Run one command line. Returns (exit code, stdout, stderr)."""
    return _consplat.cli([str(a) for a in args])
