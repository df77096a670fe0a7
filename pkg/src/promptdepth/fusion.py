"""Multi-scale fusion of a metric depth prompt into the decoder.

At every decoder stage the low-resolution prompt is bilinearly resized
to the stage's spatial size, pushed through a shallow two-layer conv
network, projected by a zero-initialized 1x1 convolution, and added to
the stage feature. Because the projection starts at exactly zero, a
freshly constructed fusion block leaves the base network's output
untouched.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import FlopsCounter, Tensor
from .depthmap import DepthMap, fill_invalid_nearest
from .errors import ContractError, ShapeError
from .network import ModelParams, NetConfig, _linear_init, init_params, run_network

PROMPT_MAX_TOL = 1e-6


def init_fusion_params(config: NetConfig) -> ModelParams:
    """Per-stage shallow conv weights plus exactly-zero 1x1 projections."""
    rng = np.random.default_rng(config.seed + 1)
    fc = config.fusion_channels
    p = ModelParams()
    for s in config.active_fusion_stages:
        d = config.stage_dims[s]
        p.add("fusion", f"stage{s}/conv1/w", _linear_init(rng, 9, (fc, 1, 3, 3)))
        p.add("fusion", f"stage{s}/conv1/b", np.zeros(fc))
        p.add("fusion", f"stage{s}/conv2/w", _linear_init(rng, fc * 9, (fc, fc, 3, 3)))
        p.add("fusion", f"stage{s}/conv2/b", np.zeros(fc))
        p.add("fusion", f"stage{s}/proj/w", np.zeros((d, fc, 1, 1)))
        p.add("fusion", f"stage{s}/proj/b", np.zeros(d))
    return p


def _prompt_tensor(prompt) -> Tensor:
    """Validate a normalized prompt and shape it as a [1, H_L, W_L] tensor."""
    if isinstance(prompt, DepthMap):
        if not prompt.mask.all():
            prompt = fill_invalid_nearest(prompt)
        values = prompt.values
    elif isinstance(prompt, Tensor):
        values = prompt.data
    else:
        values = np.asarray(prompt, dtype=np.float64)
    if values.ndim == 3 and values.shape[0] == 1:
        values = values[0]
    if values.ndim != 2 or values.size == 0:
        raise ShapeError(f"prompt must be a non-empty 2-D map, got shape {values.shape}")
    if values.max() > 1.0 + PROMPT_MAX_TOL:
        raise ContractError(
            f"prompt is not normalized to [0, 1]: max value {values.max():.6g}"
        )
    if isinstance(prompt, Tensor):
        return ad.reshape(prompt, (1,) + values.shape)
    return Tensor(values.reshape((1,) + values.shape))


def _fuse(prompt_t: Tensor, feature: Tensor, stage: int, fusion: ModelParams, config: NetConfig) -> Tensor:
    _, fh, fw = feature.shape
    x = ad.bilinear_resize(prompt_t, fh, fw)
    x = ad.relu(ad.conv2d(x, fusion[f"fusion/stage{stage}/conv1/w"], fusion[f"fusion/stage{stage}/conv1/b"]))
    x = ad.relu(ad.conv2d(x, fusion[f"fusion/stage{stage}/conv2/w"], fusion[f"fusion/stage{stage}/conv2/b"]))
    x = ad.conv2d(x, fusion[f"fusion/stage{stage}/proj/w"], fusion[f"fusion/stage{stage}/proj/b"])
    return ad.add(feature, x)


def fuse_block(prompt, feature: Tensor, stage: int, fusion: ModelParams, config: NetConfig) -> Tensor:
    """Fuse a normalized prompt into one reassembled stage feature."""
    return _fuse(_prompt_tensor(prompt), feature, stage, fusion, config)


def forward_prompted(image, prompt, params: ModelParams, fusion: ModelParams, config: NetConfig) -> Tensor:
    """Base forward pass with prompt fusion applied to every active stage
    feature after reassembly, before blending."""
    prompt_t = _prompt_tensor(prompt)
    active = set(config.active_fusion_stages)

    def hook(stage: int, feature: Tensor) -> Tensor:
        if stage in active:
            return _fuse(prompt_t, feature, stage, fusion, config)
        return feature

    return run_network(image, params, config, stage_hook=hook)


def fusion_overhead(config: NetConfig) -> float:
    """FLOPs(prompted) / FLOPs(base) - 1 for the configured shapes.

    Counts depend only on shapes, so dummy inputs and fresh parameters
    are enough and the result is deterministic.
    """
    params = init_params(config)
    fusion = init_fusion_params(config)
    image = np.zeros((config.channels, config.height, config.width))
    prompt = np.full((max(1, config.height // 4), max(1, config.width // 4)), 0.5)
    counter = FlopsCounter()
    with counter.scope("base"):
        run_network(image, params, config)
    with counter.scope("prompted"):
        forward_prompted(image, prompt, params, fusion, config)
    return counter["prompted"] / counter["base"] - 1.0
