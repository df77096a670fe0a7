"""Miniature ViT encoder with a DPT-style decoder for dense depth.

The encoder tokenizes the image into non-overlapping patches, runs a
pre-norm transformer block per stage, and each stage's tokens are
reassembled into an image-like feature map at a stage-specific scale.
A coarse-to-fine chain of residual convolutions blends the pyramid and
a small convolutional head emits a non-negative depth map at full input
resolution (in normalized units).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, ContractError, ShapeError

GROUPS = ("backbone", "decoder", "head", "fusion")


@dataclass(frozen=True)
class NetConfig:
    height: int = 64
    width: int = 96
    channels: int = 3
    patch: int = 8
    embed: int = 64
    stages: int = 4
    heads: int = 2
    stage_dims: tuple[int, ...] = (32, 48, 64, 96)
    stage_scales: tuple[float, ...] = (4.0, 2.0, 1.0, 0.5)
    blend_dim: int = 32
    head_channels: int = 16
    fusion_channels: int = 8
    fusion_stages: tuple[int, ...] | None = None  # None means every stage
    mlp_ratio: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.stages < 2:
            raise ConfigError(f"need at least 2 stages, got {self.stages}")
        if self.height % self.patch or self.width % self.patch:
            raise ConfigError(
                f"image {self.height}x{self.width} not divisible by patch {self.patch}"
            )
        if len(self.stage_dims) != self.stages or len(self.stage_scales) != self.stages:
            raise ConfigError("stage_dims/stage_scales length must equal stages")
        if self.embed % self.heads:
            raise ConfigError(f"embed {self.embed} not divisible by heads {self.heads}")
        if self.fusion_stages is not None:
            bad = [s for s in self.fusion_stages if not 0 <= s < self.stages]
            if bad:
                raise ConfigError(f"fusion stages out of range: {bad}")

    @property
    def active_fusion_stages(self) -> tuple[int, ...]:
        if self.fusion_stages is None:
            return tuple(range(self.stages))
        return tuple(self.fusion_stages)

    def token_grid(self, height: int | None = None, width: int | None = None) -> tuple[int, int]:
        h = self.height if height is None else height
        w = self.width if width is None else width
        if h % self.patch or w % self.patch:
            raise ConfigError(f"image {h}x{w} not divisible by patch {self.patch}")
        return h // self.patch, w // self.patch

    def stage_spatial(self, stage: int, grid_h: int, grid_w: int) -> tuple[int, int]:
        r = self.stage_scales[stage]
        return max(1, int(round(grid_h * r))), max(1, int(round(grid_w * r)))


class ModelParams:
    """Named parameter tensors partitioned into the four trainable groups."""

    def __init__(self):
        self._tensors: dict[str, Tensor] = {}

    def add(self, group: str, name: str, array: np.ndarray) -> Tensor:
        if group not in GROUPS:
            raise ConfigError(f"unknown parameter group {group!r}")
        key = f"{group}/{name}"
        if key in self._tensors:
            raise ConfigError(f"duplicate parameter {key!r}")
        t = Tensor(np.asarray(array, dtype=np.float64), requires_grad=True)
        self._tensors[key] = t
        return t

    def __getitem__(self, key: str) -> Tensor:
        return self._tensors[key]

    def __contains__(self, key: str) -> bool:
        return key in self._tensors

    def __len__(self) -> int:
        return len(self._tensors)

    def items(self):
        return self._tensors.items()

    def tensors(self):
        return self._tensors.values()

    def group(self, group: str) -> dict[str, Tensor]:
        prefix = group + "/"
        return {k: v for k, v in self._tensors.items() if k.startswith(prefix)}

    def group_of(self, key: str) -> str:
        return key.split("/", 1)[0]

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: v.data for k, v in self._tensors.items()}

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for key, value in arrays.items():
            if key not in self._tensors:
                raise ConfigError(f"unexpected parameter {key!r}")
            if self._tensors[key].data.shape != value.shape:
                raise ConfigError(
                    f"parameter {key!r} shape {value.shape} != expected "
                    f"{self._tensors[key].data.shape}"
                )
            self._tensors[key].data = np.asarray(value, dtype=np.float64).copy()

    def copy(self) -> "ModelParams":
        clone = ModelParams()
        for key, t in self._tensors.items():
            group, name = key.split("/", 1)
            clone.add(group, name, t.data.copy())
        return clone


def _linear_init(rng, fan_in: int, shape) -> np.ndarray:
    return rng.normal(scale=1.0 / math.sqrt(fan_in), size=shape)


def init_params(config: NetConfig) -> ModelParams:
    """Seeded initialization of the backbone, decoder, and head groups."""
    rng = np.random.default_rng(config.seed)
    p = ModelParams()
    e = config.embed
    patch_in = config.channels * config.patch**2
    g0h, g0w = config.token_grid()

    p.add("backbone", "patch/w", _linear_init(rng, patch_in, (patch_in, e)))
    p.add("backbone", "patch/b", np.zeros(e))
    p.add("backbone", "pos/grid", 0.02 * rng.normal(size=(e, g0h, g0w)))
    p.add("backbone", "pos/cls", 0.02 * rng.normal(size=(1, e)))
    p.add("backbone", "cls", 0.02 * rng.normal(size=(1, e)))
    hidden = config.mlp_ratio * e
    for s in range(config.stages):
        pre = f"stage{s}"
        p.add("backbone", f"{pre}/ln1/g", np.ones(e))
        p.add("backbone", f"{pre}/ln1/b", np.zeros(e))
        for name in ("wq", "wk", "wv", "wo"):
            p.add("backbone", f"{pre}/attn/{name}", _linear_init(rng, e, (e, e)))
        for name in ("bq", "bk", "bv", "bo"):
            p.add("backbone", f"{pre}/attn/{name}", np.zeros(e))
        p.add("backbone", f"{pre}/ln2/g", np.ones(e))
        p.add("backbone", f"{pre}/ln2/b", np.zeros(e))
        p.add("backbone", f"{pre}/mlp/w1", _linear_init(rng, e, (e, hidden)))
        p.add("backbone", f"{pre}/mlp/b1", np.zeros(hidden))
        p.add("backbone", f"{pre}/mlp/w2", _linear_init(rng, hidden, (hidden, e)))
        p.add("backbone", f"{pre}/mlp/b2", np.zeros(e))

    db = config.blend_dim
    for s in range(config.stages):
        d = config.stage_dims[s]
        p.add("decoder", f"stage{s}/reassemble/w", _linear_init(rng, e, (d, e, 1, 1)))
        p.add("decoder", f"stage{s}/reassemble/b", np.zeros(d))
        p.add("decoder", f"stage{s}/blendproj/w", _linear_init(rng, d * 9, (db, d, 3, 3)))
        p.add("decoder", f"stage{s}/blendproj/b", np.zeros(db))
        p.add("decoder", f"stage{s}/resconv/w", _linear_init(rng, db * 9, (db, db, 3, 3)))
        p.add("decoder", f"stage{s}/resconv/b", np.zeros(db))

    hc = config.head_channels
    p.add("head", "conv1/w", _linear_init(rng, db * 9, (hc, db, 3, 3)))
    p.add("head", "conv1/b", np.zeros(hc))
    p.add("head", "conv2/w", _linear_init(rng, hc * 9, (hc, hc, 3, 3)))
    p.add("head", "conv2/b", np.zeros(hc))
    p.add("head", "conv3/w", _linear_init(rng, hc, (1, hc, 1, 1)))
    p.add("head", "conv3/b", np.full(1, 0.1))
    return p


def _as_image_tensor(image, config: NetConfig) -> Tensor:
    t = image if isinstance(image, Tensor) else Tensor(image)
    if t.ndim != 3 or t.shape[0] != config.channels:
        raise ConfigError(
            f"image must be [{config.channels},H,W], got shape {t.shape}"
        )
    return t


def patch_embed(image, params: ModelParams, config: NetConfig) -> Tensor:
    """Tokenize the image: patch projection, class token, positional table.

    The positional table is stored at the configured grid and bilinearly
    resized when the input resolution differs, so the same parameters
    accept any patch-divisible size.
    """
    img = _as_image_tensor(image, config)
    _, h_px, w_px = img.shape
    gh, gw = config.token_grid(h_px, w_px)
    p = config.patch
    c = config.channels

    patches = ad.reshape(img, (c, gh, p, gw, p))
    patches = ad.transpose(patches, (1, 3, 0, 2, 4))
    patches = ad.reshape(patches, (gh * gw, c * p * p))
    tokens = ad.add(ad.matmul(patches, params["backbone/patch/w"]), params["backbone/patch/b"])

    pos = params["backbone/pos/grid"]
    if (gh, gw) != pos.shape[1:]:
        pos = ad.bilinear_resize(pos, gh, gw)
    pos = ad.transpose(ad.reshape(pos, (config.embed, gh * gw)), (1, 0))
    tokens = ad.add(tokens, pos)

    cls = ad.add(params["backbone/cls"], params["backbone/pos/cls"])
    return ad.concat([cls, tokens], axis=0)


def _attention(x: Tensor, params: ModelParams, prefix: str, config: NetConfig) -> Tensor:
    n, e = x.shape
    heads = config.heads
    dh = e // heads

    def project(name):
        w = params[f"{prefix}/attn/w{name}"]
        b = params[f"{prefix}/attn/b{name}"]
        proj = ad.add(ad.matmul(x, w), b)
        return ad.transpose(ad.reshape(proj, (n, heads, dh)), (1, 0, 2))

    q, k, v = project("q"), project("k"), project("v")
    scores = ad.scale(ad.matmul(q, ad.transpose(k, (0, 2, 1))), 1.0 / math.sqrt(dh))
    attn = ad.softmax(scores, axis=-1)
    ctx = ad.matmul(attn, v)
    ctx = ad.reshape(ad.transpose(ctx, (1, 0, 2)), (n, e))
    return ad.add(ad.matmul(ctx, params[f"{prefix}/attn/wo"]), params[f"{prefix}/attn/bo"])


def vit_stage(tokens: Tensor, params: ModelParams, stage: int, config: NetConfig) -> Tensor:
    """One pre-norm transformer block: attention and MLP with residuals."""
    if tokens.shape[-1] != config.embed:
        raise ShapeError(f"token dim {tokens.shape[-1]} != embed {config.embed}")
    prefix = f"backbone/stage{stage}"
    normed = ad.layer_norm(tokens, params[f"{prefix}/ln1/g"], params[f"{prefix}/ln1/b"])
    tokens = ad.add(tokens, _attention(normed, params, prefix, config))
    normed = ad.layer_norm(tokens, params[f"{prefix}/ln2/g"], params[f"{prefix}/ln2/b"])
    hidden = ad.relu(ad.add(ad.matmul(normed, params[f"{prefix}/mlp/w1"]), params[f"{prefix}/mlp/b1"]))
    mlp = ad.add(ad.matmul(hidden, params[f"{prefix}/mlp/w2"]), params[f"{prefix}/mlp/b2"])
    return ad.add(tokens, mlp)


def reassemble(
    tokens: Tensor, stage: int, params: ModelParams, config: NetConfig, grid_hw: tuple[int, int]
) -> Tensor:
    """Drop the class token, restore the spatial grid, project to the
    stage dimension, and resample to the stage scale."""
    gh, gw = grid_hw
    if tokens.shape[0] != gh * gw + 1:
        raise ShapeError(f"got {tokens.shape[0]} tokens for a {gh}x{gw} grid")
    body = ad.narrow(tokens, 0, 1, gh * gw)
    grid = ad.reshape(ad.transpose(body, (1, 0)), (config.embed, gh, gw))
    feat = ad.conv2d(
        grid,
        params[f"decoder/stage{stage}/reassemble/w"],
        params[f"decoder/stage{stage}/reassemble/b"],
    )
    th, tw = config.stage_spatial(stage, gh, gw)
    if (th, tw) != (gh, gw):
        feat = ad.bilinear_resize(feat, th, tw)
    return feat


def blend(pyramid: list[Tensor], params: ModelParams, config: NetConfig, stages: int | None = None) -> Tensor:
    """Merge the stage pyramid coarse-to-fine.

    Each step upsamples the running feature by two, adds the projected
    stage feature, and applies a residual conv unit. ``stages`` defaults
    to the configured count; a shorter pyramid is a contract violation.
    """
    expected = config.stages if stages is None else stages
    if len(pyramid) != expected or expected < 1:
        raise ContractError(f"pyramid has {len(pyramid)} stages, expected {expected}")
    running = None
    for stage in range(expected - 1, -1, -1):
        proj = ad.conv2d(
            pyramid[stage],
            params[f"decoder/stage{stage}/blendproj/w"],
            params[f"decoder/stage{stage}/blendproj/b"],
        )
        if running is None:
            running = proj
        else:
            running = ad.add(ad.bilinear_resize(running, proj.shape[1], proj.shape[2]), proj)
        unit = ad.conv2d(
            ad.relu(running),
            params[f"decoder/stage{stage}/resconv/w"],
            params[f"decoder/stage{stage}/resconv/b"],
        )
        running = ad.add(running, unit)
    return running


def depth_head(features: Tensor, params: ModelParams, config: NetConfig, out_hw: tuple[int, int]) -> Tensor:
    """Convolutional head emitting a non-negative (H, W) depth map."""
    h, w = out_hw
    y = ad.conv2d(features, params["head/conv1/w"], params["head/conv1/b"])
    y = ad.bilinear_resize(y, h, w)
    y = ad.relu(ad.conv2d(y, params["head/conv2/w"], params["head/conv2/b"]))
    y = ad.relu(ad.conv2d(y, params["head/conv3/w"], params["head/conv3/b"]))
    return ad.reshape(y, (h, w))


def run_network(image, params: ModelParams, config: NetConfig, stage_hook=None) -> Tensor:
    """Full forward pass; ``stage_hook(stage, feature) -> feature`` lets a
    caller rewrite each reassembled stage feature before blending."""
    img = _as_image_tensor(image, config)
    _, h_px, w_px = img.shape
    grid = config.token_grid(h_px, w_px)
    tokens = patch_embed(img, params, config)
    pyramid = []
    for stage in range(config.stages):
        tokens = vit_stage(tokens, params, stage, config)
        feat = reassemble(tokens, stage, params, config, grid)
        if stage_hook is not None:
            feat = stage_hook(stage, feat)
        pyramid.append(feat)
    merged = blend(pyramid, params, config)
    return depth_head(merged, params, config, (h_px, w_px))


def forward_base(image, params: ModelParams, config: NetConfig) -> Tensor:
    """Unprompted forward pass: image in, normalized depth map out."""
    return run_network(image, params, config, stage_hook=None)
