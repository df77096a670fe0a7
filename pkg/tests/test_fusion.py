import numpy as np
import pytest

from promptdepth import autodiff as ad
from promptdepth.autodiff import Tensor
from promptdepth.depthmap import DepthMap
from promptdepth.errors import ContractError
from promptdepth.fusion import (
    forward_prompted,
    fuse_block,
    fusion_overhead,
    init_fusion_params,
)
from promptdepth.network import NetConfig, forward_base, init_params

CFG = NetConfig(
    height=16,
    width=16,
    patch=4,
    embed=8,
    stages=2,
    heads=2,
    stage_dims=(8, 8),
    stage_scales=(2.0, 1.0),
    blend_dim=6,
    head_channels=4,
    fusion_channels=2,
    seed=11,
)


@pytest.fixture
def models():
    return init_params(CFG), init_fusion_params(CFG)


class TestZeroInit:
    def test_projections_start_at_zero(self, models):
        _, fusion = models
        for stage in CFG.active_fusion_stages:
            np.testing.assert_array_equal(fusion[f"fusion/stage{stage}/proj/w"].data, 0.0)
            np.testing.assert_array_equal(fusion[f"fusion/stage{stage}/proj/b"].data, 0.0)

    def test_fuse_block_is_identity_when_fresh(self, models):
        _, fusion = models
        rng = np.random.default_rng(0)
        feature = Tensor(rng.normal(size=(8, 8, 8)))
        prompt = rng.uniform(0.0, 1.0, (4, 4))
        out = fuse_block(prompt, feature, 0, fusion, CFG)
        np.testing.assert_array_equal(out.data, feature.data)

    def test_prompted_equals_base_when_fresh(self, models):
        params, fusion = models
        rng = np.random.default_rng(1)
        for _ in range(5):
            img = rng.uniform(size=(3, 16, 16))
            prompt = rng.uniform(0.2, 1.0, (4, 4))
            base = forward_base(img, params, CFG)
            prm = forward_prompted(img, prompt, params, fusion, CFG)
            assert np.abs(base.data - prm.data).max() < 1e-12

    def test_nonzero_projection_changes_output(self, models):
        params, fusion = models
        rng = np.random.default_rng(2)
        for stage in CFG.active_fusion_stages:
            fusion[f"fusion/stage{stage}/proj/w"].data = 0.05 * rng.normal(
                size=fusion[f"fusion/stage{stage}/proj/w"].data.shape
            )
        img = rng.uniform(size=(3, 16, 16))
        prompt = np.full((4, 4), 0.6)
        base = forward_base(img, params, CFG)
        prm = forward_prompted(img, prompt, params, fusion, CFG)
        assert np.abs(base.data - prm.data).max() > 0.0


class TestGradientsAndContracts:
    def test_gradient_reaches_shallow_convs_after_first_update(self, models):
        _, fusion = models
        rng = np.random.default_rng(3)
        # emulate the first optimizer update on the projection
        fusion["fusion/stage0/proj/w"].data = 0.1 * rng.normal(
            size=fusion["fusion/stage0/proj/w"].data.shape
        )
        feature = Tensor(rng.normal(size=(8, 8, 8)))
        prompt = rng.uniform(0.1, 0.9, (4, 4))
        probe_w = Tensor(fusion["fusion/stage0/conv1/w"].data.copy(), requires_grad=True)
        probe_b = Tensor(fusion["fusion/stage0/conv1/b"].data.copy(), requires_grad=True)

        def taped(w, b):
            view = _rebound(fusion, {"fusion/stage0/conv1/w": w, "fusion/stage0/conv1/b": b})
            out = fuse_block(prompt, feature, 0, view, CFG)
            return ad.reduce_sum(ad.mul(out, out))

        ad.gradcheck(taped, [probe_w, probe_b])

    def test_unnormalized_prompt_rejected(self, models):
        _, fusion = models
        feature = Tensor(np.zeros((8, 8, 8)))
        with pytest.raises(ContractError):
            fuse_block(np.full((4, 4), 1.5), feature, 0, fusion, CFG)

    def test_prompt_holes_filled_before_resize(self, models):
        params, fusion = models
        rng = np.random.default_rng(4)
        fusion["fusion/stage0/proj/w"].data += 0.1
        values = rng.uniform(0.1, 1.0, (4, 4))
        mask = np.ones((4, 4), bool)
        mask[1:3, 1:3] = False
        holey = DepthMap(np.where(mask, values, 0.0), mask)
        img = rng.uniform(size=(3, 16, 16))
        out = forward_prompted(img, holey, params, fusion, CFG)
        assert np.isfinite(out.data).all()


class TestForwardPrompted:
    def test_output_shape_matches_image(self, models):
        params, fusion = models
        out = forward_prompted(np.zeros((3, 16, 16)), np.full((4, 4), 0.5), params, fusion, CFG)
        assert out.shape == (16, 16)

    def test_any_prompt_resolution_is_legal(self, models):
        params, fusion = models
        img = np.zeros((3, 16, 16))
        for shape in [(1, 1), (3, 5), (16, 16), (20, 24)]:
            out = forward_prompted(img, np.full(shape, 0.5), params, fusion, CFG)
            assert out.shape == (16, 16)

    def test_prompt_scale_sensitivity_with_trained_projection(self, models):
        params, fusion = models
        rng = np.random.default_rng(5)
        for stage in CFG.active_fusion_stages:
            fusion[f"fusion/stage{stage}/proj/w"].data = 0.1 * rng.normal(
                size=fusion[f"fusion/stage{stage}/proj/w"].data.shape
            )
        img = rng.uniform(size=(3, 16, 16))
        prompt = rng.uniform(0.5, 1.0, (4, 4))
        out_full = forward_prompted(img, prompt, params, fusion, CFG)
        out_half = forward_prompted(img, prompt / 2.0, params, fusion, CFG)
        assert np.abs(out_full.data - out_half.data).mean() > 0.0


class TestFusionOverhead:
    def test_no_fusion_stages_costs_nothing(self):
        cfg = NetConfig(
            height=16, width=16, patch=4, embed=8, stages=2, heads=2,
            stage_dims=(8, 8), stage_scales=(2.0, 1.0), blend_dim=6,
            head_channels=4, fusion_channels=2, fusion_stages=(),
        )
        assert fusion_overhead(cfg) == 0.0

    def test_default_config_under_ten_percent(self):
        ratio = fusion_overhead(NetConfig())
        assert 0.0 < ratio < 0.10

    def test_ratio_independent_of_parameter_values(self):
        a = fusion_overhead(NetConfig(seed=0))
        b = fusion_overhead(NetConfig(seed=123))
        assert a == b


def _rebound(fusion, replacements):
    """A view of the fusion params with some tensors swapped."""

    class View:
        def __getitem__(self, key):
            if key in replacements:
                return replacements[key]
            return fusion[key]

    return View()
