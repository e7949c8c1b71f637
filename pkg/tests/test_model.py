import numpy as np
import pytest

from ridnet.sdk.autodiff import Tensor
from ridnet.sdk.errors import ShapeError
from ridnet.sdk.graph import TopologyCache
from ridnet.sdk.model import (
    GeneratorParams,
    ParameterSet,
    RIDnetBlockParams,
    RIDnetGenerator,
    effective_alpha,
    embed,
    fuse,
    generator_forward,
    generator_shapes,
    init_generator_parameters,
    receptive_radius,
    replace_center,
    ridnet_forward,
)
from ridnet.sdk.models.canonical_types import ActivationKind, ThetaMode
from ridnet.sdk.models.config import GraphConfig, ModelConfig


def block_view(config, seed=0):
    params = init_generator_parameters(config, seed=seed)
    return params, RIDnetBlockParams.from_parameters(params, 0, config)


class TestParameters:
    def test_initialization_is_seeded(self, toy_config):
        a = init_generator_parameters(toy_config, seed=5)
        b = init_generator_parameters(toy_config, seed=5)
        c = init_generator_parameters(toy_config, seed=6)
        assert list(a) == list(b)
        for name in a:
            np.testing.assert_array_equal(a[name].data, b[name].data)
        assert any(not np.array_equal(a[n].data, c[n].data) for n in a if n.endswith("weight"))

    def test_shapes_follow_theta_mode(self, toy_config):
        full = generator_shapes(toy_config)
        diagonal = generator_shapes(toy_config.model_copy(update={"graph": GraphConfig(window=5, k_neighbors=4, theta_mode=ThetaMode.DIAGONAL, edge_hidden=4)}))
        assert full["block0.plane.w2"] == (4, 16)
        assert diagonal["block0.plane.w2"] == (4, 4)

    def test_later_blocks_embed_once(self):
        shapes = generator_shapes(ModelConfig(blocks=2, channels=4, embed_hidden=4, tail_hidden=4))
        assert "block0.embed2.weight" in shapes
        assert "block1.embed2.weight" not in shapes
        assert shapes["block1.embed1.weight"] == (4, 4, 3, 3, 3)

    def test_alpha_starts_at_zero(self, toy_config):
        params = init_generator_parameters(toy_config)
        assert params.alpha_names() == ["block0.alpha"]
        assert params["block0.alpha"].data[0] == 0.0

    def test_replace_keeps_order_and_tracking(self, toy_config):
        params = init_generator_parameters(toy_config)
        updated = params.replace({"block0.alpha": np.array([0.4])})
        assert list(updated) == list(params)
        assert updated["block0.alpha"].requires_grad
        assert updated["block0.alpha"].data[0] == pytest.approx(0.4)
        assert params["block0.alpha"].data[0] == 0.0

    def test_parameter_set_wraps_arrays_as_leaves(self):
        params = ParameterSet({"w": Tensor([1.0, 2.0])})
        assert params["w"].requires_grad and params["w"].name == "w"


class TestFusion:
    def test_alpha_endpoints(self, rng):
        p_nl, p_l, p_c = (Tensor(rng.normal(size=(2, 3, 3))) for _ in range(3))
        np.testing.assert_allclose(fuse(p_nl, p_l, p_c, 0.0).data, p_c.data, atol=1e-12)
        np.testing.assert_allclose(fuse(p_nl, p_l, p_c, 1.0).data, (p_nl.data + p_l.data) / 2, atol=1e-12)

    @pytest.mark.parametrize("alpha", [0.0, 0.25, 0.6, 1.0])
    def test_fuse_is_linear_in_alpha(self, rng, alpha):
        p_nl, p_l, p_c = (Tensor(rng.normal(size=(2, 3, 3))) for _ in range(3))
        at_zero = fuse(p_nl, p_l, p_c, 0.0).data
        at_one = fuse(p_nl, p_l, p_c, 1.0).data
        np.testing.assert_allclose(fuse(p_nl, p_l, p_c, alpha).data, (1 - alpha) * at_zero + alpha * at_one, atol=1e-12)

    def test_alpha_out_of_range(self, rng):
        t = Tensor(np.zeros((1, 2, 2)))
        with pytest.raises(ValueError):
            fuse(t, t, t, 1.5)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            fuse(Tensor(np.zeros((1, 2, 2))), Tensor(np.zeros((1, 2, 2))), Tensor(np.zeros((1, 3, 3))), 0.5)

    def test_effective_alpha_clamps(self):
        np.testing.assert_array_equal(effective_alpha(Tensor([-0.5, 0.3, 1.7])).data, [0.0, 0.3, 1.0])

    def test_replace_center_keeps_other_slices(self, rng):
        stack = Tensor(rng.normal(size=(3, 2, 4, 4)))
        center = Tensor(np.zeros((2, 4, 4)))
        out = replace_center(stack, center)
        np.testing.assert_array_equal(out.data[0], stack.data[0])
        np.testing.assert_array_equal(out.data[2], stack.data[2])
        np.testing.assert_array_equal(out.data[1], 0.0)


class TestRIDnetBlock:
    def test_embedding_shape(self, toy_config, toy_stack):
        _, block = block_view(toy_config)
        assert embed(Tensor(toy_stack), block, toy_config).shape == (3, 4, 8, 8)

    def test_disabled_graph_branches_pass_features_through(self, toy_config, toy_stack):
        params = init_generator_parameters(toy_config)
        c = toy_config.channels
        doubled = np.zeros((c, c, 3, 3))
        doubled[np.arange(c), np.arange(c), 1, 1] = 2.0
        silent = {name: np.zeros(params[name].shape) for name in ("block0.plane.w2", "block0.plane.b2", "block0.plane.bias")}
        updates = {**silent, "block0.alpha": [1.0], "block0.local.weight": doubled, "block0.local.bias": np.zeros(c)}
        block = RIDnetBlockParams.from_parameters(params.replace(updates), 0, toy_config)
        embedded = embed(Tensor(toy_stack), block, toy_config).data
        out = ridnet_forward(Tensor(toy_stack), block, toy_config).data
        np.testing.assert_allclose(out, embedded, atol=1e-10)

    def test_non_center_slices_pass_through(self, toy_config, toy_stack):
        _, block = block_view(toy_config)
        embedded = embed(Tensor(toy_stack), block, toy_config).data
        out = ridnet_forward(Tensor(toy_stack), block, toy_config).data
        np.testing.assert_array_equal(out[0], embedded[0])
        np.testing.assert_array_equal(out[2], embedded[2])
        assert not np.array_equal(out[1], embedded[1])

    def test_topology_cache_freezes_graphs(self, toy_config, toy_stack):
        _, block = block_view(toy_config)
        cache = TopologyCache()
        first = ridnet_forward(Tensor(toy_stack), block, toy_config, cache).data
        assert len(cache) == 2
        again = ridnet_forward(Tensor(toy_stack), block, toy_config, cache).data
        np.testing.assert_array_equal(first, again)

    def test_wrong_slice_count(self, toy_config, rng):
        _, block = block_view(toy_config)
        with pytest.raises(ShapeError):
            embed(Tensor(rng.normal(size=(5, 8, 8))), block, toy_config)


class TestGenerator:
    def test_output_is_center_slice_shape(self, toy_config, toy_stack):
        params = init_generator_parameters(toy_config)
        view = GeneratorParams.from_parameters(params, toy_config)
        out = generator_forward(Tensor(toy_stack), view, toy_config)
        assert out.shape == (8, 8)

    def test_rejects_bad_stack(self, toy_config, rng):
        view = GeneratorParams.from_parameters(init_generator_parameters(toy_config), toy_config)
        with pytest.raises(ShapeError):
            generator_forward(Tensor(rng.normal(size=(2, 8, 8))), view, toy_config)

    def test_stacked_blocks_with_leaky_relu(self, rng):
        config = ModelConfig(
            blocks=3,
            channels=4,
            embed_hidden=4,
            tail_hidden=4,
            activation=ActivationKind.LEAKY_RELU,
            graph=GraphConfig(window=5, k_neighbors=4, theta_mode=ThetaMode.DIAGONAL, edge_hidden=4),
        )
        generator = RIDnetGenerator(config)
        out = generator(rng.uniform(size=(3, 8, 8)))
        assert out.shape == (8, 8)
        assert np.all(np.isfinite(out.data))

    def test_denoise_is_clamped_and_untracked(self, toy_config, toy_stack):
        generator = RIDnetGenerator(toy_config)
        out = generator.denoise(toy_stack)
        assert out.shape == (8, 8)
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_tiled_inference_matches_whole_slice(self, toy_config, rng):
        generator = RIDnetGenerator(toy_config)
        stack = rng.uniform(size=(3, 20, 18))
        whole = generator.denoise(stack)
        tiled = generator.denoise(stack, tile=8)
        assert receptive_radius(toy_config) < 20
        np.testing.assert_allclose(tiled, whole, atol=1e-8)

    def test_denoise_volume_keeps_dims(self, toy_config, rng):
        volume = rng.uniform(size=(4, 8, 8))
        out = RIDnetGenerator(toy_config).denoise_volume(volume)
        assert out.shape == volume.shape

    def test_float32_parameters(self, toy_config, toy_stack):
        generator = RIDnetGenerator(toy_config, init_generator_parameters(toy_config, dtype=np.float32))
        assert generator.denoise(toy_stack).dtype == np.float32
