import numpy as np
import pytest

from skelfont.autodiff import Tensor
from skelfont.errors import InvalidSpec
from skelfont.models import (
    DISC_IN_CHANNELS,
    GEN_IN_CHANNELS,
    ModelSpec,
    build_discriminator,
    build_generator,
    desk_spec,
    init_params,
    paper_spec,
)


def small_spec(size=32, width=8, blocks=2):
    return ModelSpec(image_size=size, base_width=width, n_residual_blocks=blocks)


class TestModelSpec:
    def test_paper_scale_invariants(self):
        spec = paper_spec()
        spec.validate()
        assert spec.image_size == 128 and spec.n_residual_blocks == 9

    def test_paper_scale_rejects_other_sizes(self):
        with pytest.raises(InvalidSpec):
            ModelSpec(image_size=64, paper_scale=True).validate()

    def test_width_and_blocks_bounds(self):
        with pytest.raises(InvalidSpec):
            ModelSpec(base_width=3).validate()
        with pytest.raises(InvalidSpec):
            ModelSpec(n_residual_blocks=0).validate()
        with pytest.raises(InvalidSpec):
            ModelSpec(image_size=30).validate()


class TestGenerator:
    def test_forward_zeros_in_tanh_range(self):
        gen = init_params(build_generator(small_spec()), 0)
        x = Tensor(np.zeros((1, 4, 32, 32), np.float32))
        y = gen.forward(x, training=True)
        assert y.data.shape == (1, 3, 32, 32)
        assert np.all(np.isfinite(y.data))
        assert y.data.min() >= -1.0 and y.data.max() <= 1.0

    @pytest.mark.parametrize("size", [32, 64, 128])
    def test_shape_preserving(self, size, rng):
        gen = init_params(build_generator(small_spec(size=size, width=4, blocks=1)), 1)
        x = Tensor(rng.standard_normal((1, 4, size, size)).astype(np.float32))
        y = gen.forward(x, training=True)
        assert y.data.shape == (1, 3, size, size)

    def test_parameter_count_closed_form(self):
        w, r = 8, 2
        gen = build_generator(small_spec(width=w, blocks=r))

        def conv(cin, cout, k, bn=True):
            return cout * cin * k * k + cout + (2 * cout if bn else 0)

        expected = (
            conv(GEN_IN_CHANNELS, w, 7)
            + conv(w, 2 * w, 3)
            + conv(2 * w, 4 * w, 3)
            + r * 2 * conv(4 * w, 4 * w, 3)
            + conv(4 * w, 2 * w, 4)
            + conv(2 * w, w, 4)
            + conv(w, 3, 7, bn=False)
        )
        assert gen.param_count() == expected


class TestDiscriminator:
    def test_outputs_strictly_in_unit_interval(self, rng):
        disc = init_params(build_discriminator(small_spec()), 2)
        x = Tensor(rng.standard_normal((2, 3, 32, 32)).astype(np.float32))
        y = disc.forward(x, training=True)
        assert np.all(y.data > 0.0) and np.all(y.data < 1.0)

    def test_fresh_scores_near_half(self, rng):
        disc = init_params(build_discriminator(small_spec()), 3)
        x = Tensor(rng.standard_normal((64, 3, 32, 32)).astype(np.float32))
        y = disc.forward(x, training=True)
        assert abs(float(y.data.mean()) - 0.5) < 0.2

    @pytest.mark.parametrize("width", [4, 8, 16])
    def test_exactly_eight_conv_layers(self, width):
        disc = build_discriminator(small_spec(width=width))
        assert len(disc.hidden) == 6
        assert len(disc.units) == 8

    def test_patch_map_output(self, rng):
        disc = init_params(build_discriminator(small_spec(size=64)), 4)
        x = Tensor(rng.standard_normal((1, 3, 64, 64)).astype(np.float32))
        y = disc.forward(x, training=True)
        # spatial score map, not a single logit
        assert y.data.shape[1] == 1
        assert y.data.shape[2] > 1 and y.data.shape[3] > 1


class TestInit:
    def test_same_seed_is_bit_identical(self):
        a = init_params(build_generator(small_spec()), 11)
        b = init_params(build_generator(small_spec()), 11)
        for (na, pa), (nb, pb) in zip(a.named_params().items(),
                                      b.named_params().items()):
            assert na == nb
            assert np.array_equal(pa.data, pb.data)

    def test_different_seed_differs(self):
        a = init_params(build_generator(small_spec()), 11)
        b = init_params(build_generator(small_spec()), 12)
        same = all(
            np.array_equal(pa.data, pb.data)
            for pa, pb in zip(a.named_params().values(), b.named_params().values())
        )
        assert not same

    def test_weight_mean_clt_bound(self):
        gen = init_params(build_generator(small_spec(width=16)), 5)
        weights = np.concatenate([
            p.data.ravel() for n, p in gen.named_params().items()
            if n.endswith(".w")
        ])
        assert weights.size > 10_000
        bound = 3 * 0.02 / np.sqrt(weights.size)
        assert abs(weights.mean()) < bound

    def test_gamma_mean_clt_bound(self):
        gen = init_params(build_generator(small_spec(width=16)), 6)
        gammas = np.concatenate([
            p.data.ravel() for n, p in gen.named_params().items()
            if n.endswith(".gamma")
        ])
        bound = 3 * 0.02 / np.sqrt(gammas.size)
        assert abs(gammas.mean() - 1.0) < bound

    def test_biases_and_betas_zero(self):
        gen = init_params(build_generator(small_spec()), 7)
        for name, p in gen.named_params().items():
            if name.endswith(".b") or name.endswith(".beta"):
                assert np.all(p.data == 0.0)


class TestGradientReach:
    def test_every_parameter_reachable(self, rng):
        from skelfont import autodiff as ad
        gen = init_params(build_generator(small_spec(width=4, blocks=1)), 8)
        x = Tensor(rng.standard_normal((2, 4, 32, 32)).astype(np.float32))
        out = ad.mean(gen.forward(x, training=True))
        out.backward()
        for name, p in gen.named_params().items():
            assert p.grad is not None, f"dead parameter {name}"

    def test_discriminator_parameters_reachable(self, rng):
        from skelfont import autodiff as ad
        disc = init_params(build_discriminator(small_spec(width=4)), 9)
        x = Tensor(rng.standard_normal((2, 3, 32, 32)).astype(np.float32))
        out = ad.mean(disc.forward(x, training=True))
        out.backward()
        for name, p in disc.named_params().items():
            assert p.grad is not None, f"dead parameter {name}"
