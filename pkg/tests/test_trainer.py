import os

import numpy as np
import pytest

from skelfont import autodiff as ad
from skelfont.autodiff import Tensor, adam_step
from skelfont.data import LoadedDataset
from skelfont.errors import DataEmpty, NonFiniteLoss
from skelfont.losses import LossWeights
from skelfont.models import ModelSpec
from skelfont.trainer import (
    ModelBundle,
    TrainConfig,
    build_bundle,
    diversity_diagnostic,
    generate,
    load_bundle,
    save_bundle,
    train,
    train_step,
)

from conftest import rgb_image


def tiny_cfg(**kwargs):
    base = dict(
        epochs=1,
        batch_size=2,
        seed=5,
        spec=ModelSpec(image_size=16, base_width=4, n_residual_blocks=1),
    )
    base.update(kwargs)
    return TrainConfig(**base)


def glyph_batch(rng, n, size=16, thickness=1):
    out = []
    for _ in range(n):
        arr = np.ones((size, size, 3), np.float32)
        row = int(rng.integers(2, size - 2 - thickness))
        c0, c1 = sorted(rng.integers(2, size - 2, 2))
        if c1 - c0 < 3:
            c1 = min(size - 2, c0 + 3)
        arr[row:row + thickness, c0:c1] = 0.0
        out.append(rgb_image(arr))
    return out


def tiny_dataset(rng, n=6, size=16):
    return LoadedDataset(
        font_x="thin",
        font_y="thick",
        train_x=glyph_batch(rng, n, size, 1),
        train_y=glyph_batch(rng, n, size, 3),
        test_x=glyph_batch(rng, 3, size, 1),
        test_y=glyph_batch(rng, 3, size, 3),
    )


def all_state(bundle):
    out = {}
    for net_name, net in bundle.networks().items():
        for pname, p in net.named_params().items():
            out[f"{net_name}/{pname}"] = p.data.copy()
        for bname, buf in net.named_buffers().items():
            out[f"{net_name}/{bname}"] = buf.copy()
    return out


def assert_states_equal(a, b):
    assert a.keys() == b.keys()
    for key in a:
        assert np.array_equal(a[key], b[key]), f"mismatch at {key}"


class TestTrainStep:
    def test_smoke_all_finite(self, rng):
        cfg = tiny_cfg()
        bundle = build_bundle(cfg)
        bd = train_step(glyph_batch(rng, 2), glyph_batch(rng, 2), bundle, cfg)
        assert bd.is_finite()
        assert bd.total == bd.adv_x + bd.adv_y + cfg.weights.lambda_cyc * bd.cyc \
            + cfg.weights.lambda_ske * bd.ske

    def test_determinism_across_runs(self, rng):
        bx = glyph_batch(rng, 2)
        by = glyph_batch(rng, 2)
        states = []
        for _ in range(2):
            cfg = tiny_cfg()
            bundle = build_bundle(cfg)
            for _ in range(3):
                train_step(bx, by, bundle, cfg)
            states.append(all_state(bundle))
        assert_states_equal(states[0], states[1])

    def test_non_finite_loss_aborts(self, rng):
        cfg = tiny_cfg()
        bundle = build_bundle(cfg)
        # poison the output conv so NaN reaches the losses through tanh
        bad = bundle.g_y.named_params()["out.w"]
        bad.data[:] = np.nan
        with pytest.raises(NonFiniteLoss):
            train_step(glyph_batch(rng, 2), glyph_batch(rng, 2), bundle, cfg)

    def test_disabled_channel_skips_skeleton_term(self, rng):
        cfg = tiny_cfg(skeleton_channel=False)
        bundle = build_bundle(cfg)
        bd = train_step(glyph_batch(rng, 2), glyph_batch(rng, 2), bundle, cfg)
        assert bd.ske == 0.0
        assert bd.total == bd.adv_x + bd.adv_y + bd.cyc


# --- independent reference: plain cycle-consistent step, transcribed ---
# from the two-generator/two-discriminator procedure with the fourth
# input channel held at -1 and no skeleton term.

LOG_EPS = 1e-7


def _ref_images_to_batch(images):
    arrs = [img.data.transpose(2, 0, 1) for img in images]
    return np.stack(arrs, axis=0) * np.float32(2.0) - np.float32(1.0)


def _ref_with_const_channel(rgb):
    n, _, h, w = rgb.shape
    plane = np.full((n, 1, h, w), -1.0, dtype=rgb.dtype)
    return Tensor(np.concatenate([rgb, plane], axis=1))


def _ref_concat_const(gen_out):
    n, _, h, w = gen_out.data.shape
    plane = np.full((n, 1, h, w), -1.0, dtype=gen_out.data.dtype)
    return ad.concat(gen_out, Tensor(plane), axis=1)


def _ref_log_mean(scores):
    return ad.mean(ad.log(ad.clamp(scores, LOG_EPS, 1.0 - LOG_EPS)))


def _ref_log_one_minus_mean(scores):
    clamped = ad.clamp(scores, LOG_EPS, 1.0 - LOG_EPS)
    return ad.mean(ad.log(ad.add_scalar(ad.mul_scalar(clamped, -1.0), 1.0)))


def _ref_d_loss(real_scores, fake_scores):
    return ad.mul_scalar(
        ad.add(_ref_log_mean(real_scores), _ref_log_one_minus_mean(fake_scores)),
        -1.0,
    )


def _ref_params_grads(nets):
    params, grads = {}, {}
    for net_name, net in nets.items():
        for pname, p in net.named_params().items():
            params[f"{net_name}/{pname}"] = p.data
            grads[f"{net_name}/{pname}"] = p.grad
    return params, grads


def reference_plain_step(batch_x, batch_y, bundle, lambda_cyc):
    rgb_x = _ref_images_to_batch(batch_x)
    rgb_y = _ref_images_to_batch(batch_y)
    x_real, y_real = Tensor(rgb_x), Tensor(rgb_y)

    y_tilde = bundle.g_y.forward(_ref_with_const_channel(rgb_x), True)
    x_tilde = bundle.g_x.forward(_ref_concat_const(y_tilde), True)
    x_hat = bundle.g_x.forward(_ref_with_const_channel(rgb_y), True)
    y_hat = bundle.g_y.forward(_ref_concat_const(x_hat), True)

    for net in bundle.networks().values():
        net.zero_grads()
    fakes_x = Tensor(np.concatenate([x_tilde.data, x_hat.data], axis=0))
    fakes_y = Tensor(np.concatenate([y_tilde.data, y_hat.data], axis=0))
    adv_x = _ref_d_loss(bundle.d_x.forward(x_real, True),
                        bundle.d_x.forward(fakes_x, True))
    adv_y = _ref_d_loss(bundle.d_y.forward(y_real, True),
                        bundle.d_y.forward(fakes_y, True))
    ad.add(adv_x, adv_y).backward()
    d_params, d_grads = _ref_params_grads(bundle.discriminators())
    adam_step(d_params, d_grads, bundle.opt_d)

    for net in bundle.networks().values():
        net.zero_grads()
    gsx = bundle.d_x.forward(ad.concat(x_tilde, x_hat, axis=0), True)
    gsy = bundle.d_y.forward(ad.concat(y_tilde, y_hat, axis=0), True)
    g_adv = ad.add(ad.mul_scalar(_ref_log_mean(gsx), -1.0),
                   ad.mul_scalar(_ref_log_mean(gsy), -1.0))
    cyc = ad.add(ad.abs_mean(x_real, x_tilde), ad.abs_mean(y_real, y_hat))
    g_obj = ad.add(g_adv, ad.mul_scalar(cyc, lambda_cyc))
    g_obj.backward()
    g_params, g_grads = _ref_params_grads(bundle.generators())
    adam_step(g_params, g_grads, bundle.opt_g)
    for net in bundle.networks().values():
        net.zero_grads()


class TestAblationExactness:
    def test_disabled_matches_reference_bitwise_over_10_steps(self, rng):
        cfg = tiny_cfg(skeleton_channel=False, weights=LossWeights(1.0, 0.001))
        batches = [(glyph_batch(rng, 2), glyph_batch(rng, 2)) for _ in range(10)]

        trained = build_bundle(cfg)
        for bx, by in batches:
            train_step(bx, by, trained, cfg)

        reference = build_bundle(cfg)
        for bx, by in batches:
            reference_plain_step(bx, by, reference, cfg.weights.lambda_cyc)

        assert_states_equal(all_state(trained), all_state(reference))


class TestCheckpoint:
    def test_save_load_save_byte_identical(self, tmp_path, rng):
        cfg = tiny_cfg()
        bundle = build_bundle(cfg)
        train_step(glyph_batch(rng, 2), glyph_batch(rng, 2), bundle, cfg)
        p1 = tmp_path / "a.sgce"
        p2 = tmp_path / "b.sgce"
        save_bundle(p1, bundle, cfg)
        loaded, loaded_cfg = load_bundle(p1)
        save_bundle(p2, loaded, loaded_cfg)
        assert p1.read_bytes() == p2.read_bytes()

    def test_load_restores_state_exactly(self, tmp_path, rng):
        cfg = tiny_cfg()
        bundle = build_bundle(cfg)
        train_step(glyph_batch(rng, 2), glyph_batch(rng, 2), bundle, cfg)
        path = tmp_path / "ck.sgce"
        save_bundle(path, bundle, cfg)
        loaded, _ = load_bundle(path)
        assert loaded.step == bundle.step
        assert_states_equal(all_state(bundle), all_state(loaded))
        assert loaded.opt_g.t == bundle.opt_g.t
        for key in bundle.opt_g.m:
            assert np.array_equal(bundle.opt_g.m[key], loaded.opt_g.m[key])

    def test_magic_bytes(self, tmp_path, rng):
        cfg = tiny_cfg()
        bundle = build_bundle(cfg)
        path = tmp_path / "ck.sgce"
        save_bundle(path, bundle, cfg)
        assert path.read_bytes()[:4] == b"SGCE"


class TestTrainLoop:
    def test_log_rows_equal_steps(self, tmp_path, rng):
        cfg = tiny_cfg(epochs=2)
        ds = tiny_dataset(rng)
        log = tmp_path / "log.csv"
        _, rows = train(cfg, ds, tmp_path / "out.sgce", log_path=log)
        assert len(rows) == 2 * 3  # 6 train images, batch 2 -> 3 steps/epoch
        lines = log.read_text().strip().splitlines()
        assert lines[0] == "step,adv_x,adv_y,cyc,ske,total"
        assert len(lines) == 1 + len(rows)

    def test_training_deterministic(self, tmp_path, rng):
        ds = tiny_dataset(rng)
        outs = []
        for tag in ("a", "b"):
            cfg = tiny_cfg(epochs=1)
            out, rows = train(cfg, ds, tmp_path / f"{tag}.sgce")
            outs.append((tmp_path / f"{tag}.sgce").read_bytes())
            del rows
        assert outs[0] == outs[1]

    def test_resume_matches_uninterrupted(self, tmp_path, rng):
        ds = tiny_dataset(rng)
        cfg = tiny_cfg(epochs=2, checkpoint_every=3)
        train(cfg, ds, tmp_path / "full.sgce")

        # the step-3 intermediate plays the role of the interruption point
        mid = tmp_path / "full.sgce.step3"
        assert mid.exists()
        train(tiny_cfg(epochs=2, checkpoint_every=3), ds,
              tmp_path / "resumed.sgce", resume_path=mid)

        full_bundle, _ = load_bundle(tmp_path / "full.sgce")
        resumed_bundle, _ = load_bundle(tmp_path / "resumed.sgce")
        assert full_bundle.step == resumed_bundle.step == 6
        assert_states_equal(all_state(full_bundle), all_state(resumed_bundle))
        # the resumed file must be byte-identical to the uninterrupted one
        assert (tmp_path / "full.sgce").read_bytes() == \
            (tmp_path / "resumed.sgce").read_bytes()

    def test_empty_dataset_raises(self, tmp_path, rng):
        ds = LoadedDataset("a", "b", [], [], [], [])
        with pytest.raises(DataEmpty):
            train(tiny_cfg(), ds, tmp_path / "x.sgce")


class TestGenerate:
    def test_output_contract(self, tmp_path, rng):
        cfg = tiny_cfg()
        ds = tiny_dataset(rng)
        train(cfg, ds, tmp_path / "g.sgce")
        bundle, loaded_cfg = load_bundle(tmp_path / "g.sgce")
        outs = generate(bundle, loaded_cfg, ds.test_x, "xy")
        assert len(outs) == len(ds.test_x)
        for img in outs:
            assert img.channels == 3
            assert (img.width, img.height) == (16, 16)
            assert img.data.min() >= 0.0 and img.data.max() <= 1.0

    def test_deterministic_generation(self, tmp_path, rng):
        cfg = tiny_cfg()
        ds = tiny_dataset(rng)
        train(cfg, ds, tmp_path / "g.sgce")
        bundle, loaded_cfg = load_bundle(tmp_path / "g.sgce")
        a = generate(bundle, loaded_cfg, ds.test_x, "yx")
        bundle2, cfg2 = load_bundle(tmp_path / "g.sgce")
        b = generate(bundle2, cfg2, ds.test_x, "yx")
        for u, v in zip(a, b):
            assert np.array_equal(u.data, v.data)


class TestDiversity:
    def test_identical_outputs_score_zero(self, rng):
        img = glyph_batch(rng, 1)[0]
        gen = [img] * 4
        ref = glyph_batch(rng, 4)
        score, report = diversity_diagnostic(gen, ref)
        assert score == 0.0
        assert report["duplicate_clusters"] == [[0, 1, 2, 3]]

    def test_reference_against_itself_scores_one(self, rng):
        ref = glyph_batch(rng, 5)
        score, _ = diversity_diagnostic(list(ref), ref)
        assert score == pytest.approx(1.0)

    def test_matches_brute_force_on_repeated_pair(self, rng):
        a, b = glyph_batch(rng, 2)
        gen = [a, a, b, b]
        ref = glyph_batch(rng, 4)
        score, report = diversity_diagnostic(gen, ref)

        def mean_pairwise(images):
            tot, cnt = 0.0, 0
            for i in range(len(images)):
                for j in range(i + 1, len(images)):
                    tot += float(np.abs(images[i].data - images[j].data).mean())
                    cnt += 1
            return tot / cnt

        expected = min(mean_pairwise(gen) / mean_pairwise(ref), 1.0)
        assert score == pytest.approx(expected, abs=1e-12)

    def test_needs_two_images(self, rng):
        with pytest.raises(DataEmpty):
            diversity_diagnostic(glyph_batch(rng, 1), glyph_batch(rng, 3))
