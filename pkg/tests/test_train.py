import math

import numpy as np
import pytest
from _images import synthetic_image

from fitsr.coords import pixel_centers
from fitsr.model import ModelConfig, ModelParams, tiny_config
from fitsr.tensor import ConfigError, ShapeError
from fitsr.train import (
    FULL_SCALE_RECIPE,
    AdamState,
    TrainConfig,
    adam_step,
    augment,
    l1_loss,
    lr_at,
    random_patch,
    sample_batch,
    synth_pair,
    train,
)


class TestSynthPair:
    def test_lr_size(self, rng):
        pair = synth_pair(rng.uniform(size=(3, 48, 48)), 2.0, rng)
        assert pair.lr.shape == (3, 24, 24)

    def test_noninteger_floor(self, rng):
        pair = synth_pair(rng.uniform(size=(3, 20, 20)), 3.3, rng)
        assert pair.lr.shape == (3, 6, 6)

    def test_unit_scale_is_exact(self, rng):
        hr = rng.uniform(size=(3, 10, 10))
        pair = synth_pair(hr, 1.0, rng, flips=(False, False, False))
        assert np.array_equal(pair.lr, hr)

    @pytest.mark.parametrize("flips", [(True, False, False), (False, True, False), (False, False, True)])
    def test_involutions(self, rng, flips):
        x = rng.uniform(size=(3, 6, 6))
        assert np.array_equal(augment(augment(x, *flips), *flips), x)

    def test_targets_are_hr_pixel_centers(self, rng):
        hr = rng.uniform(size=(3, 12, 9))
        pair = synth_pair(hr, 1.5, rng, samples=40)
        ys, xs = pixel_centers(pair.hr.shape[1]), pixel_centers(pair.hr.shape[2])
        for (y, x), rgb in zip(pair.coords, pair.rgb):
            i, j = np.flatnonzero(np.isclose(ys, y)), np.flatnonzero(np.isclose(xs, x))
            assert len(i) == 1 and len(j) == 1
            assert np.array_equal(pair.hr[:, i[0], j[0]], rgb)

    def test_too_small(self, rng):
        with pytest.raises(ValueError):
            synth_pair(rng.uniform(size=(3, 3, 3)), 4.0, rng)

    def test_random_patch_fits(self, rng):
        cfg = TrainConfig(patch=24, scale_min=2, scale_max=4)
        for _ in range(10):
            patch, eta = random_patch(rng.uniform(size=(3, 40, 50)), cfg, rng)
            assert 2 <= eta <= 4 and patch.shape[1] == patch.shape[2] <= 40


class TestLoss:
    def test_identical(self, rng):
        x = rng.normal(size=(4, 3))
        assert l1_loss(x, x) == 0.0

    def test_offset(self, rng):
        x = rng.normal(size=(4, 3))
        assert abs(l1_loss(x + 0.5, x) - 0.5) < 1e-15

    def test_scalar_loop(self, rng):
        a, b = rng.normal(size=(2, 5, 3))
        total = 0.0
        for i in range(5):
            for j in range(3):
                total += abs(a[i, j] - b[i, j])
        assert abs(l1_loss(a, b) - total / 15) < 1e-12

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            l1_loss(np.zeros(3), np.zeros(4))


class TestAdam:
    def test_zero_gradient(self, rng):
        p = {"w": rng.normal(size=3)}
        new, st = adam_step(p, {"w": np.zeros(3)}, AdamState.zeros(p), 1e-3)
        assert np.array_equal(new["w"], p["w"])
        assert st.t == 1 and not st.m["w"].any() and not st.v["w"].any()

    def test_moments_decay(self, rng):
        p = {"w": rng.normal(size=3)}
        st = AdamState(1, {"w": np.ones(3)}, {"w": np.ones(3)})
        _, st2 = adam_step(p, {"w": np.zeros(3)}, st, 1e-3)
        assert np.allclose(st2.m["w"], 0.9) and np.allclose(st2.v["w"], 0.999)

    def test_first_step_closed_form(self, rng):
        p = {"w": rng.normal(size=4)}
        g = np.array([0.3, -2.0, 1e-3, 5.0])
        new, _ = adam_step(p, {"w": g}, AdamState.zeros(p), 1e-2)
        want = p["w"] - 1e-2 * g / (np.abs(g) + 1e-8)
        assert np.abs(new["w"] - want).max() < 1e-12

    def test_deterministic(self, rng):
        p = {"w": rng.normal(size=(2, 2))}
        grads = [rng.normal(size=(2, 2)) for _ in range(5)]

        def run():
            q, st = p, AdamState.zeros(p)
            for g in grads:
                q, st = adam_step(q, {"w": g}, st, 1e-3)
            return q["w"]

        assert np.array_equal(run(), run())

    def test_inputs_untouched(self, rng):
        p = {"w": rng.normal(size=3)}
        w0 = p["w"].copy()
        adam_step(p, {"w": np.ones(3)}, AdamState.zeros(p), 0.1)
        assert np.array_equal(p["w"], w0)


class TestSchedule:
    cfg = TrainConfig()

    def test_start(self):
        assert lr_at(0, self.cfg) == 1e-5

    def test_peak(self):
        assert abs(lr_at(50, self.cfg) - 1e-4) < 1e-18

    def test_floor(self):
        assert abs(lr_at(self.cfg.epochs, self.cfg) - 1e-6) < 1e-18

    def test_monotone_phases(self):
        lrs = [lr_at(e, self.cfg) for e in range(self.cfg.epochs + 1)]
        assert all(a < b for a, b in zip(lrs[:50], lrs[1:51]))
        assert all(a >= b for a, b in zip(lrs[50:], lrs[51:]))

    def test_full_scale_recipe_schedule(self):
        cfg = TrainConfig(**FULL_SCALE_RECIPE)
        assert cfg.batch_size == 32 and cfg.epochs == 1000 and cfg.warmup == 50
        assert lr_at(0, cfg) == 1e-5 and math.isclose(lr_at(50, cfg), 1e-4)


class TestConfig:
    def test_warmup_shorter_than_total(self):
        with pytest.raises(ConfigError, match="warmup"):
            TrainConfig(epochs=10, warmup=10)

    def test_scale_order(self):
        with pytest.raises(ConfigError, match="scale"):
            TrainConfig(scale_min=3, scale_max=2)
        with pytest.raises(ConfigError):
            TrainConfig(scale_min=0.5)


OVERFIT = TrainConfig(batch_size=1, epochs=20, lr_start=1e-4, lr_peak=1e-3, lr_floor=1e-5,
                      warmup=10, patch=16, scale_min=2, scale_max=2, samples=1024, augment=False)


def test_fixed_batch_loss_decreases():
    hr = synthetic_image(32)
    pair = synth_pair(hr, 2.0, np.random.default_rng(0), samples=1024, flips=(False,) * 3)
    cfg = OVERFIT.replace(epochs=21)
    _, losses = train(ModelParams.init(ModelConfig(), 0), [hr], cfg, fixed_batch=[pair])
    # 21 evaluations give the 20 step-to-step transitions
    decreases = sum(b < a for a, b in zip(losses, losses[1:]))
    assert len(losses) == 21 and decreases >= 15


def test_training_reproducible():
    hr = synthetic_image(24)
    cfg = TrainConfig(batch_size=2, epochs=10, warmup=2, patch=8, samples=64, seed=4)
    _, a = train(ModelParams.init(tiny_config(), 1), [hr], cfg)
    _, b = train(ModelParams.init(tiny_config(), 1), [hr], cfg)
    assert np.abs(np.array(a) - np.array(b)).max() <= 1e-10


def test_sample_batch_sizes():
    cfg = TrainConfig(batch_size=3, patch=8, samples=50, scale_min=1.5, scale_max=3)
    batch = sample_batch([synthetic_image(30)], cfg, np.random.default_rng(0))
    assert len(batch) == 3
    for pair in batch:
        assert pair.coords.shape == (50, 2) and pair.rgb.shape == (50, 3)
        assert np.all(np.abs(pair.coords) < 1)
