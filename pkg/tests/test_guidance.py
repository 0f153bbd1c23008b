import math

import numpy as np
import pytest

from tessera import (
    CanvasJob,
    ConfigError,
    GuideSpec,
    HorizontalGradient,
    NoiseSchedule,
    PlacementError,
    Region,
    RegionSpec,
    ShapeError,
    apply_guides,
    make_linear_schedule,
    noisy_guide,
    override_threshold,
    sample,
    sample_with_guides,
)

from .helpers import flat_predictor


class TestThreshold:
    @pytest.mark.parametrize("g,T,expected", [(1.0, 1000, 0), (0.0, 1000, 1000), (0.6, 1000, 400), (0.75, 50, 13), (0.5, 7, 4)])
    def test_values(self, g, T, expected):
        assert override_threshold(g, T) == expected

    def test_range(self):
        with pytest.raises(ConfigError):
            override_threshold(1.2, 10)


class TestNoisyGuide:
    def test_level_zero_is_guide(self, default_sched, rng):
        g = rng.uniform(-1, 1, (3, 4, 1))
        assert np.array_equal(noisy_guide(g, 0, rng.standard_normal((3, 4, 1)), default_sched), g)

    def test_last_level(self, default_sched, rng):
        g = rng.uniform(-1, 1, (3, 4, 1))
        xT = rng.standard_normal((3, 4, 1))
        out = noisy_guide(g, 1000, xT, default_sched)
        assert np.all(np.abs(out - xT) <= math.sqrt(default_sched.abar(1000)) * np.abs(g).max() + 1e-4)

    def test_worked_value(self):
        s = NoiseSchedule.from_betas([0.1, 0.2])
        out = noisy_guide(np.full((1, 1, 1), 0.5), 2, np.ones((1, 1, 1)), s)
        assert out.item() == pytest.approx(0.848528137 * 0.5 + 0.529150262, abs=1e-9)
        assert out.item() == pytest.approx(0.953414, abs=1e-6)

    def test_literal_exponent(self):
        s = NoiseSchedule.from_betas([0.1, 0.2])
        out = noisy_guide(np.full((1, 1, 1), 0.5), 2, np.ones((1, 1, 1)), s, noise_exponent=1.0)
        assert out.item() == pytest.approx(math.sqrt(0.72) * 0.5 + 0.28, abs=1e-12)

    def test_shape(self, default_sched):
        with pytest.raises(ShapeError):
            noisy_guide(np.zeros((2, 2, 1)), 3, np.zeros((2, 3, 1)), default_sched)


class TestApplyGuides:
    def test_no_guides(self, default_sched, rng):
        x = rng.standard_normal((4, 4, 1))
        assert apply_guides(x, 5, [], x, default_sched) is x

    def test_full_strength_at_zero(self, default_sched, rng):
        g = rng.uniform(-1, 1, (4, 4, 1))
        out = apply_guides(rng.standard_normal((4, 4, 1)), 0, [GuideSpec(g, Region(0, 4, 0, 4), 1.0)], rng.standard_normal((4, 4, 1)), default_sched)
        assert np.array_equal(out, g)

    def test_later_guide_wins(self, default_sched, rng):
        xT = rng.standard_normal((4, 6, 1))
        a = GuideSpec(np.full((4, 4, 1), 0.5), Region(0, 4, 0, 4), 1.0)
        b = GuideSpec(np.full((4, 4, 1), -0.5), Region(0, 4, 2, 6), 1.0)
        x = np.zeros((4, 6, 1))
        out = apply_guides(x, 10, [a, b], xT, default_sched)
        np.testing.assert_array_equal(out[:, 2:6], noisy_guide(b.image, 10, xT[:, 2:6], default_sched))
        np.testing.assert_array_equal(out[:, :2], noisy_guide(a.image, 10, xT[:, :4], default_sched)[:, :2])
        assert np.all(x == 0)  # input untouched

    def test_inactive_below_threshold(self, default_sched, rng):
        x = rng.standard_normal((2, 2, 1))
        g = GuideSpec(np.zeros((2, 2, 1)), Region(0, 2, 0, 2), 0.6)
        assert np.array_equal(apply_guides(x, 399, [g], x, default_sched), x)
        assert not np.array_equal(apply_guides(x, 400, [g], x, default_sched), x)

    def test_idempotent(self, default_sched, rng):
        xT = rng.standard_normal((4, 6, 1))
        guides = [GuideSpec(rng.uniform(-1, 1, (3, 3, 1)), Region(1, 4, 0, 3), 0.8),
                  GuideSpec(rng.uniform(-1, 1, (2, 4, 1)), Region(0, 2, 2, 6), 1.0)]
        once = apply_guides(rng.standard_normal((4, 6, 1)), 700, guides, xT, default_sched)
        assert np.array_equal(apply_guides(once, 700, guides, xT, default_sched), once)

    def test_out_of_bounds(self, default_sched):
        g = GuideSpec(np.zeros((2, 2, 1)), Region(3, 5, 0, 2), 1.0)
        with pytest.raises(PlacementError):
            apply_guides(np.zeros((4, 4, 1)), 1, [g], np.zeros((4, 4, 1)), default_sched)

    def test_spec_validation(self):
        with pytest.raises(ShapeError):
            GuideSpec(np.zeros((2, 3, 1)), Region(0, 2, 0, 2), 0.5)
        with pytest.raises(ConfigError):
            GuideSpec(np.zeros((2, 2, 1)), Region(0, 2, 0, 2), 1.5)
        with pytest.raises(ConfigError):
            GuideSpec(np.zeros((2, 2, 1)), Region(0, 2, 0, 2), 0.5, noise_exponent=2.0)


def guided_job(sched, seed, guides):
    pred = flat_predictor(sched, sigma0=0.5, a=0.5, b=-0.5)
    regions = [RegionSpec(Region(0, 8, 0, 10), "a"), RegionSpec(Region(0, 8, 6, 16), "b")]
    return CanvasJob(8, 16, 1, sched, regions, seed, pred, guides)


class TestSampleWithGuides:
    def test_full_strength_exact(self):
        sched = make_linear_schedule(40, 1e-3, 0.05)
        g = HorizontalGradient(-0.9, 0.9).render(4, 8, 1)
        job = guided_job(sched, 3, [GuideSpec(g, Region(2, 6, 4, 12), 1.0)])
        out = sample_with_guides(job)
        assert np.array_equal(out[2:6, 4:12], g)

    def test_incremental_workflow(self):
        sched = make_linear_schedule(40, 1e-3, 0.05)
        bottom = np.random.default_rng(0).uniform(-1, 1, (4, 16, 1))
        guide = GuideSpec(bottom, Region(4, 8, 0, 16), 1.0)
        a = sample_with_guides(guided_job(sched, 1, [guide]))
        b = sample_with_guides(guided_job(sched, 2, [guide]))
        assert a[4:].tobytes() == b[4:].tobytes()
        assert not np.array_equal(a[:4], b[:4])

    def test_zero_strength_only_touches_init(self):
        sched = make_linear_schedule(30, 1e-3, 0.05)
        g = GuideSpec(np.full((8, 16, 1), 0.7), Region(0, 8, 0, 16), 0.0)
        seen = []
        sample(guided_job(sched, 4, [g]), on_step=lambda t, x: seen.append((t, x.copy())))
        plain = []
        sample(guided_job(sched, 4, []), on_step=lambda t, x: plain.append((t, x.copy())))
        # initial state differs by exactly the override
        xT = plain[0][1]
        np.testing.assert_array_equal(seen[0][1], noisy_guide(g.image, 30, xT, sched))
        # no override at any later level
        for t, x in seen[1:]:
            assert not np.array_equal(x, noisy_guide(g.image, t, xT, sched))
        assert not np.array_equal(seen[-1][1], plain[-1][1])

    def test_deterministic(self):
        sched = make_linear_schedule(20, 1e-3, 0.05)
        job = guided_job(sched, 9, [GuideSpec(np.zeros((4, 4, 1)), Region(0, 4, 0, 4), 0.5)])
        assert sample_with_guides(job).tobytes() == sample_with_guides(job).tobytes()
        assert sample_with_guides(job, mode="batch").tobytes() == sample_with_guides(job).tobytes()
