from dataclasses import replace

import numpy as np
import pytest

from stress_sr.acquisition import ScanProtocol, acquire, slice_time
from stress_sr.models import BDNConfig, ModelBundle, SRConfig, build_sr
from stress_sr.motion import STATIC, KeypointSet, MotionStats, synthesize_trajectory
from stress_sr.pipeline import (
    StressConfig,
    baseline_si,
    baseline_sti,
    baseline_ti,
    build_training_set,
    desk_config,
    evaluate,
    interpolated_frames,
    make_benchmark,
    mean_metric,
    run_inference,
    run_training,
    smore_config,
)
from stress_sr.volume import Volume

KP = KeypointSet((-3, 4, 1), (3, 4, 1), (0, -2, -5))


def _scan(vol, n_i=2, stacks=3, static=True, seed=0):
    proto = ScanProtocol(n_interleave=n_i, num_slices=vol.shape[2], stack_duration_s=1.0, num_stacks=stacks)
    stats = STATIC if static else MotionStats()
    traj = synthesize_trajectory(proto.scan_duration_s + 0.1, 0.05, stats, seed=seed, keypoints=KP)
    return acquire(vol, traj, proto), proto


def _centred(data):
    n = np.array(data.shape)
    return Volume(data, origin=tuple(-(n - 1) / 2))


def _z_constant(shape=(20, 18, 16), seed=0):
    base = np.random.default_rng(seed).uniform(size=shape[:2] + (1,))
    return _centred(np.repeat(base, shape[2], axis=2))


class TestConfig:
    def test_for_protocol(self):
        cfg = StressConfig.for_protocol(ScanProtocol(n_interleave=4))
        assert cfg.L == 2 and cfg.sr.in_channels == 5 and cfg.P == 64
        assert cfg.patch_stride == 32

    def test_mismatched_channels(self):
        with pytest.raises(ValueError):
            StressConfig(L=2, sr=SRConfig(in_channels=3))

    def test_desk(self):
        cfg = desk_config(ScanProtocol(n_interleave=2))
        assert (cfg.sr.num_blocks, cfg.sr.num_channels, cfg.sr.iterations) == (4, 32, 2000)
        assert cfg.P == 32 and cfg.L == 1

    def test_smore_is_single_frame(self):
        cfg = smore_config(desk_config(ScanProtocol(n_interleave=4)))
        assert cfg.L == 0 and cfg.sr.in_channels == 1
        assert cfg.sr.num_blocks == 4


class TestBaselines:
    @pytest.mark.parametrize("n_i", [1, 2, 4])
    def test_si_exact_on_z_constant(self, n_i):
        vol = _z_constant()
        frames, proto = _scan(vol, n_i)
        for out in baseline_si(frames, proto):
            np.testing.assert_allclose(out.data, vol.data, atol=1e-6)

    @pytest.mark.parametrize("n_i", [2, 4])
    def test_ti_exact_on_static(self, n_i):
        vol = _centred(np.random.default_rng(1).uniform(size=(10, 9, 16)))
        frames, proto = _scan(vol, n_i)
        for out in baseline_ti(frames, proto):
            np.testing.assert_array_equal(out.data, vol.data.astype(np.float32))

    def test_ti_matches_direct_oracle(self):
        vol = _centred(np.random.default_rng(2).uniform(size=(8, 7, 12)))
        frames, proto = _scan(vol, 2, stacks=3, static=False, seed=3)
        ti = baseline_ti(frames, proto)
        rng = np.random.default_rng(0)
        for _ in range(40):
            f = int(rng.integers(len(frames)))
            z = int(rng.integers(12))
            x, y = int(rng.integers(8)), int(rng.integers(7))
            fr = frames[f]
            if z in fr.z_indices:
                expected = fr.slices[x, y, fr.z_indices.index(z)]
            else:
                t = slice_time(fr.frame_index, z, proto)
                hits = [(g.times[g.z_indices.index(z)], g.slices[x, y, g.z_indices.index(z)]) for g in frames if z in g.z_indices]
                before = [h for h in hits if h[0] <= t]
                after = [h for h in hits if h[0] > t]
                if not before:
                    expected = after[0][1]
                elif not after:
                    expected = before[-1][1]
                else:
                    (t0, v0), (t1, v1) = before[-1], after[0]
                    expected = v0 + (t - t0) / (t1 - t0) * (v1 - v0)
            assert ti[f].data[x, y, z] == pytest.approx(expected, abs=1e-6)

    def test_sti_is_mean_at_missing_slices(self):
        vol = _centred(np.random.default_rng(4).uniform(size=(8, 7, 12)))
        frames, proto = _scan(vol, 2, static=False, seed=5)
        si, ti, sti = baseline_si(frames, proto), baseline_ti(frames, proto), baseline_sti(frames, proto)
        for fr, a, b, c in zip(frames, si, ti, sti):
            missing = [z for z in range(12) if z not in fr.z_indices]
            np.testing.assert_allclose(c.data[:, :, missing], 0.5 * (a.data + b.data)[:, :, missing], atol=1e-6)
            np.testing.assert_array_equal(c.data[:, :, list(fr.z_indices)], fr.slices)

    def test_ti_needs_two_frames(self):
        frames, proto = _scan(_z_constant(), 2, stacks=1)
        with pytest.raises(ValueError):
            baseline_ti(frames[:1], proto)


class TestTrainingSet:
    def test_static_z_constant_pairs_are_exact(self):
        # The second stage subsamples the transposed volume, i.e. along the
        # original x, so the object is made constant along x as well as z.
        profile = np.random.default_rng(0).uniform(size=(1, 16, 1))
        vol = _centred(np.broadcast_to(profile, (16, 16, 16)).copy())
        frames, proto = _scan(vol, 2, stacks=2)
        cfg = StressConfig.for_protocol(proto, P=8, sr=SRConfig(num_blocks=1, num_channels=4))
        lr, hr = build_training_set(frames, cfg)
        assert lr.shape[1:] == (3, 8, 8) and hr.shape[1:] == (8, 8)
        np.testing.assert_allclose(lr[:, 1], hr, atol=1e-6)

    def test_only_acquired_slabs_are_targets(self):
        vol = _centred(np.random.default_rng(6).uniform(0.5, 1, size=(16, 16, 16)))
        frames, proto = _scan(vol, 2, stacks=1)
        cfg = StressConfig.for_protocol(proto, P=16, sr=SRConfig(num_blocks=1, num_channels=4))
        lr, hr = build_training_set(frames, cfg)
        assert len(hr) == 16  # 8 acquired slabs per frame, one patch each
        # each target is an acquired slice in (y, x) orientation
        acquired = {fr.frame_index: fr for fr in frames}
        expected = [acquired[k].slices[:, :, acquired[k].z_indices.index(z)].T for k in (1, 2) for z in acquired[k].z_indices]
        np.testing.assert_allclose(hr, np.stack(expected), atol=1e-6)


def _tiny_cfg(proto, **kw):
    sr = SRConfig(num_blocks=1, num_channels=4, iterations=5, batch_size=2)
    bdn = BDNConfig(num_channels=4, num_layers=2, iterations=3, batch_size=2, patch_size=8)
    return StressConfig.for_protocol(proto, P=8, sr=sr, bdn=bdn, **kw)


class TestTrainingAndInference:
    def test_untrained_network_is_interpolation(self):
        vol = _centred(np.random.default_rng(7).uniform(size=(12, 10, 12)))
        frames, proto = _scan(vol, 2, static=False, seed=1)
        cfg = _tiny_cfg(proto)
        bundle = ModelBundle(build_sr(cfg.sr), cfg.sr)
        out = run_inference(frames, bundle, cfg)
        for a, b in zip(out, interpolated_frames(frames, proto)):
            np.testing.assert_allclose(a.data, b.data, atol=1e-5)
            assert a.spacing == b.spacing and a.origin == b.origin

    def test_incompatible_bundle(self):
        frames, proto = _scan(_z_constant((12, 10, 12)), 2)
        cfg = _tiny_cfg(proto)
        bundle = ModelBundle(build_sr(replace(cfg.sr, in_channels=5)), replace(cfg.sr, in_channels=5))
        with pytest.raises(ValueError, match="incompatible bundle"):
            run_inference(frames, bundle, cfg)

    def test_bundle_contents(self):
        vol = _centred(np.random.default_rng(8).uniform(0.2, 1, size=(12, 12, 12)))
        frames, proto = _scan(vol, 2)
        plain = run_training(frames, _tiny_cfg(proto))
        assert plain.bdn is None and len(plain.sr_loss) == 5 and plain.bdn_loss == []
        with_bdn = run_training(frames, _tiny_cfg(proto, enable_bdn=True))
        assert with_bdn.bdn is not None and len(with_bdn.bdn_loss) == 3
        assert plain.noise_sigma == 0.0 and with_bdn.noise_sigma >= 0.0
        out = run_inference(frames, with_bdn, _tiny_cfg(proto, enable_bdn=True))
        assert len(out) == len(frames) and out[0].shape == vol.shape

    def test_too_few_frames(self):
        frames, proto = _scan(_z_constant((12, 10, 12)), 4, stacks=1)
        cfg = StressConfig.for_protocol(proto, P=8, L=3, sr=SRConfig(num_blocks=1, num_channels=4))
        with pytest.raises(ValueError):
            run_training(frames[:3], cfg)


class TestBenchmark:
    def test_split_and_truth(self):
        b = make_benchmark(2, num_stacks=3, phantom_spec=None)
        train, test = b.split(2)
        assert len(b.frames) == 6 and len(train) == 4 and test == [4, 5]
        assert all(t.shape == b.phantom.shape for t in b.truth)
        # acquired slices of every frame agree with the ground truth at those slices
        for fr, gt in zip(b.frames, b.truth):
            np.testing.assert_allclose(fr.slices, gt.data[:, :, list(fr.z_indices)], atol=1e-5)

    def test_evaluate_rows(self):
        b = make_benchmark(2, num_stacks=2)
        rows = evaluate(baseline_si(b.frames, b.protocol), b.truth, [2, 3], "SI")
        assert [(r[0], r[1], r[2]) for r in rows] == [(3, "SI", "psnr"), (3, "SI", "ssim"), (4, "SI", "psnr"), (4, "SI", "ssim")]
        assert mean_metric(rows, "SI") == pytest.approx((rows[0][3] + rows[2][3]) / 2)

    def test_noise_level(self):
        b = make_benchmark(2, num_stacks=1, noise_fraction=0.05)
        assert b.noise_sigma == pytest.approx(0.05 * b.phantom.data.max())
        assert not np.array_equal(b.frames[0].slices, b.clean_frames[0].slices)


@pytest.mark.slow
def test_static_training_beats_cubic_interpolation():
    """Zero motion and no noise: the desk-scale network gains at least 1 dB over SI."""
    b = make_benchmark(2, stats=STATIC)
    train, test = b.split(5)
    cfg = desk_config(b.protocol)
    bundle = run_training(train, cfg)
    rows = evaluate(run_inference(b.frames, bundle, cfg), b.truth, test, "STRESS", with_ssim=False)
    rows += evaluate(baseline_si(b.frames, b.protocol), b.truth, test, "SI", with_ssim=False)
    assert mean_metric(rows, "STRESS") >= mean_metric(rows, "SI") + 1.0
