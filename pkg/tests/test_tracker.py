import numpy as np
import pytest

from oracles import oversampled_argmax
from synthutil import textured_sequence, iou_xywh

from corrtrack import tracker as T
from corrtrack.errors import DataError, InvalidInputError
from corrtrack.features import FeatureBlock, FeatureProviderConfig, fuse
from corrtrack.fourier import real_grid_from_coeffs, shift_coeffs
from corrtrack.scale import ScaleFilter, ScaleFilterConfig
from corrtrack.semantic import cosine_window
from corrtrack.spectral import (PenaltySpectrum, SampleMemory, gaussian_label,
                                interp_kernel, learn, project_sample,
                                response_spectrum, update_samples)


def small_frame(seed=0, shape=(120, 160)):
    rng = np.random.default_rng(seed)
    return rng.random(shape + (3,))


class TestInit:
    def test_deterministic(self):
        frame = small_frame(1)
        box = (60.0, 40.0, 24.0, 24.0)
        a = T.init(frame, box, T.TrackerConfig())
        b = T.init(frame, box, T.TrackerConfig())
        assert np.array_equal(a.filt, b.filt)
        assert a.center == b.center and a.scale == b.scale
        assert np.array_equal(a.scale_filter.num, b.scale_filter.num)

    def test_rejects_degenerate_and_outside_boxes(self):
        frame = small_frame(2)
        with pytest.raises(InvalidInputError):
            T.init(frame, (10, 10, 1.0, 1.0), T.TrackerConfig())
        with pytest.raises(InvalidInputError):
            T.init(frame, (150, 40, 24, 24), T.TrackerConfig())
        with pytest.raises(InvalidInputError):
            T.init(frame, (-2, 40, 24, 24), T.TrackerConfig())

    def test_init_then_step_on_same_frame_stays_put(self):
        frames, gt = textured_sequence(2, velocity=(0, 0), zoom=1.0, seed=4,
                                       base_size=(24.0, 24.0),
                                       start_center=(100.0, 90.0),
                                       frame_shape=(200, 240))
        state = T.init(frames[0], gt[0], T.TrackerConfig())
        c0 = state.center
        box, state = T.step(frames[0], state)
        assert np.hypot(state.center[0] - c0[0], state.center[1] - c0[1]) <= 0.5
        gx, gy = gt[0][0] + gt[0][2] / 2, gt[0][1] + gt[0][3] / 2
        assert np.hypot(state.center[0] - gx, state.center[1] - gy) <= 1.0


class TestConfidenceMap:
    @staticmethod
    def _fitted(seed=5, q=16, channels=2):
        rng = np.random.default_rng(seed)
        stack = fuse([FeatureBlock("blk", rng.random((channels, q, q)), 1.0)])
        kernels = {(q, q): interp_kernel((q, q), (q, q))}
        windows = {(q, q): cosine_window(q, q)}
        from corrtrack.semantic import apply_weighting
        z = project_sample(apply_weighting(stack, None, windows), kernels)
        label = gaussian_label((q, q), (5.0, 5.0))
        memory = update_samples(SampleMemory(), z, 1.0)
        no_penalty = PenaltySpectrum(np.zeros((3, 3)), (5.0, 5.0), (q, q))
        filt = learn(memory, label, no_penalty, np.zeros_like(z), 200).filter
        return stack, kernels, windows, z, label, filt

    def test_reproduces_label_on_training_sample(self):
        stack, kernels, windows, z, label, filt = self._fitted()
        score = T.confidence_map(filt, stack, kernels, None, windows)
        expect = real_grid_from_coeffs(label.coeffs)
        rms = np.sqrt(np.mean((score.values - expect) ** 2))
        assert rms <= 1e-4
        assert score.max_pos == (0, 0)

    def test_zero_filter_gives_zero_map(self):
        stack, kernels, windows, z, label, filt = self._fitted()
        score = T.confidence_map(np.zeros_like(filt), stack, kernels, None, windows)
        assert np.all(score.values == 0.0)

    def test_shifted_sample_shifts_argmax(self):
        _, _, _, z, label, filt = self._fitted()
        for shift in ((3, 5), (-4, 2), (7, -6)):
            score = T.ScoreGrid.from_coeffs(
                response_spectrum(shift_coeffs(z, shift), filt))
            assert score.max_pos == (shift[0] % 16, shift[1] % 16)

    def test_shape_mismatch_rejected(self):
        stack, kernels, windows, _, _, filt = self._fitted()
        with pytest.raises(InvalidInputError):
            T.confidence_map(filt[:1], stack, kernels, None, windows)


class TestLocalize:
    def test_planted_cosine_recovers_analytic_maximum(self):
        q = 24
        for phi1, phi2 in ((0.7, -1.1), (2.0, 0.3), (-2.4, 1.9)):
            coeffs = np.zeros((q, q), dtype=complex)
            coeffs[0, 0] = 1.0
            coeffs[1, 0] = 0.4 * np.exp(-1j * phi1)
            coeffs[-1, 0] = 0.4 * np.exp(1j * phi1)
            coeffs[0, 1] = 0.3 * np.exp(-1j * phi2)
            coeffs[0, -1] = 0.3 * np.exp(1j * phi2)
            score = T.ScoreGrid.from_coeffs(coeffs)
            p1, p2 = T.localize(score)
            want1 = (phi1 / (2 * np.pi) * q + q / 2) % q - q / 2
            want2 = (phi2 / (2 * np.pi) * q + q / 2) % q - q / 2
            assert abs(p1 - want1) < 1e-6
            assert abs(p2 - want2) < 1e-6

    def test_symmetric_score_gives_zero(self):
        lab = gaussian_label((17, 17), (4.0, 4.0))
        score = T.ScoreGrid.from_coeffs(lab.coeffs)
        p1, p2 = T.localize(score)
        assert abs(p1) < 1e-9 and abs(p2) < 1e-9

    def test_subcell_shift_against_oversampled_oracle(self):
        lab = gaussian_label((20, 20), (6.0, 6.0))
        shifted = shift_coeffs(lab.coeffs, (0.3, -0.45))
        score = T.ScoreGrid.from_coeffs(shifted)
        p1, p2 = T.localize(score)
        o1, o2 = oversampled_argmax(shifted, factor=512)
        assert abs(p1 - o1) <= 0.05 and abs(p2 - o2) <= 0.05
        assert abs(p1 - 0.3) <= 0.01 and abs(p2 + 0.45) <= 0.01

    def test_rejects_bad_scores(self):
        bad = T.ScoreGrid(np.full((4, 4), np.nan), np.zeros((4, 4), complex), (0, 0), 0.0)
        with pytest.raises(DataError):
            T.localize(bad)
        tiny = T.ScoreGrid(np.zeros((2, 4)), np.zeros((2, 4), complex), (0, 0), 0.0)
        with pytest.raises(InvalidInputError):
            T.localize(tiny)




class TestEstimateScale:
    def test_candidates_form_exact_geometric_grid(self):
        sf = ScaleFilter(ScaleFilterConfig())
        assert len(sf.factors) == 17
        assert np.allclose(sf.factors, 1.02 ** np.arange(-8, 9), rtol=0, atol=0)
        assert sf.factors[8] == 1.0

    def test_static_sequence_selects_current_scale(self):
        frames, gt = textured_sequence(3, velocity=(0, 0), zoom=1.0, seed=5,
                                       base_size=(36.0, 36.0),
                                       start_center=(150.0, 130.0),
                                       frame_shape=(400, 560))
        state = T.init(frames[0], gt[0], T.TrackerConfig())
        xf, valid = state.scale_filter._pyramid(frames[1], state.center,
                                                state.base_size, 1.0)
        resp = state.scale_filter.responses(xf)
        assert int(np.argmax(resp)) == 8
        est = T.estimate_scale(frames[1], state)
        assert abs(np.log(est) / np.log(1.02)) <= 0.5

    def test_argmax_invariant_to_positive_response_scaling(self):
        rng = np.random.default_rng(6)
        resp = rng.random(17)
        assert np.argmax(resp) == np.argmax(7.3 * resp)

    def test_analytic_zoom_tracked_within_one_step(self):
        # oracle: the sequence is rendered with exact 1.02-per-frame growth
        frames, gt = textured_sequence(15, velocity=(0.8, 0.6), zoom=1.02,
                                       seed=3, base_size=(36.0, 36.0),
                                       start_center=(150.0, 130.0),
                                       frame_shape=(400, 560))
        centers = [(g[0] + g[2] / 2, g[1] + g[3] / 2) for g in gt]
        base = (gt[0][2], gt[0][3])
        sf = ScaleFilter(ScaleFilterConfig())
        sf.init(frames[0], centers[0], base, 1.0)
        s = 1.0
        for i in range(1, 15):
            s = sf.estimate(frames[i], centers[i], base, s)
            sf.update(frames[i], centers[i], base, s)
            lag = abs(np.log(s / 1.02 ** i) / np.log(1.02))
            assert lag <= 1.0, f"frame {i}: lag {lag:.2f} steps"

    def test_tiny_target_clamps_candidate_range(self):
        frame = small_frame(7)
        sf = ScaleFilter(ScaleFilterConfig())
        xf, valid = sf._pyramid(frame, (50.0, 50.0), (3.0, 3.0), 1.0)
        assert not valid.all()
        assert valid.any()


class TestStep:
    def test_translating_target_tracked(self):
        frames, gt = textured_sequence(40, velocity=(1.3, 0.9), zoom=1.0, seed=0,
                                       base_size=(28.0, 28.0),
                                       start_center=(60.0, 55.0),
                                       frame_shape=(240, 320))
        state = T.init(frames[0], gt[0], T.TrackerConfig())
        ious = []
        for i in range(1, 40):
            box, state = T.step(frames[i], state)
            ious.append(iou_xywh(box, gt[i]))
        assert sum(v >= 0.5 for v in ious) == len(ious)
        assert state.frame_index == 40

    def test_zero_learning_rate_freezes_filter(self):
        frames, gt = textured_sequence(4, velocity=(0.5, 0.5), zoom=1.0, seed=8,
                                       base_size=(24.0, 24.0),
                                       start_center=(100.0, 90.0),
                                       frame_shape=(200, 240))
        cfg = T.TrackerConfig(learning_rate=0.0)
        state = T.init(frames[0], gt[0], cfg)
        frozen = state.filt.copy()
        for i in range(1, 4):
            _, state = T.step(frames[i], state)
            assert np.array_equal(state.filt, frozen)
            assert len(state.memory) == 1

    def test_box_size_is_exactly_base_times_scale(self):
        frames, gt = textured_sequence(6, velocity=(0.7, 0.4), zoom=1.004, seed=9,
                                       base_size=(30.0, 30.0),
                                       start_center=(120.0, 100.0),
                                       frame_shape=(260, 320))
        state = T.init(frames[0], gt[0], T.TrackerConfig())
        for i in range(1, 6):
            box, state = T.step(frames[i], state)
            assert box[2] == state.base_size[0] * state.scale
            assert box[3] == state.base_size[1] * state.scale

    def test_missing_fmap_raises_tracking_error_with_frame(self, tmp_path):
        from corrtrack.features import FeatureStack, write_fmap, fmap_path
        rng = np.random.default_rng(10)
        frames, gt = textured_sequence(3, velocity=(0, 0), zoom=1.0, seed=10,
                                       base_size=(24.0, 24.0),
                                       start_center=(100.0, 90.0),
                                       frame_shape=(200, 240))
        blocks = (FeatureBlock("feat", rng.random((4, 20, 20)).astype(np.float32), 6.0),)
        write_fmap(fmap_path(tmp_path, 1), FeatureStack(blocks))
        cfg = T.TrackerConfig(provider=FeatureProviderConfig(
            kind="fmap", fmap_dir=str(tmp_path)))
        state = T.init(frames[0], gt[0], cfg)
        from corrtrack.errors import TrackingError
        with pytest.raises(TrackingError) as err:
            T.step(frames[1], state)
        assert err.value.frame_index == 2


class TestFmapTracking:
    def test_synthetic_fmap_sequence_tracks(self, tmp_path):
        # render features for a drifting target directly into FMAP files:
        # one coarse "semantic" block and one finer appearance block
        import json
        from corrtrack.features import FeatureStack, write_fmap, fmap_path
        rng = np.random.default_rng(11)
        n_frames, side, grid_a, grid_f = 6, 96.0, 24, 12
        appearance = rng.random((6, 8, 8))
        centers = [(100.0 + 2.0 * t, 90.0 + 1.5 * t) for t in range(n_frames)]
        regions = []
        for t in range(n_frames):
            # target sits at the window centre for the ground-truth crop
            stack_blocks = []
            patch = np.zeros((6, grid_a, grid_a))
            lo = grid_a // 2 - 4
            patch[:, lo:lo + 8, lo:lo + 8] = appearance
            stack_blocks.append(FeatureBlock("app", patch.astype(np.float32),
                                             side / grid_a))
            fcn = np.zeros((21, grid_f, grid_f), dtype=np.float32)
            fcn[4] = 1.0  # uniform confident class keeps the mask all-ones
            stack_blocks.append(FeatureBlock("fcn8s_score", fcn, side / grid_f))
            write_fmap(fmap_path(tmp_path, t + 1), FeatureStack(tuple(stack_blocks)))
            regions.append({"frame": t + 1, "cx": centers[t][0],
                            "cy": centers[t][1], "side": side})
        (tmp_path / "regions.jsonl").write_text(
            "\n".join(json.dumps(r) for r in regions) + "\n")

        frames, _ = textured_sequence(n_frames, velocity=(2.0, 1.5), zoom=1.0,
                                      seed=11, base_size=(24.0, 24.0),
                                      start_center=(100.0, 90.0),
                                      frame_shape=(220, 260))
        cfg = T.TrackerConfig(provider=FeatureProviderConfig(
            kind="fmap", fmap_dir=str(tmp_path)))
        box0 = (centers[0][0] - 12.0, centers[0][1] - 12.0, 24.0, 24.0)
        state = T.init(frames[0], box0, cfg)
        assert state.filt.shape[0] == 27
        assert state.last_mask is not None and np.all(state.last_mask.mask == 1.0)
        for t in range(1, n_frames):
            box, state = T.step(frames[t], state)
            cx, cy = box[0] + box[2] / 2, box[1] + box[3] / 2
            err = np.hypot(cx - centers[t][0], cy - centers[t][1])
            assert err <= 2.5, f"frame {t + 1}: centre error {err:.2f}px"
