"""Acceptance gate: one test per criterion, each printing a pass line with
its elapsed time (run with ``pytest -s tests/test_acceptance.py`` to see
them).  Tolerances are fixed here and nowhere else."""

import json
import time

import numpy as np
import pytest

from oracles import (dense_normal_matrix, dense_rhs, make_memory,
                     oversampled_argmax, random_spectrum)
from synthutil import textured_sequence, iou_xywh
from test_bench import write_sequence

from corrtrack import bench, cli
from corrtrack import spectral as S
from corrtrack import tracker as T
from corrtrack.features import (FeatureBlock, FeatureProviderConfig,
                                FeatureStack, fmap_path, load_precomputed,
                                write_fmap)
from corrtrack.fourier import evaluate_at, shift_coeffs
from corrtrack.semantic import SemanticMask, apply_weighting, cosine_window
from corrtrack.tracker import ScoreGrid, localize


class _Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start


def _report(criterion, detail, timer=None):
    suffix = f" [{timer.elapsed:.1f}s]" if timer else ""
    print(f"\nACCEPTANCE {criterion}: PASS - {detail}{suffix}")


def test_criterion_1_solver_correctness():
    with _Timer() as t:
        rng = np.random.default_rng(100)
        worst = 0.0
        for dim in (8, 16, 32, 64):
            for _ in range(3):
                m = rng.standard_normal((dim, dim))
                a = m @ m.T + dim * np.eye(dim)
                b = rng.standard_normal(dim)
                got = S.cg_solve(lambda v: a @ v, b.astype(complex),
                                 np.zeros(dim, complex), dim).x
                worst = max(worst, float(np.abs(got - np.linalg.solve(a, b)).max()))
        assert worst < 1e-8

        worst_sym = 0.0
        for seed in range(5):
            r = np.random.default_rng(200 + seed)
            mem = make_memory(r, m=3, n=2, q=8)
            pen = S.penalty_spectrum((3.0, 3.0), (8, 8))
            op = S.normal_operator(mem, pen)
            for _ in range(10):
                x = np.stack([random_spectrum(r, (8, 8)) for _ in range(2)])
                y = np.stack([random_spectrum(r, (8, 8)) for _ in range(2)])
                lhs = np.vdot(op(x), y).real
                rhs = np.vdot(x, op(y)).real
                worst_sym = max(worst_sym,
                                abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1.0))
        assert worst_sym < 1e-10
    assert t.elapsed < 5.0
    _report(1, f"CG vs direct solve {worst:.1e} <= 1e-8; "
               f"self-adjointness {worst_sym:.1e} <= 1e-10", t)


def test_criterion_2_objective_consistency():
    with _Timer() as t:
        rng = np.random.default_rng(300)
        q, n, dense = 8, 3, 24
        mem = make_memory(rng, m=2, n=n, q=q, weights=[0.55, 0.45])
        lab = S.gaussian_label((q, q), (2.0, 2.0))
        h = np.stack([random_spectrum(rng, (q, q)) for _ in range(n)])
        fourier = spatial = 0.0
        grid_t = np.arange(dense) / dense
        for w, z in zip(mem.weights, mem.samples):
            resid = S.response_spectrum(z, h) - lab.coeffs
            fourier += w * np.vdot(resid, resid).real
            vals = evaluate_at(resid, grid_t, grid_t)
            spatial += w * np.mean(np.abs(vals) ** 2)
        gap = abs(fourier - spatial)
        assert gap < 1e-8

        pen = S.penalty_spectrum((2.0, 2.0), (q, q))
        a = dense_normal_matrix(mem, pen)
        rhs = dense_rhs(mem, lab)
        solution = np.linalg.solve(a, rhs)
        op = S.normal_operator(mem, pen)
        resid_norm = np.linalg.norm(
            op(solution.reshape(n, q, q)).ravel() - rhs)
        assert resid_norm <= 1e-8
    assert t.elapsed < 10.0
    _report(2, f"Parseval gap {gap:.1e} <= 1e-8; normal-equation residual "
               f"{resid_norm:.1e} <= 1e-8", t)


def test_criterion_3_windowing_exactness():
    with _Timer() as t:
        w44 = cosine_window(4, 4).weights
        w88 = cosine_window(8, 8).weights
        assert np.all(w44[0, :] == 0.0) and np.all(w44[:, 0] == 0.0)
        assert w44[2, 2] == pytest.approx(1.0, abs=1e-15)
        assert w88[2, 2] == pytest.approx(0.5, abs=1e-15)
        assert w88[4, 4] == pytest.approx(1.0, abs=1e-15)
        for d1, d2 in ((6, 9), (12, 7)):
            w = cosine_window(d1, d2).weights
            expect = np.outer(np.sin(np.pi * np.arange(d1) / d1),
                              np.sin(np.pi * np.arange(d2) / d2))
            assert np.array_equal(w, expect)

        rng = np.random.default_rng(400)
        stack = FeatureStack((FeatureBlock("b", rng.random((4, 10, 10)), 1.0),))
        windows = {(10, 10): cosine_window(10, 10)}
        uniform = SemanticMask(np.ones((10, 10)), (5, 5), 7)
        masked = apply_weighting(stack, uniform, windows)
        plain = apply_weighting(stack, None, windows)
        assert np.array_equal(masked.blocks[0].channels, plain.blocks[0].channels)
    _report(3, "cosine window analytic; uniform mask reduces to windowed "
               "pipeline bit-exactly", t)


def test_criterion_4_localization():
    with _Timer() as t:
        rng = np.random.default_rng(500)
        hits, trials = 0, 200
        for _ in range(trials):
            q = int(rng.integers(14, 26))
            sigma_cells = rng.uniform(0.8, 2.5)
            lab = S.gaussian_label((q, q), (sigma_cells / 0.083,) * 2)
            shift = rng.uniform(-0.5, 0.5, size=2)
            coeffs = shift_coeffs(lab.coeffs, tuple(shift))
            coeffs = coeffs + 0.02 * random_spectrum(rng, (q, q))
            score = ScoreGrid.from_coeffs(coeffs)
            p = localize(score)
            o = oversampled_argmax(coeffs, factor=512)
            if max(abs(p[0] - o[0]), abs(p[1] - o[1])) <= 0.05:
                hits += 1
        assert hits >= 0.95 * trials
    assert t.elapsed < 30.0
    _report(4, f"sub-cell localization within 0.05 cells of 512x oracle on "
               f"{hits}/{trials} trials", t)


def test_criterion_5_synthetic_end_to_end():
    frames, gt = textured_sequence(100, velocity=(1.0, 0.8), zoom=1.006,
                                   seed=2, base_size=(36.0, 36.0),
                                   start_center=(150.0, 130.0),
                                   frame_shape=(400, 560))
    with _Timer() as t:
        state = T.init(frames[0], gt[0], T.TrackerConfig())
        iou_ok, scale_ok = 1, 1   # frame 1 is the exact initialization
        for i in range(1, 100):
            box, state = T.step(frames[i], state)
            if iou_xywh(box, gt[i]) >= 0.5:
                iou_ok += 1
            ratio = state.scale / 1.006 ** i
            if 1.0 / 1.02 - 1e-12 <= ratio <= 1.02 + 1e-12:
                scale_ok += 1
    assert iou_ok >= 95, f"IoU >= 0.5 on only {iou_ok}/100 frames"
    assert scale_ok >= 90, f"scale within one step on only {scale_ok}/100 frames"
    assert t.elapsed < 60.0
    _report(5, f"translating+zooming square: IoU >= 0.5 on {iou_ok}/100, "
               f"scale within one 1.02 step on {scale_ok}/100", t)


def test_criterion_6_metrics_oracle():
    with _Timer() as t:
        assert bench.iou((0, 0, 10, 10), (5, 0, 10, 10)) == 1.0 / 3.0
        rng = np.random.default_rng(600)
        for _ in range(5):
            gt = rng.uniform(10, 60, (30, 4)) + 10
            res = gt + rng.normal(0, 6, (30, 4))
            res[:, 2:] = np.abs(res[:, 2:]) + 1
            prec = bench.precision_curve(res, gt)
            succ, auc = bench.success_curve(res, gt)
            errs = [bench.center_error(a, b) for a, b in zip(res, gt)]
            ovls = [bench.iou(a, b) for a, b in zip(res, gt)]
            for k, thr in enumerate(prec.thresholds):
                assert prec.values[k] == sum(e < thr for e in errs) / 30.0
            for k, thr in enumerate(succ.thresholds):
                assert succ.values[k] == sum(o > thr for o in ovls) / 30.0
            assert auc == np.mean(succ.values)
        checked = 0
        for _ in range(1000):
            gt = rng.uniform(5, 80, (12, 4)) + 5
            res = gt + rng.normal(0, rng.uniform(0.5, 25), (12, 4))
            res[:, 2:] = np.abs(res[:, 2:]) + 1
            prec = bench.precision_curve(res, gt)
            succ, _ = bench.success_curve(res, gt)
            assert np.all(np.diff(prec.values) >= 0)
            assert np.all(np.diff(succ.values) <= 0)
            assert 0.0 <= prec.values.min() and prec.values.max() <= 1.0
            assert 0.0 <= succ.values.min() and succ.values.max() <= 1.0
            checked += 1
    _report(6, f"metrics match exhaustive counting; iou identity exact; "
               f"monotonicity on {checked} random curves", t)


def test_criterion_7_determinism(tmp_path):
    frames, boxes = textured_sequence(5, velocity=(1.0, 0.5), zoom=1.0, seed=1,
                                      base_size=(24.0, 24.0),
                                      start_center=(80.0, 70.0),
                                      frame_shape=(160, 200))
    seq_dir = write_sequence(tmp_path, "det", frames, boxes)
    with _Timer() as t:
        payloads = []
        for run in ("r1", "r2"):
            out = tmp_path / run
            status = cli.main(["track", "--sequence", str(seq_dir),
                               "--features", "hog", "--out", str(out),
                               "--dump-scores"])
            assert status == 0
            blob = (out / "det.jsonl").read_bytes()
            for p in sorted((out / "scores").iterdir()):
                blob += p.read_bytes()
            payloads.append(blob)
        assert payloads[0] == payloads[1]
    _report(7, "two identical track runs produced byte-identical outputs", t)


def test_criterion_8_filter_update():
    with _Timer() as t:
        rng = np.random.default_rng(700)
        prior = rng.standard_normal((2, 6, 6)) + 1j * rng.standard_normal((2, 6, 6))
        current = rng.standard_normal((2, 6, 6)) + 1j * rng.standard_normal((2, 6, 6))
        gamma = 0.009
        out = S.update_filter(prior, current, gamma)
        assert np.array_equal(out, (1.0 - gamma) * prior + gamma * current)
        ones = np.ones((1, 4, 4), dtype=complex)
        blended = S.update_filter(ones, np.zeros_like(ones), gamma)
        assert np.all(blended == 1.0 - gamma)
        assert blended[0, 0, 0].real == pytest.approx(0.991, abs=1e-12)

        h = np.full((1, 4, 4), 2.0 - 1.5j)
        cur = np.zeros_like(h)
        x = h.copy()
        for _ in range(500):
            x = S.update_filter(x, cur, gamma)
        expect = (1.0 - gamma) ** 500 * h
        rel = float(np.abs(x - expect).max() / np.abs(expect).max())
        assert rel < 1e-12
    _report(8, f"convex combination exact; geometric ratio error {rel:.1e} "
               f"<= 1e-12 over 500 iterations", t)


def test_criterion_9_fmap_fixture_round_trip(tmp_path):
    # primary-side half of the exporter contract: files with the deep-layer
    # channel counts written by the primary writer load back bit-exactly
    with _Timer() as t:
        rng = np.random.default_rng(800)
        stack = FeatureStack((
            FeatureBlock("densenet201_L3", rng.random((512, 7, 7)).astype(np.float32),
                         16.0),
            FeatureBlock("fcn8s_score", rng.random((21, 14, 14)).astype(np.float32),
                         8.0),
        ))
        path = fmap_path(tmp_path, 1)
        write_fmap(path, stack)
        first = path.read_bytes()
        write_fmap(path, stack)
        assert path.read_bytes() == first
        cfg = FeatureProviderConfig(kind="fmap", fmap_dir=str(tmp_path),
                                    expected_shapes={"densenet201_L3": (512, 7, 7),
                                                     "fcn8s_score": (21, 14, 14)})
        back = load_precomputed(tmp_path, 1, cfg)
        assert back.total_channels == 533
        for a, b in zip(stack.blocks, back.blocks):
            assert a.name == b.name and a.stride == b.stride
            assert np.array_equal(a.channels, b.channels)
    _report(9, "512+21 channel fixture round-trips bit-exactly through the "
               "FMAP writer and reader", t)
