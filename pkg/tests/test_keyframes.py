import numpy as np
import pytest

from movieteller.errors import ConfigError
from movieteller.frames import ArraySource, LumaStats, luma_stats
from movieteller.keyframes import GateConfig, candidate_order, passes_gate, select_keyframe
from movieteller.segmentation import SceneBoundary

from conftest import checkerboard, make_frame, noise, solid


class TestGate:
    def test_all_black_rejected(self):
        assert not passes_gate(LumaStats(0.0, 0.0), GateConfig())

    def test_uniform_gray_rejected(self):
        assert not passes_gate(LumaStats(128.0, 0.0), GateConfig())

    def test_checkerboard_accepted(self):
        stats = luma_stats(make_frame(checkerboard(8, 8)))
        assert stats.mean == pytest.approx(127.5)
        assert stats.std == pytest.approx(127.5)
        assert passes_gate(stats, GateConfig())

    def test_white_flash_rejected(self):
        assert not passes_gate(LumaStats(255.0, 0.0), GateConfig())
        assert not passes_gate(LumaStats(250.0, 40.0), GateConfig())

    def test_boundary_values_inclusive(self):
        config = GateConfig(min_mean=15.0, max_mean=240.0, min_std=10.0)
        assert passes_gate(LumaStats(15.0, 10.0), config)
        assert passes_gate(LumaStats(240.0, 10.0), config)
        assert not passes_gate(LumaStats(14.999, 10.0), config)
        assert not passes_gate(LumaStats(15.0, 9.999), config)

    def test_tightening_never_admits(self):
        rng = np.random.default_rng(5)
        base = GateConfig()
        for _ in range(200):
            stats = LumaStats(float(rng.uniform(0, 255)), float(rng.uniform(0, 127.5)))
            tighter = GateConfig(
                min_mean=base.min_mean + float(rng.uniform(0, 30)),
                max_mean=base.max_mean - float(rng.uniform(0, 30)),
                min_std=base.min_std + float(rng.uniform(0, 30)),
            )
            if not passes_gate(stats, base):
                assert not passes_gate(stats, tighter)

    def test_invalid_config(self):
        with pytest.raises(ConfigError):
            GateConfig(min_mean=250.0, max_mean=240.0)
        with pytest.raises(ConfigError):
            GateConfig(min_std=-1.0)


class TestCandidateOrder:
    def test_outward_scan(self):
        assert list(candidate_order(0, 4)) == [2, 3, 1, 4, 0]

    def test_single_frame(self):
        assert list(candidate_order(7, 7)) == [7]

    def test_covers_scene_exactly_once(self):
        order = list(candidate_order(10, 30))
        assert sorted(order) == list(range(10, 31))
        assert len(set(order)) == len(order)


class TestSelectKeyframe:
    def test_midpoint_when_all_informative(self):
        frames = [noise(16, 12, i) for i in range(101)]
        source = ArraySource(frames)
        kf, _ = select_keyframe(SceneBoundary(0, 0, 100), source.get_frame, GateConfig())
        assert kf.frame_index == 50
        assert kf.gate_passed

    def test_outward_scan_finds_lone_informative_frame(self):
        frames = [solid(16, 12, (128, 128, 128))] * 101
        frames[53] = noise(16, 12, 9)
        source = ArraySource(frames)
        kf, _ = select_keyframe(SceneBoundary(0, 0, 100), source.get_frame, GateConfig())
        assert kf.frame_index == 53
        assert kf.gate_passed

    def test_all_black_falls_back_to_midpoint(self):
        source = ArraySource([solid(16, 12, (0, 0, 0))] * 21)
        kf, _ = select_keyframe(SceneBoundary(0, 0, 20), source.get_frame, GateConfig())
        assert kf.frame_index == 10
        assert not kf.gate_passed

    def test_fallback_prefers_max_std(self):
        # none passes the gate (all too dark), but frame 3 has the most texture
        dark_flat = solid(16, 12, (2, 2, 2))
        dark_textured = np.clip(noise(16, 12, 4) // 32, 0, 8).astype(np.uint8)
        frames = [dark_flat] * 7
        frames[3] = dark_textured
        source = ArraySource(frames)
        kf, _ = select_keyframe(SceneBoundary(0, 0, 6), source.get_frame, GateConfig())
        assert kf.frame_index == 3
        assert not kf.gate_passed

    def test_index_inside_scene(self):
        frames = [noise(16, 12, i) for i in range(40)]
        source = ArraySource(frames)
        for start, end in [(0, 0), (5, 9), (17, 39)]:
            kf, _ = select_keyframe(SceneBoundary(0, start, end), source.get_frame, GateConfig())
            assert start <= kf.frame_index <= end

    def test_gate_passed_implies_predicate(self):
        frames = [noise(16, 12, i) for i in range(20)]
        source = ArraySource(frames)
        config = GateConfig()
        kf, _ = select_keyframe(SceneBoundary(0, 0, 19), source.get_frame, config)
        if kf.gate_passed:
            assert passes_gate(kf.stats, config)
