import numpy as np
import pytest

from edmloc import InvalidInput, MicArray, SrpGrid, srp_value_doa, srp_value_position
from edmloc.srp import (
    PairPhases,
    doa_coarse_angles,
    doa_fine_angles,
    mic_pairs,
    position_coarse_points,
    position_fine_points,
    srp_localize_doa,
    srp_localize_position,
)

from helpers import random_array
from test_signals import FS, delayed_copy

NU = 343.0


def free_field_signals(mics_abs, source, rng, n=8000):
    """Clean 1/d-free delayed copies of one noise source at each microphone."""
    x = rng.standard_normal(n)
    base = 40.0  # common offset so all delays stay positive
    chans = []
    for m in range(mics_abs.shape[1]):
        d = np.linalg.norm(mics_abs[:, m] - source)
        chans.append(delayed_copy(x, base + d / NU * FS))
    return np.stack(chans)


def plane_wave_signals(array: MicArray, direction, rng, n=8000):
    x = rng.standard_normal(n)
    v = np.asarray(direction, dtype=float)
    chans = []
    for m in range(array.count):
        delay = 40.0 - (array.positions[:, m] @ v) / NU * FS
        chans.append(delayed_copy(x, delay))
    return np.stack(chans)


class TestGrids:
    def test_paper_grid_counts(self):
        assert position_coarse_points((6.0, 6.0, 2.4), 0.10).shape[0] == 80063
        assert 3 * position_fine_points((1.0, 1.0, 1.0), 0.01, 0.10).shape[0] == 27783
        assert doa_coarse_angles(5.0).shape[0] == 2522
        assert 2 * doa_fine_angles((0.0, 0.0), 0.5, 10.0).shape[0] == 882

    def test_coarse_points_exclude_walls(self):
        pts = position_coarse_points((6.0, 6.0, 2.4), 0.10)
        assert pts.min() >= 0.10 - 1e-12
        assert pts[:, 0].max() <= 5.90 + 1e-12
        assert pts[:, 2].max() <= 2.30 + 1e-12

    def test_grid_validation(self):
        with pytest.raises(InvalidInput):
            SrpGrid(kind="position", coarse_step=0.1, fine_step=0.2, fine_extent=0.1, beta=3, exclusion=0.5)
        with pytest.raises(InvalidInput):
            SrpGrid(kind="angle", coarse_step=5, fine_step=0.5, fine_extent=10, beta=2, exclusion=20)


class TestFunctional:
    def test_unit_phases_peak_where_all_tdoas_vanish(self):
        rng = np.random.default_rng(0)
        # symmetric array: its centroid is equidistant from all mics
        pos = np.array(
            [[1, -1, -1, 1, 1, -1, -1, 1], [1, 1, -1, -1, 1, 1, -1, -1], [1, 1, 1, 1, -1, -1, -1, -1]],
            dtype=float,
        ) * 0.5
        pairs = tuple(mic_pairs(8))
        phases = PairPhases(
            pairs=pairs, mean_phase=np.ones((len(pairs), 512), dtype=complex), frame_len=512, sample_rate=FS
        )
        center = srp_value_position(phases, np.zeros(3), pos)
        assert center == pytest.approx(len(pairs) * 512)
        for _ in range(20):
            p = rng.uniform(-1, 1, 3)
            assert srp_value_position(phases, p, pos) <= center + 1e-6

    def test_value_bounded_by_pairs_times_bins(self):
        rng = np.random.default_rng(1)
        array = random_array(rng, count=4)
        sig = free_field_signals(array.positions, rng.uniform(-1, 1, 3), rng)
        phases = PairPhases.from_signals(sig, FS)
        bound = len(phases.pairs) * 512
        for _ in range(10):
            assert abs(srp_value_position(phases, rng.uniform(-1, 1, 3), array.positions)) <= bound

    def test_true_position_near_global_maximum(self):
        rng = np.random.default_rng(2)
        mics = np.array(
            [[0.3, 1.6, 0.4, 1.7, 1.0], [0.4, 0.5, 1.5, 1.6, 1.0], [0.4, 0.9, 0.5, 0.8, 0.3]]
        )
        source = np.array([0.9, 1.1, 0.7])
        sig = free_field_signals(mics, source, rng)
        phases = PairPhases.from_signals(sig, FS)
        pts = position_coarse_points((2.0, 2.0, 1.2), 0.10)
        vals = np.array([srp_value_position(phases, p, mics) for p in pts[:: 37]])
        at_truth = srp_value_position(phases, source, mics)
        assert at_truth >= 0.98 * vals.max()

    def test_doa_functional_translation_invariant(self):
        rng = np.random.default_rng(3)
        array = random_array(rng, count=4, spread=0.05, min_spacing=0.02)
        v = rng.standard_normal(3)
        v /= np.linalg.norm(v)
        sig = plane_wave_signals(array, v, rng)
        phases = PairPhases.from_signals(sig, FS)
        a = srp_value_doa(phases, v, array.positions)
        b = srp_value_doa(phases, v, array.positions + 5.0)
        assert a == pytest.approx(b, rel=1e-9)
        with pytest.raises(InvalidInput):
            srp_value_doa(phases, 2.0 * v, array.positions)


class TestLocalize:
    def _scene(self, rng):
        mics = np.array(
            [[0.3, 1.6, 0.4, 1.7, 1.0], [0.4, 0.5, 1.5, 1.6, 1.0], [0.4, 0.9, 0.5, 0.8, 0.3]]
        )
        source = np.array([0.9, 1.2, 0.7])
        sig = free_field_signals(mics, source, rng)
        grid = SrpGrid(kind="position", coarse_step=0.10, fine_step=0.01, fine_extent=0.10, beta=3, exclusion=0.50)
        return mics, source, PairPhases.from_signals(sig, FS), grid

    def test_single_source_within_fine_resolution(self):
        mics, source, phases, grid = self._scene(np.random.default_rng(4))
        values, shortfall = srp_localize_position(phases, mics, (2.0, 2.0, 1.2), 1, grid)
        assert not shortfall
        err = np.linalg.norm(values[0].location - source)
        assert err <= grid.fine_step * np.sqrt(3) + 1e-9

    def test_deterministic(self):
        mics, _, phases, grid = self._scene(np.random.default_rng(5))
        a, _ = srp_localize_position(phases, mics, (2.0, 2.0, 1.2), 2, grid)
        b, _ = srp_localize_position(phases, mics, (2.0, 2.0, 1.2), 2, grid)
        assert all(np.array_equal(x.location, y.location) for x, y in zip(a, b))

    def test_single_source_equals_plain_argmax_refinement(self):
        mics, _, phases, grid = self._scene(np.random.default_rng(6))
        room = (2.0, 2.0, 1.2)
        values, _ = srp_localize_position(phases, mics, room, 1, grid)
        coarse = position_coarse_points(room, grid.coarse_step)
        cvals = np.array([srp_value_position(phases, p, mics) for p in coarse])
        best = coarse[int(np.argmax(cvals))]
        fine = position_fine_points(best, grid.fine_step, grid.fine_extent)
        fvals = np.array([srp_value_position(phases, p, mics) for p in fine])
        assert np.allclose(values[0].location, fine[int(np.argmax(fvals))])

    def test_doa_localize_recovers_plane_wave(self):
        rng = np.random.default_rng(7)
        array = random_array(rng, count=5, spread=0.05, min_spacing=0.02)
        v = np.array([0.4, -0.7, 0.59])
        v /= np.linalg.norm(v)
        sig = plane_wave_signals(array, v, rng)
        phases = PairPhases.from_signals(sig, FS)
        values, shortfall = srp_localize_doa(phases, array.positions, 1)
        assert not shortfall
        angle = np.degrees(np.arccos(np.clip(np.dot(values[0].location, v), -1, 1)))
        assert angle <= 0.5 * np.sqrt(2) + 0.1
