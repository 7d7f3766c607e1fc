import numpy as np
import pytest

from edmloc import (
    DegenerateGeometry,
    InvalidInput,
    MicArray,
    direction_cost,
    eigendecompose_sym,
    estimate_doas,
    rank_reduced_gram,
    reconstruct_source_frame,
)
from edmloc.doa import angles_from_direction, direction_from_angles, sorted_direction_costs

from helpers import (
    interleaved_candidate_set,
    plane_wave_tdoas,
    random_array,
    random_rotation,
    single_candidate_set,
)

RNG = np.random.default_rng
NU = 343.0


def compact_array(rng, count=6):
    return random_array(rng, count=count, spread=0.05, min_spacing=0.02)


def centered_plane_wave(array, direction):
    v = np.asarray(direction, dtype=float)
    v = v / np.linalg.norm(v)
    return -(array.positions.T @ v) / NU


def random_direction(rng):
    v = rng.standard_normal(3)
    return v / np.linalg.norm(v)


class TestRankReducedGram:
    def test_zero_tdoas_leave_gram_unchanged(self):
        array = compact_array(RNG(0))
        g = rank_reduced_gram(array, np.zeros(array.count))
        assert np.allclose(g.matrix, array.gram())

    def test_plane_wave_drops_rank(self):
        rng = RNG(1)
        for _ in range(10):
            array = compact_array(rng)
            tau = centered_plane_wave(array, random_direction(rng))
            ev = eigendecompose_sym(rank_reduced_gram(array, tau).matrix)
            assert np.all(np.abs(ev.eigenvalues[2:]) < 1e-8 * ev.eigenvalues[0])

    def test_planar_array_drops_to_rank_one(self):
        rng = RNG(2)
        array = random_array(rng, dim=2, spread=0.05, min_spacing=0.02)
        v = rng.standard_normal(2)
        v /= np.linalg.norm(v)
        tau = -(array.positions.T @ v) / NU
        ev = eigendecompose_sym(rank_reduced_gram(array, tau, combination=None).matrix)
        assert np.all(np.abs(ev.eigenvalues[1:]) < 1e-8 * ev.eigenvalues[0])

    def test_trace_identity(self):
        rng = RNG(3)
        for _ in range(20):
            array = compact_array(rng)
            tau = rng.uniform(-1e-4, 1e-4, array.count)
            tau -= tau.mean()
            g = rank_reduced_gram(array, tau)
            want = np.trace(array.gram()) - NU**2 * np.dot(tau, tau)
            assert abs(np.trace(g.matrix) - want) < 1e-10

    def test_uncentered_rejected(self):
        array = compact_array(RNG(4))
        with pytest.raises(InvalidInput):
            rank_reduced_gram(array, np.full(array.count, 1e-3))


class TestDirectionCost:
    def test_exact_plane_wave_zeroes_cost(self):
        rng = RNG(5)
        for _ in range(10):
            array = compact_array(rng)
            tau = centered_plane_wave(array, random_direction(rng))
            sigma1 = eigendecompose_sym(rank_reduced_gram(array, tau).matrix).eigenvalues[0]
            assert direction_cost(array, tau) < 1e-8 * sigma1

    def test_mixed_combination_costs_more(self):
        rng = RNG(6)
        array = compact_array(rng)
        ta = centered_plane_wave(array, random_direction(rng))
        tb = centered_plane_wave(array, random_direction(rng))
        mixed = ta.copy()
        mixed[2:4] = tb[2:4]
        mixed -= mixed.mean()
        assert direction_cost(array, mixed) > max(direction_cost(array, ta), direction_cost(array, tb))

    def test_zero_tdoas_cost_is_gram_tail(self):
        array = compact_array(RNG(7))
        lam = eigendecompose_sym(array.gram()).eigenvalues
        # oracle: with zero TDOAs nothing is subtracted, so the cost is the
        # eigenvalue mass of the microphone Gram beyond rank dim-1
        want = np.abs(lam[2:]).sum()
        assert direction_cost(array, np.zeros(array.count)) == pytest.approx(want, rel=1e-12)

    def test_nonnegative(self):
        rng = RNG(8)
        array = compact_array(rng)
        for _ in range(50):
            tau = rng.uniform(-5e-4, 5e-4, array.count)
            tau -= tau.mean()
            assert direction_cost(array, tau) >= 0.0


class TestReconstructFrame:
    def test_frame_gram_matches_mic_gram(self):
        rng = RNG(9)
        array = compact_array(rng)
        tau = centered_plane_wave(array, random_direction(rng))
        ev = eigendecompose_sym(rank_reduced_gram(array, tau).matrix)
        frame = reconstruct_source_frame(ev, tau, dim=array.dim)
        assert np.max(np.abs(frame.T @ frame - array.gram())) < 1e-8

    def test_zero_tdoas_zero_first_row(self):
        array = compact_array(RNG(10))
        ev = eigendecompose_sym(array.gram())
        frame = reconstruct_source_frame(ev, np.zeros(array.count), dim=3)
        assert np.allclose(frame[0], 0.0)

    def test_collinear_array_second_row_vanishes(self):
        t = np.linspace(-0.05, 0.05, 6)
        array = MicArray.from_positions(np.stack([t, np.zeros(6), np.zeros(6)]))
        v = np.array([1.0, 0.0, 0.0])
        tau = centered_plane_wave(array, v)
        ev = eigendecompose_sym(rank_reduced_gram(array, tau).matrix)
        frame = reconstruct_source_frame(ev, tau, dim=3)
        # vanished dimensions survive only as sqrt(rounding) residue
        assert np.allclose(frame[1:], 0.0, atol=1e-8)

    def test_degenerate_eigenvalue_raises(self):
        array = compact_array(RNG(11))
        tau = centered_plane_wave(array, random_direction(RNG(12))) * 50.0  # over-subtracts
        ev = eigendecompose_sym(rank_reduced_gram(array, tau).matrix)
        if ev.eigenvalues[0] < 0 or ev.eigenvalues[1] < -1e-9 * max(ev.eigenvalues[0], 0):
            with pytest.raises(DegenerateGeometry):
                reconstruct_source_frame(ev, tau, dim=3)


class TestAngles:
    def test_axis_aligned(self):
        az, el = angles_from_direction([1.0, 0.0, 0.0])
        assert az == 0.0 and el == 0.0

    def test_poles_have_zero_azimuth(self):
        az, el = angles_from_direction([0.0, 0.0, 1.0])
        assert az == 0.0 and el == pytest.approx(np.pi / 2)

    def test_round_trip(self):
        rng = RNG(13)
        for _ in range(50):
            v = random_direction(rng)
            az, el = angles_from_direction(v)
            assert np.max(np.abs(direction_from_angles(az, el) - v)) < 1e-12


class TestEstimateDoas:
    def test_single_source_exact(self):
        rng = RNG(14)
        for _ in range(20):
            array = compact_array(rng)
            v = random_direction(rng)
            cset = single_candidate_set(plane_wave_tdoas(array, v, reference=0), reference=0)
            batch = estimate_doas(array, cset, sources=1)
            est = batch.estimates[0]
            angle = np.degrees(np.arccos(np.clip(np.dot(est.direction, v), -1, 1)))
            assert angle < 0.01
            assert abs(np.linalg.norm(est.direction) - 1.0) < 1e-12

    def test_sign_convention_against_plane_wave(self):
        # mandatory: the recovered direction must reproduce the centered
        # TDOAs with the geometric sign, tau_m = -(m_m . v_hat)/nu
        rng = RNG(15)
        for _ in range(10):
            array = compact_array(rng)
            v = random_direction(rng)
            cset = single_candidate_set(plane_wave_tdoas(array, v, reference=0), reference=0)
            est = estimate_doas(array, cset, sources=1).estimates[0]
            want = -(array.positions.T @ est.direction) / NU
            got = centered_plane_wave(array, v)
            assert np.max(np.abs(want - got)) < 1e-9

    def test_two_source_costs_separate(self):
        rng = RNG(16)
        array = compact_array(rng)
        va, vb = random_direction(rng), random_direction(rng)
        cset = interleaved_candidate_set(
            [plane_wave_tdoas(array, va, 0), plane_wave_tdoas(array, vb, 0)], reference=0
        )
        assert cset.total_combinations == 32
        costs = [c for _, c in sorted_direction_costs(array, cset)]
        assert costs[1] < 1e-12
        assert costs[2] > 100 * max(costs[1], 1e-30)
        batch = estimate_doas(array, cset, sources=2)
        assert {e.combination for e in batch.estimates} == {(0,) * 5, (1,) * 5}
        errs = sorted(
            min(
                np.degrees(np.arccos(np.clip(np.dot(e.direction, v), -1, 1)))
                for e in batch.estimates
            )
            for v in (va, vb)
        )
        assert errs[1] < 0.01

    def test_axis_source(self):
        rng = RNG(17)
        array = compact_array(rng)
        cset = single_candidate_set(
            plane_wave_tdoas(array, [1.0, 0.0, 0.0], reference=0), reference=0
        )
        est = estimate_doas(array, cset, sources=1).estimates[0]
        assert abs(est.azimuth) < 1e-6 and abs(est.elevation) < 1e-6

    def test_rotation_equivariance(self):
        rng = RNG(18)
        for _ in range(5):
            array = compact_array(rng)
            v = random_direction(rng)
            rot = random_rotation(rng)
            cset = single_candidate_set(plane_wave_tdoas(array, v, reference=0), reference=0)
            est = estimate_doas(array, cset, sources=1).estimates[0].direction
            array_r = MicArray.from_positions(rot @ array.positions)
            cset_r = single_candidate_set(plane_wave_tdoas(array_r, rot @ v, reference=0), reference=0)
            est_r = estimate_doas(array_r, cset_r, sources=1).estimates[0].direction
            assert np.linalg.norm(est_r - rot @ est) < 1e-8
