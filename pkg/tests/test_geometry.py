import numpy as np
import pytest

from edmloc import (
    DegenerateGeometry,
    Edm,
    InvalidInput,
    MicArray,
    absolute_position_from_relative,
    edm_to_gram,
    eigendecompose_sym,
    mic_centering_vector,
    procrustes,
    reconstruct_relative_positions,
    source_centering_vector,
)
from edmloc.position import source_edm

from helpers import forward_tdoas, random_array, random_rotation


class TestEdmToGram:
    def test_two_mics_on_a_line(self):
        d = np.array([[0.0, 1.0], [1.0, 0.0]])
        g = edm_to_gram(d, np.array([0.5, 0.5]))
        assert np.allclose(g, [[0.25, -0.25], [-0.25, 0.25]])

    def test_coincident_points_give_zero_gram(self):
        g = edm_to_gram(np.zeros((4, 4)), mic_centering_vector(4))
        assert np.allclose(g, 0.0)

    def test_matches_direct_gram_of_centered_points(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            x = rng.standard_normal((3, 8))
            x -= x.mean(axis=1, keepdims=True)
            gram = x.T @ x  # oracle: direct inner products
            g = edm_to_gram(Edm.from_points(x), mic_centering_vector(8))
            assert np.max(np.abs(g - gram)) < 1e-10 * max(1.0, np.abs(gram).max())

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(InvalidInput):
            edm_to_gram(np.zeros((3, 3)), np.array([0.5, 0.5]))


class TestEigendecompose:
    def test_identity(self):
        ev = eigendecompose_sym(np.eye(3))
        assert np.allclose(ev.eigenvalues, [1.0, 1.0, 1.0])

    def test_rank_of_point_set_gram(self):
        rng = np.random.default_rng(3)
        for dim in (1, 2, 3):
            x = rng.standard_normal((dim, 7))
            x -= x.mean(axis=1, keepdims=True)
            ev = eigendecompose_sym(x.T @ x)
            assert np.all(ev.eigenvalues[:dim] > 1e-9 * ev.eigenvalues[0])
            assert np.all(np.abs(ev.eigenvalues[dim:]) < 1e-9 * ev.eigenvalues[0])

    def test_signed_descending_order(self):
        ev = eigendecompose_sym(np.diag([2.0, -1.0]))
        assert np.allclose(ev.eigenvalues, [2.0, -1.0])

    def test_reconstruction_and_orthogonality(self):
        rng = np.random.default_rng(11)
        a = rng.standard_normal((6, 6))
        g = 0.5 * (a + a.T)
        ev = eigendecompose_sym(g)
        s, lam = ev.eigenvectors, ev.eigenvalues
        assert np.max(np.abs(s @ s.T - np.eye(6))) < 1e-9
        rebuilt = s @ np.diag(lam) @ s.T
        assert np.max(np.abs(rebuilt - g)) < 1e-9 * np.linalg.norm(g)

    def test_non_finite_rejected(self):
        with pytest.raises(InvalidInput):
            eigendecompose_sym(np.array([[np.nan, 0.0], [0.0, 1.0]]))


class TestReconstruct:
    def test_unit_square_recovered_up_to_congruence(self):
        x = np.array([[0.5, -0.5, -0.5, 0.5], [0.5, 0.5, -0.5, -0.5]])
        ev = eigendecompose_sym(x.T @ x)
        y = reconstruct_relative_positions(ev, 2)
        # oracle: pairwise distances of the original square
        want = Edm.from_points(x).matrix
        got = Edm.from_points(y).matrix
        assert np.max(np.abs(want - got)) < 1e-9

    def test_rank_one_gram_gives_signed_vector(self):
        x = np.array([1.0, -2.0, 1.0])
        ev = eigendecompose_sym(np.outer(x, x))
        y = reconstruct_relative_positions(ev, 1)
        assert np.allclose(np.abs(y[0]), np.abs(x), atol=1e-9)

    def test_zero_gram(self):
        ev = eigendecompose_sym(np.zeros((4, 4)))
        assert np.allclose(reconstruct_relative_positions(ev, 3), 0.0)

    def test_strongly_negative_leading_eigenvalue_raises(self):
        ev = eigendecompose_sym(np.diag([2.0, 1.0, -1.0]))
        with pytest.raises(DegenerateGeometry):
            reconstruct_relative_positions(ev, 3)


class TestProcrustes:
    def test_identity_case(self):
        a = np.random.default_rng(0).standard_normal((3, 6))
        m = procrustes(a, a)
        assert np.allclose(m.rotation, np.eye(3), atol=1e-12)
        assert m.residual < 1e-12

    def test_known_rotation_recovered(self):
        rng = np.random.default_rng(5)
        b = rng.standard_normal((2, 5))
        t = np.deg2rad(37.0)
        rot = np.array([[np.cos(t), -np.sin(t)], [np.sin(t), np.cos(t)]])
        a = rot @ b
        m = procrustes(a, b)
        assert m.residual < 1e-10
        assert np.allclose(m.rotation @ a, b, atol=1e-10)

    def test_reflection_permitted(self):
        rng = np.random.default_rng(6)
        b = rng.standard_normal((2, 5))
        a = np.diag([1.0, -1.0]) @ b
        m = procrustes(a, b)
        assert m.residual < 1e-10
        assert np.linalg.det(m.rotation) < 0

    def test_shape_mismatch(self):
        with pytest.raises(InvalidInput):
            procrustes(np.zeros((2, 3)), np.zeros((2, 4)))


class TestAbsolutePosition:
    def test_identity_map_returns_last_column(self):
        rel = np.array([[0.0, 1.0], [0.0, 2.0], [0.0, 3.0]])
        from edmloc import ProcrustesMap

        out = absolute_position_from_relative(rel, ProcrustesMap(rotation=np.eye(3), residual=0.0))
        assert np.allclose(out, [1.0, 2.0, 3.0])

    def test_source_at_centroid(self):
        rng = np.random.default_rng(2)
        array = random_array(rng)
        p = np.zeros(3)
        out = _recover(array, p)
        assert np.linalg.norm(out - p) < 1e-9

    def test_exact_pipeline_recovers_source(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            array = random_array(rng)
            p = rng.uniform(-2, 2, 3)
            out = _recover(array, p)
            assert np.linalg.norm(out - p) < 1e-6


def _recover(array, p):
    """Forward-simulate exact TDOAs and run the reconstruction chain."""
    tau = forward_tdoas(array, p, reference=0)
    d1 = np.linalg.norm(array.positions[:, 0] - p)
    edm = source_edm(array, d1, tau)
    ev = eigendecompose_sym(edm_to_gram(edm, source_centering_vector(array.count)))
    rel = reconstruct_relative_positions(ev, array.dim)
    pmap = procrustes(rel[:, : array.count], array.positions)
    return absolute_position_from_relative(rel, pmap)


class TestInvariants:
    def test_gram_invariant_under_orthogonal_transform(self):
        rng = np.random.default_rng(9)
        for _ in range(10):
            x = rng.standard_normal((3, 6))
            x -= x.mean(axis=1, keepdims=True)
            rot = random_rotation(rng)
            if rng.uniform() < 0.5:
                rot = rot @ np.diag([1.0, 1.0, -1.0])  # admit reflections
            g1 = x.T @ x
            g2 = (rot @ x).T @ (rot @ x)
            assert np.max(np.abs(g1 - g2)) < 1e-10 * max(1.0, np.abs(g1).max())

    def test_procrustes_reconstruct_round_trip(self):
        rng = np.random.default_rng(10)
        for _ in range(10):
            x = rng.standard_normal((3, 7))
            x -= x.mean(axis=1, keepdims=True)
            ev = eigendecompose_sym(x.T @ x)
            y = reconstruct_relative_positions(ev, 3)
            pmap = procrustes(y, x)
            assert np.max(np.abs(pmap.rotation @ y - x)) < 1e-8

    def test_mic_array_validation(self):
        with pytest.raises(InvalidInput):
            MicArray.from_positions(np.zeros((3, 3)))  # M must exceed dim
        with pytest.raises(InvalidInput):
            MicArray.from_positions(np.ones((3, 4)))  # coincident mics
        array = random_array(np.random.default_rng(0))
        assert np.max(np.abs(array.positions.mean(axis=1))) < 1e-12
