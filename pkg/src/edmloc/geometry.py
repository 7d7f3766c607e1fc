"""Geometry and linear-algebra core.

Euclidean distance matrices (squared distances), their Gram matrices via
double centering, symmetric eigendecomposition, point-set reconstruction
from a Gram matrix, and orthogonal Procrustes alignment.

Conventions: point sets are stored column-wise, shape (dim, count).
Eigenvalues are ordered descending by signed value.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateGeometry, InvalidInput

# Relative tolerance for treating a trailing eigenvalue as zero.
RANK_TOL = 1e-9


def _as_matrix(x, name="matrix"):
    a = np.asarray(x, dtype=float)
    if a.ndim != 2:
        raise InvalidInput(f"{name} must be 2-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidInput(f"{name} contains non-finite entries")
    return a


@dataclass(frozen=True)
class MicArray:
    """Microphone positions, centered so the centroid sits at the origin.

    positions has shape (dim, count); centroid holds the offset that was
    removed, so absolute positions are positions + centroid[:, None].
    """

    positions: np.ndarray
    centroid: np.ndarray

    @classmethod
    def from_positions(cls, positions) -> "MicArray":
        pos = _as_matrix(positions, "positions")
        dim, count = pos.shape
        if dim not in (1, 2, 3):
            raise InvalidInput(f"dimension must be 1, 2 or 3, got {dim}")
        if count <= dim:
            raise InvalidInput(f"need more microphones ({count}) than dimensions ({dim})")
        centroid = pos.mean(axis=1)
        centered = pos - centroid[:, None]
        diff = centered[:, :, None] - centered[:, None, :]
        dist = np.sqrt((diff**2).sum(axis=0))
        off = dist + np.eye(count)
        if np.any(off <= 0.0):
            raise InvalidInput("coincident microphones")
        return cls(positions=centered, centroid=centroid)

    @property
    def dim(self) -> int:
        return self.positions.shape[0]

    @property
    def count(self) -> int:
        return self.positions.shape[1]

    @property
    def absolute_positions(self) -> np.ndarray:
        return self.positions + self.centroid[:, None]

    def distance_matrix(self) -> np.ndarray:
        """Pairwise microphone distances (count x count), in meters."""
        diff = self.positions[:, :, None] - self.positions[:, None, :]
        return np.sqrt((diff**2).sum(axis=0))

    def edm(self) -> "Edm":
        return Edm.from_points(self.positions)

    def gram(self) -> np.ndarray:
        return self.positions.T @ self.positions


@dataclass(frozen=True)
class Edm:
    """Matrix of squared pairwise distances: symmetric, zero diagonal."""

    matrix: np.ndarray

    def __post_init__(self):
        m = _as_matrix(self.matrix, "EDM")
        if m.shape[0] != m.shape[1]:
            raise InvalidInput("EDM must be square")
        if not np.allclose(m, m.T, atol=1e-9 * max(1.0, np.abs(m).max())):
            raise InvalidInput("EDM must be symmetric")
        if np.any(np.diag(m) != 0.0):
            raise InvalidInput("EDM diagonal must be zero")
        if m.min() < 0.0:
            raise InvalidInput("EDM entries must be nonnegative")
        object.__setattr__(self, "matrix", m)

    @classmethod
    def from_points(cls, points) -> "Edm":
        x = _as_matrix(points, "points")
        g = x.T @ x
        sq = np.diag(g)
        d = sq[:, None] + sq[None, :] - 2.0 * g
        np.fill_diagonal(d, 0.0)
        return cls(matrix=np.maximum(d, 0.0))

    @property
    def size(self) -> int:
        return self.matrix.shape[0]


def mic_centering_vector(count: int) -> np.ndarray:
    """Uniform centering weights over all points."""
    return np.full(count, 1.0 / count)

def source_centering_vector(mic_count: int) -> np.ndarray:
    """Centering weights for a mic block plus one appended source point.

    Weights the microphones only, so the reconstructed coordinate frame
    keeps the microphone centroid at the origin.
    """
    a = np.zeros(mic_count + 1)
    a[:mic_count] = 1.0 / mic_count
    return a


def edm_to_gram(edm, centering) -> np.ndarray:
    """Gram matrix of a point set from its EDM via double centering.

    Returns -1/2 (I - 1 a^T) D (I - a 1^T) for centering weights a.
    """
    d = edm.matrix if isinstance(edm, Edm) else _as_matrix(edm, "EDM")
    a = np.asarray(centering, dtype=float)
    n = d.shape[0]
    if a.shape != (n,):
        raise InvalidInput(f"centering vector length {a.shape} does not match EDM size {n}")
    left = np.eye(n) - np.outer(np.ones(n), a)
    g = -0.5 * left @ d @ left.T
    return 0.5 * (g + g.T)


@dataclass
class GramEval:
    """Eigendecomposition of a symmetric matrix, eigenvalues descending.

    eigenvectors[:, i] pairs with eigenvalues[i]; cost is filled in by the
    estimators that rank candidate geometries.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    cost: float | None = field(default=None)


def eigendecompose_sym(gram) -> GramEval:
    """Eigendecomposition of a (nearly) symmetric matrix.

    The input is symmetrized as (G + G^T)/2 before solving, which absorbs
    round-off from the double-centering product.
    """
    g = _as_matrix(gram, "gram")
    if g.shape[0] != g.shape[1]:
        raise InvalidInput("matrix must be square")
    sym = 0.5 * (g + g.T)
    w, v = np.linalg.eigh(sym)
    return GramEval(eigenvalues=w[::-1].copy(), eigenvectors=v[:, ::-1].copy())


def tail_sum(eigenvalues: np.ndarray, keep: int) -> float:
    """Sum of absolute eigenvalues past the `keep` largest (signed order)."""
    w = np.asarray(eigenvalues, dtype=float)
    return float(np.abs(w[keep:]).sum())


def reconstruct_relative_positions(ev: GramEval, dim: int) -> np.ndarray:
    """Point coordinates (dim x n) whose Gram matches the top-`dim` eigenpairs.

    Tiny negative leading eigenvalues (within RANK_TOL of the largest) are
    clamped to zero; anything more negative is not a realizable geometry.
    """
    w = ev.eigenvalues[:dim].copy()
    scale = max(ev.eigenvalues[0], 0.0)
    neg = w < 0.0
    if np.any(w < -RANK_TOL * scale):
        raise DegenerateGeometry(
            f"leading eigenvalue {w.min():.3e} is negative beyond tolerance"
        )
    w[neg] = 0.0
    return np.sqrt(w)[:, None] * ev.eigenvectors[:, :dim].T


@dataclass(frozen=True)
class ProcrustesMap:
    """Orthogonal map (rotation or reflection) with its Frobenius misfit."""

    rotation: np.ndarray
    residual: float


def procrustes(a, b) -> ProcrustesMap:
    """Orthogonal R minimizing ||R a - b||_F.

    From the SVD a b^T = U Q V^T the minimizer is R = V U^T. Reflections
    (det R = -1) are permitted; a rank-deficient a b^T still yields a valid
    minimizer, which the residual exposes.
    """
    am = _as_matrix(a, "a")
    bm = _as_matrix(b, "b")
    if am.shape != bm.shape:
        raise InvalidInput(f"shape mismatch {am.shape} vs {bm.shape}")
    u, _, vt = np.linalg.svd(am @ bm.T)
    rot = vt.T @ u.T
    residual = float(np.linalg.norm(rot @ am - bm))
    return ProcrustesMap(rotation=rot, residual=residual)


def absolute_position_from_relative(relative: np.ndarray, pmap: ProcrustesMap) -> np.ndarray:
    """Map the appended source column of a relative configuration back to
    absolute coordinates: R times the last column."""
    rel = _as_matrix(relative, "relative positions")
    if pmap.rotation.shape[1] != rel.shape[0]:
        raise InvalidInput("map dimension does not match point dimension")
    return pmap.rotation @ rel[:, -1]
