"""Independent oracles used to check the package's fast paths.

Everything here is written from the definitions, with no reuse of the
package's own linear-algebra shortcuts: dense loss against an explicit
0/1 matrix, central finite differences for gradients, full-sort CSLS,
and an eigendecomposition matrix exponential for geodesic checks.
"""

import numpy as np


def rel_err(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), 1.0)


def _fd_step(h: float, f_at_point: float) -> float:
    # balance cancellation (eps |f| / h) against truncation (h^2): the
    # optimal step grows with the cube root of the cost magnitude
    return h * np.cbrt(1.0 + abs(f_at_point))


def fd_directional(f, h: float = 1e-6):
    """Central finite-difference directional derivative of a scalar field."""

    def derivative(x: np.ndarray, direction: np.ndarray) -> float:
        step = _fd_step(h, f(x))
        return (f(x + step * direction) - f(x - step * direction)) / (2.0 * step)

    return derivative


def fd_tuple_directional(f, point: tuple, factor: int, direction: np.ndarray,
                         h: float = 1e-6) -> float:
    """Central finite difference along one factor of a tuple point."""
    step = _fd_step(h, f(tuple(point)))

    def bump(sign):
        moved = list(point)
        moved[factor] = point[factor] + sign * step * direction
        return f(tuple(moved))

    return (bump(+1) - bump(-1)) / (2.0 * step)


def dense_classification_cost(kernel: np.ndarray, src_vectors: np.ndarray,
                              tgt_vectors: np.ndarray, pair_indices: np.ndarray,
                              reg_term: float = 0.0) -> float:
    """|| X_s^T A X_t - Y ||_F^2 + reg_term with Y materialized."""
    scores = src_vectors.T @ kernel @ tgt_vectors
    gold = np.zeros_like(scores)
    for i, j in pair_indices:
        gold[i, j] = 1.0
    return float(np.sum((scores - gold) ** 2)) + reg_term


def brute_csls(src_unit: np.ndarray, tgt_unit: np.ndarray, k: int) -> np.ndarray:
    """Full CSLS score matrix by explicit sorting, one word at a time."""
    cos = src_unit.T @ tgt_unit
    n_src, n_tgt = cos.shape
    r_src = np.array([np.sort(cos[i, :])[::-1][:k].mean() for i in range(n_src)])
    r_tgt = np.array([np.sort(cos[:, j])[::-1][:k].mean() for j in range(n_tgt)])
    return 2.0 * cos - r_src[:, None] - r_tgt[None, :]


def expm_sym(m: np.ndarray) -> np.ndarray:
    """Matrix exponential of a symmetric matrix via eigendecomposition."""
    w, q = np.linalg.eigh(m)
    return (q * np.exp(w)) @ q.T


def spd_geodesic(b: np.ndarray, xi: np.ndarray, t: float) -> np.ndarray:
    """Exact geodesic of the affine-invariant metric:
    B^1/2 exp(t B^-1/2 xi B^-1/2) B^1/2."""
    w, q = np.linalg.eigh(b)
    root = (q * np.sqrt(w)) @ q.T
    inv_root = (q / np.sqrt(w)) @ q.T
    inner = inv_root @ xi @ inv_root
    return root @ expm_sym(t * 0.5 * (inner + inner.T)) @ root


def random_orthogonal(rng: np.random.Generator, d: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.where(np.diagonal(r) < 0, -1.0, 1.0)


def random_rotation(rng: np.random.Generator, d: int) -> np.ndarray:
    """Orthogonal with determinant +1.  Planted-recovery fixtures need
    this: orthogonal factors trained from an identity start stay in the
    determinant +1 component, so a reflection is not representable."""
    q = random_orthogonal(rng, d)
    if np.linalg.det(q) < 0:
        q = q.copy()
        q[:, 0] = -q[:, 0]
    return q


def tight_frame(rng: np.random.Generator, d: int, n_bases: int) -> np.ndarray:
    """d x (d * n_bases) unit columns with an exactly isotropic outer
    product.  On such columns the classification loss is minimized by a
    scaled rotation, so planted maps are recovered exactly."""
    return np.concatenate([random_orthogonal(rng, d) for _ in range(n_bases)],
                          axis=1)


def random_spd(rng: np.random.Generator, d: int, spread: float = 1.0) -> np.ndarray:
    q = random_orthogonal(rng, d)
    eigs = np.exp(rng.uniform(-spread, spread, size=d))
    b = (q * eigs) @ q.T
    return 0.5 * (b + b.T)


def random_orth_tangent(rng: np.random.Generator, u: np.ndarray) -> np.ndarray:
    g = rng.standard_normal(u.shape)
    return g - u @ (0.5 * (u.T @ g + g.T @ u))


def random_sym(rng: np.random.Generator, d: int) -> np.ndarray:
    g = rng.standard_normal((d, d))
    return 0.5 * (g + g.T)


def unit_columns(rng: np.random.Generator, d: int, n: int) -> np.ndarray:
    x = rng.standard_normal((d, n))
    return x / np.linalg.norm(x, axis=0)
