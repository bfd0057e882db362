"""Riemannian primitives for the product manifold used by the aligner.

Two curved factor types appear in training: the orthogonal group (one
rotation per language) and the cone of symmetric positive-definite
matrices (the shared metric).  A flat Euclidean factor is included so
unconstrained ablations can run through the same solver.  Points and
tangents are plain float64 ndarrays; a product point is a tuple of
them, one entry per factor.
"""

import numpy as np

from dataclasses import dataclass


class NumericalError(ArithmeticError):
    """Raised when a geometric operation hits a numerically singular input."""


def sym(a: np.ndarray) -> np.ndarray:
    """Symmetric part (A + A^T) / 2."""
    return 0.5 * (a + a.T)


def orth_defect(u: np.ndarray) -> float:
    """Frobenius distance of U^T U from the identity."""
    d = u.shape[1]
    return float(np.linalg.norm(u.T @ u - np.eye(d)))


def orth_project(u: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Project an ambient matrix onto the tangent space at orthogonal U.

    The tangent space is {xi : U^T xi skew}; the projection removes the
    symmetric part of U^T G.
    """
    return g - u @ sym(u.T @ g)


def orth_retract(u: np.ndarray, xi: np.ndarray, step: float = 1.0) -> np.ndarray:
    """QR retraction: orthogonal factor of U + step * xi.

    The R factor's diagonal is forced positive so the result is a
    continuous, deterministic function of the input.  Raises
    NumericalError if U + step * xi is numerically rank deficient
    (cannot happen for genuine tangents, which perturb U by I + skew).
    """
    m = u + step * xi
    q, r = np.linalg.qr(m)
    diag = np.diagonal(r)
    scale = max(1.0, float(np.abs(diag).max()))
    if np.any(np.abs(diag) < 1e-12 * scale):
        raise NumericalError("rank-deficient matrix in QR retraction")
    signs = np.where(diag < 0, -1.0, 1.0)
    return q * signs


def orth_transport(u_new: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """Projection-based vector transport onto the tangent space at u_new."""
    return orth_project(u_new, xi)


def spd_check(b: np.ndarray, tol: float = 0.0) -> None:
    """Raise NumericalError unless B is exactly symmetric and positive definite."""
    if not np.array_equal(b, b.T):
        raise NumericalError("matrix is not exactly symmetric")
    w = np.linalg.eigvalsh(b)
    if w.min() <= tol:
        raise NumericalError(f"matrix is not positive definite (min eig {w.min():.3e})")


def spd_egrad_to_rgrad(b: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Riemannian gradient under the affine-invariant metric: B sym(G) B."""
    return sym(b @ sym(g) @ b)


def spd_inner(b: np.ndarray, xi: np.ndarray, eta: np.ndarray) -> float:
    """Affine-invariant inner product tr(B^-1 xi B^-1 eta) at base point B."""
    try:
        bx = np.linalg.solve(b, xi)
        be = np.linalg.solve(b, eta)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("singular base point in SPD inner product") from exc
    return float(np.trace(bx @ be))


def spd_retract(b: np.ndarray, xi: np.ndarray, step: float = 1.0) -> np.ndarray:
    """Second-order retraction B + s*xi + (s^2/2) xi B^-1 xi, symmetrized.

    Writing M = B^-1/2 xi B^-1/2, the result is
    B^1/2 ((I + sM)^2 + I)/2 B^1/2, so it stays inside the cone for
    every step size.  The explicit symmetrization keeps round-off from
    breaking exact symmetry.
    """
    try:
        binv_xi = np.linalg.solve(b, xi)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("singular base point in SPD retraction") from exc
    return sym(b + step * xi + 0.5 * step * step * (xi @ binv_xi))


def spd_transport(xi: np.ndarray) -> np.ndarray:
    """Transport on the SPD cone: tangent spaces all equal the symmetric
    matrices, so projection-based transport is just symmetrization."""
    return sym(xi)


@dataclass(frozen=True)
class ProductManifold:
    """Product of named factors, each 'orth', 'spd', or 'euclidean'.

    Stateless: every method takes the point explicitly.  Points and
    tangents are tuples of ndarrays aligned with ``kinds``.
    """

    kinds: tuple

    def __post_init__(self):
        bad = [k for k in self.kinds if k not in ("orth", "spd", "euclidean")]
        if bad:
            raise ValueError(f"unknown manifold factor kinds: {bad}")

    def check_point(self, point, tol: float = 1e-10) -> None:
        if len(point) != len(self.kinds):
            raise ValueError("point arity does not match manifold factors")
        for kind, p in zip(self.kinds, point):
            if kind == "orth":
                if orth_defect(p) > tol:
                    raise NumericalError("orthogonality defect above tolerance")
            elif kind == "spd":
                spd_check(p)

    def project(self, point, ambient) -> tuple:
        out = []
        for kind, p, g in zip(self.kinds, point, ambient):
            if kind == "orth":
                out.append(orth_project(p, g))
            elif kind == "spd":
                out.append(sym(g))
            else:
                out.append(np.asarray(g))
        return tuple(out)

    def egrad_to_rgrad(self, point, egrad) -> tuple:
        out = []
        for kind, p, g in zip(self.kinds, point, egrad):
            if kind == "orth":
                out.append(orth_project(p, g))
            elif kind == "spd":
                out.append(spd_egrad_to_rgrad(p, g))
            else:
                out.append(np.asarray(g))
        return tuple(out)

    def inner(self, point, xi, eta) -> float:
        total = 0.0
        for kind, p, x, e in zip(self.kinds, point, xi, eta):
            if kind == "spd":
                total += spd_inner(p, x, e)
            else:
                total += float(np.tensordot(x, e))
        return total

    def norm(self, point, xi) -> float:
        return float(np.sqrt(max(self.inner(point, xi, xi), 0.0)))

    def retract(self, point, xi, step: float = 1.0) -> tuple:
        out = []
        for kind, p, x in zip(self.kinds, point, xi):
            if kind == "orth":
                out.append(orth_retract(p, x, step))
            elif kind == "spd":
                out.append(spd_retract(p, x, step))
            else:
                out.append(p + step * x)
        return tuple(out)

    def transport(self, point_new, xi) -> tuple:
        out = []
        for kind, p, x in zip(self.kinds, point_new, xi):
            if kind == "orth":
                out.append(orth_transport(p, x))
            elif kind == "spd":
                out.append(spd_transport(x))
            else:
                out.append(np.asarray(x))
        return tuple(out)

    def lincomb(self, a: float, xi, b: float = 0.0, eta=None) -> tuple:
        if eta is None:
            return tuple(a * x for x in xi)
        return tuple(a * x + b * e for x, e in zip(xi, eta))

    def zero_tangent(self, point) -> tuple:
        return tuple(np.zeros_like(p) for p in point)
