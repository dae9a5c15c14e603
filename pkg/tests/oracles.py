"""Independent reference routes for the matrix-calculus tests.

Everything here goes through numpy.linalg / scipy rather than the
closed-form 2x2 formulas in the package, so a bug in the package
cannot hide in the expected values.
"""

import numpy as np
import scipy.linalg


def eig_np(mat: np.ndarray):
    """Eigenvalues (descending) and eigenvectors of a symmetric 2x2 array."""
    lam, vecs = np.linalg.eigh(mat)
    order = np.argsort(lam)[::-1]
    return lam[order], vecs[:, order]


def logm_np(mat: np.ndarray) -> np.ndarray:
    return scipy.linalg.logm(mat).real


def tr_log_np(mat: np.ndarray) -> float:
    return float(np.log(np.linalg.det(mat)))


def apply_scalar_np(g, mat: np.ndarray) -> np.ndarray:
    lam, vecs = np.linalg.eigh(mat)
    return vecs @ np.diag([g(v) for v in lam]) @ vecs.T


def chi_np(s3: float, mat: np.ndarray) -> np.ndarray:
    return apply_scalar_np(lambda s: max(s3, s), mat)


def g_cutoff_np(s3: float, s: float) -> float:
    """Logarithm above the cutoff, tangent-line continuation below."""
    if s >= s3:
        return np.log(s)
    return s / s3 + np.log(s3) - 1.0


def random_spd(rng: np.random.Generator, lo: float = 1e-3, hi: float = 1e3) -> np.ndarray:
    """Random SPD 2x2 with eigenvalues log-uniform in [lo, hi]."""
    lam = np.exp(rng.uniform(np.log(lo), np.log(hi), size=2))
    phi = rng.uniform(0.0, np.pi)
    c, s = np.cos(phi), np.sin(phi)
    o = np.array([[c, -s], [s, c]])
    return o @ np.diag(lam) @ o.T


def random_sym(rng: np.random.Generator, scale: float = 3.0) -> np.ndarray:
    a, b, c = rng.uniform(-scale, scale, size=3)
    return np.array([[a, b], [b, c]])
