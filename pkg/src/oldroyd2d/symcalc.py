"""Closed-form functional calculus for symmetric 2x2 matrices.

Provides the eigendecomposition, matrix logarithm, the eigenvalue cutoff
chi and its logarithmic companion G, and executable oracles for the
matrix identities and inequalities the stress analysis relies on
(difference-of-logs bound, concavity trace chains, Jacobi's formula).

Everything is specialized to d = 2; the dimension enters inequality
constants and is kept in the single constant DIM below.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np

DIM = 2

# Eigenvalue gaps below this (relative) threshold count as repeated;
# the rotation is then pinned to the identity.
_TIE_BREAK_REL = 1e-14

# Default slacks for the inequality checkers.
_SCALAR_LOG_SLACK = 1e-12
_MATRIX_LOG_SLACK = 1e-10
_CONVEXITY_SLACK = 1e-10


class NotSPDError(ValueError):
    """Matrix argument is not symmetric positive definite."""


@dataclass(frozen=True)
class SymMat2:
    """Symmetric 2x2 matrix stored as three entries (no skew part exists)."""

    xx: float
    xy: float
    yy: float

    def to_array(self) -> np.ndarray:
        return np.array([[self.xx, self.xy], [self.xy, self.yy]])

    @staticmethod
    def from_array(m: np.ndarray) -> "SymMat2":
        return SymMat2(float(m[0, 0]), 0.5 * float(m[0, 1] + m[1, 0]), float(m[1, 1]))

    @staticmethod
    def identity() -> "SymMat2":
        return SymMat2(1.0, 0.0, 1.0)

    def trace(self) -> float:
        return self.xx + self.yy

    def det(self) -> float:
        return self.xx * self.yy - self.xy * self.xy

    def add(self, other: "SymMat2") -> "SymMat2":
        return SymMat2(self.xx + other.xx, self.xy + other.xy, self.yy + other.yy)

    def sub(self, other: "SymMat2") -> "SymMat2":
        return SymMat2(self.xx - other.xx, self.xy - other.xy, self.yy - other.yy)

    def scale(self, c: float) -> "SymMat2":
        return SymMat2(c * self.xx, c * self.xy, c * self.yy)

    def inner(self, other: "SymMat2") -> float:
        """Frobenius inner product A:B (off-diagonal counted twice)."""
        return self.xx * other.xx + 2.0 * self.xy * other.xy + self.yy * other.yy

    def frobenius(self) -> float:
        return math.sqrt(self.inner(self))


@dataclass(frozen=True)
class EigenPair2:
    """Ordered eigenvalues lam1 >= lam2 plus the rotation angle of O.

    O = [[cos phi, -sin phi], [sin phi, cos phi]] maps the standard basis
    onto the eigenvectors, first column belonging to lam1.
    """

    lam1: float
    lam2: float
    angle: float

    def rotation(self) -> np.ndarray:
        c, s = math.cos(self.angle), math.sin(self.angle)
        return np.array([[c, -s], [s, c]])

    def reconstruct(self) -> SymMat2:
        return _recombine(self.lam1, self.lam2, self.angle)


def _recombine(g1: float, g2: float, angle: float) -> SymMat2:
    c, s = math.cos(angle), math.sin(angle)
    cc, ss, cs = c * c, s * s, c * s
    return SymMat2(g1 * cc + g2 * ss, (g1 - g2) * cs, g1 * ss + g2 * cc)


def eig(p: SymMat2) -> EigenPair2:
    """Closed-form eigendecomposition via the characteristic quadratic.

    The smaller-magnitude root comes from det/lam to dodge the
    subtraction cancellation when the eigenvalues are far apart.  The
    rotation angle comes from atan2 on the off-diagonal structure,
    guarded so that a (near-)repeated eigenvalue yields O = I.
    """
    mean = 0.5 * (p.xx + p.yy)
    half_gap = 0.5 * (p.xx - p.yy)
    radius = math.hypot(half_gap, p.xy)
    if radius == 0.0:
        return EigenPair2(mean, mean, 0.0)
    if mean >= 0.0:
        lam1 = mean + radius
        lam2 = p.det() / lam1 if lam1 != 0.0 else mean - radius
    else:
        lam2 = mean - radius
        lam1 = p.det() / lam2
    if lam1 - lam2 < _TIE_BREAK_REL * (1.0 + abs(lam1)):
        return EigenPair2(lam1, lam2, 0.0)
    angle = 0.5 * math.atan2(2.0 * p.xy, p.xx - p.yy)
    return EigenPair2(lam1, lam2, angle)


def apply_scalar(g: Callable[[float], float], p: SymMat2) -> SymMat2:
    """Lift the scalar function g to p through its eigendecomposition."""
    e = eig(p)
    return _recombine(g(e.lam1), g(e.lam2), e.angle)


def mat_log(p: SymMat2, spd_floor: float = 0.0) -> SymMat2:
    e = eig(p)
    if e.lam2 <= spd_floor:
        raise NotSPDError(f"matrix log needs eigenvalues > {spd_floor}, got min {e.lam2}")
    return _recombine(math.log(e.lam1), math.log(e.lam2), e.angle)


def tr_log(p: SymMat2, spd_floor: float = 0.0) -> float:
    e = eig(p)
    if e.lam2 <= spd_floor:
        raise NotSPDError(f"tr log needs eigenvalues > {spd_floor}, got min {e.lam2}")
    return math.log(e.lam1) + math.log(e.lam2)


def chi_scalar(s3: float, s: float) -> float:
    return s3 if s < s3 else s


def chi_cutoff(s3: float, p: SymMat2) -> SymMat2:
    """Eigenvalue-wise max with s3; output SPD with min eigenvalue >= s3."""
    if s3 <= 0.0:
        raise ValueError("cutoff level must be positive")
    return apply_scalar(lambda s: chi_scalar(s3, s), p)


def g_cutoff_scalar(s3: float, s: float) -> float:
    """log above the cutoff, its tangent line below (C^1 continuation)."""
    if s >= s3:
        return math.log(s)
    return s / s3 + math.log(s3) - 1.0


def g_cutoff_log(s3: float, p: SymMat2) -> SymMat2:
    if s3 <= 0.0:
        raise ValueError("cutoff level must be positive")
    return apply_scalar(lambda s: g_cutoff_scalar(s3, s), p)


def inv_chi(s3: float, p: SymMat2) -> SymMat2:
    """Inverse of the cutoff matrix; identical to lifting G' = 1/chi."""
    if s3 <= 0.0:
        raise ValueError("cutoff level must be positive")
    return apply_scalar(lambda s: 1.0 / chi_scalar(s3, s), p)


class IneqResult(NamedTuple):
    lhs: float
    rhs: float
    holds: bool


class ChainResult(NamedTuple):
    left: float
    mid: float
    right: float
    holds: bool


def scalar_log_ineq(a: float, b: float) -> IneqResult:
    """-(a-b)(1/a-1/b) >= (log a - log b)^2 for positive a, b."""
    if a <= 0.0 or b <= 0.0:
        raise ValueError("arguments must be positive")
    lhs = -(a - b) * (1.0 / a - 1.0 / b)
    rhs = (math.log(a) - math.log(b)) ** 2
    return IneqResult(lhs, rhs, lhs >= rhs - _SCALAR_LOG_SLACK)


def matrix_log_diff_ineq(a: SymMat2, b: SymMat2) -> IneqResult:
    """|tr log A - tr log B|^2 <= -d tr((A-B)(A^-1 - B^-1)) for SPD pairs."""
    ea, eb = eig(a), eig(b)
    if ea.lam2 <= 0.0 or eb.lam2 <= 0.0:
        raise NotSPDError("both arguments must be positive definite")
    lhs = (tr_log(a) - tr_log(b)) ** 2
    inv_a = apply_scalar(lambda s: 1.0 / s, a)
    inv_b = apply_scalar(lambda s: 1.0 / s, b)
    rhs = -DIM * a.sub(b).inner(inv_a.sub(inv_b))
    scale = 1.0 + abs(lhs) + abs(rhs)
    return IneqResult(lhs, rhs, lhs <= rhs + _MATRIX_LOG_SLACK * scale)


def convexity_trace_ineq(
    g: Callable[[float], float],
    g_prime: Callable[[float], float],
    kind: str,
    a: SymMat2,
    b: SymMat2,
) -> ChainResult:
    """Trace chain (A-B):g'(B) >= tr g(A) - tr g(B) >= (A-B):g'(A).

    Stated for concave g; a convex tag flips both comparisons.
    """
    if kind not in ("concave", "convex"):
        raise ValueError("kind must be 'concave' or 'convex'")
    diff = a.sub(b)
    left = diff.inner(apply_scalar(g_prime, b))
    mid = apply_scalar(g, a).trace() - apply_scalar(g, b).trace()
    right = diff.inner(apply_scalar(g_prime, a))
    scale = 1.0 + abs(left) + abs(mid) + abs(right)
    slack = _CONVEXITY_SLACK * scale
    if kind == "concave":
        holds = (left >= mid - slack) and (mid >= right - slack)
    else:
        holds = (left <= mid + slack) and (mid <= right + slack)
    return ChainResult(left, mid, right, holds)


def jacobi_residual(path: Sequence[SymMat2], dt: float) -> float:
    """Centered-difference residual of d(log det P) = tr(P^-1 dP).

    Max over interior samples; O(dt^2) for smooth SPD paths.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    pairs = [eig(p) for p in path]
    for e in pairs:
        if e.lam2 <= 0.0:
            raise NotSPDError("path must stay positive definite")
    worst = 0.0
    for i in range(1, len(path) - 1):
        d_logdet = (
            math.log(path[i + 1].det()) - math.log(path[i - 1].det())
        ) / (2.0 * dt)
        dp = path[i + 1].sub(path[i - 1]).scale(1.0 / (2.0 * dt))
        inv_p = apply_scalar(lambda s: 1.0 / s, path[i])
        worst = max(worst, abs(d_logdet - inv_p.inner(dp)))
    return worst


def trace_derivative_check(
    g: Callable[[float], float],
    g_prime: Callable[[float], float],
    path: Sequence[SymMat2],
    dt: float,
) -> float:
    """Centered-difference residual of d tr g(P) = g'(P):dP along a path."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    worst = 0.0
    for i in range(1, len(path) - 1):
        d_tr = (
            apply_scalar(g, path[i + 1]).trace()
            - apply_scalar(g, path[i - 1]).trace()
        ) / (2.0 * dt)
        dp = path[i + 1].sub(path[i - 1]).scale(1.0 / (2.0 * dt))
        worst = max(worst, abs(d_tr - apply_scalar(g_prime, path[i]).inner(dp)))
    return worst


# ---------------------------------------------------------------------------
# Vectorized companions operating on whole component arrays (xx, xy, yy).
# Same formulas as the scalar path; used by the field operators so that
# per-cell loops never appear in the solver.


def eig_fields(xx: np.ndarray, xy: np.ndarray, yy: np.ndarray):
    """Componentwise eigendecomposition: (lam1, lam2, cos, sin) arrays.

    Mirrors eig(): the smaller-magnitude eigenvalue comes from det/lam
    to avoid subtraction cancellation.
    """
    mean = 0.5 * (xx + yy)
    half_gap = 0.5 * (xx - yy)
    radius = np.hypot(half_gap, xy)
    det = xx * yy - xy * xy
    big_pos = mean + radius
    big_neg = mean - radius
    with np.errstate(divide="ignore", invalid="ignore"):
        from_pos = np.where(big_pos != 0.0, det / np.where(big_pos != 0.0, big_pos, 1.0), big_neg)
        from_neg = det / np.where(big_neg != 0.0, big_neg, 1.0)
    nonneg = mean >= 0.0
    lam1 = np.where(nonneg, big_pos, from_neg)
    lam2 = np.where(nonneg, from_pos, big_neg)
    angle = 0.5 * np.arctan2(2.0 * xy, xx - yy)
    tie = (lam1 - lam2) < _TIE_BREAK_REL * (1.0 + np.abs(lam1))
    angle = np.where(tie, 0.0, angle)
    return lam1, lam2, np.cos(angle), np.sin(angle)


def recombine_fields(g1: np.ndarray, g2: np.ndarray, c: np.ndarray, s: np.ndarray):
    """Assemble O diag(g1, g2) O^T componentwise."""
    cc, ss, cs = c * c, s * s, c * s
    return g1 * cc + g2 * ss, (g1 - g2) * cs, g1 * ss + g2 * cc


def apply_scalar_fields(g, xx: np.ndarray, xy: np.ndarray, yy: np.ndarray):
    """Lift a numpy-vectorized scalar g over component arrays."""
    lam1, lam2, c, s = eig_fields(xx, xy, yy)
    return recombine_fields(g(lam1), g(lam2), c, s)


def min_eig_fields(xx: np.ndarray, xy: np.ndarray, yy: np.ndarray) -> np.ndarray:
    mean = 0.5 * (xx + yy)
    return mean - np.hypot(0.5 * (xx - yy), xy)
