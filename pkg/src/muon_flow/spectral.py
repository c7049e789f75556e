"""Single-block spectral maps.

Every function accepts either one matrix of shape ``(m, n)`` or a stack of
shape ``(..., m, n)``; scalar-valued maps then return an array over the
leading axes.  Singular value decompositions come from a one-sided (Hestenes)
Jacobi sweep compiled with numba, which is deterministic and accurate to
working precision for the small blocks used here.
"""

from dataclasses import dataclass

import numba
import numpy as np

from .errors import InvalidInput, InvalidMatrix, OutsideDomain

DEFAULT_RANK_TOL = 1e-12
JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 60
PHI_BOUNDARY_SLACK = 1e-12

# Quintic Newton-Schulz coefficients used by practical Muon implementations.
NS_QUINTIC = (3.4445, -4.7750, 2.0315)


@dataclass(frozen=True)
class SvdFactors:
    """Reduced SVD ``P = u @ diag(sigma) @ v.T`` keeping only the numerical rank."""

    u: np.ndarray
    sigma: np.ndarray
    v: np.ndarray
    rank_tol: float

    @property
    def rank(self):
        return self.sigma.shape[0]

    def reconstruct(self):
        return (self.u * self.sigma) @ self.v.T


@numba.njit(cache=True, nogil=True)
def _jacobi_rows(at, tol, max_sweeps):
    # at: (B, n, m) holding the columns of a tall (m >= n) matrix as rows.
    # Returns U^T (B, n, m), s (B, n), V (B, n, n) sorted descending, with the
    # largest-magnitude entry of each left singular vector made nonnegative.
    nb, n, m = at.shape
    ut = at.copy()
    vt = np.zeros((nb, n, n))
    ss = np.zeros((nb, n))
    vv = np.zeros((nb, n, n))
    for b in range(nb):
        w = ut[b]
        z = vt[b]
        for i in range(n):
            z[i, i] = 1.0
        for _ in range(max_sweeps):
            rotated = False
            for i in range(n - 1):
                for j in range(i + 1, n):
                    alpha = 0.0
                    beta = 0.0
                    gam = 0.0
                    for k in range(m):
                        x = w[i, k]
                        y = w[j, k]
                        alpha += x * x
                        beta += y * y
                        gam += x * y
                    if alpha < 1e-300 or beta < 1e-300:
                        continue
                    if abs(gam) <= tol * np.sqrt(alpha * beta):
                        continue
                    rotated = True
                    zeta = (beta - alpha) / (2.0 * gam)
                    sgn = 1.0 if zeta >= 0.0 else -1.0
                    t = sgn / (abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                    c = 1.0 / np.sqrt(1.0 + t * t)
                    s = c * t
                    for k in range(m):
                        x = w[i, k]
                        y = w[j, k]
                        w[i, k] = c * x - s * y
                        w[j, k] = s * x + c * y
                    for k in range(n):
                        x = z[i, k]
                        y = z[j, k]
                        z[i, k] = c * x - s * y
                        z[j, k] = s * x + c * y
            if not rotated:
                break
        for j in range(n):
            acc = 0.0
            for k in range(m):
                acc += w[j, k] * w[j, k]
            ss[b, j] = np.sqrt(acc)
        order = np.argsort(-ss[b], kind="mergesort")
        su = w[order].copy()
        sz = z[order].copy()
        sd = ss[b][order].copy()
        for j in range(n):
            if sd[j] > 0.0:
                for k in range(m):
                    su[j, k] /= sd[j]
                best = 0
                for k in range(1, m):
                    if abs(su[j, k]) > abs(su[j, best]):
                        best = k
                if su[j, best] < 0.0:
                    for k in range(m):
                        su[j, k] = -su[j, k]
                    for k in range(n):
                        sz[j, k] = -sz[j, k]
            else:
                for k in range(m):
                    su[j, k] = 0.0
        ut[b] = su
        vv[b] = sz.T
        ss[b] = sd
    return ut, ss, vv


def _jacobi_tall(a, tol, max_sweeps):
    ut, s, v = _jacobi_rows(np.ascontiguousarray(a.transpose(0, 2, 1)), tol, max_sweeps)
    return ut.transpose(0, 2, 1), s, v


def check_finite(P):
    P = np.asarray(P, dtype=np.float64)
    if P.ndim < 2:
        raise InvalidMatrix(f"expected a matrix, got shape {P.shape}")
    if not np.isfinite(P).all():
        raise InvalidMatrix("matrix has non-finite entries")
    return P


def check_eps(eps):
    eps = float(eps)
    if not eps > 0.0 or not np.isfinite(eps):
        raise InvalidInput(f"eps must be a positive finite real, got {eps!r}")
    return eps


def thin_svd(P, rank_tol=DEFAULT_RANK_TOL):
    """Batched thin SVD with ``q = min(m, n)`` columns.

    Singular values at or below ``rank_tol * sigma_max`` are set to zero
    together with their singular vectors, so callers can apply spectral
    functions with ``f(0) = 0`` without masking.
    """
    P = check_finite(P)
    lead = P.shape[:-2]
    m, n = P.shape[-2:]
    flat = P.reshape((-1, m, n))
    if m >= n:
        u, s, v = _jacobi_tall(np.ascontiguousarray(flat), JACOBI_TOL, JACOBI_MAX_SWEEPS)
    else:
        v, s, u = _jacobi_tall(
            np.ascontiguousarray(flat.transpose(0, 2, 1)), JACOBI_TOL, JACOBI_MAX_SWEEPS
        )
        # restore the sign convention on the (now) left factor
        idx = np.argmax(np.abs(u), axis=1, keepdims=True)
        sign = np.where(np.take_along_axis(u, idx, axis=1) < 0.0, -1.0, 1.0)
        u = u * sign
        v = v * sign
    cutoff = rank_tol * s[:, :1]
    keep = s > cutoff
    s = np.where(keep, s, 0.0)
    u = u * keep[:, None, :]
    v = v * keep[:, None, :]
    q = s.shape[-1]
    return (
        u.reshape(lead + (m, q)),
        s.reshape(lead + (q,)),
        v.reshape(lead + (n, q)),
    )


def svd(P, rank_tol=DEFAULT_RANK_TOL):
    """Reduced SVD of a single matrix, truncated to its numerical rank."""
    P = check_finite(P)
    if P.ndim != 2:
        raise InvalidMatrix("svd expects a single 2-D matrix")
    if rank_tol < 0:
        raise InvalidInput("rank_tol must be nonnegative")
    u, s, v = thin_svd(P, rank_tol)
    r = int(np.count_nonzero(s))
    return SvdFactors(u[:, :r].copy(), s[:r].copy(), v[:, :r].copy(), float(rank_tol))


def _assemble(u, fs, v):
    return np.matmul(u * fs[..., None, :], np.swapaxes(v, -1, -2))


def singular_values(P):
    return thin_svd(P)[1]


def orth_hard(P, rank_tol=DEFAULT_RANK_TOL):
    """Polar factor ``U V^T`` of the reduced SVD; zero maps to zero."""
    u, s, v = thin_svd(P, rank_tol)
    return _assemble(u, (s > 0.0).astype(np.float64), v)


def orth_eps(P, eps):
    """Regularized orthogonalization ``U diag(s / sqrt(s^2 + eps^2)) V^T``."""
    eps = check_eps(eps)
    u, s, v = thin_svd(P)
    return _assemble(u, s / np.hypot(s, eps), v)


def psi_from_sv(s, eps):
    # sqrt(s^2 + eps^2) - eps without cancellation for s << eps
    return np.sum(s * s / (np.hypot(s, eps) + eps), axis=-1)


def dissipation_from_sv(s, eps):
    return np.sum(s * s / np.hypot(s, eps), axis=-1)


def psi_eps(P, eps):
    """Smoothed nuclear norm: sum over singular values of sqrt(s^2+eps^2) - eps."""
    eps = check_eps(eps)
    return psi_from_sv(singular_values(P), eps)


def dissipation_density(P, eps):
    """``<P, orth_eps(P)>_F``, the Fenchel coupling of momentum and velocity."""
    eps = check_eps(eps)
    return dissipation_from_sv(singular_values(P), eps)


def phi_eps(G, eps):
    """Conjugate potential on the closed unit spectral ball.

    Raises OutsideDomain when the operator norm exceeds ``1 + 1e-12``; values
    in ``(1, 1 + 1e-12]`` are treated as lying on the boundary.
    """
    eps = check_eps(eps)
    s = singular_values(G)
    if s.size and s[..., 0].max() > 1.0 + PHI_BOUNDARY_SLACK:
        raise OutsideDomain(f"operator norm {s[..., 0].max():.17g} exceeds 1")
    s = np.minimum(s, 1.0)
    return eps * np.sum(s * s / (1.0 + np.sqrt(1.0 - s * s)), axis=-1)


def grad_phi_eps(G, eps):
    """Inverse mirror map on the open unit ball: ``orth_eps`` undone."""
    eps = check_eps(eps)
    u, s, v = thin_svd(G)
    if s.size and s[..., 0].max() >= 1.0 - PHI_BOUNDARY_SLACK:
        raise OutsideDomain("grad_phi_eps needs operator norm strictly below 1")
    return _assemble(u, eps * s / np.sqrt(1.0 - s * s), v)


def norms(P):
    """Frobenius, operator and nuclear norms."""
    s = singular_values(P)
    P = np.asarray(P, dtype=np.float64)
    fro = np.sqrt(np.sum(P * P, axis=(-2, -1)))
    op = s[..., 0] if s.shape[-1] else np.zeros(s.shape[:-1])
    nuc = np.sum(s, axis=-1)
    return fro, op, nuc


def newton_schulz5(P, iters=5, coeffs=NS_QUINTIC):
    """Polynomial approximation of the polar factor.

    Starts from ``P / ||P||_F`` and applies ``X <- aX + b(XX^T)X + c(XX^T)^2 X``.
    The default quintic does not converge to exactly one; after five steps the
    singular values sit roughly in ``[0.7, 1.2]``.  A zero input returns zero.
    """
    if iters < 1:
        raise InvalidInput("iters must be >= 1")
    P = check_finite(P)
    a, b, c = coeffs
    tall = P.shape[-2] > P.shape[-1]
    X = np.swapaxes(P, -1, -2) if tall else P
    fro = np.sqrt(np.sum(X * X, axis=(-2, -1), keepdims=True))
    X = np.divide(X, fro, out=np.zeros_like(X), where=fro > 0.0)
    for _ in range(iters):
        A = np.matmul(X, np.swapaxes(X, -1, -2))
        B = b * A + c * np.matmul(A, A)
        X = a * X + np.matmul(B, X)
    return np.swapaxes(X, -1, -2) if tall else X
