"""Truncated SVD by block subspace iteration, plus eigenspectra.

Only a handful of leading components are ever needed (one per data block,
thousands of blocks), so a full decomposition is avoided. The iteration
carries a few extra guard vectors and uses a Rayleigh-Ritz step each sweep,
which keeps convergence fast when the leading singular values are close.

Factor convention: ``M ~= sum_d sigma_d * outer(u_d, v_d)``. ``u`` is the
slow-time factor and ``v`` the fast-time factor *as it appears in the rows*
(the complex conjugate of the usual right singular vector), so ``v`` can be
used directly as a range reference signal.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import as_complex_matrix
from .errors import ConvergenceError, InvalidArgumentError

__all__ = ["SvdTriplet", "principal_component", "eigenspectrum", "subspace_iteration"]

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 500
GUARD_VECTORS = 6
# below this many rows (or columns) a dense SVD beats iterating
DENSE_LIMIT = 64


@dataclass(frozen=True)
class SvdTriplet:
    sigma: float
    u: np.ndarray
    v: np.ndarray

    def outer(self):
        return self.sigma * np.outer(self.u, self.v)


def _initial_basis(M, k):
    # deterministic start: conjugated rows of largest norm, topped up with
    # canonical vectors if those rows are linearly dependent
    norms = np.einsum("ij,ij->i", M.real, M.real) + np.einsum("ij,ij->i", M.imag, M.imag)
    order = np.argsort(-norms, kind="stable")[:k]
    X = M[order].conj().T.copy()
    n = M.shape[1]
    extra = np.zeros((n, k), dtype=np.complex128)
    extra[np.arange(k) % n, np.arange(k)] = 1.0
    X = X + 1e-3 * (np.linalg.norm(X) / np.sqrt(k * n) + 1.0) * extra
    Q, _ = np.linalg.qr(X)
    return Q


def subspace_iteration(M, D, v0=None, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER, value_tol=None):
    """Leading ``D`` singular triplets of ``M`` as ``(sigmas, U, V, iterations)``.

    ``V`` holds standard right singular vectors (``M ~= U diag(s) V^H``).
    ``v0`` (n x j) warm-starts the search subspace. Convergence is declared
    when the top-``D`` right subspace moves by less than ``tol`` between
    sweeps, measured as the norm of the component of the new basis orthogonal
    to the old one. With ``value_tol`` set, iteration also stops once the
    top-``D`` singular values change by less than ``value_tol`` relative,
    which is all a caller scoring energies needs; the returned vectors are
    then less accurate than ``tol`` implies.
    """
    rows, cols = M.shape
    small = min(rows, cols)
    k = min(small, D + GUARD_VECTORS)
    if k == small or small <= DENSE_LIMIT:
        # search space covers (nearly) everything: one dense step is exact
        U, s, Vh = np.linalg.svd(M, full_matrices=False)
        return s[:D], U[:, :D], Vh[:D].conj().T, 0
    Q = _initial_basis(M, k)
    if v0 is not None:
        v0 = np.asarray(v0, dtype=np.complex128).reshape(cols, -1)
        j = min(v0.shape[1], k)
        Q = np.concatenate([v0[:, :j], Q[:, : k - j]], axis=1)
        Q, _ = np.linalg.qr(Q)
    V_prev = None
    s_prev = None
    change = np.inf
    for it in range(1, max_iter + 1):
        P, _ = np.linalg.qr(M @ Q)
        B = P.conj().T @ M  # k x cols
        Ub, s, Vh = np.linalg.svd(B, full_matrices=False)
        Q = Vh.conj().T  # Ritz right vectors, already orthonormal
        V = Q[:, :D]
        if V_prev is not None:
            change = np.linalg.norm(V - V_prev @ (V_prev.conj().T @ V), 2)
            if change < tol:
                return s[:D], P @ Ub[:, :D], V, it
        if value_tol is not None and s_prev is not None:
            if np.all(np.abs(s[:D] - s_prev) <= value_tol * max(s[0], 1e-300)):
                return s[:D], P @ Ub[:, :D], V, it
        V_prev = V
        s_prev = s[:D].copy()
    U = P @ Ub[:, :D]
    raise ConvergenceError(
        f"subspace iteration did not converge in {max_iter} sweeps (change {change:.3g})",
        residual=change,
        partial=(s[:D], U, V),
    )


def principal_component(M, D=1, v0=None, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER, value_tol=None):
    """Best rank-``D`` approximation of ``M`` and its singular triplets.

    Returns ``(approximation, triplets)`` with triplets in descending sigma
    order. Raises ``ConvergenceError`` (carrying the residual) if the
    iteration cap is hit.
    """
    M = as_complex_matrix(M, "M")
    if not isinstance(D, (int, np.integer)) or not 1 <= D <= min(M.shape):
        raise InvalidArgumentError(f"D={D!r} must be an integer in [1, {min(M.shape)}]")
    if not np.any(M):
        U = np.zeros((M.shape[0], D), dtype=np.complex128)
        V = np.zeros((M.shape[1], D), dtype=np.complex128)
        U[np.arange(D), np.arange(D)] = 1.0
        V[np.arange(D), np.arange(D)] = 1.0
        s = np.zeros(D)
    else:
        s, U, V, _ = subspace_iteration(M, int(D), v0=v0, tol=tol, max_iter=max_iter, value_tol=value_tol)
    triplets = [SvdTriplet(float(s[d]), U[:, d].copy(), V[:, d].conj()) for d in range(D)]
    approx = (U * s) @ V.conj().T
    return approx, triplets


def eigenspectrum(M, top_k):
    """Top ``top_k`` eigenvalues of ``M M^H``, descending, clamped at zero.

    Computed from the Hermitian eigendecomposition of the smaller Gram
    matrix, independently of :func:`principal_component`.
    """
    M = as_complex_matrix(M, "M")
    small = min(M.shape)
    if not isinstance(top_k, (int, np.integer)) or not 1 <= top_k <= small:
        raise InvalidArgumentError(f"top_k={top_k!r} must be an integer in [1, {small}]")
    G = M @ M.conj().T if M.shape[0] <= M.shape[1] else M.conj().T @ M
    w = np.linalg.eigvalsh(G)[::-1][:top_k]
    return np.clip(w, 0.0, None)
