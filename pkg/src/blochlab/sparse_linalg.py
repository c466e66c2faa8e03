"""Sparse Hermitian solver kernels.

Matrices are carried as ``scipy.sparse`` CSR (dimension, row-compressed
index/value arrays, real or complex scalar kind).  Deterministic behavior is
part of the contract: every randomized start is drawn from a fixed-seed
generator, and single-threaded runs reproduce bit-identical iterates.

Two independent eigenvalue routes live here on purpose: the iterative block
solver (:func:`smallest_eigpair`) and a dense cyclic-Jacobi sweep
(:func:`dense_oracle`) that shares no code with it.  Tests compare the two;
neither may be redirected through the other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

_DEFAULT_SEED = 24389
_MACHEPS = np.finfo(np.float64).eps


class ConvergenceError(RuntimeError):
    """Iteration budget exhausted; carries the residual history."""

    def __init__(self, message: str, history: list[float] | None = None):
        super().__init__(message)
        self.residual_history = list(history) if history is not None else []


@dataclass
class EigSolveReport:
    """Result of a (generalized) Hermitian eigenvalue solve."""

    eigenvalues: np.ndarray      # ascending, shape (k,)
    vectors: np.ndarray          # M-orthonormal columns, shape (n, k)
    residuals: np.ndarray        # ||B x - lam M x||_2 / ||M x||_2 per vector
    rel_residuals: np.ndarray    # residuals normalized by the pencil scale
    iterations: int
    converged: bool
    seed: int = _DEFAULT_SEED
    meta: dict = field(default_factory=dict)


def is_hermitian(A: sp.spmatrix, tol: float = 1e-12) -> bool:
    diff = (A - A.getH()).tocsr()
    if diff.nnz == 0:
        return True
    scale = max(abs(A).max(), 1.0)
    return abs(diff).max() <= tol * scale


# ---------------------------------------------------------------------------
# conjugate gradients


def cg_solve(
    A: sp.spmatrix,
    b: np.ndarray,
    *,
    tol: float = 1e-12,
    maxit: int | None = None,
    deflate_constants: bool = False,
    x0: np.ndarray | None = None,
    recompute_every: int = 50,
) -> np.ndarray:
    """Jacobi-preconditioned conjugate gradients for Hermitian positive
    (semi-)definite systems.

    With ``deflate_constants`` the constant kernel is projected out of the
    right-hand side check, the start vector, and the residual at every
    iteration; the returned solution has zero mean.  The true residual is
    recomputed every ``recompute_every`` iterations (restart points).
    """
    b = np.asarray(b)
    n = b.shape[0]
    if maxit is None:
        maxit = max(1000, 2 * n)
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros_like(b)

    if deflate_constants:
        drift = abs(b.sum()) / max(np.abs(b).sum(), np.finfo(float).tiny)
        if drift > 1e-10:
            raise ValueError(
                "incompatible right-hand side: nonzero mean "
                f"(relative drift {drift:.3e}) under constant deflation"
            )

    def project(v: np.ndarray) -> np.ndarray:
        if deflate_constants:
            v = v - v.mean()
        return v

    diag = A.diagonal().real
    if diag.min() <= 0:
        raise ValueError("Jacobi preconditioner needs a positive diagonal")
    inv_diag = 1.0 / diag

    x = np.zeros_like(b) if x0 is None else project(np.array(x0, copy=True))
    r = project(b - A @ x)
    z = inv_diag * r
    p = z.copy()
    rz = np.vdot(r, z).real
    history = [float(np.linalg.norm(r)) / bnorm]
    if history[-1] <= tol:
        return x

    for it in range(1, maxit + 1):
        Ap = project(A @ p)
        pAp = np.vdot(p, Ap).real
        if pAp <= 0:
            raise ConvergenceError(
                f"indefinite curvature encountered at iteration {it}", history
            )
        alpha = rz / pAp
        x = x + alpha * p
        if it % recompute_every == 0:
            r = project(b - A @ x)  # restart: discard accumulated roundoff
        else:
            r = project(r - alpha * Ap)
        resnorm = float(np.linalg.norm(r)) / bnorm
        history.append(resnorm)
        if resnorm <= tol:
            return project(x) if deflate_constants else x
        z = inv_diag * r
        rz_new = np.vdot(r, z).real
        p = z + (rz_new / rz) * p
        rz = rz_new

    raise ConvergenceError(
        f"CG did not reach tol={tol:.1e} in {maxit} iterations "
        f"(last residual {history[-1]:.3e})",
        history,
    )


def _capped_cg(
    A: sp.spmatrix,
    b: np.ndarray,
    iters: int,
    inv_diag: np.ndarray,
    deflate: bool,
) -> np.ndarray:
    """A few Jacobi-CG steps on ``A x = b`` from zero; never raises.

    Used as an approximate inverse inside the eigensolver, where a rough
    solve is enough and robustness beats accuracy: the loop simply stops
    at the budget, on stagnation, or on loss of positive curvature.
    """
    x = np.zeros_like(b)
    r = np.array(b, copy=True)
    if deflate:
        r = r - r.mean()
    bnorm = float(np.linalg.norm(r))
    if bnorm == 0.0:
        return x
    z = inv_diag * r
    p = z.copy()
    rz = np.vdot(r, z).real
    for _ in range(iters):
        Ap = A @ p
        if deflate:
            Ap = Ap - Ap.mean()
        pAp = np.vdot(p, Ap).real
        if pAp <= 0:
            break
        alpha = rz / pAp
        x = x + alpha * p
        r = r - alpha * Ap
        if float(np.linalg.norm(r)) <= 1e-2 * bnorm:
            break
        z = inv_diag * r
        rz_new = np.vdot(r, z).real
        if rz_new <= 0:
            break
        p = z + (rz_new / rz) * p
        rz = rz_new
    if deflate:
        x = x - x.mean()
    return x


# ---------------------------------------------------------------------------
# smallest eigenpairs: LOBPCG-type block iteration, Jacobi preconditioned


def _m_orthonormalize(V: np.ndarray, M: np.ndarray) -> np.ndarray:
    """SVQB-style M-orthonormalization, dropping near-dependent columns."""
    G = V.conj().T @ (M[:, None] * V)
    G = (G + G.conj().T) / 2.0
    w, Q = np.linalg.eigh(G)
    keep = w > max(w.max(), 0.0) * 1e-14
    if not np.any(keep):
        raise ConvergenceError("orthonormalization collapsed: zero block")
    return V @ (Q[:, keep] / np.sqrt(w[keep]))


def _project_out(V: np.ndarray, W: np.ndarray, M: np.ndarray) -> np.ndarray:
    """Remove the M-orthogonal projection of W onto orthonormal V."""
    return W - V @ (V.conj().T @ (M[:, None] * W))


def _pencil_scale(B: sp.spmatrix, M: np.ndarray) -> float:
    # infinity-norm bound on M^{-1/2} B M^{-1/2}; cheap and rigorous
    row_sums = np.abs(B).sum(axis=1).A1 if hasattr(abs(B).sum(axis=1), "A1") else np.asarray(np.abs(B).sum(axis=1)).ravel()
    return float((row_sums / M).max())


def smallest_eigpair(
    B: sp.spmatrix,
    M_diag: np.ndarray,
    k: int = 1,
    *,
    tol: float = 1e-10,
    maxit: int = 500,
    seed: int = _DEFAULT_SEED,
    X0: np.ndarray | None = None,
    inner_cg: int | None = None,
) -> EigSolveReport:
    """Smallest ``k`` eigenpairs of ``B x = lam M x`` with diagonal ``M``.

    Block iteration of LOBPCG type over span([X, preconditioned residuals,
    previous directions]).  The preconditioner is the Jacobi diagonal, or,
    when ``inner_cg`` steps are granted, a capped CG solve with ``B`` itself
    (an approximate inverse; essential once the coefficient contrast is
    large, where diagonal scaling alone stalls).  ``inner_cg=None`` picks
    the rule automatically from the diagonal spread.  The start block is
    the constant vector plus fixed-seed Gaussian columns, so runs are
    reproducible; ``X0`` columns, when given, replace the random part
    (warm starts stay deterministic).

    Convergence is declared when every requested vector satisfies
    ``||B x - lam M x||_2 <= tol * scale * ||x||_2`` where ``scale`` bounds
    the pencil norm; the report also carries the mass-normalized residual
    ``||B x - lam M x|| / ||M x||`` used by distributional-form checks.
    """
    n = B.shape[0]
    if k < 1 or k > n:
        raise ValueError(f"need 1 <= k <= {n}, got k={k}")
    M = np.asarray(M_diag, dtype=np.float64)
    if M.shape != (n,) or M.min() <= 0:
        raise ValueError("M_diag must be a positive vector matching B")

    block = min(max(k + 2, 2), n)
    if 3 * block >= n:  # subspace would span nearly everything; go dense
        return _dense_smallest(B, M, k, seed)

    dtype = np.complex128 if np.iscomplexobj(B.data) else np.float64
    rng = np.random.default_rng(seed)
    X = np.empty((n, block), dtype=dtype)
    X[:, 0] = 1.0
    rand_cols = rng.standard_normal((n, block - 1))
    if dtype == np.complex128:
        rand_cols = rand_cols + 1j * rng.standard_normal((n, block - 1))
    X[:, 1:] = rand_cols
    if X0 is not None:
        X0 = np.atleast_2d(np.asarray(X0, dtype=dtype))
        if X0.shape[0] != n:
            X0 = X0.T
        m = min(X0.shape[1], block)
        X[:, :m] = X0[:, :m]

    diagB = B.diagonal().real
    inv_diag = 1.0 / np.clip(diagB, np.finfo(float).tiny, None)
    scale = _pencil_scale(B, M)
    if inner_cg is None:
        # the capped solve adapts to both stiffness sources (mesh and
        # contrast); its early stop keeps easy problems cheap
        inner_cg = 40
    # capped-CG preconditioning needs to know whether constants are in the
    # kernel (shift-free assembly): then the inner systems must be deflated
    kernel_norm = float(np.linalg.norm(B @ np.ones(n)))
    deflate_inner = kernel_norm <= 1e-8 * scale * M.mean() * math.sqrt(n)

    def _precondition(R: np.ndarray) -> np.ndarray:
        if inner_cg <= 0:
            return inv_diag[:, None] * R
        Z = np.empty_like(R)
        for j in range(R.shape[1]):
            Z[:, j] = _capped_cg(B, R[:, j], inner_cg, inv_diag, deflate_inner)
        return Z

    X = _m_orthonormalize(X, M)
    P = None
    lam = None
    history: list[float] = []

    for it in range(1, maxit + 1):
        BX = B @ X
        # Rayleigh-Ritz inside the current block
        H = X.conj().T @ BX
        H = (H + H.conj().T) / 2.0
        theta, C = np.linalg.eigh(H)
        X = X @ C
        BX = BX @ C
        lam = theta
        R = BX - (M[:, None] * X) * lam
        resnorms = np.linalg.norm(R, axis=0)
        xnorms = np.linalg.norm(X, axis=0)
        rel = resnorms / (scale * M.mean() * xnorms + np.abs(lam) * xnorms)
        history.append(float(rel[:k].max()))
        # insist on a settled k+1-st pair as well: a start vector that is an
        # exact eigenvector of a higher band must not end the search early.
        # The guard only locks the subspace, so sqrt(tol) is enough for it.
        floor = scale * M.mean() * xnorms
        settled = resnorms[:k] <= tol * floor[:k]
        if k < X.shape[1]:
            guard_ok = resnorms[k] <= np.sqrt(tol) * floor[k]
        else:
            guard_ok = True
        if np.all(settled) and guard_ok:
            break

        W = _precondition(R)
        W = _project_out(X, W, M)
        try:
            W = _m_orthonormalize(W, M)
        except ConvergenceError:
            break  # residual block vanished: converged to working precision
        basis = [X, W]
        if P is not None:
            P = _project_out(X, P, M)
            P = _project_out(W, P, M)
            try:
                P = _m_orthonormalize(P, M)
                basis.append(P)
            except ConvergenceError:
                P = None
        S = np.hstack(basis)
        G = S.conj().T @ (B @ S)
        G = (G + G.conj().T) / 2.0
        theta, C = np.linalg.eigh(G)
        Xnew = S @ C[:, :block]
        P = S[:, block:] @ C[block:, :block]
        X = _m_orthonormalize(Xnew, M)
        if X.shape[1] < block:
            block = X.shape[1]
            if block < k:
                raise ConvergenceError("eigenbasis collapsed below k", history)

    # final polish: exact Rayleigh quotients on the returned columns
    Xk = X[:, :k]
    BXk = B @ Xk
    MXk = M[:, None] * Xk
    lam_k = np.einsum("ij,ij->j", Xk.conj(), BXk).real / np.einsum(
        "ij,ij->j", Xk.conj(), MXk
    ).real
    Rk = BXk - MXk * lam_k
    resid = np.linalg.norm(Rk, axis=0) / np.linalg.norm(MXk, axis=0)
    rel = np.linalg.norm(Rk, axis=0) / (
        scale * M.mean() * np.linalg.norm(Xk, axis=0)
    )
    converged = bool(np.all(rel <= tol))
    if not converged:
        raise ConvergenceError(
            f"eigensolver did not reach tol={tol:.1e} in {maxit} iterations "
            f"(relative residuals {rel})",
            history,
        )
    order = np.argsort(lam_k)
    return EigSolveReport(
        eigenvalues=lam_k[order],
        vectors=Xk[:, order],
        residuals=resid[order],
        rel_residuals=rel[order],
        iterations=it,
        converged=converged,
        seed=seed,
    )


def _dense_smallest(B: sp.spmatrix, M: np.ndarray, k: int, seed: int) -> EigSolveReport:
    # tiny systems only: the blocked subspace would exhaust the space
    s = 1.0 / np.sqrt(M)
    A = B.toarray() * s[:, None] * s[None, :]
    A = (A + A.conj().T) / 2.0
    w, V = np.linalg.eigh(A)
    vecs = s[:, None] * V[:, :k]
    lam = w[:k]
    Rk = B @ vecs - (M[:, None] * vecs) * lam
    mnorm = np.linalg.norm(M[:, None] * vecs, axis=0)
    resid = np.linalg.norm(Rk, axis=0) / mnorm
    scale = _pencil_scale(B, M)
    rel = np.linalg.norm(Rk, axis=0) / (scale * M.mean() * np.linalg.norm(vecs, axis=0))
    return EigSolveReport(
        eigenvalues=lam,
        vectors=vecs,
        residuals=resid,
        rel_residuals=rel,
        iterations=0,
        converged=True,
        seed=seed,
    )


# ---------------------------------------------------------------------------
# largest generalized eigenvalue (weighted mass vs stiffness)


def largest_geneig(
    weight_diag: np.ndarray,
    K: sp.spmatrix,
    *,
    tol: float = 1e-8,
    maxit: int = 300,
    cg_tol: float = 1e-10,
    seed: int = _DEFAULT_SEED,
) -> float:
    """Maximum of ``x* W x`` subject to ``x* K x = 1`` over the subspace of
    weighted-mean-zero vectors, ``W = diag(weight_diag)``.

    Inverse-operator power iteration: each step applies the shifted weight
    (which is exactly orthogonal to constants) and solves with ``K`` under
    constant deflation.  Warm-started CG keeps later steps cheap.  At
    extreme coefficient contrast the inner CG can stagnate just above a
    tight tolerance; a stalled solve is retried once at a loosened
    tolerance, which caps the attainable accuracy at that level but keeps
    the iteration sound.
    """
    w = np.asarray(weight_diag, dtype=np.float64)
    n = w.shape[0]
    if w.min() < 0:
        raise ValueError("weights must be nonnegative")
    wsum = w.sum()
    if wsum == 0.0 or w.max() == 0.0:
        return 0.0

    def shift(v: np.ndarray) -> np.ndarray:
        # subtract the weighted mean: the optimal constant shift
        return v - np.dot(w, v) / wsum

    rng = np.random.default_rng(seed)
    x = shift(rng.standard_normal(n))
    x /= np.linalg.norm(x)
    mu_prev = None
    warm = None
    for it in range(1, maxit + 1):
        y = w * shift(x)
        y -= y.mean()  # exact zero up to roundoff; keeps CG consistent
        if np.linalg.norm(y) == 0.0:
            return 0.0
        try:
            u = cg_solve(K, y, tol=cg_tol, deflate_constants=True, x0=warm)
        except ConvergenceError:
            u = cg_solve(
                K, y, tol=max(100.0 * cg_tol, 1e-7),
                deflate_constants=True, x0=warm,
            )
        warm = u
        us = shift(u)
        Ku = K @ u
        num = float(np.dot(us, w * us))
        den = float(np.dot(u, Ku))
        if den <= 0:
            raise ConvergenceError("stiffness form degenerate in power iteration")
        mu = num / den
        x = u / np.linalg.norm(u)
        if mu_prev is not None and abs(mu - mu_prev) <= tol * max(abs(mu), 1e-300):
            return mu
        mu_prev = mu
    raise ConvergenceError(
        f"power iteration did not settle to rel {tol:.1e} in {maxit} steps "
        f"(last value {mu_prev})"
    )


# ---------------------------------------------------------------------------
# dense oracle: cyclic Jacobi rotations (independent of the iterative path)


def dense_oracle(
    B: sp.spmatrix | np.ndarray,
    M_diag: np.ndarray | None = None,
    *,
    max_sweeps: int = 60,
    tol: float = 1e-14,
) -> np.ndarray:
    """All eigenvalues (ascending) of a Hermitian matrix, or of the pencil
    ``(B, diag(M_diag))``, by cyclic Jacobi rotations.

    Deliberately self-contained: no LAPACK eigensolvers, no shared code with
    :func:`smallest_eigpair`.  Intended for cross-checking at dimension
    <= 4096.
    """
    A = B.toarray() if sp.issparse(B) else np.array(B, copy=True)
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError("square matrix required")
    if n > 4096:
        raise ValueError(f"dense oracle capped at dimension 4096, got {n}")
    if M_diag is not None:
        M = np.asarray(M_diag, dtype=np.float64)
        if M.min() <= 0:
            raise ValueError("M_diag must be positive")
        s = 1.0 / np.sqrt(M)
        A = A * s[:, None] * s[None, :]
    herm_defect = np.abs(A - A.conj().T).max()
    if herm_defect > 1e-12 * max(np.abs(A).max(), 1.0):
        raise ValueError(f"matrix is not Hermitian (defect {herm_defect:.3e})")
    A = (A + A.conj().T) / 2.0

    fro = np.linalg.norm(A)
    if fro == 0.0:
        return np.zeros(n)
    for _ in range(max_sweeps):
        off = math.sqrt(max(np.linalg.norm(A) ** 2 - np.linalg.norm(np.diag(A)) ** 2, 0.0))
        if off <= tol * fro:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                g = A[p, q]
                ag = abs(g)
                if ag <= 1e-18 * fro:
                    continue
                alpha = A[p, p].real
                delta = A[q, q].real
                f = g / ag  # unit phase of the pivot
                tau = (delta - alpha) / (2.0 * ag)
                t = 1.0 if tau == 0.0 else -np.sign(tau) / (abs(tau) + math.hypot(1.0, tau))
                c = 1.0 / math.sqrt(1.0 + t * t)
                sn = t * c
                # columns: A <- A U with U = [[c, -s f], [s conj(f), c]]
                col_p = A[:, p].copy()
                col_q = A[:, q].copy()
                A[:, p] = c * col_p + sn * np.conj(f) * col_q
                A[:, q] = -sn * f * col_p + c * col_q
                # rows: A <- U^H A
                row_p = A[p, :].copy()
                row_q = A[q, :].copy()
                A[p, :] = c * row_p + sn * f * row_q
                A[q, :] = -sn * np.conj(f) * row_p + c * row_q
                A[p, q] = 0.0
                A[q, p] = 0.0
                A[p, p] = A[p, p].real
                A[q, q] = A[q, q].real
    return np.sort(np.real(np.diag(A)))
