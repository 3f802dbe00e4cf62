"""Primal-dual interior-point solver for block-diagonal SDPs with free variables.

Primal::

    min  sum_k <C_k, X_k> + c_free^T u
    s.t. sum_k <A_ik, X_k> + F_i u = b_i      (i = 1..m)
         X_k PSD,  u free

Dual::

    max  b^T y   s.t.  Z_k = C_k - sum_i y_i A_ik  PSD,   F^T y = c_free

Each ``A_k`` is stored as a sparse ``m x s_k^2`` matrix whose row ``i`` is the
row-major vectorization of the symmetric matrix ``A_ik``.  The search
direction is HKM with a Mehrotra predictor-corrector.  Free variables are
solved out of pivot rows before the iteration starts.
"""

import enum
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from mlsos import linalg
from mlsos.errors import DimensionMismatch, SingularMatrix

log = logging.getLogger(__name__)

_KRON_CHUNK = 4_000_000


class SdpStatus(enum.Enum):
    OPTIMAL = "Optimal"
    PRIMAL_INFEASIBLE = "PrimalInfeasible"
    DUAL_INFEASIBLE = "DualInfeasible"
    STALLED = "Stalled"


@dataclass
class SdpProblem:
    block_sizes: list
    A: list
    F: np.ndarray
    b: np.ndarray
    C: list = None
    c_free: np.ndarray = None

    def __post_init__(self):
        self.block_sizes = [int(s) for s in self.block_sizes]
        self.b = np.asarray(self.b, dtype=float).ravel()
        m = self.b.size
        self.A = [sp.csr_matrix(Ak) for Ak in self.A]
        self.F = np.zeros((m, 0)) if self.F is None else np.asarray(self.F, dtype=float).reshape(m, -1)
        if self.C is None:
            self.C = [np.zeros((s, s)) for s in self.block_sizes]
        self.C = [np.asarray(Ck, dtype=float) for Ck in self.C]
        self.c_free = (np.zeros(self.F.shape[1]) if self.c_free is None
                       else np.asarray(self.c_free, dtype=float).ravel())
        if len(self.A) != len(self.block_sizes) or len(self.C) != len(self.block_sizes):
            raise DimensionMismatch("one constraint matrix and one cost matrix per block required")
        for s, Ak, Ck in zip(self.block_sizes, self.A, self.C):
            if Ak.shape != (m, s * s) or Ck.shape != (s, s):
                raise DimensionMismatch("block data has inconsistent dimensions")
            if Ck.size and np.abs(Ck - Ck.T).max() > 1e-12 * (1 + np.abs(Ck).max()):
                raise DimensionMismatch("cost matrix is not symmetric")
        if self.c_free.size != self.F.shape[1]:
            raise DimensionMismatch("free-variable cost length differs from F columns")

    @property
    def m(self):
        return self.b.size

    @property
    def n_free(self):
        return self.F.shape[1]

    @classmethod
    def from_entries(cls, block_sizes, m, entries, n_free=0, free_entries=(), b=None, C=None, c_free=None):
        """Build from triplets.

        ``entries`` holds ``(constraint, block, row, col, value)`` for the upper
        triangle (``row <= col``); off-diagonal values are mirrored.
        ``free_entries`` holds ``(constraint, free_index, value)``.
        """
        rows = [[] for _ in block_sizes]
        cols = [[] for _ in block_sizes]
        vals = [[] for _ in block_sizes]
        for con, k, r, c, v in entries:
            s = block_sizes[k]
            rows[k].append(con); cols[k].append(r * s + c); vals[k].append(v)
            if r != c:
                rows[k].append(con); cols[k].append(c * s + r); vals[k].append(v)
        A = [sp.csr_matrix((vals[k], (rows[k], cols[k])), shape=(m, s * s))
             for k, s in enumerate(block_sizes)]
        F = np.zeros((m, n_free))
        for con, j, v in free_entries:
            F[con, j] += v
        return cls(list(block_sizes), A, F, np.zeros(m) if b is None else b, C, c_free)

    def apply(self, X, u=None):
        """``A(X) + F u``."""
        out = np.zeros(self.m)
        for Ak, Xk in zip(self.A, X):
            out += Ak @ Xk.ravel()
        if u is not None and self.n_free:
            out += self.F @ u
        return out

    def adjoint(self, y):
        return [(Ak.T @ y).reshape(s, s) for Ak, s in zip(self.A, self.block_sizes)]

    def dump(self, fh):
        """Write the sparse text format: one ``constraint block row col value`` line per nonzero.

        Constraint 0 is the objective, constraints are 1-based, PSD blocks are
        1-based, block ``0`` addresses the free variables (``row`` is the free
        index, ``col`` is 0), and ``rhs`` lines carry ``b``.  Only the upper
        triangle of each symmetric matrix is written.
        """
        fh.write(f"# blocks {' '.join(map(str, self.block_sizes))} free {self.n_free} constraints {self.m}\n")
        for k, (s, Ck) in enumerate(zip(self.block_sizes, self.C)):
            for r, c in zip(*np.nonzero(np.triu(Ck))):
                fh.write(f"0 {k + 1} {r + 1} {c + 1} {float(Ck[r, c])!r}\n")
        for j in np.flatnonzero(self.c_free):
            fh.write(f"0 0 {j + 1} 0 {float(self.c_free[j])!r}\n")
        for k, (s, Ak) in enumerate(zip(self.block_sizes, self.A)):
            coo = Ak.tocoo()
            for i, idx, v in zip(coo.row, coo.col, coo.data):
                r, c = divmod(int(idx), s)
                if r <= c and v != 0.0:
                    fh.write(f"{i + 1} {k + 1} {r + 1} {c + 1} {float(v)!r}\n")
        for i, j in zip(*np.nonzero(self.F)):
            fh.write(f"{i + 1} 0 {j + 1} 0 {float(self.F[i, j])!r}\n")
        for i in np.flatnonzero(self.b):
            fh.write(f"rhs {i + 1} {float(self.b[i])!r}\n")


@dataclass
class SdpSolution:
    status: SdpStatus
    psd_values: list
    free_values: np.ndarray
    dual_values: np.ndarray
    dual_slacks: list
    primal_obj: float
    dual_obj: float
    iterations: int
    primal_infeasibility: float = float("nan")
    dual_infeasibility: float = float("nan")
    relative_gap: float = float("nan")
    history: list = field(default_factory=list, repr=False)

    @property
    def optimal(self):
        return self.status is SdpStatus.OPTIMAL


@dataclass
class SdpOptions:
    max_iter: int = 200
    gap_tol: float = 1e-9
    feas_tol: float = 1e-10
    step_fraction: float = 0.98
    # accepted as Optimal when the tight targets cannot be reached
    loose_gap_tol: float = 1e-6
    loose_feas_tol: float = 1e-7
    infeasibility_threshold: float = 1e8


def check_psd(M, tol=1e-8):
    """Return ``(is_psd, lambda_min)``."""
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return True, 0.0
    lam = float(linalg.sym_eigen(M).eigenvalues[0])
    return lam >= -tol, lam


def _max_step(X_chol, dX):
    """Largest alpha with ``X + alpha dX`` PSD, given the Cholesky factor of X."""
    W = sla.solve_triangular(X_chol, dX, lower=True, check_finite=False)
    W = sla.solve_triangular(X_chol, W.T, lower=True, check_finite=False)
    lam = np.linalg.eigvalsh(0.5 * (W + W.T))[0]
    return math.inf if lam >= 0 else -1.0 / lam


def _schur_block(Ak, X, Zinv, M):
    """Accumulate ``M_ij += tr(A_i X A_j Zinv)`` for one block."""
    s = X.shape[0]
    # M = A kron(Zinv, X) A^T, assembled a few column groups of the Kronecker product at a time
    group = max(1, min(s, _KRON_CHUNK // max(1, s * s * s)))
    AkT = Ak.T.tocsr()
    for start in range(0, s, group):
        stop = min(s, start + group)
        K = np.kron(Zinv[:, start:stop], X)
        R = Ak @ K
        M += np.asarray(R @ AkT[start * s:stop * s])


def _free_basis(F, c_free):
    """Independent columns of F; dropped columns are fixed at zero."""
    if F.shape[1] == 0:
        return np.arange(0), True
    _, R, piv = sla.qr(F, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    r = int(np.count_nonzero(diag > 1e-10 * max(diag[0], 1e-300))) if diag.size else 0
    keep = np.sort(piv[:r])
    drop = np.setdiff1d(np.arange(F.shape[1]), keep)
    consistent = True
    if drop.size:
        W, *_ = np.linalg.lstsq(F[:, keep], F[:, drop], rcond=None)
        consistent = np.allclose(W.T @ c_free[keep], c_free[drop], atol=1e-9)
    return keep, consistent


REFINE_ROUNDS = 2


@dataclass
class _Reduced:
    """Pure SDP left after solving the free variables out of ``k`` pivot rows.

    With pivot rows ``R`` (``F_R`` invertible) and the rest ``N``::

        u   = F_R^{-1} (b_R - A_R(X))
        A'  = A_N - G A_R,   b' = b_N - G b_R,      G = F_N F_R^{-1}
        C'  = C - A_R^T w,   const = w^T b_R,       w = F_R^{-T} c_free
        y_R = w - G^T y_N
    """

    A: list
    b: np.ndarray
    C: list
    const: float
    rows_R: np.ndarray
    rows_N: np.ndarray
    keep: np.ndarray
    FR: np.ndarray
    G: np.ndarray
    w: np.ndarray


def _reduce(prob, keep):
    F = prob.F[:, keep]
    m, k = F.shape
    if k == 0:
        return _Reduced(prob.A, prob.b, prob.C, 0.0, np.arange(0), np.arange(m), keep,
                        np.zeros((0, 0)), np.zeros((m, 0)), np.zeros(0))
    _, _, piv = sla.qr(F.T, mode="economic", pivoting=True)
    R = np.sort(piv[:k])
    N = np.setdiff1d(np.arange(m), R)
    FR = F[R]
    G = sla.solve(FR.T, F[N].T, check_finite=False).T
    if G.size:
        G[np.abs(G) < 1e-15 * max(1.0, np.abs(G).max())] = 0.0
    Gs = sp.csr_matrix(G)
    w = sla.solve(FR.T, prob.c_free[keep], check_finite=False)
    A, C = [], []
    for Ak, Ck, s in zip(prob.A, prob.C, prob.block_sizes):
        AR = Ak[R]
        A.append(sp.csr_matrix(Ak[N] - Gs @ AR))
        W = np.asarray(AR.T @ w).reshape(s, s)
        C.append(Ck - 0.5 * (W + W.T))
    b = prob.b[N] - G @ prob.b[R]
    return _Reduced(A, b, C, float(w @ prob.b[R]), R, N, keep, FR, G, w)


def solve_sdp(prob, opts=None):
    """Solve ``prob``; free variables are eliminated first, so the IPM sees a pure SDP."""
    opts = opts or SdpOptions()
    keep, consistent = _free_basis(prob.F, prob.c_free)
    if not consistent:
        sizes = prob.block_sizes
        return SdpSolution(SdpStatus.DUAL_INFEASIBLE, [np.eye(s) for s in sizes], np.zeros(prob.n_free),
                           np.zeros(prob.m), [np.eye(s) for s in sizes], -math.inf, -math.inf, 0,
                           math.nan, math.nan, math.nan, [])
    red = _reduce(prob, keep)
    status, X, yN, Z, it, hist = _ipm(red.A, red.b, red.C, prob.block_sizes, opts, red.const)
    y = np.zeros(prob.m)
    y[red.rows_N] = yN
    u = np.zeros(prob.n_free)
    if keep.size:
        y[red.rows_R] = red.w - red.G.T @ yN
        AX_R = np.zeros(keep.size)
        for Ak, Xk in zip(prob.A, X):
            AX_R += Ak[red.rows_R] @ Xk.ravel()
        u[keep] = sla.solve(red.FR, prob.b[red.rows_R] - AX_R, check_finite=False)
    pobj = sum(float(np.vdot(Ck, Xk)) for Ck, Xk in zip(prob.C, X)) + float(prob.c_free @ u)
    dobj = float(prob.b @ y)
    rp = prob.b - prob.apply(X, u)
    bnorm = 1.0 + (np.abs(prob.b).max() if prob.m else 0.0)
    pinf = (np.abs(rp).max() if prob.m else 0.0) / bnorm
    _, _, _, dinf, _ = hist[-1] if hist else (0, 0, 0, math.nan, 0)
    gap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
    return SdpSolution(status, X, u, y, Z, pobj, dobj, it, pinf, dinf, gap, hist)


def _ipm(A, b, C, sizes, opts, const=0.0):
    """HKM predictor-corrector on ``min <C, X> s.t. A(X) = b, X PSD``.

    Returns ``(status, X, y, Z, iterations, history)``; objective values in the
    history include ``const``.
    """
    nblk = len(sizes)
    m = b.size
    N = sum(sizes)
    bnorm = 1.0 + (np.abs(b).max() if m else 0.0)
    cnorm = 1.0 + max([np.abs(Ck).max() if Ck.size else 0.0 for Ck in C] + [0.0])
    X = [bnorm * np.eye(s) for s in sizes]
    Z = [cnorm * np.eye(s) for s in sizes]
    y = np.zeros(m)

    def A_apply(V):
        out = np.zeros(m)
        for Ak, Vk in zip(A, V):
            out += Ak @ Vk.ravel()
        return out

    def A_adj(v):
        return [(Ak.T @ v).reshape(s, s) for Ak, s in zip(A, sizes)]

    history = []
    best = (math.inf, 0, None, None, None)
    small_steps = 0
    for it in range(opts.max_iter + 1):
        rp = b - A_apply(X)
        ATy = A_adj(y)
        Rd = [C[k] - ATy[k] - Z[k] for k in range(nblk)]
        pobj = sum(float(np.vdot(C[k], X[k])) for k in range(nblk)) + const
        dobj = float(b @ y) + const
        mu = sum(float(np.vdot(X[k], Z[k])) for k in range(nblk)) / max(N, 1)
        pinf = (np.abs(rp).max() if m else 0.0) / bnorm
        dinf = max([np.abs(r).max() if r.size else 0.0 for r in Rd] + [0.0]) / cnorm
        gap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
        history.append((pobj, dobj, pinf, dinf, mu))
        log.debug("it %3d pobj %.10e dobj %.10e pinf %.2e dinf %.2e gap %.2e", it, pobj, dobj, pinf, dinf, gap)

        merit = max(gap, pinf, dinf)
        if merit < best[0]:
            best = (merit, it, [x.copy() for x in X], y.copy(), [z.copy() for z in Z])
        if gap <= opts.gap_tol and pinf <= opts.feas_tol and dinf <= opts.feas_tol:
            return SdpStatus.OPTIMAL, X, y, Z, it, history
        if dinf <= opts.loose_feas_tol and dobj > opts.infeasibility_threshold * bnorm * cnorm:
            return SdpStatus.PRIMAL_INFEASIBLE, X, y, Z, it, history
        if pinf <= opts.loose_feas_tol and pobj < -opts.infeasibility_threshold * bnorm * cnorm:
            return SdpStatus.DUAL_INFEASIBLE, X, y, Z, it, history
        if it == opts.max_iter or small_steps >= 5:
            break

        try:
            Lx = [np.linalg.cholesky(Xk) for Xk in X]
            Lz = [np.linalg.cholesky(Zk) for Zk in Z]
        except np.linalg.LinAlgError:
            log.debug("iterate left the PSD cone")
            break
        Zinv = [sla.cho_solve((Lk, True), np.eye(s), check_finite=False) for Lk, s in zip(Lz, sizes)]
        Zinv = [0.5 * (Zi + Zi.T) for Zi in Zinv]
        M = np.zeros((m, m))
        for k in range(nblk):
            _schur_block(A[k], X[k], Zinv[k], M)
        M = 0.5 * (M + M.T)
        try:
            LM, _ = linalg.cholesky_shifted(M)
        except SingularMatrix:
            log.debug("Schur complement not positive definite")
            break
        XRdZ = [X[k] @ Rd[k] @ Zinv[k] for k in range(nblk)]

        def direction(sigma_mu, corr):
            R = [sigma_mu * Zinv[k] - X[k] - XRdZ[k] - (corr[k] if corr else 0.0) for k in range(nblk)]
            h = rp - A_apply(R)

            def primal_part(dy):
                ATdy = A_adj(dy)
                dX = []
                for k in range(nblk):
                    T = R[k] + X[k] @ ATdy[k] @ Zinv[k]
                    dX.append(0.5 * (T + T.T))
                return ATdy, dX

            dy = sla.cho_solve((LM, True), h, check_finite=False)
            ATdy, dX = primal_part(dy)
            # refine against the operator itself; the assembled M carries rounding error
            for _ in range(REFINE_ROUNDS):
                ry = rp - A_apply(dX)
                if (np.abs(ry).max() if m else 0.0) <= 1e-14 * bnorm:
                    break
                dy = dy + sla.cho_solve((LM, True), ry, check_finite=False)
                ATdy, dX = primal_part(dy)
            dZ = [Rd[k] - ATdy[k] for k in range(nblk)]
            return dX, dy, dZ

        def steps(dX, dZ):
            ap = min([_max_step(Lx[k], dX[k]) for k in range(nblk)] + [math.inf])
            ad = min([_max_step(Lz[k], dZ[k]) for k in range(nblk)] + [math.inf])
            return min(1.0, opts.step_fraction * ap), min(1.0, opts.step_fraction * ad)

        try:
            dXa, dya, dZa = direction(0.0, None)
            apa, ada = steps(dXa, dZa)
            mu_aff = sum(float(np.vdot(X[k] + apa * dXa[k], Z[k] + ada * dZa[k])) for k in range(nblk)) / N
            sigma = min(1.0, max(0.0, mu_aff / mu)) ** 3 if mu > 0 else 0.0
            corr = [dXa[k] @ dZa[k] @ Zinv[k] for k in range(nblk)]
            dX, dy, dZ = direction(sigma * mu, corr)
            ap, ad = steps(dX, dZ)
        except (SingularMatrix, np.linalg.LinAlgError):
            log.debug("direction computation failed")
            break
        X = [X[k] + ap * dX[k] for k in range(nblk)]
        X = [0.5 * (Xk + Xk.T) for Xk in X]
        y = y + ad * dy
        Z = [Z[k] + ad * dZ[k] for k in range(nblk)]
        Z = [0.5 * (Zk + Zk.T) for Zk in Z]
        small_steps = small_steps + 1 if max(ap, ad) < 1e-8 else 0

    # could not reach the tight targets: fall back to the best iterate seen
    _, it, X, y, Z = best
    pobj, dobj, pinf, dinf, _ = history[it]
    gap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
    status = SdpStatus.STALLED
    if gap <= opts.loose_gap_tol and pinf <= opts.loose_feas_tol and dinf <= opts.loose_feas_tol:
        status = SdpStatus.OPTIMAL
    return status, X, y, Z, len(history) - 1, history
