"""Dense revised simplex with Bland's anti-cycling rule.

Problems are stated as ``min c^T x  s.t.  G x <= g,  E x = e`` with ``x`` free.
Internally ``x = x+ - x-`` and each inequality gets a slack, which gives the
standard form ``A v = rhs, v >= 0`` solved by the two-phase method.
"""

import enum
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from mlsos.errors import NumericalFailure

FEAS_TOL = 1e-8
_PIVOT_TOL = 1e-9
_MAX_ITER = 50_000


class LpStatus(enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"


@dataclass
class LpProblem:
    c: np.ndarray
    G: np.ndarray = None
    g: np.ndarray = None
    E: np.ndarray = None
    e: np.ndarray = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = self.c.size
        self.G = np.zeros((0, n)) if self.G is None else np.asarray(self.G, dtype=float).reshape(-1, n)
        self.g = np.zeros(0) if self.g is None else np.asarray(self.g, dtype=float).ravel()
        self.E = np.zeros((0, n)) if self.E is None else np.asarray(self.E, dtype=float).reshape(-1, n)
        self.e = np.zeros(0) if self.e is None else np.asarray(self.e, dtype=float).ravel()
        if self.G.shape[0] != self.g.size or self.E.shape[0] != self.e.size:
            raise ValueError("constraint matrix and right-hand side lengths differ")
        for arr in (self.c, self.G, self.g, self.E, self.e):
            if not np.all(np.isfinite(arr)):
                raise ValueError("LP data must be finite")

    @property
    def n(self):
        return self.c.size


@dataclass
class LpResult:
    status: LpStatus
    point: np.ndarray = None
    value: float = float("nan")
    active_set: list = field(default_factory=list)

    @property
    def optimal(self):
        return self.status is LpStatus.OPTIMAL


def _factor(B):
    if B.shape[0] == 0:
        return None
    lu, piv = sla.lu_factor(B, check_finite=False)
    scale = max(np.abs(B).max(), 1.0)
    if np.abs(np.diag(lu)).min() < 1e-11 * scale:
        raise NumericalFailure("basis matrix became singular")
    return lu, piv


def _bsolve(fac, v, trans=0):
    if fac is None:
        return np.zeros(0)
    return sla.lu_solve(fac, v, trans=trans, check_finite=False)


def _bland(A, rhs, cost, basis, allowed):
    """Run simplex iterations from a feasible basis.  Returns (status, basis)."""
    m = A.shape[0]
    cscale = 1.0 + (np.abs(cost).max() if cost.size else 0.0)
    rc_tol = 1e-9 * cscale
    is_basic = np.zeros(A.shape[1], dtype=bool)
    is_basic[basis] = True
    for _ in range(_MAX_ITER):
        fac = _factor(A[:, basis])
        xb = _bsolve(fac, rhs)
        y = _bsolve(fac, cost[basis], trans=1)
        reduced = cost - A.T @ y if m else cost.copy()
        enter = -1
        for j in np.flatnonzero(allowed & ~is_basic & (reduced < -rc_tol)):
            enter = int(j)
            break
        if enter < 0:
            return LpStatus.OPTIMAL, basis
        d = _bsolve(fac, A[:, enter])
        rows = np.flatnonzero(d > _PIVOT_TOL)
        if rows.size == 0:
            return LpStatus.UNBOUNDED, basis
        ratios = np.maximum(xb[rows], 0.0) / d[rows]
        best = ratios.min()
        ties = rows[ratios <= best + 1e-12 * (1.0 + best)]
        leave = min(ties, key=lambda r: basis[r])
        is_basic[basis[leave]] = False
        basis[leave] = enter
        is_basic[enter] = True
    raise NumericalFailure("simplex iteration limit reached")


def _standard_form(p):
    n, mg, me = p.n, p.G.shape[0], p.E.shape[0]
    A = np.zeros((mg + me, 2 * n + mg))
    A[:mg, :n] = p.G
    A[:mg, n:2 * n] = -p.G
    A[:mg, 2 * n:] = np.eye(mg)
    A[mg:, :n] = p.E
    A[mg:, n:2 * n] = -p.E
    rhs = np.concatenate([p.g, p.e])
    cost = np.concatenate([p.c, -p.c, np.zeros(mg)])
    return A, rhs, cost


def _phase_one(A, rhs, n_slack_start, mg):
    """Find a feasible basis; returns (basis, A, rhs) with redundant rows dropped, or None."""
    m, N = A.shape
    A = A.copy()
    rhs = rhs.copy()
    neg = rhs < 0
    A[neg] *= -1.0
    rhs[neg] *= -1.0
    # slack columns can start basic on inequality rows with nonnegative rhs
    art_rows = [i for i in range(m) if i >= mg or neg[i]]
    Aext = np.hstack([A, np.zeros((m, len(art_rows)))])
    basis = []
    art_of_row = {}
    for k, i in enumerate(art_rows):
        Aext[i, N + k] = 1.0
        art_of_row[i] = N + k
    for i in range(m):
        basis.append(art_of_row.get(i, n_slack_start + i))
    cost = np.zeros(Aext.shape[1])
    cost[N:] = 1.0
    allowed = np.ones(Aext.shape[1], dtype=bool)
    status, basis = _bland(Aext, rhs, cost, basis, allowed)
    fac = _factor(Aext[:, basis])
    xb = _bsolve(fac, rhs)
    infeas = float(sum(xb[r] for r in range(m) if basis[r] >= N))
    if infeas > FEAS_TOL * (1.0 + (np.abs(rhs).max() if m else 0.0)):
        return None
    # drive zero-valued artificials out of the basis
    keep_rows = list(range(m))
    r = 0
    while r < len(basis):
        if basis[r] < N:
            r += 1
            continue
        fac = _factor(Aext[np.ix_(keep_rows, basis)])
        row_of_inv = _bsolve(fac, np.eye(len(basis))[r], trans=1)
        alpha = row_of_inv @ Aext[keep_rows, :N]
        is_basic = np.zeros(N, dtype=bool)
        is_basic[[b for b in basis if b < N]] = True
        cand = [j for j in np.flatnonzero(np.abs(alpha) > 1e-7) if not is_basic[j]]
        if cand:
            basis[r] = int(cand[0])
            r += 1
        else:
            del keep_rows[r]
            del basis[r]
    return basis, A[keep_rows], rhs[keep_rows]


def solve_lp(p):
    """Minimize ``c^T x`` subject to ``G x <= g`` and ``E x = e``."""
    n, mg = p.n, p.G.shape[0]
    A, rhs, cost = _standard_form(p)
    found = _phase_one(A, rhs, 2 * n, mg)
    if found is None:
        return LpResult(LpStatus.INFEASIBLE)
    basis, A2, rhs2 = found
    allowed = np.ones(A.shape[1], dtype=bool)
    status, basis = _bland(A2, rhs2, cost, list(basis), allowed)
    if status is LpStatus.UNBOUNDED:
        return LpResult(LpStatus.UNBOUNDED)
    v = np.zeros(A.shape[1])
    v[basis] = _bsolve(_factor(A2[:, basis]), rhs2)
    x = v[:n] - v[n:2 * n]
    return _finish(p, _to_vertex(p, x))


def _to_vertex(p, x):
    """Slide an optimal point within its optimal face until n independent rows are tight.

    Splitting free variables can leave a basic solution that is not a vertex of
    ``{G x <= g, E x = e}``.  Directions in the null space of the tight rows keep
    every tight row tight and, at an optimum, leave the objective unchanged.
    A direction unbounded both ways means the set has no vertex; ``x`` is kept.
    """
    n = p.n
    if n == 0:
        return x
    x = x.copy()
    for _ in range(n + 1):
        slack = p.g - p.G @ x
        tight = np.flatnonzero(slack <= 1e-9 * (1.0 + np.abs(p.g)))
        T = np.vstack([p.G[tight], p.E])
        if T.shape[0] and np.linalg.matrix_rank(T, tol=1e-10 * max(1.0, np.abs(T).max())) >= n:
            return x
        if T.shape[0]:
            _, sv, Vt = np.linalg.svd(T)
            r = int(np.count_nonzero(sv > 1e-10 * max(1.0, sv[0])))
            v = Vt[r]
        else:
            v = np.eye(n)[0]
        if abs(p.c @ v) > 1e-9 * (1.0 + np.abs(p.c).max()):
            v = -v if p.c @ v > 0 else v
        step = None
        for direction in (v, -v):
            rate = p.G @ direction
            mask = rate > 1e-12
            if np.any(mask):
                step = (np.min(np.maximum(slack[mask], 0.0) / rate[mask]), direction)
                break
            if abs(p.c @ v) > 1e-9 * (1.0 + np.abs(p.c).max()):
                break
        if step is None:
            return x
        x = x + step[0] * step[1]
    return x


def _finish(p, x):
    slack = p.g - p.G @ x
    tol = 1e-9 * (1.0 + np.abs(p.g))
    active = [int(i) for i in np.flatnonzero(slack <= tol)]
    return LpResult(LpStatus.OPTIMAL, x, float(p.c @ x), active)


def feasible_point(G=None, g=None, E=None, e=None, n=None):
    """Phase-I probe: a feasible point of ``{G x <= g, E x = e}`` or Infeasible."""
    if n is None:
        for M in (G, E):
            if M is not None:
                n = np.asarray(M).shape[1]
                break
    if n is None:
        raise ValueError("cannot infer the number of variables")
    return solve_lp(LpProblem(np.zeros(n), G, g, E, e))
