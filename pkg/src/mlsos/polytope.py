"""H-polytope blocks ``P = {x | a >= A x, b = B x}``.

Preparation follows the two representation requirements used throughout:
independent equality rows with a positive-dimensional affine hull, and a
relative interior that is nonempty within that hull.
"""

import itertools
import math
from dataclasses import dataclass, field, replace

import numpy as np

from mlsos import linalg
from mlsos.errors import (
    DegenerateBlock,
    EmptyRelativeInterior,
    InconsistentEqualities,
    SingularMatrix,
    TooManyCombinations,
)
from mlsos.lp import LpProblem, LpStatus, solve_lp

VERTEX_TOL = 1e-8
DEDUP_TOL = 1e-9
INTERIOR_TOL = 1e-9
DEFAULT_COMBINATION_CAP = 10**6


def _as_matrix(M, cols):
    if M is None:
        return np.zeros((0, cols))
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return np.zeros((0, cols))
    return M.reshape(-1, cols)


def _as_vector(v):
    if v is None:
        return np.zeros(0)
    return np.asarray(v, dtype=float).ravel()


@dataclass
class HPolytope:
    dim: int
    A: np.ndarray
    a: np.ndarray
    B: np.ndarray = None
    b: np.ndarray = None
    normalized: bool = False
    interior_point: np.ndarray = None
    name: str = ""

    def __post_init__(self):
        self.A = _as_matrix(self.A, self.dim)
        self.a = _as_vector(self.a)
        self.B = _as_matrix(self.B, self.dim)
        self.b = _as_vector(self.b)
        if self.A.shape[0] != self.a.size:
            raise ValueError(f"block {self.name!r}: A has {self.A.shape[0]} rows but a has {self.a.size}")
        if self.B.shape[0] != self.b.size:
            raise ValueError(f"block {self.name!r}: B has {self.B.shape[0]} rows but b has {self.b.size}")

    @property
    def m(self):
        return self.A.shape[0]

    @property
    def n_eq(self):
        return self.B.shape[0]

    @property
    def affine_dim(self):
        return self.dim - self.n_eq

    @classmethod
    def box(cls, lower, upper, name=""):
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        d = lower.size
        A = np.vstack([np.eye(d), -np.eye(d)])
        a = np.concatenate([upper, -lower])
        return cls(d, A, a, name=name)

    @classmethod
    def simplex(cls, d, name=""):
        """Probability simplex ``{z >= 0, 1^T z = 1}``."""
        return cls(d, -np.eye(d), np.zeros(d), np.ones((1, d)), np.ones(1), name=name)

    def with_rows(self, A, a):
        """Copy with extra inequality rows appended (loses the normalized flag)."""
        return replace(
            self,
            A=np.vstack([self.A, _as_matrix(A, self.dim)]),
            a=np.concatenate([self.a, _as_vector(a)]),
            normalized=False,
            interior_point=None,
        )


def normalize(P):
    """Drop dependent equality rows and verify the block is full-dimensional in its hull."""
    B, b = P.B, P.b
    if B.shape[0]:
        keep = linalg.independent_rows(B)
        Bk, bk = B[keep], b[keep]
        # consistency of dropped rows: each must be implied by the kept ones
        coef, *_ = np.linalg.lstsq(Bk.T, B.T, rcond=None)
        resid = coef.T @ bk - b
        if np.abs(resid).max() > 1e-9 * (1.0 + np.abs(b).max()):
            bad = int(np.argmax(np.abs(resid)))
            raise InconsistentEqualities(
                f"block {P.name!r}: equality row {bad} contradicts the others "
                "(equality constraints must be consistent and linearly independent)"
            )
        B, b = Bk, bk
    if P.dim - B.shape[0] <= 0:
        raise DegenerateBlock(
            f"block {P.name!r}: affine hull has dimension {P.dim - B.shape[0]}; need d - n > 0"
        )
    # max s  s.t.  A x + s 1 <= a,  B x = b,  s <= 1
    d, m = P.dim, P.A.shape[0]
    c = np.zeros(d + 1)
    c[-1] = -1.0
    G = np.hstack([P.A, np.ones((m, 1))])
    G = np.vstack([G, np.eye(d + 1)[-1:]])
    g = np.concatenate([P.a, [1.0]])
    E = np.hstack([B, np.zeros((B.shape[0], 1))])
    res = solve_lp(LpProblem(c, G, g, E, b))
    if not res.optimal or -res.value <= INTERIOR_TOL:
        raise EmptyRelativeInterior(
            f"block {P.name!r}: inequalities are not full-dimensional inside the affine hull "
            "(max-min slack <= 1e-9)"
        )
    return replace(P, B=B, b=b, normalized=True, interior_point=res.point[:d])


def is_bounded(P):
    """True iff the recession cone ``{A x <= 0, B x = 0}`` is trivial."""
    d = P.dim
    G = np.vstack([P.A, np.eye(d), -np.eye(d)])
    g = np.concatenate([np.zeros(P.m), np.ones(2 * d)])
    for k in range(d):
        for sgn in (1.0, -1.0):
            c = np.zeros(d)
            c[k] = -sgn
            res = solve_lp(LpProblem(c, G, g, P.B, np.zeros(P.n_eq)))
            if -res.value > 1e-9:
                return False
    return True


def redundant_rows(P):
    """Indices of inequality rows that can be dropped without changing the set."""
    keep = list(range(P.m))
    dropped = []
    for k in range(P.m):
        others = [j for j in keep if j != k]
        res = solve_lp(LpProblem(-P.A[k], P.A[others], P.a[others], P.B, P.b))
        if res.status is LpStatus.OPTIMAL and -res.value <= P.a[k] + 1e-9 * (1.0 + abs(P.a[k])):
            keep.remove(k)
            dropped.append(k)
    return dropped


def remove_redundant(P):
    dropped = set(redundant_rows(P))
    rows = [k for k in range(P.m) if k not in dropped]
    return replace(P, A=P.A[rows], a=P.a[rows])


@dataclass
class VertexSet:
    vertices: np.ndarray
    active_sets: list = field(default_factory=list)
    degenerate: list = field(default_factory=list)

    def __len__(self):
        return len(self.vertices)


def _dedup(points):
    """Sort lexicographically and merge points equal within the relative tolerance."""
    order = sorted(range(len(points)), key=lambda i: tuple(points[i]))
    out = []
    for i in order:
        p = points[i]
        if any(np.abs(p - q).max() <= DEDUP_TOL * (1.0 + max(np.abs(p).max(), np.abs(q).max()))
               for q in out):
            continue
        out.append(p)
    return out


def vertices(P, cap=DEFAULT_COMBINATION_CAP):
    """Enumerate vertices by solving every square active system ``[A_S; B] x = [a_S; b]``."""
    k = P.affine_dim
    if math.comb(P.m, k) > cap:
        raise TooManyCombinations(f"C({P.m}, {k}) exceeds the cap of {cap}")
    found = []
    scale = 1.0 + (np.abs(P.a).max() if P.m else 0.0)
    for S in itertools.combinations(range(P.m), k):
        S = list(S)
        M = np.vstack([P.A[S], P.B])
        rhs = np.concatenate([P.a[S], P.b])
        try:
            x = linalg.solve_linear(M, rhs)
        except SingularMatrix:
            continue
        if contains_point(P, x, VERTEX_TOL * scale):
            found.append(x)
    verts = _dedup(found)
    active, degenerate = [], []
    for v in verts:
        slack = P.a - P.A @ v
        act = [int(i) for i in np.flatnonzero(np.abs(slack) <= 1e-9 * (1.0 + np.abs(P.a)))]
        active.append(act)
        degenerate.append(len(act) > k)
    arr = np.array(verts) if verts else np.zeros((0, P.dim))
    return VertexSet(arr, active, degenerate)


def contains_point(P, x, tol=1e-8):
    x = np.asarray(x, dtype=float)
    if x.size != P.dim:
        raise ValueError(f"point has length {x.size}, block dimension is {P.dim}")
    if P.m and (P.a - P.A @ x).min() < -tol:
        return False
    if P.n_eq and np.abs(P.b - P.B @ x).max() > tol:
        return False
    return True


def project_l1(P, x):
    """Closest point of P to ``x`` in the l1 norm (an LP)."""
    x = np.asarray(x, dtype=float)
    d = P.dim
    # variables (p, t):  min 1^T t,  -t <= p - x <= t
    c = np.concatenate([np.zeros(d), np.ones(d)])
    I = np.eye(d)
    G = np.vstack([
        np.hstack([P.A, np.zeros((P.m, d))]),
        np.hstack([I, -I]),
        np.hstack([-I, -I]),
    ])
    g = np.concatenate([P.a, x, -x])
    E = np.hstack([P.B, np.zeros((P.n_eq, d))])
    res = solve_lp(LpProblem(c, G, g, E, P.b))
    if not res.optimal:
        raise EmptyRelativeInterior(f"block {P.name!r} is empty")
    return res.point[:d]


def maximize_linear(P, c):
    """Maximize ``c^T x`` over P; returns the LpResult with the value un-negated."""
    res = solve_lp(LpProblem(-np.asarray(c, dtype=float), P.A, P.a, P.B, P.b))
    if res.optimal:
        res.value = -res.value
    return res
