"""Bimatrix-game equilibria and projective polyhedral containment as bilinear programs."""

import enum
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from mlsos import polytope as pt
from mlsos.errors import (
    DegenerateGameWarning,
    DimensionMismatch,
    KernelConditionFailed,
    NoNontrivialOptimizer,
    NonPositiveEntries,
)
from mlsos.hierarchy import run
from mlsos.lp import feasible_point
from mlsos.mlp import MultilinearForm, MultilinearProgram, local_search, prepare, vertex_oracle

BLOCK_SUM_MIN = 1e-6
BEST_RESPONSE_TOL = 1e-6


# ---------------------------------------------------------------- games

@dataclass
class BimatrixGame:
    A: np.ndarray
    B: np.ndarray
    shift: float = 0.0

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.B = np.atleast_2d(np.asarray(self.B, dtype=float))
        if self.A.shape != self.B.shape:
            raise DimensionMismatch(f"payoff shapes differ: {self.A.shape} vs {self.B.shape}")

    @property
    def shape(self):
        return self.A.shape

    @property
    def original(self):
        return self.A - self.shift, self.B - self.shift


def shift_positive(A, B):
    """Add ``max(0, 1 - min entry)`` to every payoff so all entries are >= 1."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    shift = max(0.0, 1.0 - min(A.min(), B.min()))
    return BimatrixGame(A + shift, B + shift, shift)


def _best_response_polytopes(g):
    m, n = g.shape
    P1 = pt.HPolytope(m, np.vstack([g.B.T, -np.eye(m)]), np.concatenate([np.ones(n), np.zeros(m)]), name="P1")
    P2 = pt.HPolytope(n, np.vstack([g.A, -np.eye(n)]), np.concatenate([np.ones(m), np.zeros(n)]), name="P2")
    return P1, P2


def game_to_mlp(g):
    """``max x^T (A+B) y - 1^T x - 1^T y`` over ``{B^T x <= 1, x >= 0} x {A y <= 1, y >= 0}``."""
    if np.any(g.A <= 0) or np.any(g.B <= 0):
        raise NonPositiveEntries("payoff matrices must be entrywise positive; use shift_positive first")
    m, n = g.shape
    P1, P2 = _best_response_polytopes(g)
    f = MultilinearForm((m, n), {(0, 1): g.A + g.B, (0,): -np.ones(m), (1,): -np.ones(n)})
    return MultilinearProgram([P1, P2], f, "max")


def check_nondegenerate(g):
    """No vertex of either best-response polytope has more tight rows than its dimension."""
    for P in _best_response_polytopes(g):
        P = pt.normalize(P)
        if any(pt.vertices(P).degenerate):
            return False
    return True


@dataclass
class Equilibrium:
    x_hat: np.ndarray
    y_hat: np.ndarray
    payoff1: float
    payoff2: float


def best_response_violation(A, B, x, y):
    """Largest gain from a pure deviation by either player."""
    gain1 = (A @ y).max() - x @ A @ y
    gain2 = (x @ B).max() - x @ B @ y
    return float(max(gain1, gain2))


def _equilibrium_from(g, x, y):
    sx, sy = float(np.sum(x)), float(np.sum(y))
    if sx < BLOCK_SUM_MIN or sy < BLOCK_SUM_MIN:
        return None
    xh = np.clip(np.asarray(x) / sx, 0.0, None)
    yh = np.clip(np.asarray(y) / sy, 0.0, None)
    xh, yh = xh / xh.sum(), yh / yh.sum()
    A0, B0 = g.original
    if best_response_violation(A0, B0, xh, yh) > BEST_RESPONSE_TOL:
        return None
    return Equilibrium(xh, yh, float(xh @ A0 @ yh), float(xh @ B0 @ yh))


@dataclass
class GameResult:
    equilibrium: Equilibrium
    report: object
    nondegenerate: bool
    source: str
    warnings: list = field(default_factory=list)


def solve_game(g, t_max=None, tol=1e-5, sigma0="2t", sdp_opts=None):
    """Equilibrium of a positive game from optimizers of the bilinear program.

    Candidates are tried in order: the hierarchy witness, local search from
    every vertex start, then every optimal tuple of the vertex oracle.
    Optimizers with a zero block sum (the origin always attains the maximum 0)
    cannot be normalized and are skipped.
    """
    if g.shift == 0.0 and (np.any(g.A <= 0) or np.any(g.B <= 0)):
        g = shift_positive(g.A, g.B)
    nondeg = check_nondegenerate(g)
    notes = []
    if not nondeg:
        msg = "game is degenerate; finite convergence of the hierarchy is not guaranteed"
        warnings.warn(msg, DegenerateGameWarning, stacklevel=2)
        notes.append("DegenerateGameWarning: " + msg)
    p = prepare(game_to_mlp(g))
    report = run(p, t_max=t_max, tol=tol, sigma0=sigma0, sdp_opts=sdp_opts)
    band = 1e-6

    def optimal(x):
        return p.objective.eval(x) >= -band

    tried = [("hierarchy", report.witness)]
    for v in p.vertex_sets()[0].vertices:
        _, x = local_search(p, start=[v, p.blocks[1].interior_point])
        tried.append(("local_search", x))
    for source, x in tried:
        if x is not None and optimal(x):
            eq = _equilibrium_from(g, x[0], x[1])
            if eq is not None:
                return GameResult(eq, report, nondeg, source, notes)
    oracle = vertex_oracle(p)
    for k in range(len(oracle.optimal_tuples)):
        x = oracle.point(k)
        eq = _equilibrium_from(g, x[0], x[1])
        if eq is not None:
            return GameResult(eq, report, nondeg, "vertex_oracle", notes)
    raise NoNontrivialOptimizer("every located optimizer has a zero block sum")


# ---------------------------------------------------------- containment

@dataclass
class ContainmentInstance:
    """``P = {x : A x <= a}`` against ``Q = {(x, y') : B x + B' y' <= b}``; decide ``P`` in ``pi(Q)``."""

    A: np.ndarray
    a: np.ndarray
    B: np.ndarray
    b: np.ndarray
    Bprime: np.ndarray = None

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=float).ravel()
        self.b = np.asarray(self.b, dtype=float).ravel()
        self.A = np.asarray(self.A, dtype=float).reshape(self.a.size, -1)
        self.B = np.asarray(self.B, dtype=float).reshape(self.b.size, -1)
        if self.A.shape[1] != self.B.shape[1]:
            raise DimensionMismatch("P and Q live in different dimensions")
        if self.Bprime is None or np.size(self.Bprime) == 0:
            self.Bprime = np.zeros((self.b.size, 0))
        self.Bprime = np.asarray(self.Bprime, dtype=float).reshape(self.b.size, -1)

    @property
    def d(self):
        return self.A.shape[1]


class Decision(enum.Enum):
    CONTAINED = "Contained"
    NOT_CONTAINED = "NotContained"
    INCONCLUSIVE = "Inconclusive"


@dataclass
class ContainmentVerdict:
    decision: Decision
    certified_lower: float
    best_value: float
    witness: tuple
    tight: bool
    report: object = None


KERNEL_EXPLANATION = (
    "ker(B'^T) meets the nonnegative orthant only at 0: the simplex in the bilinear "
    "reformulation would have to be replaced by the nonnegative orthant, which makes "
    "the feasible set unbounded and outside the reach of the hierarchy"
)


def _z_block(c):
    l = c.b.size
    E = np.vstack([np.ones((1, l)), c.Bprime.T])
    e = np.concatenate([[1.0], np.zeros(c.Bprime.shape[1])])
    return pt.HPolytope(l, -np.eye(l), np.zeros(l), E, e, name="Z")


def containment_to_mlp(c):
    """``max z^T B x - b^T z`` over ``P x Z``; the maximum is ``-min z^T (b - B x)``."""
    l = c.b.size
    probe = feasible_point(-np.eye(l), np.zeros(l),
                           np.vstack([np.ones((1, l)), c.Bprime.T]),
                           np.concatenate([[1.0], np.zeros(c.Bprime.shape[1])]))
    if not probe.optimal:
        raise KernelConditionFailed(KERNEL_EXPLANATION)
    P = pt.HPolytope(c.d, c.A, c.a, name="P")
    f = MultilinearForm((c.d, l), {(0, 1): c.B.T.copy(), (1,): -c.b})
    return MultilinearProgram([P, _z_block(c)], f, "max")


def decide_containment(c, tol=1e-6, t_max=None, sigma0="2t", sdp_opts=None):
    p = prepare(containment_to_mlp(c))
    # max-sense bounds: upper <= tol settles Contained, lower > tol settles NotContained
    report = run(p, t_max=t_max, tol=min(tol, 1e-5), sigma0=sigma0, sdp_opts=sdp_opts,
                 stop=lambda upper, lower: upper <= tol or lower > tol)
    certified_lower = -report.upper
    best_value = -report.lower
    witness = tuple(report.witness) if report.witness is not None else None
    if best_value < -tol:
        decision = Decision.NOT_CONTAINED
    elif certified_lower >= -tol:
        decision = Decision.CONTAINED
    else:
        decision = Decision.INCONCLUSIVE
    tight = math.isfinite(certified_lower) and abs(certified_lower) <= tol
    return ContainmentVerdict(decision, certified_lower, best_value, witness, tight, report)


def contained_by_vertices(c):
    """Direct check for ``B'`` empty: every vertex of P satisfies ``B x <= b``."""
    if c.Bprime.shape[1]:
        raise ValueError("vertex check needs an H-polytope Q without auxiliary columns")
    P = pt.normalize(pt.HPolytope(c.d, c.A, c.a))
    V = pt.vertices(P).vertices
    return bool(np.all(V @ c.B.T <= c.b + 1e-9))
