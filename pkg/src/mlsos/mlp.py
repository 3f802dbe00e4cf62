"""Disjointly constrained multilinear programs over products of H-polytopes."""

import itertools
import string
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from mlsos import polytope as pt
from mlsos.errors import CapExceeded, DimensionMismatch, UnboundedBlock
from mlsos.poly import Poly

ORACLE_CAP = 10**7
LOCAL_SEARCH_MAX_SWEEPS = 1000


def optimality_band(value):
    return 1e-9 * (1.0 + abs(value))


@dataclass
class MultilinearForm:
    """``f(x_1..x_l) = sum_L Q^(L)(x_i : i in L)`` with dense coefficient tensors.

    ``tensors`` maps a sorted tuple of 0-based block indices to an array whose
    axes follow that tuple.
    """

    block_dims: tuple
    tensors: dict = field(default_factory=dict)
    constant: float = 0.0

    def __post_init__(self):
        self.block_dims = tuple(int(d) for d in self.block_dims)
        clean = {}
        for L, Q in self.tensors.items():
            L = tuple(sorted(int(i) for i in L))
            if not L or len(set(L)) != len(L) or L[-1] >= self.l or L[0] < 0:
                raise DimensionMismatch(f"invalid block subset {L}")
            Q = np.asarray(Q, dtype=float)
            expected = tuple(self.block_dims[i] for i in L)
            if Q.shape != expected:
                raise DimensionMismatch(f"tensor for subset {L} has shape {Q.shape}, expected {expected}")
            clean[L] = clean[L] + Q if L in clean else Q.copy()
        self.tensors = clean
        full = tuple(range(self.l))
        if full not in self.tensors or not np.any(self.tensors[full]):
            warnings.warn("the full multilinear tensor Q^([l]) is zero; proceeding anyway", stacklevel=2)

    @property
    def l(self):
        return len(self.block_dims)

    def __neg__(self):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return MultilinearForm(self.block_dims, {L: -Q for L, Q in self.tensors.items()}, -self.constant)

    def _check(self, x):
        if len(x) != self.l or any(np.size(xi) != d for xi, d in zip(x, self.block_dims)):
            raise DimensionMismatch("block lengths do not match the form")

    def eval(self, x):
        self._check(x)
        total = self.constant
        for L, Q in self.tensors.items():
            T = Q
            for i in L:
                T = np.tensordot(T, np.asarray(x[i], dtype=float), axes=([0], [0]))
            total += float(T)
        return total

    def grad_block(self, x, i):
        """Coefficient vector of block ``i``: ``sum_{L contains i} Q^(L)(x_j : j in L minus i)``."""
        self._check(x)
        g = np.zeros(self.block_dims[i])
        for L, Q in self.tensors.items():
            if i not in L:
                continue
            letters = string.ascii_letters[: len(L)]
            operands = [Q]
            subs = [letters]
            for pos, j in enumerate(L):
                if j != i:
                    operands.append(np.asarray(x[j], dtype=float))
                    subs.append(letters[pos])
            out = letters[L.index(i)]
            g += np.einsum(",".join(subs) + "->" + out, *operands)
        return g

    def to_poly(self):
        offsets = np.concatenate([[0], np.cumsum(self.block_dims)])
        n = int(offsets[-1])
        terms = {(0,) * n: self.constant}
        for L, Q in self.tensors.items():
            for idx in zip(*np.nonzero(Q)):
                e = [0] * n
                for i, j in zip(L, idx):
                    e[offsets[i] + j] = 1
                m = tuple(e)
                terms[m] = terms.get(m, 0.0) + float(Q[idx])
        return Poly(n, terms)

    def substitute(self, shifts, maps):
        """The form in new block variables ``w_i`` where ``x_i = shifts[i] + maps[i] @ w_i``."""
        dims = tuple(M.shape[1] for M in maps)
        tensors = {}
        constant = self.constant
        for L, Q in self.tensors.items():
            for mask in itertools.product((False, True), repeat=len(L)):
                T = Q
                for i, keep in zip(L, mask):
                    # contracting axis 0 each time and appending new axes keeps L's order
                    mat = maps[i] if keep else shifts[i]
                    T = np.tensordot(T, mat, axes=([0], [0]))
                M = tuple(i for i, keep in zip(L, mask) if keep)
                if not M:
                    constant += float(T)
                else:
                    tensors[M] = tensors[M] + T if M in tensors else T
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return MultilinearForm(dims, tensors, constant)

    def value_tensor(self, vertex_mats):
        """Values at every tuple of rows of ``vertex_mats`` (one matrix per block)."""
        shape = tuple(len(V) for V in vertex_mats)
        out = np.full(shape, self.constant)
        for L, Q in self.tensors.items():
            T = Q
            for i in L:
                T = np.tensordot(T, vertex_mats[i], axes=([0], [1]))
            # T has axes ordered as L; broadcast into the full shape
            expand = [shape[i] if i in L else 1 for i in range(self.l)]
            out = out + T.reshape(expand)
        return out


@dataclass
class MultilinearProgram:
    blocks: list
    objective: MultilinearForm
    sense: str = "max"
    prepared: bool = False
    _vertex_cache: list = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.sense not in ("max", "min"):
            raise ValueError("sense must be 'max' or 'min'")
        if len(self.blocks) < 2:
            raise DimensionMismatch("a multilinear program needs at least two blocks")
        dims = tuple(P.dim for P in self.blocks)
        if dims != self.objective.block_dims:
            raise DimensionMismatch(f"block dims {dims} do not match objective dims {self.objective.block_dims}")

    @property
    def l(self):
        return len(self.blocks)

    @property
    def block_dims(self):
        return self.objective.block_dims

    @property
    def n_vars(self):
        return int(sum(self.block_dims))

    @property
    def max_form(self):
        """The objective in maximization sense."""
        return self.objective if self.sense == "max" else -self.objective

    def to_user(self, internal_value):
        return internal_value if self.sense == "max" else -internal_value

    def split(self, x):
        offsets = np.cumsum(self.block_dims)[:-1]
        return np.split(np.asarray(x, dtype=float), offsets)

    def vertex_sets(self):
        if self._vertex_cache is None:
            self._vertex_cache = [pt.vertices(P) for P in self.blocks]
        return self._vertex_cache


def prepare(p, drop_redundant=True):
    """Normalize, check boundedness, and optionally strip redundant rows of every block."""
    blocks = []
    for P in p.blocks:
        Q = pt.normalize(P)
        if not pt.is_bounded(Q):
            raise UnboundedBlock(f"block {P.name!r} is unbounded; only polytopes are supported")
        if drop_redundant:
            Q = pt.remove_redundant(Q)
        blocks.append(Q)
    return replace(p, blocks=blocks, prepared=True, _vertex_cache=None)


@dataclass
class OracleResult:
    value: float
    optimal_tuples: list
    tuples_scanned: int
    vertex_sets: list = field(repr=False, default=None)

    def point(self, k=0):
        """Block vectors of the k-th optimal tuple."""
        return [self.vertex_sets[i].vertices[j] for i, j in enumerate(self.optimal_tuples[k])]


def vertex_oracle(p, tol=None, cap=ORACLE_CAP):
    """Exhaustive evaluation over all tuples of block vertices."""
    vsets = p.vertex_sets()
    count = int(np.prod([len(V) for V in vsets], dtype=object))
    if count > cap:
        raise CapExceeded(f"{count} vertex tuples exceed the oracle cap {cap}")
    values = p.max_form.value_tensor([V.vertices for V in vsets])
    best = float(values.max())
    band = optimality_band(best) if tol is None else tol * (1.0 + abs(best))
    tuples = [tuple(int(i) for i in t) for t in np.argwhere(values >= best - band)]
    return OracleResult(p.to_user(best), tuples, count, vsets)


def optima_are_finite(result, p=None):
    """False iff two optimal vertex tuples differ in exactly one block."""
    tuples = result.optimal_tuples
    for s, t in itertools.combinations(tuples, 2):
        if sum(a != b for a, b in zip(s, t)) == 1:
            return False
    return True


def _block_lp(P, grad):
    res = pt.maximize_linear(P, grad)
    if not res.optimal:
        raise UnboundedBlock(f"block {P.name!r}: linear subproblem is {res.status.value}")
    return res.point


def local_search(p, start=None, multistart=False):
    """Alternating block LPs from ``start``; returns ``(value, blocks)`` in the user's sense.

    Each sweep fixes all blocks but one and replaces that block by an optimal
    vertex of the resulting linear program.  Stops when a full sweep improves
    the objective by no more than ``1e-9 * (1 + |value|)``.  With
    ``multistart`` every vertex tuple of the first block seeds another run and
    the best result is returned.
    """
    f = p.max_form
    starts = []
    if start is not None:
        starts.append([np.asarray(s, dtype=float) for s in start])
    else:
        starts.append([P.interior_point if P.interior_point is not None else pt.normalize(P).interior_point
                       for P in p.blocks])
    if multistart:
        vs = p.vertex_sets()
        for v in vs[0].vertices:
            s = [np.asarray(v)] + [x.copy() for x in starts[0][1:]]
            starts.append(s)
    best_val, best_x = -np.inf, None
    for x in starts:
        x = [xi.copy() for xi in x]
        val = f.eval(x)
        idle = 0
        # stop after l consecutive block steps that neither improve nor move
        for step in range(LOCAL_SEARCH_MAX_SWEEPS * p.l):
            i = step % p.l
            old = x[i]
            x[i] = _block_lp(p.blocks[i], f.grad_block(x, i))
            new = f.eval(x)
            moved = np.abs(x[i] - old).max() > 1e-12 * (1.0 + np.abs(old).max())
            idle = 0 if (moved or new > val + optimality_band(val)) else idle + 1
            val = new
            if idle >= p.l:
                break
        val = f.eval(x)
        if val > best_val:
            best_val, best_x = val, x
    return p.to_user(best_val), best_x
