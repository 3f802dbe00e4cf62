"""Truncated sum-of-squares hierarchy for multilinear programs.

At order ``t`` the program ``max f`` over ``P_1 x ... x P_l`` is relaxed to

    f_t = inf { mu :  mu - f = sigma_0 + sum_ij sigma_ij g_ij + sum_ij tau_ij h_ij }

with ``g_ij = (a_i - A_i x_i)_j`` the inequality generators, ``h_ij`` the
equality generators, ``sigma_ij`` sums of squares of degree ``<= 2t - 2``,
``tau_ij`` arbitrary polynomials of degree ``<= 2t - 1`` and ``sigma_0`` of
degree ``2t`` (or ``2t - 2`` with ``sigma0="2t-2"``).  Matching coefficients
of every monomial of degree ``<= 2t`` gives an SDP in the Gram matrices.
"""

import enum
import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from mlsos import polytope as pt
from mlsos.errors import CapExceeded, DimensionMismatch, OrderTooSmall
from mlsos.mlp import MultilinearProgram, local_search, prepare
from mlsos.poly import Poly, basis, mono_add
from mlsos.sdp import SdpOptions, SdpProblem, SdpStatus, check_psd, solve_sdp

SCHUR_CAP = 6000
SIGMA0_CHOICES = ("2t", "2t-2")


@dataclass
class Generator:
    kind: str          # "ineq" or "eq"
    block: int
    row: int
    poly: Poly


def generators(p):
    """Inequality and equality generators in the joint variables."""
    n = p.n_vars
    offsets = np.concatenate([[0], np.cumsum(p.block_dims)])
    ineqs, eqs = [], []
    for i, P in enumerate(p.blocks):
        for kind, M, v, out in (("ineq", P.A, P.a, ineqs), ("eq", P.B, P.b, eqs)):
            for j in range(M.shape[0]):
                lin = np.zeros(n)
                lin[offsets[i]:offsets[i + 1]] = -M[j]
                out.append(Generator(kind, i, j, Poly.affine(v[j], lin)))
    return ineqs, eqs


@dataclass
class AffineReduction:
    """Program in coordinates ``w_i`` with ``x_i = shift_i + basis_i @ w_i`` on each affine hull."""

    program: object
    shifts: list
    maps: list

    def lift(self, w_blocks):
        return [s + M @ w for s, M, w in zip(self.shifts, self.maps, w_blocks)]


def eliminate_equalities(p):
    """Restrict every block to its affine hull so no equality generators remain.

    The order-t values are unchanged: an affine substitution maps truncated
    certificates in one set of coordinates to certificates of the same
    degrees in the other, with the ideal part absorbing the difference.
    """
    shifts, maps, blocks = [], [], []
    for P in p.blocks:
        if P.n_eq == 0:
            shifts.append(np.zeros(P.dim))
            maps.append(np.eye(P.dim))
            blocks.append(P)
            continue
        N = sla.null_space(P.B)
        x0 = P.interior_point if P.interior_point is not None else np.linalg.lstsq(P.B, P.b, rcond=None)[0]
        A = P.A @ N
        a = P.a - P.A @ x0
        rows = np.abs(A).max(axis=1) > 1e-12 if A.size else np.zeros(0, dtype=bool)
        blocks.append(pt.HPolytope(N.shape[1], A[rows], a[rows], normalized=True,
                                   interior_point=np.zeros(N.shape[1]), name=P.name))
        shifts.append(x0)
        maps.append(N)
    f = p.objective.substitute(shifts, maps)
    q = MultilinearProgram(blocks, f, p.sense, prepared=True)
    return AffineReduction(q, shifts, maps)


@dataclass
class CompiledOrder:
    t: int
    sigma0: str
    sdp: SdpProblem
    monomials: list            # monomial of each kept SDP constraint row
    basis0: list
    basis_loc: list
    basis_tau: list
    ineqs: list
    eqs: list
    infeasible: bool = False   # some monomial of f cannot be matched at all


def compile_order(p, t, sigma0="2t"):
    """Build the order-``t`` SDP: PSD blocks (sigma_0, then one per inequality), free (mu, tau)."""
    if sigma0 not in SIGMA0_CHOICES:
        raise ValueError(f"sigma0 must be one of {SIGMA0_CHOICES}")
    if t < p.l:
        raise OrderTooSmall(f"order {t} is below the degree l = {p.l} of the objective")
    n = p.n_vars
    f = p.max_form.to_poly()
    ineqs, eqs = generators(p)
    mons = basis(n, 2 * t)
    if len(mons) > SCHUR_CAP:
        raise CapExceeded(f"{len(mons)} coefficient constraints exceed the cap {SCHUR_CAP}")
    index = {m: k for k, m in enumerate(mons)}
    basis0 = basis(n, t if sigma0 == "2t" else t - 1)
    basis_loc = basis(n, t - 1)
    basis_tau = basis(n, 2 * t - 1) if eqs else []

    entries = []
    for a in range(len(basis0)):
        for c in range(a, len(basis0)):
            entries.append((index[mono_add(basis0[a], basis0[c])], 0, a, c, 1.0))
    for k, g in enumerate(ineqs, start=1):
        terms = list(g.poly.terms.items())
        for a in range(len(basis_loc)):
            for c in range(a, len(basis_loc)):
                base = mono_add(basis_loc[a], basis_loc[c])
                for gm, gc in terms:
                    entries.append((index[mono_add(base, gm)], k, a, c, gc))
    free = [(index[(0,) * n], 0, -1.0)]
    col = 1
    for h in eqs:
        terms = list(h.poly.terms.items())
        for beta in basis_tau:
            for hm, hc in terms:
                free.append((index[mono_add(beta, hm)], col, hc))
            col += 1
    rhs = np.array([-f.coeff(m) for m in mons])

    used = np.zeros(len(mons), dtype=bool)
    for e in entries:
        used[e[0]] = True
    for e in free:
        used[e[0]] = True
    infeasible = bool(np.any(np.abs(rhs[~used]) > 0.0))
    keep = np.flatnonzero(used)
    remap = -np.ones(len(mons), dtype=int)
    remap[keep] = np.arange(keep.size)
    entries = [(int(remap[e[0]]),) + e[1:] for e in entries]
    free = [(int(remap[e[0]]),) + e[1:] for e in free]

    sizes = [len(basis0)] + [len(basis_loc)] * len(ineqs)
    c_free = np.zeros(col)
    c_free[0] = 1.0
    sdp = SdpProblem.from_entries(sizes, keep.size, entries, n_free=col, free_entries=free,
                                  b=rhs[keep], c_free=c_free)
    return CompiledOrder(t, sigma0, sdp, [mons[k] for k in keep], basis0, basis_loc,
                         basis_tau, ineqs, eqs, infeasible)


@dataclass
class TruncatedCertificate:
    """``mu - f = sigma_0 + sum sigma_ij g_ij + sum tau_ij h_ij`` up to a residual."""

    t: int
    sigma0: str
    mu: float
    gram0: np.ndarray
    grams: list
    taus: list

    def to_dict(self):
        return {
            "t": self.t,
            "sigma0": self.sigma0,
            "mu": self.mu,
            "gram0": self.gram0.tolist(),
            "grams": [G.tolist() for G in self.grams],
            "taus": [[[list(m), c] for m, c in sorted(tau.terms.items())] for tau in self.taus],
        }


@dataclass
class CertificateCheck:
    residual: float
    worst_monomial: tuple
    min_eigenvalues: list
    passed: bool


def verify_certificate(p, cert, residual_tol=None, psd_tol=1e-7):
    """Recompute the residual polynomial with exact-structure polynomial arithmetic."""
    n = p.n_vars
    ineqs, eqs = generators(p)
    basis0 = basis(n, cert.t if cert.sigma0 == "2t" else cert.t - 1)
    basis_loc = basis(n, cert.t - 1)
    if cert.gram0.shape != (len(basis0), len(basis0)):
        raise DimensionMismatch("sigma_0 Gram matrix does not match the order")
    if len(cert.grams) != len(ineqs) or len(cert.taus) != len(eqs):
        raise DimensionMismatch("certificate multiplier counts do not match the program")
    if any(G.shape != (len(basis_loc), len(basis_loc)) for G in cert.grams):
        raise DimensionMismatch("localizing Gram matrix does not match the order")
    if any(tau.degree > 2 * cert.t - 1 for tau in cert.taus):
        raise DimensionMismatch("ideal multiplier degree exceeds 2t - 1")
    f = p.max_form.to_poly()
    r = Poly.constant(n, cert.mu) - f - Poly.from_gram(cert.gram0, basis0)
    for G, g in zip(cert.grams, ineqs):
        r = r - Poly.from_gram(G, basis_loc) * g.poly
    for tau, h in zip(cert.taus, eqs):
        r = r - tau * h.poly
    worst = max(r.terms.items(), key=lambda kv: abs(kv[1]), default=((0,) * n, 0.0))
    eigs = [check_psd(cert.gram0)[1]] + [check_psd(G)[1] for G in cert.grams]
    tol = 1e-6 * (1.0 + abs(cert.mu)) if residual_tol is None else residual_tol
    resid = abs(worst[1])
    return CertificateCheck(resid, worst[0], eigs, resid <= tol and min(eigs) >= -psd_tol)


@dataclass
class OrderResult:
    t: int
    f_t: float                 # maximization sense; +inf when the relaxation is infeasible
    sdp_status: SdpStatus
    certificate: TruncatedCertificate = None
    moments: dict = field(default_factory=dict, repr=False)
    candidate: list = None
    iterations: int = 0
    seconds: float = 0.0
    program: object = field(default=None, repr=False)   # the program the certificate refers to

    @property
    def solved(self):
        return self.sdp_status is SdpStatus.OPTIMAL


EQUALITY_MODES = ("eliminate", "ideal")


def solve_order(p, t, sigma0="2t", sdp_opts=None, equalities="eliminate"):
    """Solve the order-``t`` relaxation.

    With ``equalities="eliminate"`` blocks with equality rows are first
    restricted to their affine hulls; ``"ideal"`` keeps the explicit ideal
    multipliers, whose SDP has no strictly feasible moment point and is
    numerically harder.
    """
    if equalities not in EQUALITY_MODES:
        raise ValueError(f"equalities must be one of {EQUALITY_MODES}")
    start = time.perf_counter()
    red = None
    q = p
    if equalities == "eliminate" and any(P.n_eq for P in p.blocks):
        red = eliminate_equalities(p)
        q = red.program
    comp = compile_order(q, t, sigma0)
    if comp.infeasible:
        return OrderResult(t, math.inf, SdpStatus.PRIMAL_INFEASIBLE,
                           seconds=time.perf_counter() - start, program=q)
    sol = solve_sdp(comp.sdp, sdp_opts)
    res = OrderResult(t, math.nan, sol.status, iterations=sol.iterations, program=q)
    if sol.status is SdpStatus.PRIMAL_INFEASIBLE:
        res.f_t = math.inf
    elif sol.status is SdpStatus.OPTIMAL:
        res.f_t = sol.primal_obj
    if sol.status in (SdpStatus.OPTIMAL, SdpStatus.STALLED):
        u = sol.free_values
        taus = []
        n = q.n_vars
        for k in range(len(comp.eqs)):
            chunk = u[1 + k * len(comp.basis_tau):1 + (k + 1) * len(comp.basis_tau)]
            taus.append(Poly(n, dict(zip(comp.basis_tau, chunk))))
        res.certificate = TruncatedCertificate(t, sigma0, float(u[0]), sol.psd_values[0],
                                               sol.psd_values[1:], taus)
        res.moments = {m: -float(v) for m, v in zip(comp.monomials, sol.dual_values)}
        cand = _candidate(q, res.moments)
        res.candidate = red.lift(cand) if red is not None else cand
    res.seconds = time.perf_counter() - start
    return res


def _candidate(p, moments):
    n = p.n_vars
    first = np.array([moments.get(tuple(int(i == k) for i in range(n)), 0.0) for k in range(n)])
    out = []
    for P, x in zip(p.blocks, p.split(first)):
        if not pt.contains_point(P, x, 1e-9):
            x = pt.project_l1(P, x)
        out.append(x)
    return out


class HierarchyStatus(enum.Enum):
    CONVERGED = "ConvergedCertified"
    ORDER_CAP = "OrderCapReached"
    SOLVER_TROUBLE = "SolverTrouble"


@dataclass
class HierarchyReport:
    sense: str
    orders: list
    upper: float               # best relaxation value, maximization sense
    lower: float               # best feasible value, maximization sense
    witness: list
    status: HierarchyStatus
    tol: float
    notes: list = field(default_factory=list)

    @property
    def gap(self):
        return self.upper - self.lower

    def _user(self, v):
        return v if self.sense == "max" else -v

    @property
    def relaxation_bound(self):
        return self._user(self.upper)

    @property
    def value(self):
        return self._user(self.lower)

    @property
    def best_upper(self):
        return self.relaxation_bound if self.sense == "max" else self.value

    @property
    def best_lower(self):
        return self.value if self.sense == "max" else self.relaxation_bound

    def f_values(self):
        """Per-order relaxation values in the user's sense."""
        return {r.t: self._user(r.f_t) for r in self.orders}

    @property
    def converged(self):
        return self.status is HierarchyStatus.CONVERGED


def _internal(p, user_value):
    return user_value if p.sense == "max" else -user_value


def run(p, t_max=None, tol=1e-5, sigma0="2t", t_min=None, multistart=False, sdp_opts=None,
        equalities="eliminate", stop=None):
    """Solve orders ``l..t_max`` until the relaxation meets a feasible value.

    Converged when ``upper - lower <= tol * (1 + |upper|)``.  ``stop(upper, lower)``,
    given bounds in max sense, may end the loop earlier once a caller has what it
    needs; the status then stays ``OrderCapReached``.
    """
    if not p.prepared:
        p = prepare(p)
    t_min = p.l if t_min is None else max(t_min, p.l)
    t_max = p.l + 3 if t_max is None else t_max
    val, wit = local_search(p, multistart=multistart)
    lower, witness = _internal(p, val), wit
    upper = math.inf
    orders, notes = [], []
    status = None
    for t in range(t_min, t_max + 1):
        try:
            res = solve_order(p, t, sigma0, sdp_opts, equalities)
        except CapExceeded as exc:
            notes.append(f"order {t}: {exc}")
            break
        orders.append(res)
        if res.solved:
            upper = min(upper, res.f_t)
        if res.candidate is not None:
            val, wit = local_search(p, start=res.candidate)
            if _internal(p, val) > lower:
                lower, witness = _internal(p, val), wit
        if math.isfinite(upper) and upper - lower <= tol * (1.0 + abs(upper)):
            status = HierarchyStatus.CONVERGED
            break
        if stop is not None and stop(upper, lower):
            notes.append(f"stopped by caller after order {t}")
            break
    if status is None:
        status = HierarchyStatus.ORDER_CAP if any(r.solved or r.f_t == math.inf for r in orders) \
            else HierarchyStatus.SOLVER_TROUBLE
    return HierarchyReport(p.sense, orders, upper, lower, witness, status, tol, notes)
