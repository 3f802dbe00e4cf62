import numpy as np
import pytest

from mlsos.apps import ContainmentInstance, shift_positive
from mlsos.hierarchy import TruncatedCertificate
from mlsos.mlp import MultilinearForm, MultilinearProgram
from mlsos.poly import basis
from mlsos.polytope import HPolytope
from mlsos.sdp import SdpProblem


def unit_interval(name=""):
    return HPolytope.box([0.0], [1.0], name=name)


def xy_program():
    f = MultilinearForm((1, 1), {(0, 1): [[1.0]]})
    return MultilinearProgram([unit_interval("x"), unit_interval("y")], f, "max")


def matching_pennies():
    A = np.array([[1.0, -1.0], [-1.0, 1.0]])
    return shift_positive(A, -A)


def projective_instance(r):
    """P = [-r, r] against Q whose projection is [-1, 1]."""
    return ContainmentInstance([[1.0], [-1.0]], [r, r], [[1.0], [-1.0], [0.0]], [0.0, 0.0, 1.0],
                               [[-1.0], [-1.0], [1.0]])


def xy_certificate(mu=1.0):
    """1 - xy = 1/2 (x-y)^2 + 1/2 (1+x^2)(1-x) + 1/2 (1-x)^2 x + (same in y); basis order [1, y, x, ...]."""
    b2 = basis(2, 2)
    ix, iy = b2.index((1, 0)), b2.index((0, 1))
    G0 = np.zeros((6, 6))
    G0[ix, ix] = G0[iy, iy] = 0.5
    G0[ix, iy] = G0[iy, ix] = -0.5
    b1 = basis(2, 1)
    jx, jy = b1.index((1, 0)), b1.index((0, 1))

    def upper(j):     # multiplier of 1 - v: 1/2 + 1/2 v^2
        G = np.zeros((3, 3))
        G[0, 0] = G[j, j] = 0.5
        return G

    def lower(j):     # multiplier of v: 1/2 (1 - v)^2
        G = np.zeros((3, 3))
        G[0, 0] = G[j, j] = 0.5
        G[0, j] = G[j, 0] = -0.5
        return G

    return TruncatedCertificate(2, "2t", mu, G0, [upper(jx), lower(jx), upper(jy), lower(jy)], [])


def planted_sdp(rng, sizes, m):
    X = []
    for s in sizes:
        U = rng.standard_normal((s, s))
        X.append(U @ U.T / s + 0.1 * np.eye(s))
    A = []
    for s in sizes:
        rows = []
        for _ in range(m):
            S = rng.standard_normal((s, s))
            rows.append((0.5 * (S + S.T)).ravel())
        A.append(np.array(rows))
    b = sum(Ak @ Xk.ravel() for Ak, Xk in zip(A, X))
    y = rng.standard_normal(m)
    C = []
    for s, Ak in zip(sizes, A):
        U = rng.standard_normal((s, s))
        C.append((Ak.T @ y).reshape(s, s) + U @ U.T + 0.1 * np.eye(s))
    return SdpProblem(sizes, A, None, b, C)


def random_form(rng, dims):
    tensors = {}
    for mask in range(1, 2 ** len(dims)):
        L = tuple(i for i in range(len(dims)) if mask >> i & 1)
        tensors[L] = rng.standard_normal(tuple(dims[i] for i in L))
    return MultilinearForm(dims, tensors)


@pytest.fixture
def xy():
    return xy_program()
