"""Convex backend: the two surrogate subproblem families in conic form.

Both families are assembled directly as Clarabel cone programs
``min q^T x  s.t.  b - A x in K``.  The cones used are PSD (covariances),
exponential (logarithms), second-order (2x2 log-dets and quadratic
minorants) and linear.

The kept 2x2 log-det ``logdet X, X = [[a, b], [b, c]]`` enters through the
exact second-order-cone form ``||(2b, 2t, a - c)|| <= a + c``, i.e.
``det X >= t^2`` with ``X`` PSD, together with ``log t >= u`` so that
``logdet X >= 2u``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .model import RNOError
from .surrogates import KAPPA, CovSurrogates, ThetaSurrogates

SQRT2 = math.sqrt(2.0)
_OK = ("Solved", "AlmostSolved")
# stalled near the optimum: the iterate is returned; callers repair and guard it
_STALLED = ("InsufficientProgress", "MaxIterations", "MaxTime")
# tried in order after a NumericalError; both recover ill-conditioned KKT systems near MM fixed points
_FALLBACKS = ({"equilibrate_enable": False}, {"static_regularization_constant": 1e-7})


class SolverError(RNOError):
    """The convex engine did not return a usable solution."""

    def __init__(self, status: str, where: str = ""):
        super().__init__(f"solver status {status!r}" + (f" in {where}" if where else ""))
        self.status = status
        self.trace = None


class BackendUnavailableError(RNOError):
    pass


def _import_clarabel():
    try:
        import clarabel
    except ImportError as exc:
        raise BackendUnavailableError("the conic solver 'clarabel' is not installed") from exc
    return clarabel


def backend_available() -> bool:
    try:
        _import_clarabel()
    except BackendUnavailableError:
        return False
    return True


@dataclass
class Solution:
    status: str
    value: float
    x: np.ndarray


def _triangle_maps(n: int):
    """Upper-triangle variable layout of one symmetric ``n x n`` block.

    Returns ``(vec_map, svec_scale, index)``: ``vec_map`` is the
    ``(n*n, nt)`` 0/1 matrix taking the stored entries to the column-major
    ``vec(P)``; ``svec_scale`` scales them to the PSD-cone vector (column
    order of the upper triangle, off-diagonals times sqrt 2); ``index[i, j]``
    is the variable of entry (i, j).
    """
    index = np.zeros((n, n), dtype=int)
    scale = []
    k = 0
    for j in range(n):
        for i in range(j + 1):
            index[i, j] = index[j, i] = k
            scale.append(1.0 if i == j else SQRT2)
            k += 1
    vec_map = np.zeros((n * n, k))
    for j in range(n):
        for i in range(n):
            vec_map[j * n + i, index[i, j]] = 1.0
    return vec_map, np.array(scale), index


class ConicBackend:
    """Engine contract: log-det terms, PSD variables, SOC and linear constraints.

    ``solve_cov`` and ``solve_theta`` return a :class:`Solution` or raise
    :class:`SolverError` carrying the engine status.  Keyword arguments are
    passed to the Clarabel settings.
    """

    capabilities = frozenset({"logdet", "psd", "soc", "exp", "linear"})

    def __init__(self, **settings):
        self._clarabel = _import_clarabel()
        self.settings = settings
        self._maps: dict[int, tuple] = {}
        self.stalled = 0
        self.retried = 0
        self.last_status = ""

    def _run(self, q, A, b, cones, extra):
        cl = self._clarabel
        st = cl.DefaultSettings()
        st.verbose = False
        for k, v in {**self.settings, **extra}.items():
            setattr(st, k, v)
        nx = len(q)
        return cl.DefaultSolver(sparse.csc_matrix((nx, nx)), q, A, b, cones, st).solve()

    def _solve(self, q, A_blocks, b_blocks, cones, where) -> np.ndarray:
        A = sparse.csc_matrix(np.vstack(A_blocks))
        b = np.concatenate(b_blocks)
        res = self._run(q, A, b, cones, {})
        status = str(res.status)
        for extra in _FALLBACKS:
            if status != "NumericalError":
                break
            self.retried += 1
            res = self._run(q, A, b, cones, extra)
            status = str(res.status)
        self.last_status = status
        if status in _OK:
            return np.asarray(res.x, float)
        if status in _STALLED and np.all(np.isfinite(res.x)):
            self.stalled += 1
            return np.asarray(res.x, float)
        raise SolverError(status, where)

    # -- covariance subproblems ---------------------------------------------

    def solve_cov(
        self,
        surr: CovSurrogates,
        n: int,
        power: np.ndarray,
        weights_inv: np.ndarray,
        proper: bool,
        *,
        ee: dict | None = None,
    ) -> Solution:
        """Maximize ``s`` s.t. ``surrogate_q(P) - Dm[q] vec(P) - dc[q] >= weights_inv[q] * s``.

        Without ``ee`` the offsets vanish (rate epigraph).  With ``ee`` (keys
        ``Dm``, ``dc``, ``rth``) they hold the Dinkelbach power terms and
        ``surrogate_q(P) >= rth[q]`` is added.  ``P`` ranges over PSD
        matrices with per-cell trace budgets, proper ones if ``proper``.
        """
        cl = self._clarabel
        if n not in self._maps:
            self._maps[n] = _triangle_maps(n)
        vmap, svs, idx = self._maps[n]
        L, U, Q = surr.L, surr.U, len(surr.terms)
        nt = vmap.shape[1]
        npv = L * U * nt
        it, iu, isv = npv, npv + Q, npv + 2 * Q  # offsets of t, u, s
        nx = isv + 1
        Vmap = sparse.block_diag([vmap] * (L * U)).toarray()  # vec(P) = Vmap @ x[:npv]
        Ab, bb, cones = [], [], []

        for j in range(L * U):  # P_j >= 0
            A = np.zeros((nt, nx))
            A[:, j * nt:(j + 1) * nt] = -np.diag(svs)
            Ab.append(A)
            bb.append(np.zeros(nt))
            cones.append(cl.PSDTriangleConeT(n))
        Ax = surr.A @ Vmap  # (Q, 3, npv)
        for q in range(Q):  # det X_q >= t_q^2
            a11, a12, a22 = Ax[q]
            x11, x12, x22 = surr.x0[q]
            A = np.zeros((4, nx))
            A[0, :npv] = -(a11 + a22)
            A[1, :npv] = -2 * a12
            A[2, it + q] = -2.0
            A[3, :npv] = -(a11 - a22)
            Ab.append(A)
            bb.append(np.array([x11 + x22, 2 * x12, 0.0, x11 - x22]))
            cones.append(cl.SecondOrderConeT(4))
        for q in range(Q):  # log t_q >= u_q
            A = np.zeros((3, nx))
            A[0, iu + q] = -1.0
            A[2, it + q] = -1.0
            Ab.append(A)
            bb.append(np.array([0.0, 1.0, 0.0]))
            cones.append(cl.ExponentialConeT())

        G = surr.g @ Vmap
        Dm = np.zeros_like(G) if ee is None else ee["Dm"] @ Vmap
        dc = np.zeros(Q) if ee is None else np.asarray(ee["dc"], float)
        lin_A, lin_b = [], []
        A = np.zeros((Q, nx))  # epigraph
        A[:, :npv] = G + Dm
        A[:, iu:iu + Q] = -2 * KAPPA * np.eye(Q)
        A[:, isv] = np.asarray(weights_inv, float)
        lin_A.append(A)
        lin_b.append(-(surr.c + dc))
        if ee is not None:  # rate floors
            A = np.zeros((Q, nx))
            A[:, :npv] = G
            A[:, iu:iu + Q] = -2 * KAPPA * np.eye(Q)
            lin_A.append(A)
            lin_b.append(-(surr.c + np.asarray(ee["rth"], float)))
        A = np.zeros((L, nx))  # trace budgets
        diag_vars = [idx[i, i] for i in range(n)]
        for l in range(L):
            for u in range(U):
                A[l, [(l * U + u) * nt + d for d in diag_vars]] = 1.0
        lin_A.append(A)
        lin_b.append(np.asarray(power, float))
        A = np.vstack(lin_A)
        Ab.append(A)
        bb.append(np.concatenate(lin_b))
        cones.append(cl.NonnegativeConeT(A.shape[0]))

        if proper:
            eq = []
            h = n // 2
            for j in range(L * U):
                off = j * nt
                for a in range(h):
                    for c in range(a, h):
                        r = np.zeros(nx)  # P[a, c] = P[a+h, c+h]
                        r[off + idx[a, c]] += 1.0
                        r[off + idx[a + h, c + h]] -= 1.0
                        eq.append(r)
                        r = np.zeros(nx)  # P[a, c+h] = -P[a+h, c]
                        r[off + idx[a, c + h]] += 1.0
                        r[off + idx[a + h, c]] += 1.0
                        eq.append(r)
            Ab.append(np.array(eq))
            bb.append(np.zeros(len(eq)))
            cones.append(cl.ZeroConeT(len(eq)))

        q_obj = np.zeros(nx)
        q_obj[isv] = -1.0
        kind = "rate" if ee is None else "ee"
        x = self._solve(q_obj, Ab, bb, cones, f"covariance subproblem ({kind})")
        P = (Vmap @ x[:npv]).reshape(L, U, n, n)
        return Solution(self.last_status, float(x[isv]), np.swapaxes(P, -1, -2))

    # -- reflecting-coefficient subproblems ---------------------------------

    def solve_theta(
        self,
        surr: ThetaSurrogates,
        weights: np.ndarray,
        *,
        linear_bound=None,
        rth: np.ndarray | None = None,
    ) -> Solution:
        """Maximize ``s`` s.t. ``surrogate_q(z) >= weights[q] * s`` and ``|theta| <= 1``.

        ``linear_bound`` is an :class:`~rno.ris.AffineModulusBound` imposing
        the linearized lower modulus constraint; ``rth`` adds
        ``surrogate_q(z) >= rth[q]``.
        """
        cl = self._clarabel
        c0, g, a, B = surr.c0, surr.g, surr.a, surr.B
        Q, T = g.shape
        R = a.shape[1]
        half = T // 2
        nx = T + 1  # x = [z, s]
        w = np.asarray(weights, float)
        Ab, bb, cones = [], [], []

        def quad_cone(q, shift, ws):
            # ||a + Bz||^2 <= tau := c0 - shift + g z - ws * s as the rotated cone
            # ||(2(a + Bz), tau - 1)|| <= tau + 1
            A = np.zeros((R + 2, nx))
            A[0, :T] = A[1, :T] = -g[q]
            A[0, T] = A[1, T] = ws
            A[2:, :T] = -2.0 * B[q]
            Ab.append(A)
            bb.append(np.concatenate([[c0[q] - shift + 1.0, c0[q] - shift - 1.0], 2.0 * a[q]]))
            cones.append(cl.SecondOrderConeT(R + 2))

        for q in range(Q):
            quad_cone(q, 0.0, w[q])
        if rth is not None:
            for q, r in enumerate(np.asarray(rth, float)):
                quad_cone(q, r, 0.0)
        if linear_bound is not None:
            A = np.zeros((half, nx))
            A[:, :half] = -np.diag(np.ravel(linear_bound.a_re))
            A[:, half:T] = -np.diag(np.ravel(linear_bound.a_im))
            Ab.append(A)
            bb.append(-np.ravel(linear_bound.rhs))
            cones.append(cl.NonnegativeConeT(half))
        for i in range(half):  # |theta_i| <= 1
            A = np.zeros((3, nx))
            A[1, i] = -1.0
            A[2, half + i] = -1.0
            Ab.append(A)
            bb.append(np.array([1.0, 0.0, 0.0]))
            cones.append(cl.SecondOrderConeT(3))

        q_obj = np.zeros(nx)
        q_obj[T] = -1.0
        kind = "rate" if rth is None else "ee"
        x = self._solve(q_obj, Ab, bb, cones, f"reflection subproblem ({kind})")
        return Solution(self.last_status, float(x[T]), x[:T])


_default: ConicBackend | None = None


def default_backend() -> ConicBackend:
    global _default
    if _default is None:
        _default = ConicBackend()
    return _default
