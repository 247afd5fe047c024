"""Alternating optimization of transmit covariances and reflecting coefficients.

Both drivers alternate a covariance step and a reflection step.  Each step
solves a convex surrogate problem anchored at the current point and is kept
only if the true objective does not drop, so the objective trace is
non-decreasing by construction:

* :func:`mwrm_ao` maximizes the minimum weighted rate;
* :func:`mweem_ao` maximizes the minimum weighted energy efficiency under
  per-user rate floors, with a generalized Dinkelbach loop
  (:func:`gda_cov_subproblem`) for the covariance step.

Internally all channels are divided by the noise standard deviation so the
conic models see unit noise; rates are invariant under this rescaling.
"""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .backend import ConicBackend, SolverError, default_backend
from .model import (
    ChannelSet,
    CovSet,
    InvalidInputError,
    NetworkConfig,
    ReflectState,
    RNOError,
    SetTag,
    Signaling,
    feasible_covset,
    proper_part,
)
from .rates import rate_terms, real_channels, term_rates, user_rates_from_terms
from .ris import linearize_min_modulus, linearize_unit_modulus, project_to_set
from .surrogates import (
    ThetaBasis,
    rate_lower_bounds_in_P,
    rate_lower_bounds_in_theta,
    theta_basis,
)

QOS_TOL = 1e-7


class QoSInfeasibleError(RNOError):
    """No point meeting the rate floors was found."""

    def __init__(self, message: str, diagnostics: dict):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass
class SolverOptions:
    eps: float = 1e-3  # relative improvement threshold of the outer loop
    max_iter: int = 50
    gda_max_iter: int = 20
    gda_tol: float = 1e-5
    slack_init: float = 1e-2  # unit-modulus linearization slack, halved per iteration
    slack_min: float = 1e-4
    restore_max_iter: int = 50


# ---------------------------------------------------------------------------
# Trace
# ---------------------------------------------------------------------------

TRACE_FIELDS = ("iter", "phase", "objective", "accepted", "mu", "wall_ms")


@dataclass
class TraceRow:
    iter: int
    phase: str  # init | P | theta
    objective: float
    accepted: bool
    mu: float = float("nan")
    wall_ms: float = 0.0


@dataclass
class SolveTrace:
    rows: list[TraceRow] = field(default_factory=list)
    mu: list[float] = field(default_factory=list)  # every GDA parameter value, in order
    reason: str = ""

    def add(self, *args, **kw):
        self.rows.append(TraceRow(*args, **kw))

    @property
    def objectives(self) -> np.ndarray:
        return np.array([r.objective for r in self.rows])

    @property
    def n_iter(self) -> int:
        return max((r.iter for r in self.rows), default=0)

    @property
    def final(self) -> float:
        return self.rows[-1].objective

    def is_monotone(self, tol: float = 1e-9) -> bool:
        obj = self.objectives
        return bool(np.all(np.diff(obj) >= -tol))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_FIELDS)
        for r in self.rows:
            w.writerow([r.iter, r.phase, repr(r.objective), int(r.accepted), repr(r.mu), f"{r.wall_ms:.3f}"])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "SolveTrace":
        rows = list(csv.DictReader(io.StringIO(text)))
        return cls([
            TraceRow(int(r["iter"]), r["phase"], float(r["objective"]), bool(int(r["accepted"])),
                     float(r["mu"]), float(r["wall_ms"]))
            for r in rows
        ])


# ---------------------------------------------------------------------------
# Problem context
# ---------------------------------------------------------------------------


class _Ctx:
    """Noise-normalized channels and per-term bookkeeping of one instance."""

    def __init__(self, channels: ChannelSet, config: NetworkConfig, sic, backend):
        self.config = config
        self.sic = config.sic_enabled if sic is None else sic
        self.ch = channels.scaled(1.0 / math.sqrt(config.sigma2))
        self.terms = rate_terms(config, self.sic)
        self.L, self.U = config.L, config.U
        self.n = 2 * config.N_BS
        self.owner = np.array([t.cell * self.U + t.owner for t in self.terms])
        self.backend: ConicBackend = backend or default_backend()
        self._basis: ThetaBasis | None = None

    @property
    def basis(self) -> ThetaBasis:
        if self._basis is None:
            self._basis = theta_basis(self.ch)
        return self._basis

    def per_term(self, user_values: np.ndarray) -> np.ndarray:
        return np.asarray(user_values, float).reshape(-1)[self.owner]

    def rates(self, P: np.ndarray, theta: ReflectState) -> np.ndarray:
        vals = term_rates(real_channels(self.ch, theta), P, self.terms, 1.0)
        return user_rates_from_terms(vals, self.terms, self.L, self.U)

    def den(self, P: np.ndarray) -> np.ndarray:
        c = self.config
        return c.P_c + c.eta * np.trace(P, axis1=2, axis2=3)

    def mode(self) -> Signaling:
        return self.config.signaling


def _min_weighted(values: np.ndarray, lam: np.ndarray) -> float:
    active = lam > 0
    return float((lam[active] * values[active]).min())


def _inv(lam: np.ndarray) -> np.ndarray:
    return np.where(lam > 0, 1.0 / np.where(lam > 0, lam, 1.0), 0.0)


# ---------------------------------------------------------------------------
# Initial points
# ---------------------------------------------------------------------------


def initial_covariances(config: NetworkConfig, rng: np.random.Generator | None = None,
                        mode: Signaling | None = None) -> CovSet:
    """Equal power split ``p_l / U`` per user.

    Without ``rng`` every covariance is proper and isotropic.  With ``rng``
    each user gets a random PSD shape (improper in general); in PGS mode the
    proper part of that shape is used, so IGS and PGS runs seeded alike start
    from related points.
    """
    mode = mode or config.signaling
    L, U, n = config.L, config.U, 2 * config.N_BS
    share = config.power()[:, None] / U
    if rng is None:
        P = np.broadcast_to(np.eye(n) / n, (L, U, n, n)) * share[..., None, None]
        return CovSet(P, mode)
    A = rng.standard_normal((L, U, n, n))
    S = A @ np.swapaxes(A, -1, -2)
    if mode == "PGS":
        S = proper_part(S)
    S = S / np.trace(S, axis1=2, axis2=3)[..., None, None]
    return CovSet(S * share[..., None, None], mode)


# ---------------------------------------------------------------------------
# Covariance step
# ---------------------------------------------------------------------------


def _cov_solve(ctx: _Ctx, P: np.ndarray, theta: ReflectState, winv_terms: np.ndarray, ee: dict | None = None):
    surr = rate_lower_bounds_in_P(CovSet(P, ctx.mode()), theta, ctx.ch, ctx.config, noise=1.0, sic=ctx.sic)
    sol = ctx.backend.solve_cov(surr, ctx.n, ctx.config.power(), winv_terms, ctx.mode() == "PGS", ee=ee)
    return feasible_covset(sol.x, ctx.config, ctx.mode()).P, sol, surr


def solve_cov_subproblem(
    anchor: CovSet, theta_fixed: ReflectState, channels: ChannelSet, config: NetworkConfig,
    *, sic: bool | None = None, backend: ConicBackend | None = None, weights: np.ndarray | None = None,
) -> CovSet:
    """One MM step in the covariances: maximize the minimum weighted surrogate rate.

    The result is returned only if its true minimum weighted rate is at
    least the anchor's; otherwise the anchor is returned.
    """
    ctx = _Ctx(channels, config, sic, backend)
    lam = config.lam() if weights is None else np.asarray(weights, float)
    P_new, _, _ = _cov_solve(ctx, anchor.P, theta_fixed, ctx.per_term(_inv(lam)))
    if _min_weighted(ctx.rates(P_new, theta_fixed), lam) >= _min_weighted(ctx.rates(anchor.P, theta_fixed), lam):
        return CovSet(P_new, config.signaling)
    return CovSet(anchor.P, config.signaling)


# ---------------------------------------------------------------------------
# Reflection step
# ---------------------------------------------------------------------------


def _theta_solve(ctx: _Ctx, P: np.ndarray, theta: ReflectState, set_tag: SetTag, w_terms: np.ndarray,
                 rth_terms: np.ndarray | None = None, slack: float = 0.0) -> ReflectState:
    cfg = ctx.config
    surr = rate_lower_bounds_in_theta(CovSet(P, ctx.mode()), theta, ctx.ch, cfg, noise=1.0, sic=ctx.sic,
                                      basis=ctx.basis)
    if set_tag == "U":
        bound = None
    elif set_tag == "I":
        bound = linearize_unit_modulus(theta.theta.ravel(), slack)
    elif set_tag == "C":
        bound = linearize_min_modulus(theta.theta.ravel(), cfg.tc_params.theta_min)
    else:
        raise InvalidInputError(f"unknown feasibility set {set_tag!r}")
    sol = ctx.backend.solve_theta(surr, w_terms, linear_bound=bound, rth=rth_terms)
    raw = ReflectState.from_z(sol.x, theta.theta.shape, set_tag)
    return project_to_set(raw, set_tag, cfg.tc_params)


def solve_theta_subproblem(
    set_tag: SetTag, cov_fixed: CovSet, theta_anchor: ReflectState, channels: ChannelSet,
    config: NetworkConfig, *, sic: bool | None = None, backend: ConicBackend | None = None,
    slack: float = 1e-2, weights: np.ndarray | None = None,
) -> ReflectState:
    """Candidate coefficients from the surrogate reflection problem.

    Set U is solved directly, set I with the linearized unit-modulus bound
    followed by normalization, set C over the relaxed annulus followed by
    the amplitude law at the obtained phases.
    """
    ctx = _Ctx(channels, config, sic, backend)
    lam = config.lam() if weights is None else np.asarray(weights, float)
    return _theta_solve(ctx, cov_fixed.P, theta_anchor, set_tag, ctx.per_term(_inv(lam)), slack=slack)


def _rate_key(ctx: _Ctx, P, theta, lam) -> float:
    return _min_weighted(ctx.rates(P, theta), lam)


def _ee_key(ctx: _Ctx, P, theta, lam) -> tuple[bool, float]:
    r = ctx.rates(P, theta)
    qos = bool(np.all(r >= ctx.config.rth() - QOS_TOL))
    return qos, _min_weighted(r / ctx.den(P), lam)


def accept_theta_update(
    candidate: ReflectState, previous: ReflectState, cov_fixed: CovSet, channels: ChannelSet,
    config: NetworkConfig, *, mode: str = "rate", sic: bool | None = None,
) -> ReflectState:
    """``candidate`` if its true objective is at least that of ``previous``.

    In ``"ee"`` mode points meeting all rate floors rank above points that
    do not; among equals the minimum weighted EE decides.  Ties accept.
    """
    ctx = _Ctx(channels, config, sic, _NoBackend())
    return candidate if _accept(ctx, candidate, previous, cov_fixed.P, config.lam(), mode) else previous


class _NoBackend:
    """Placeholder for contexts that only evaluate rates."""


def _accept(ctx, candidate, previous, P, lam, mode) -> bool:
    key = _rate_key if mode == "rate" else _ee_key
    return key(ctx, P, candidate, lam) >= key(ctx, P, previous, lam)


# ---------------------------------------------------------------------------
# Minimum weighted rate
# ---------------------------------------------------------------------------


def _check_start(config: NetworkConfig, P0: CovSet, theta0: ReflectState):
    from .model import validate_covset
    from .ris import in_set

    checks = validate_covset(P0, config)
    if not checks["ok"]:
        raise InvalidInputError(f"initial covariances infeasible: {checks}")
    if theta0.set_tag != config.feasibility_set or not in_set(theta0, config.tc_params):
        raise InvalidInputError("initial reflecting coefficients are not in the feasibility set")


def _rate_loop(ctx: _Ctx, P, theta, lam, opts: SolverOptions, optimize_theta: bool, trace: SolveTrace,
               stop_at: float | None = None):
    """Shared MWRM iteration; ``stop_at`` ends early once the objective reaches it."""
    set_tag = ctx.config.feasibility_set
    winv = ctx.per_term(_inv(lam))
    obj = _rate_key(ctx, P, theta, lam)
    trace.add(0, "init", obj, True)
    slack = opts.slack_init
    for it in range(1, opts.max_iter + 1):
        prev = obj
        t0 = time.perf_counter()
        P_new, _, _ = _cov_solve(ctx, P, theta, winv)
        obj_new = _rate_key(ctx, P_new, theta, lam)
        ok = obj_new >= obj
        if ok:
            P, obj = P_new, obj_new
        trace.add(it, "P", obj, ok, wall_ms=1e3 * (time.perf_counter() - t0))
        if optimize_theta:
            t0 = time.perf_counter()
            cand = _theta_solve(ctx, P, theta, set_tag, winv, slack=slack)
            ok = _accept(ctx, cand, theta, P, lam, "rate")
            if ok:
                theta = cand
                obj = _rate_key(ctx, P, theta, lam)
            trace.add(it, "theta", obj, ok, wall_ms=1e3 * (time.perf_counter() - t0))
            slack = max(opts.slack_min, slack / 2)
        if stop_at is not None and obj >= stop_at:
            trace.reason = "target"
            return P, theta
        if (obj - prev) / max(abs(prev), 1e-12) < opts.eps:
            trace.reason = "converged"
            return P, theta
    trace.reason = "max_iter"
    return P, theta


def mwrm_ao(
    P0: CovSet, theta0: ReflectState, channels: ChannelSet, config: NetworkConfig, *,
    options: SolverOptions | None = None, sic: bool | None = None, optimize_theta: bool = True,
    backend: ConicBackend | None = None,
) -> tuple[CovSet, ReflectState, SolveTrace]:
    """Maximize ``min lambda_lk r_lk`` by alternating covariance and reflection steps.

    With ``optimize_theta=False`` the coefficients stay at ``theta0`` (the
    random-phase and no-RIS baselines).
    """
    opts = options or SolverOptions()
    _check_start(config, P0, theta0)
    ctx = _Ctx(channels, config, sic, backend)
    trace = SolveTrace()
    try:
        P, theta = _rate_loop(ctx, P0.P, theta0, config.lam(), opts, optimize_theta, trace)
    except SolverError as exc:
        trace.reason = "solver_error"
        exc.trace = trace
        raise
    return CovSet(P, config.signaling), theta, trace


# ---------------------------------------------------------------------------
# Minimum weighted EE
# ---------------------------------------------------------------------------


@dataclass
class GDAResult:
    P: np.ndarray
    mu: list[float]
    e: list[float]
    converged: bool


def _gda(ctx: _Ctx, P, theta, lam, opts: SolverOptions) -> GDAResult:
    cfg = ctx.config
    L, U, n = ctx.L, ctx.U, ctx.n
    nb = n * n
    lam_t = ctx.per_term(lam)
    winv = ctx.per_term(_inv(lam))
    rth_t = ctx.per_term(cfg.rth())
    eye = np.eye(n).flatten(order="F")
    Dshape = np.zeros((len(ctx.terms), L * U * nb))
    for q, j in enumerate(ctx.owner):
        Dshape[q, j * nb:(j + 1) * nb] = cfg.eta * eye * winv[q]

    def surrogate_ee(surr, Pm):
        vals = surr.term_values(Pm)
        den = ctx.per_term(ctx.den(Pm))
        active = lam_t > 0
        return float((lam_t * vals / den)[active].min())

    surr = rate_lower_bounds_in_P(CovSet(P, ctx.mode()), theta, ctx.ch, cfg, noise=1.0, sic=ctx.sic)
    mu = surrogate_ee(surr, P)
    mus, es = [mu], []
    converged = False
    for _ in range(opts.gda_max_iter):
        ee = {"Dm": mu * Dshape, "dc": mu * cfg.P_c * winv, "rth": rth_t}
        sol = ctx.backend.solve_cov(surr, n, cfg.power(), winv, ctx.mode() == "PGS", ee=ee)
        P_new = feasible_covset(sol.x, cfg, ctx.mode()).P
        es.append(sol.value)
        mu_new = surrogate_ee(surr, P_new)
        if mu_new < mu:
            # solver round-off near the fixed point: keep the better iterate
            converged = True
            break
        P, mu = P_new, mu_new
        mus.append(mu)
        if sol.value <= opts.gda_tol:
            converged = True
            break
    return GDAResult(P, mus, es, converged)


def gda_cov_subproblem(
    anchor: CovSet, theta_fixed: ReflectState, channels: ChannelSet, config: NetworkConfig, *,
    options: SolverOptions | None = None, sic: bool | None = None, backend: ConicBackend | None = None,
) -> tuple[CovSet, GDAResult]:
    """Maximize the minimum weighted surrogate EE in the covariances under rate floors.

    The anchor must meet the rate floors (run :func:`restore_qos` first).
    ``result.mu[-1]`` is the surrogate minimum weighted EE of the returned point.
    """
    opts = options or SolverOptions()
    ctx = _Ctx(channels, config, sic, backend)
    r = ctx.rates(anchor.P, theta_fixed)
    if np.any(r < config.rth() - QOS_TOL):
        raise QoSInfeasibleError("anchor violates the rate floors", {"qos_slack": r - config.rth()})
    res = _gda(ctx, anchor.P, theta_fixed, config.lam(), opts)
    return CovSet(res.P, config.signaling), res


def restore_qos(
    P0: CovSet, theta0: ReflectState, channels: ChannelSet, config: NetworkConfig, *,
    options: SolverOptions | None = None, sic: bool | None = None, backend: ConicBackend | None = None,
) -> tuple[CovSet, ReflectState, SolveTrace]:
    """Find a point meeting the rate floors by maximizing ``min r_lk / r_th,lk``.

    Users without a floor are ignored.  Raises :class:`QoSInfeasibleError`
    if the floors are still violated when the rate iteration stops.
    """
    opts = options or SolverOptions()
    ctx = _Ctx(channels, config, sic, backend)
    rth = config.rth()
    trace = SolveTrace()
    if not np.any(rth > 0):
        trace.add(0, "init", float("inf"), True)
        trace.reason = "feasible"
        return P0, theta0, trace
    lam = _inv(rth)
    r = ctx.rates(P0.P, theta0)
    if np.all(r >= rth - QOS_TOL):
        trace.add(0, "init", _min_weighted(r, lam), True)
        trace.reason = "feasible"
        return P0, theta0, trace
    ro = SolverOptions(**{**opts.__dict__, "max_iter": opts.restore_max_iter, "eps": 0.0})
    P, theta = _rate_loop(ctx, P0.P, theta0, lam, ro, True, trace, stop_at=1.0)
    r = ctx.rates(P, theta)
    if np.any(r < rth - QOS_TOL):
        raise QoSInfeasibleError("rate floors could not be met", {"rates": r, "r_th": rth, "trace": trace})
    return CovSet(P, config.signaling), theta, trace


def mweem_ao(
    P0: CovSet, theta0: ReflectState, channels: ChannelSet, config: NetworkConfig, *,
    options: SolverOptions | None = None, sic: bool | None = None, optimize_theta: bool = True,
    backend: ConicBackend | None = None,
) -> tuple[CovSet, ReflectState, SolveTrace]:
    """Maximize ``min lambda_lk EE_lk`` subject to ``r_lk >= r_th,lk``."""
    opts = options or SolverOptions()
    _check_start(config, P0, theta0)
    ctx = _Ctx(channels, config, sic, backend)
    trace = SolveTrace()
    lam = config.lam()
    rth = config.rth()
    try:
        if np.any(rth > 0):
            P0, theta0, _ = restore_qos(P0, theta0, channels, config, options=opts, sic=sic, backend=ctx.backend)
        P, theta = P0.P, theta0
        set_tag = config.feasibility_set
        rth_t = ctx.per_term(rth)
        _, obj = _ee_key(ctx, P, theta, lam)
        trace.add(0, "init", obj, True)
        slack = opts.slack_init
        for it in range(1, opts.max_iter + 1):
            prev = obj
            t0 = time.perf_counter()
            res = _gda(ctx, P, theta, lam, opts)
            trace.mu.extend(res.mu)
            ok = _ee_key(ctx, res.P, theta, lam) >= _ee_key(ctx, P, theta, lam)
            if ok:
                P = res.P
                _, obj = _ee_key(ctx, P, theta, lam)
            trace.add(it, "P", obj, ok, mu=res.mu[-1], wall_ms=1e3 * (time.perf_counter() - t0))
            if optimize_theta:
                t0 = time.perf_counter()
                w = ctx.per_term(ctx.den(P) * _inv(lam))
                cand = _theta_solve(ctx, P, theta, set_tag, w, rth_terms=rth_t, slack=slack)
                ok = _accept(ctx, cand, theta, P, lam, "ee")
                if ok:
                    theta = cand
                    _, obj = _ee_key(ctx, P, theta, lam)
                trace.add(it, "theta", obj, ok, wall_ms=1e3 * (time.perf_counter() - t0))
                slack = max(opts.slack_min, slack / 2)
            if (obj - prev) / max(abs(prev), 1e-12) < opts.eps:
                trace.reason = "converged"
                break
        else:
            trace.reason = "max_iter"
    except SolverError as exc:
        trace.reason = "solver_error"
        exc.trace = trace
        raise
    return CovSet(P, config.signaling), theta, trace


def surrogate_min_weighted_ee(P: CovSet, anchor: CovSet, theta: ReflectState, channels: ChannelSet,
                              config: NetworkConfig, *, sic: bool | None = None) -> float:
    """Minimum weighted EE of the covariance surrogate anchored at ``anchor``, evaluated at ``P``."""
    ctx = _Ctx(channels, config, sic, _NoBackend())
    surr = rate_lower_bounds_in_P(anchor, theta, ctx.ch, config, noise=1.0, sic=ctx.sic)
    vals = surr.term_values(P.P)
    lam_t = ctx.per_term(config.lam())
    return float((lam_t * vals / ctx.per_term(ctx.den(P.P))).min())


__all__ = [
    "GDAResult",
    "QoSInfeasibleError",
    "SolveTrace",
    "SolverOptions",
    "TraceRow",
    "accept_theta_update",
    "gda_cov_subproblem",
    "initial_covariances",
    "mweem_ao",
    "mwrm_ao",
    "restore_qos",
    "solve_cov_subproblem",
    "solve_theta_subproblem",
    "surrogate_min_weighted_ee",
]
