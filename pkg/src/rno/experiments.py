"""Monte Carlo harness: baseline schemes, scenarios and paired sweeps.

Scheme names follow the pattern ``<signal>R_<set><access>`` for RIS-assisted
schemes and ``<signal><access>`` without RIS:

* signal: ``I`` improper (IGS) or ``P`` proper (PGS) signaling;
* set: ``U``, ``I``, ``C`` optimized coefficients in that feasibility set,
  or ``R`` random unit-modulus coefficients kept fixed;
* access: ``N`` NOMA with SIC, ``T`` treating interference as noise.

So ``IR_IN`` is IGS + NOMA with unit-modulus optimized RIS and ``PN`` is PGS
+ NOMA without RIS.  An optional ``-EE`` / ``-RATE`` suffix fixes the objective
of a single scheme; the reported metric is always the scenario's, so
``IR_IN-RATE`` under ``metric: ee`` reports the EE of the rate-optimal point.

Within a trial every scheme sees the same topology, channel realization and
initial point (paired comparison).
"""

from __future__ import annotations

import csv
import io
import math
import re
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from .backend import SolverError
from .channel import make_rng, sample_channels, sample_topology
from .model import ChannelSet, CovSet, InvalidInputError, NetworkConfig, RateReport, ReflectState, RNOError
from .rates import evaluate
from .ris import random_reflect_state
from .solvers import QoSInfeasibleError, SolverOptions, SolveTrace, initial_covariances, mweem_ao, mwrm_ao

STREAM_INIT = 2

Metric = Literal["rate", "ee"]
SweepVar = Literal["power", "N_BS", "K", "N_RIS", "pc"]

RESULT_FIELDS = (
    "scenario_id", "sweep_var", "sweep_value", "scheme", "metric",
    "mean", "stderr", "n_trials", "mean_iters", "mean_wall_ms",
)
TRACE_FIELDS = ("sweep_value", "scheme", "trial", "iter", "phase", "objective", "accepted", "mu", "wall_ms")

_SCHEME_RE = re.compile(r"^(?P<sig>[IP])(?:R_?(?P<set>[UICR]))?(?P<acc>[NT])(?:-(?P<metric>EE|RATE))?$")


# ---------------------------------------------------------------------------
# Schemes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Scheme:
    name: str
    signaling: Literal["IGS", "PGS"]
    ris: Literal["optimized", "random", "none"]
    feasibility_set: Literal["U", "I", "C"]
    sic: bool
    metric: Metric | None = None


def parse_scheme(name: str) -> Scheme:
    m = _SCHEME_RE.match(name.strip().upper())
    if m is None:
        raise InvalidInputError(f"unknown scheme {name!r}")
    tag = m["set"]
    ris = "none" if tag is None else ("random" if tag == "R" else "optimized")
    return Scheme(
        name=name.strip(),
        signaling="IGS" if m["sig"] == "I" else "PGS",
        ris=ris,
        feasibility_set="I" if tag in (None, "R") else tag,
        sic=m["acc"] == "N",
        metric=None if m["metric"] is None else m["metric"].lower(),
    )


def scheme_name(signaling: str, ris: str, feasibility_set: str, sic: bool, metric: str | None = None) -> str:
    sig = "I" if signaling.upper() == "IGS" else "P"
    acc = "N" if sic else "T"
    mid = {"none": "", "random": "R_R"}.get(ris, f"R_{feasibility_set}")
    return sig + mid + acc + ("" if metric is None else f"-{metric.upper()}")


def override_scheme(name: str, *, feasibility_set=None, signaling=None, sic=None) -> str:
    """Rewrite the letters of ``name`` selected by the given overrides."""
    s = parse_scheme(name)
    return scheme_name(
        signaling or s.signaling,
        s.ris,
        feasibility_set if feasibility_set and s.ris == "optimized" else s.feasibility_set,
        s.sic if sic is None else sic,
        s.metric,
    )


# ---------------------------------------------------------------------------
# Scenario
# ---------------------------------------------------------------------------


class SolverSettings(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    eps: float = Field(1e-3, gt=0.0)
    max_iter: int = Field(25, ge=1)
    gda_max_iter: int = Field(20, ge=1)
    gda_tol: float = Field(1e-5, gt=0.0)

    def options(self) -> SolverOptions:
        return SolverOptions(eps=self.eps, max_iter=self.max_iter, gda_max_iter=self.gda_max_iter,
                             gda_tol=self.gda_tol)


class Sweep(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    var: SweepVar
    grid: list[float] = Field(min_length=1)


class Scenario(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    id: str = "scenario"
    network: NetworkConfig = Field(default_factory=NetworkConfig)
    trials: int = Field(20, ge=1)
    seed_base: int = Field(0, ge=0)
    metric: Metric = "rate"
    schemes: list[str] = Field(default_factory=list)
    sweep: Sweep | None = None
    solver: SolverSettings = Field(default_factory=SolverSettings)

    @field_validator("schemes")
    @classmethod
    def _known(cls, v):
        for name in v:
            parse_scheme(name)
        return v

    def scheme_list(self) -> list[str]:
        if self.schemes:
            return list(self.schemes)
        n = self.network
        return [scheme_name(n.signaling, "optimized", n.feasibility_set, n.sic_enabled)]

    def grid(self) -> list[float | None]:
        return [None] if self.sweep is None else list(self.sweep.grid)


def apply_sweep(config: NetworkConfig, var: str | None, value) -> NetworkConfig:
    if var is None or value is None:
        return config
    if var == "power":
        return config.with_(p=float(value))
    if var == "pc":
        return config.with_(P_c=float(value))
    if var in ("N_BS", "K", "N_RIS"):
        if float(value) != int(value) or value < 1:
            raise InvalidInputError(f"{var} must be a positive integer, got {value}")
        return config.with_(**{var: int(value)})
    raise InvalidInputError(f"unknown sweep variable {var!r}")


# ---------------------------------------------------------------------------
# One scheme on one channel
# ---------------------------------------------------------------------------


@dataclass
class SchemeResult:
    scheme: str
    metric: Metric
    value: float
    report: RateReport
    covs: CovSet
    theta: ReflectState
    trace: SolveTrace
    wall_ms: float

    @property
    def iters(self) -> int:
        return self.trace.n_iter


def scheme_config(scheme: Scheme, config: NetworkConfig) -> NetworkConfig:
    return config.with_(signaling=scheme.signaling, sic_enabled=scheme.sic, feasibility_set=scheme.feasibility_set)


def run_scheme(
    scheme: str | Scheme, channels: ChannelSet, config: NetworkConfig, seed, *,
    metric: Metric = "rate", options: SolverOptions | None = None,
) -> SchemeResult:
    """Optimize one scheme on one channel realization.

    ``seed`` fixes the initial point; equal seeds give every scheme the same
    random draws (the PGS start is the proper part of the IGS start).
    """
    s = parse_scheme(scheme) if isinstance(scheme, str) else scheme
    objective = s.metric or metric
    cfg = scheme_config(s, config)
    ch = channels.without_ris() if s.ris == "none" else channels
    rng = make_rng(seed, STREAM_INIT)
    P0 = initial_covariances(cfg, rng)
    theta0 = random_reflect_state((cfg.M, cfg.N_RIS), cfg.feasibility_set, rng, cfg.tc_params)
    run = mwrm_ao if objective == "rate" else mweem_ao
    t0 = time.perf_counter()
    P, theta, trace = run(P0, theta0, ch, cfg, options=options, optimize_theta=s.ris == "optimized")
    wall = 1e3 * (time.perf_counter() - t0)
    report = evaluate(ch, theta, P, cfg)
    value = report.min_weighted_rate if metric == "rate" else report.min_weighted_ee
    return SchemeResult(s.name, metric, value, report, P, theta, trace, wall)


def trial_channels(config: NetworkConfig, seed) -> ChannelSet:
    return sample_channels(sample_topology(config, seed), config, seed)


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------


@dataclass
class TrialOutcome:
    point: int
    trial: int
    results: dict[str, tuple[float, int, float, str]] | None  # scheme -> (value, iters, wall_ms, trace csv)
    error: str = ""


def _run_trial(scenario: Scenario, point: int, trial: int) -> TrialOutcome:
    value = scenario.grid()[point]
    var = None if scenario.sweep is None else scenario.sweep.var
    cfg = apply_sweep(scenario.network, var, value)
    seed = (scenario.seed_base, trial)
    channels = trial_channels(cfg, seed)
    opts = scenario.solver.options()
    out = {}
    for name in scenario.scheme_list():
        try:
            res = run_scheme(name, channels, cfg, seed, metric=scenario.metric, options=opts)
        except (SolverError, QoSInfeasibleError, RNOError, ArithmeticError) as exc:
            return TrialOutcome(point, trial, None, f"{name}: {type(exc).__name__}: {exc}")
        out[name] = (res.value, res.iters, res.wall_ms, res.trace.to_csv())
    return TrialOutcome(point, trial, out)


def _run_trial_args(args):
    return _run_trial(*args)


@dataclass
class SweepResult:
    rows: list[dict]
    traces: dict[str, list[dict]]
    dropped: int
    errors: list[str] = field(default_factory=list)
    values: dict = field(default_factory=dict)  # (point, scheme) -> per-trial values in trial order


def run_sweep(scenario: Scenario, jobs: int = 1) -> SweepResult:
    """Mean and standard error of the scenario metric per grid point and scheme.

    Trials ``0 .. trials-1`` draw topology and channels from
    ``(seed_base, trial)``.  A trial failing in any scheme is dropped for all
    schemes of that grid point.
    """
    grid = scenario.grid()
    tasks = [(scenario, p, t) for p in range(len(grid)) for t in range(scenario.trials)]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_run_trial_args, tasks))
    else:
        outcomes = [_run_trial(*t) for t in tasks]
    outcomes.sort(key=lambda o: (o.point, o.trial))

    schemes = scenario.scheme_list()
    var = "" if scenario.sweep is None else scenario.sweep.var
    rows, errors, values = [], [], {}
    traces: dict[str, list[dict]] = {s: [] for s in schemes}
    dropped = 0
    for p, value in enumerate(grid):
        ok = [o for o in outcomes if o.point == p and o.results is not None]
        bad = [o for o in outcomes if o.point == p and o.results is None]
        dropped += len(bad)
        errors += [f"point {p} trial {o.trial}: {o.error}" for o in bad]
        for s in schemes:
            metric = scenario.metric
            vals = np.array([o.results[s][0] for o in ok])
            values[(p, s)] = vals
            n = len(vals)
            rows.append({
                "scenario_id": scenario.id,
                "sweep_var": var,
                "sweep_value": "" if value is None else value,
                "scheme": s,
                "metric": metric,
                "mean": float(vals.mean()) if n else math.nan,
                "stderr": float(vals.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0,
                "n_trials": n,
                "mean_iters": float(np.mean([o.results[s][1] for o in ok])) if n else math.nan,
                "mean_wall_ms": float(np.mean([o.results[s][2] for o in ok])) if n else math.nan,
            })
            for o in ok:
                for tr in csv.DictReader(io.StringIO(o.results[s][3])):
                    traces[s].append({"sweep_value": "" if value is None else value, "scheme": s,
                                      "trial": o.trial, **tr})
    return SweepResult(rows, traces, dropped, errors, values)


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def results_csv(rows: list[dict], timing: bool = True) -> str:
    """CSV text with the fixed result header.

    With ``timing=False`` the wall-clock column is written as 0 so reruns are
    byte-identical.
    """
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_FIELDS)
    for r in rows:
        r = dict(r)
        if not timing:
            r["mean_wall_ms"] = 0.0
        w.writerow([_fmt(r[k]) for k in RESULT_FIELDS])
    return buf.getvalue()


def traces_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=TRACE_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: _fmt(r[k]) for k in TRACE_FIELDS})
    return buf.getvalue()
