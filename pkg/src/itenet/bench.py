"""Benchmark drivers and statistics.

Two studies run against the virtual fabric:

* the plug-and-play timing study — independent onboarding runs, per-state
  means with 95% confidence intervals, and the protocol-only subtotal;
* the response-time study — paced GET /id exchanges with success/failure
  accounting, histogramming, and GEV distribution fitting.

The GEV family follows the standard three-parameter form (location μ,
scale σ, shape k) with the sign convention that k > 0 is heavy-tailed:

    t(x) = (1 + k·(x−μ)/σ)^(−1/k)        (k ≠ 0; exp(−(x−μ)/σ) as k → 0)
    pdf(x) = t(x)^(k+1) · exp(−t(x)) / σ
    cdf(x) = exp(−t(x))

Fitting is maximum likelihood: a probability-weighted-moments estimate seeds
a derivative-free simplex search on the negative log-likelihood, with σ > 0
and the support constraint 1 + k·(x−μ)/σ > 0 enforced for every sample.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass
from typing import Any, Optional, Sequence

import numpy as np
from scipy import optimize, stats

from .netsim import OnboardResult, ProbeResult, ScenarioConfig, onboard_run, response_probe
from .node import PROTOCOL_STATES, NodeState, NodeTiming

REPORT_VERSION = 1
_K_GUMBEL = 1e-9  # |k| below this uses the k→0 (Gumbel) limit
_EULER_GAMMA = 0.5772156649015329


class BenchError(ValueError):
    pass


class FitConvergenceError(BenchError):
    """Optimizer ran out of iterations; carries the best iterate found."""

    def __init__(self, message: str, best: "GevParams"):
        super().__init__(message)
        self.best = best


@dataclass(frozen=True)
class GevParams:
    mu_ms: float
    sigma_ms: float
    k: float

    def __post_init__(self) -> None:
        if not (self.sigma_ms > 0):
            raise BenchError("GEV scale must be positive")

    def to_obj(self) -> dict:
        return {"mu_ms": self.mu_ms, "sigma_ms": self.sigma_ms, "k": self.k}

    @classmethod
    def from_obj(cls, obj: dict) -> "GevParams":
        return cls(float(obj["mu_ms"]), float(obj["sigma_ms"]), float(obj["k"]))


# -- GEV density / CDF / quantile / sampling --------------------------------------


def _reduced(x: float, params: GevParams) -> Optional[float]:
    """t(x) of the standard form; None when x is outside the support."""
    s = (x - params.mu_ms) / params.sigma_ms
    if abs(params.k) < _K_GUMBEL:
        return math.exp(-s)
    base = 1.0 + params.k * s
    if base <= 0.0:
        return None
    return base ** (-1.0 / params.k)


def gev_pdf(x: float, params: GevParams) -> float:
    t = _reduced(x, params)
    if t is None or t == 0.0:
        return 0.0
    try:
        return (t ** (params.k + 1.0)) * math.exp(-t) / params.sigma_ms
    except OverflowError:
        return 0.0


def gev_cdf(x: float, params: GevParams) -> float:
    t = _reduced(x, params)
    if t is None:
        # outside support: below a lower endpoint (k>0) the CDF is 0,
        # above an upper endpoint (k<0) it is 1
        return 0.0 if params.k > 0 else 1.0
    return math.exp(-t)


def gev_quantile(p: float, params: GevParams) -> float:
    if not (0.0 < p < 1.0):
        raise BenchError("quantile needs p in (0, 1)")
    if abs(params.k) < _K_GUMBEL:
        return params.mu_ms - params.sigma_ms * math.log(-math.log(p))
    return params.mu_ms + params.sigma_ms * ((-math.log(p)) ** (-params.k) - 1.0) / params.k


def sample_gev(params: GevParams, n: int, seed: Any = 0) -> list[float]:
    """Inverse-CDF sampling; the independent oracle for fit recovery."""
    rng = random.Random(seed) if not isinstance(seed, random.Random) else seed
    out = []
    for _ in range(n):
        u = rng.random()
        while u <= 0.0 or u >= 1.0:
            u = rng.random()
        out.append(gev_quantile(u, params))
    return out


# -- fitting ------------------------------------------------------------------------


def _pwm_initial_guess(xs: np.ndarray) -> GevParams:
    """Probability-weighted-moments estimate (Hosking's method).

    Hosking's shape parameter κ uses the opposite sign (κ > 0 bounded tail),
    so the result is negated into the k-heavy-tailed convention used here.
    """
    n = xs.size
    srt = np.sort(xs)
    j = np.arange(n, dtype=float)
    b0 = srt.mean()
    b1 = float((srt * j / (n - 1.0)).sum() / n)
    b2 = float((srt * j * (j - 1.0) / ((n - 1.0) * (n - 2.0))).sum() / n)
    c = (2.0 * b1 - b0) / (3.0 * b2 - b0) - math.log(2.0) / math.log(3.0)
    kappa = 7.8590 * c + 2.9554 * c * c
    if abs(kappa) < 1e-6:
        sigma = (2.0 * b1 - b0) / math.log(2.0)
        mu = b0 - _EULER_GAMMA * sigma
        k = 0.0
    else:
        gamma1k = math.gamma(1.0 + kappa)
        sigma = (2.0 * b1 - b0) * kappa / (gamma1k * (1.0 - 2.0 ** (-kappa)))
        mu = b0 + sigma * (gamma1k - 1.0) / kappa
        k = -kappa
    if not (sigma > 0) or not math.isfinite(sigma):
        sigma = float(np.std(xs, ddof=1)) or 1.0
        mu = float(b0)
        k = 0.0
    return GevParams(mu_ms=float(mu), sigma_ms=float(sigma), k=float(k))


def _gev_nll(theta: np.ndarray, xs: np.ndarray) -> float:
    mu, sigma, k = float(theta[0]), float(theta[1]), float(theta[2])
    if sigma <= 0 or not math.isfinite(sigma):
        return math.inf
    s = (xs - mu) / sigma
    n = xs.size
    if abs(k) < _K_GUMBEL:
        return n * math.log(sigma) + float(s.sum()) + float(np.exp(-s).sum())
    base = 1.0 + k * s
    if np.any(base <= 0.0):
        return math.inf  # support constraint violated for some sample
    log_base = np.log(base)
    return (
        n * math.log(sigma)
        + (1.0 + 1.0 / k) * float(log_base.sum())
        + float(np.exp(-log_base / k).sum())
    )


def fit_gev(samples: Sequence[float], max_iterations: int = 5000) -> GevParams:
    xs = np.asarray(list(samples), dtype=float)
    if xs.size and float(xs.max()) == float(xs.min()):
        raise BenchError("degenerate input: all samples are equal")
    if xs.size < 50:
        raise BenchError(f"need at least 50 samples to fit, got {xs.size}")
    guess = _pwm_initial_guess(xs)
    theta0 = np.array([guess.mu_ms, guess.sigma_ms, guess.k])
    if not math.isfinite(_gev_nll(theta0, xs)):
        # PWM guess outside the feasible region (support violated): fall back
        # to a Gumbel-shaped start, which covers every sample
        theta0 = np.array([float(xs.mean()), float(np.std(xs, ddof=1)) or 1.0, 0.0])
    result = optimize.minimize(
        _gev_nll,
        theta0,
        args=(xs,),
        method="Nelder-Mead",
        options={"maxiter": max_iterations, "maxfev": max_iterations, "xatol": 1e-6, "fatol": 1e-8},
    )
    best = GevParams(mu_ms=float(result.x[0]), sigma_ms=float(result.x[1]), k=float(result.x[2]))
    if not result.success:
        raise FitConvergenceError(
            f"GEV fit did not converge within {max_iterations} iterations", best
        )
    return best


# -- descriptive statistics -----------------------------------------------------------


def confidence_interval(samples: Sequence[float], level: float = 0.95) -> tuple[float, float]:
    xs = np.asarray(list(samples), dtype=float)
    if xs.size < 2:
        raise BenchError("confidence interval needs at least 2 samples")
    if not (0.0 < level < 1.0):
        raise BenchError("confidence level must lie in (0, 1)")
    mean = float(xs.mean())
    sd = float(xs.std(ddof=1))
    half = float(stats.t.ppf((1.0 + level) / 2.0, xs.size - 1)) * sd / math.sqrt(xs.size)
    return mean - half, mean + half


def build_histogram(samples: Sequence[float], bins: Any = "fd") -> tuple[list[float], list[int]]:
    """Histogram edges+counts; Freedman–Diaconis binning by default."""
    xs = np.asarray(list(samples), dtype=float)
    if xs.size == 0:
        return [], []
    if float(xs.max()) == float(xs.min()):
        v = float(xs[0])
        return [v, v + 1.0], [int(xs.size)]
    counts, edges = np.histogram(xs, bins=bins)
    return [float(e) for e in edges], [int(c) for c in counts]


# -- the plug-and-play timing study -----------------------------------------------------

STATE_ORDER = [s.value for s in NodeState]


@dataclass
class TimingSummary:
    scenario: str
    runs: int  # successful runs included in the statistics
    failed_runs: int
    per_state_mean_ms: dict[str, float]
    per_state_ci_ms: dict[str, Optional[tuple[float, float]]]
    total_mean_ms: float
    total_variance_ms2: float
    total_min_ms: float
    total_max_ms: float
    protocol_mean_ms: float
    protocol_ci_ms: Optional[tuple[float, float]]
    totals_ms: list[float]
    protocol_totals_ms: list[float]

    def to_obj(self) -> dict:
        per_state = {}
        for state in STATE_ORDER:
            ci = self.per_state_ci_ms.get(state)
            per_state[state] = {
                "mean_ms": self.per_state_mean_ms.get(state, 0.0),
                "ci_low_ms": None if ci is None else ci[0],
                "ci_high_ms": None if ci is None else ci[1],
            }
        return {
            "version": REPORT_VERSION,
            "kind": "pnp_timing",
            "scenario": self.scenario,
            "runs": self.runs,
            "failed_runs": self.failed_runs,
            "per_state": per_state,
            "total": {
                "mean_ms": self.total_mean_ms,
                "variance_ms2": self.total_variance_ms2,
                "min_ms": self.total_min_ms,
                "max_ms": self.total_max_ms,
            },
            "protocol_only": {
                "mean_ms": self.protocol_mean_ms,
                "ci_low_ms": None if self.protocol_ci_ms is None else self.protocol_ci_ms[0],
                "ci_high_ms": None if self.protocol_ci_ms is None else self.protocol_ci_ms[1],
            },
            "totals_ms": self.totals_ms,
            "protocol_totals_ms": self.protocol_totals_ms,
        }

    def to_tsv(self) -> str:
        lines = ["run_idx\ttotal_ms\tprotocol_ms"]
        for i, (total, proto) in enumerate(zip(self.totals_ms, self.protocol_totals_ms)):
            lines.append(f"{i}\t{total!r}\t{proto!r}")
        return "\n".join(lines) + "\n"


_PROTOCOL_STATE_VALUES = {s.value for s in PROTOCOL_STATES}


def _ci_or_none(values: Sequence[float], level: float = 0.95) -> Optional[tuple[float, float]]:
    if len(values) < 2:
        return None
    return confidence_interval(values, level)


def run_pnp_benchmark(
    scenario: ScenarioConfig,
    runs: int = 20,
    seed: Any = 0,
    node_timing: Optional[NodeTiming] = None,
    cap_ms: float = 60_000.0,
) -> TimingSummary:
    if runs < 1:
        raise BenchError("need at least one run")
    results: list[OnboardResult] = []
    for i in range(runs):
        results.append(
            onboard_run(scenario, seed=f"{seed}:run{i}", node_timing=node_timing, cap_ms=cap_ms)
        )
    good = [r for r in results if r.reached_listen]
    failed = len(results) - len(good)
    per_state_runs: dict[str, list[float]] = {s: [] for s in STATE_ORDER}
    totals, protos = [], []
    for r in good:
        sums = {s: 0.0 for s in STATE_ORDER}
        for state, duration in r.durations:
            sums[state.value] += duration
        for s in STATE_ORDER:
            per_state_runs[s].append(sums[s])
        totals.append(r.total_ms)
        protos.append(sum(sums[s] for s in _PROTOCOL_STATE_VALUES))
    if not good:
        raise BenchError(f"no run reached Listen within {cap_ms} ms")
    return TimingSummary(
        scenario=scenario.label,
        runs=len(good),
        failed_runs=failed,
        per_state_mean_ms={s: float(np.mean(v)) for s, v in per_state_runs.items()},
        per_state_ci_ms={s: _ci_or_none(v) for s, v in per_state_runs.items()},
        total_mean_ms=float(np.mean(totals)),
        total_variance_ms2=float(np.var(totals, ddof=1)) if len(totals) > 1 else 0.0,
        total_min_ms=float(np.min(totals)),
        total_max_ms=float(np.max(totals)),
        protocol_mean_ms=float(np.mean(protos)),
        protocol_ci_ms=_ci_or_none(protos),
        totals_ms=[float(t) for t in totals],
        protocol_totals_ms=[float(p) for p in protos],
    )


# -- the response-time study --------------------------------------------------------------


@dataclass
class ResponseBenchReport:
    scenario: str
    requests: int
    gap_ms: float
    timeout_ms: float
    success_count: int
    failure_count: int
    failure_ratio: float
    min_ms: Optional[float]
    max_ms: Optional[float]
    mean_ms: Optional[float]
    valued_mean_ms: float  # failures valued at the timeout; degradation metric
    histogram_edges: list[float]
    histogram_counts: list[int]
    gev: Optional[GevParams]
    exchange_bytes: int
    rtts_ms: list[float]
    oks: list[bool]

    def to_obj(self) -> dict:
        return {
            "version": REPORT_VERSION,
            "kind": "response_bench",
            "scenario": self.scenario,
            "requests": self.requests,
            "gap_ms": self.gap_ms,
            "timeout_ms": self.timeout_ms,
            "success_count": self.success_count,
            "failure_count": self.failure_count,
            "failure_ratio": self.failure_ratio,
            "min_ms": self.min_ms,
            "max_ms": self.max_ms,
            "mean_ms": self.mean_ms,
            "valued_mean_ms": self.valued_mean_ms,
            "histogram": {"edges": self.histogram_edges, "counts": self.histogram_counts},
            "gev": None if self.gev is None else self.gev.to_obj(),
            "exchange_bytes": self.exchange_bytes,
        }

    def to_tsv(self) -> str:
        lines = ["sample_idx\trtt_ms\tok"]
        for i, (rtt, ok) in enumerate(zip(self.rtts_ms, self.oks)):
            lines.append(f"{i}\t{rtt!r}\t{int(ok)}")
        return "\n".join(lines) + "\n"


def run_response_benchmark(
    scenario: ScenarioConfig,
    requests: int = 1000,
    gap_ms: float = 25.0,
    seed: Any = 0,
    timeout_ms: float = 2000.0,
    node_timing: Optional[NodeTiming] = None,
    fit: bool = True,
) -> ResponseBenchReport:
    if requests < 1:
        raise BenchError("need at least one request")
    probe: ProbeResult = response_probe(
        scenario,
        requests=requests,
        gap_ms=gap_ms,
        seed=seed,
        timeout_ms=timeout_ms,
        node_timing=node_timing,
    )
    ok_rtts = [s.rtt_ms for s in probe.samples if s.ok]
    all_valued = [min(s.rtt_ms, timeout_ms) if s.ok else timeout_ms for s in probe.samples]
    success = len(ok_rtts)
    failure = len(probe.samples) - success
    edges, counts = build_histogram(ok_rtts) if ok_rtts else ([], [])
    gev = None
    if fit and success >= 50 and max(ok_rtts) > min(ok_rtts):
        try:
            gev = fit_gev(ok_rtts)
        except FitConvergenceError as err:
            gev = err.best
    return ResponseBenchReport(
        scenario=scenario.label,
        requests=requests,
        gap_ms=gap_ms,
        timeout_ms=timeout_ms,
        success_count=success,
        failure_count=failure,
        failure_ratio=failure / len(probe.samples),
        min_ms=min(ok_rtts) if ok_rtts else None,
        max_ms=max(ok_rtts) if ok_rtts else None,
        mean_ms=float(np.mean(ok_rtts)) if ok_rtts else None,
        valued_mean_ms=float(np.mean(all_valued)),
        histogram_edges=edges,
        histogram_counts=counts,
        gev=gev,
        exchange_bytes=probe.exchange_bytes,
        rtts_ms=[s.rtt_ms for s in probe.samples],
        oks=[s.ok for s in probe.samples],
    )


def load_samples_file(path) -> list[float]:
    """One float per line; blank lines ignored."""
    out = []
    for line_no, line in enumerate(open(path, "r", encoding="utf-8"), 1):
        text = line.strip()
        if not text:
            continue
        try:
            out.append(float(text))
        except ValueError as err:
            raise BenchError(f"{path}:{line_no}: not a number: {text!r}") from err
    return out


def report_json(obj: dict) -> str:
    """Canonical report rendering: key-sorted, newline-terminated."""
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"
