"""HMC engine and the tune / burn-in / production pipeline.

Tuning adjusts a Verlet step until the acceptance rate sits near the
target. Burn-in keeps that step and collects the acceptance rate and
curvature information. From these the pipeline derives a fitting factor and
a stability limit. Production then runs the requested integrator with
randomized step sizes and trajectory lengths; the adaptive schemes look up
their coefficient for each drawn step.
"""

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional

import numpy as np

from . import adapt
from .adapt import BOptTable, FittingResult
from .diagnostics import DiagnosticsReport, efficiency_summary
from .integrator import (DEFAULT_DIVERGENCE_CAP, SCHEME_COEFFICIENTS, SplittingScheme)
from .model import (FrequencySummary, TargetModel, frequencies_from_hessians,
                    max_frequency_power_iteration)

logger = logging.getLogger(__name__)

__all__ = [
    "StepRandomization", "HmcConfig", "ChainRecord", "PipelineState", "Transition",
    "TuningResult", "BurnInResult", "PipelineError", "INTEGRATOR_LABELS", "stages_of",
    "make_rng", "hmc_iteration", "tune_step_size", "burn_in", "adapt_from_burn_in",
    "production", "start_points", "run_pipeline", "warm_up", "nominal_step",
    "trajectory_length", "load_config", "config_from_mapping",
    "write_trace", "read_trace", "TRACE_VERSION",
]

INTEGRATOR_LABELS = ("VV", "VV2", "VV3", "BCSS2", "BCSS3", "ME2", "ME3",
                     "AIA2", "sAIA2", "sAIA3")
TRACE_VERSION = 1


class PipelineError(RuntimeError):
    """A pipeline stage could not produce usable statistics."""


def stages_of(label):
    if label in SCHEME_COEFFICIENTS:
        return SCHEME_COEFFICIENTS[label][0]
    if label in ("AIA2", "sAIA2"):
        return 2
    if label == "sAIA3":
        return 3
    raise ValueError(f"unknown integrator {label!r}")


def make_rng(seed, *stream):
    """Generator for the stream identified by ``(seed, *stream)``."""
    return np.random.default_rng([int(seed), *map(int, stream)])


# --------------------------------------------------------------------------
# Configuration
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class StepRandomization:
    """Per-iteration randomization of production step sizes and lengths.

    Each iteration draws its step uniformly between the nominal step and the
    nominal step plus ``dt_frac`` times the k-stage stability limit.
    """

    grid_points: int = 20
    dt_frac: float = -1.0 / 20.0
    per_iteration_L: bool = True

    def __post_init__(self):
        if self.grid_points < 1:
            raise ValueError("grid_points must be >= 1")
        if not abs(self.dt_frac) < 1.0:
            raise ValueError("|dt_frac| must be < 1")


@dataclass(frozen=True)
class HmcConfig:
    n_tune: int = 10_000
    n_burnin: int = 5_000
    n_pr: int = 5_000
    n_check: int = 200
    alpha_target: float = 0.92
    epsilon: float = 0.01
    dt_tune: Optional[float] = None
    seed: int = 0
    tau: float = 1.0
    k: int = 3
    i_omega: bool = False
    randomization: StepRandomization = field(default_factory=StepRandomization)
    integrator: Optional[str] = None
    step: Optional[float] = None
    step_fraction: float = 0.5
    n_chains: int = 4
    overdispersion: float = 2.0
    hessian_stride: Optional[int] = None
    max_hessian_samples: int = 500
    power_iteration_states: int = 10
    s_threshold: float = 2.0
    sigma_threshold: float = 1.0
    divergence_cap: float = DEFAULT_DIVERGENCE_CAP
    n_grid_table: int = 2000

    def __post_init__(self):
        for name in ("n_tune", "n_burnin", "n_pr", "n_check", "n_chains"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not 0.0 < self.alpha_target < 1.0:
            raise ValueError("alpha_target must lie in (0, 1)")
        if not self.epsilon > 0.0:
            raise ValueError("epsilon must be positive")
        if self.k not in (1, 2, 3):
            raise ValueError("k must be 1, 2 or 3")
        if not self.tau > 0.0:
            raise ValueError("tau must be positive")
        if self.integrator is not None:
            stages_of(self.integrator)

    @property
    def label(self):
        if self.integrator is not None:
            return self.integrator
        return "VV" if self.k == 1 else f"sAIA{self.k}"

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


_RANDOMIZATION_KEYS = {f.name for f in dataclasses.fields(StepRandomization)}


def _coerce(value, annotation):
    text = str(value).strip()
    ann = str(annotation)
    if text.lower() in ("none", "") and "Optional" in ann:
        return None
    if "bool" in ann:
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if "int" in ann and "float" not in ann:
        return int(text)
    if "float" in ann:
        num, _, den = text.partition("/")
        return float(num) / float(den) if den else float(num)
    return text


def config_from_mapping(mapping, base: Optional[HmcConfig] = None) -> HmcConfig:
    """Build an :class:`HmcConfig` from string values keyed by field name.

    Randomization fields (``grid_points``, ``dt_frac``, ``per_iteration_L``)
    may appear at top level. Fractions such as ``-1/20`` are accepted.
    """
    base = HmcConfig() if base is None else base
    hints = {f.name: f.type for f in dataclasses.fields(HmcConfig)}
    rhints = {f.name: f.type for f in dataclasses.fields(StepRandomization)}
    top, rand = {}, {}
    for key, value in mapping.items():
        if key in _RANDOMIZATION_KEYS:
            rand[key] = _coerce(value, rhints[key])
        elif key in hints and key != "randomization":
            top[key] = _coerce(value, hints[key])
        else:
            raise ValueError(f"unknown configuration key {key!r}")
    if rand:
        top["randomization"] = dataclasses.replace(base.randomization, **rand)
    return dataclasses.replace(base, **top)


def load_config(path):
    """Parse a flat ``key = value`` file; ``#`` starts a comment."""
    values = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            values[key.strip()] = value.strip()
    return values


# --------------------------------------------------------------------------
# Single iteration
# --------------------------------------------------------------------------

class Transition(NamedTuple):
    theta: np.ndarray
    potential: float
    accepted: bool
    delta_h: float
    divergent: bool
    n_grad: int


def hmc_iteration(model: TargetModel, scheme: SplittingScheme, theta, h, L, rng,
                  potential=None, divergence_cap=DEFAULT_DIVERGENCE_CAP) -> Transition:
    """One HMC transition: fresh momentum, one leg, Metropolis test.

    ``potential`` may pass the cached U(theta). The uniform variate is drawn
    even for divergent legs so the random stream does not depend on outcomes.
    """
    theta = np.asarray(theta, dtype=float)
    u0 = model.potential(theta) if potential is None else potential
    p = rng.standard_normal(model.dimension)
    h0 = u0 + 0.5 * float(np.dot(p, p))
    theta1, p1, n_grad = model.integrate(theta, p, scheme.kicks, scheme.drifts, h, L)
    with np.errstate(all="ignore"):
        if np.all(np.isfinite(theta1)) and np.all(np.isfinite(p1)):
            u1 = model.potential(theta1)
            dH = u1 + 0.5 * float(np.dot(p1, p1)) - h0
        else:
            u1, dH = math.inf, math.inf
    divergent = not math.isfinite(dH) or abs(dH) > divergence_cap
    u = rng.random()
    accepted = (not divergent) and (dH <= 0.0 or u < math.exp(-dH))
    if accepted:
        return Transition(theta1, u1, True, dH, False, n_grad)
    return Transition(theta, u0, False, dH, divergent, n_grad)


_VV = SplittingScheme(1, label="VV")


# --------------------------------------------------------------------------
# Tuning and burn-in
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class TuningResult:
    dt_vv: float
    theta: np.ndarray
    ar: float
    n_iterations: int
    history: tuple


def tune_step_size(model: TargetModel, config: HmcConfig, rng, theta0=None) -> TuningResult:
    """Window-based Verlet step tuning towards ``alpha_target``.

    Starts at dt = 1/D with increment ``dt_tune`` (default dt/10). After each
    window of ``n_check`` iterations the acceptance rate accumulated since the
    last change is compared with ``alpha_target +/- epsilon``; the step moves
    by one increment if it is outside and the counters restart. The
    increment halves whenever the direction of change flips or a decrease
    would make the step non-positive.
    """
    dt = 1.0 / model.dimension
    delta = dt / 10.0 if config.dt_tune is None else float(config.dt_tune)
    theta = np.zeros(model.dimension) if theta0 is None else np.array(theta0, dtype=float)
    u = model.potential(theta)
    n = n_acc = n_tot = 0
    last_dir = 0
    history = []
    while n_tot + config.n_check < config.n_tune or n_tot == 0:
        for _ in range(config.n_check):
            t = hmc_iteration(model, _VV, theta, dt, 1, rng, u, config.divergence_cap)
            theta, u = t.theta, t.potential
            n_acc += t.accepted
        n += config.n_check
        n_tot += config.n_check
        ar = n_acc / n
        history.append((n_tot, dt, ar))
        if ar < config.alpha_target - config.epsilon:
            direction = -1
        elif ar > config.alpha_target + config.epsilon:
            direction = 1
        else:
            continue
        if last_dir and direction != last_dir:
            delta /= 2.0
        while dt + direction * delta <= 0.0:
            delta /= 2.0
        dt += direction * delta
        last_dir = direction
        n = n_acc = 0
    ar = n_acc / n if n else history[-1][2]
    return TuningResult(dt, theta, ar, n_tot, tuple(history))


@dataclass
class BurnInResult:
    """Burn-in chain summary with lazily evaluated curvature information."""

    model: TargetModel
    dt_vv: float
    ar: float
    theta: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    states: List[np.ndarray]
    config: HmcConfig
    n_grad: int
    _full: Optional[FrequencySummary] = None
    _max_only: Optional[FrequencySummary] = None

    def _constant_spectrum(self):
        m = self.model
        return m.has_analytic_hessian and m.hessian_is_constant

    def max_frequency(self) -> FrequencySummary:
        """Largest frequency, from power iteration unless the Hessian is constant."""
        if self._constant_spectrum():
            return self.frequencies()
        if self._max_only is None:
            count = min(self.config.power_iteration_states, len(self.states))
            idx = np.unique(np.linspace(0, len(self.states) - 1, count).round().astype(int))
            omegas = [max_frequency_power_iteration(self.model, self.states[i], seed=j)
                      for j, i in enumerate(idx)]
            self._max_only = FrequencySummary(float(np.mean(omegas)),
                                              source="power_iteration_max_only")
        return self._max_only

    def frequencies(self) -> FrequencySummary:
        """Full averaged spectrum; Hessians are evaluated on first use."""
        if self._full is None:
            if self._constant_spectrum():
                samples = [self.model.hessian(self.theta)]
            elif self.model.has_analytic_hessian:
                cap = self.config.max_hessian_samples
                idx = np.unique(np.linspace(0, len(self.states) - 1,
                                            min(cap, len(self.states))).round().astype(int))
                samples = (self.model.hessian(self.states[i]) for i in idx)
            else:
                raise PipelineError("frequency modes need an analytic Hessian")
            self._full = frequencies_from_hessians(samples)
        return self._full


def burn_in(model: TargetModel, dt_vv, config: HmcConfig, rng, theta0) -> BurnInResult:
    """Verlet (L = 1) burn-in at the tuned step, keeping thinned accepted states."""
    stride = config.hessian_stride
    if stride is None:
        stride = 1 if model.dimension <= 200 else 10
    theta = np.array(theta0, dtype=float)
    u = model.potential(theta)
    n_acc = n_grad = 0
    states = []
    s1 = np.zeros(model.dimension)
    s2 = np.zeros(model.dimension)
    half = config.n_burnin // 2
    for i in range(config.n_burnin):
        t = hmc_iteration(model, _VV, theta, dt_vv, 1, rng, u, config.divergence_cap)
        theta, u = t.theta, t.potential
        n_grad += t.n_grad
        if t.accepted:
            n_acc += 1
            if n_acc % stride == 0:
                states.append(theta)
        if i >= half:
            s1 += theta
            s2 += theta * theta
    if n_acc == 0:
        raise PipelineError(f"no proposal accepted during burn-in at dt={dt_vv:.4g}")
    count = config.n_burnin - half
    mean = s1 / count
    std = np.sqrt(np.maximum(s2 / count - mean * mean, 0.0))
    if not states:
        states.append(theta)
    return BurnInResult(model, float(dt_vv), n_acc / config.n_burnin, theta, mean, std,
                        states, config, n_grad)


# --------------------------------------------------------------------------
# Adaptation and production
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class PipelineState:
    """What production needs from tuning and burn-in."""

    dt_vv: float
    fitting: FittingResult
    freqs: FrequencySummary
    theta: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    n_grad_warmup: int = 0

    @property
    def ar(self):
        return self.fitting.AR_burnin

    @property
    def mode(self):
        return self.fitting.mode

    @property
    def S(self):
        return self.fitting.S

    @property
    def S_omega(self):
        return self.fitting.S_omega

    @property
    def omega_max(self):
        return self.freqs.omega_max

    @property
    def sigma(self):
        return self.freqs.sigma

    def stability_limit(self, k=1):
        """Dimensional stability limit of a k-stage step."""
        return k * self.fitting.SL

    def hbar(self, dt):
        return adapt.nondimensionalize(dt, self.fitting, self.freqs)

    def preamble(self):
        """Scale summary as ordered ``(name, value)`` pairs."""
        return [("D", self.fitting.D), ("dt_VV", self.dt_vv), ("AR_burnin", self.ar),
                ("mode", self.mode), ("S", self.S), ("S_omega", self.S_omega),
                ("omega_max", self.omega_max), ("sigma", self.sigma),
                ("dt_SL", self.fitting.SL), ("sigma_fallback", self.fitting.sigma_fallback)]


def adapt_from_burn_in(model: TargetModel, burn: BurnInResult, config: HmcConfig,
                       n_grad_warmup=0) -> PipelineState:
    """Fitting factor, nondimensionalization mode and stability limit."""
    freqs = burn.max_frequency()
    fit = adapt.fitting_factors(burn.ar, burn.dt_vv, model.dimension, freqs)
    if config.i_omega or fit.S > config.s_threshold:
        full = burn.frequencies()
        fit_omega = adapt.fitting_factors(burn.ar, burn.dt_vv, model.dimension, full,
                                          want_omega_mode=True)
        fit = dataclasses.replace(fit, S_omega=fit_omega.S_omega)
        freqs = full
        mode = adapt.select_mode(config.i_omega, fit.S, full.sigma,
                                 config.s_threshold, config.sigma_threshold)
    else:
        mode = adapt.S_PLAIN
    fit = adapt.with_mode(fit, mode, 1, freqs)
    return PipelineState(burn.dt_vv, fit, freqs, burn.theta, burn.mean, burn.std,
                         n_grad_warmup)


@dataclass
class ChainRecord:
    """Production chain with everything needed to recompute its metrics."""

    label: str
    k: int
    step: float
    l_bar: int
    samples: np.ndarray
    accepted: np.ndarray
    delta_h: np.ndarray
    dt: np.ndarray
    L: np.ndarray
    b: np.ndarray
    grad_evals: int
    divergent: int = 0
    clamped: int = 0

    @property
    def acceptance_rate(self):
        return float(np.mean(self.accepted))


def trajectory_length(state: PipelineState, step, tau):
    """Mean number of steps from l_bar * h_bar = tau * D (at least one)."""
    hbar = state.hbar(step)
    return max(1, int(round(tau * state.fitting.D / hbar)))


def production(model: TargetModel, state: PipelineState, label, step, config: HmcConfig,
               rng, table: Optional[BOptTable] = None, theta0=None) -> ChainRecord:
    """Run ``config.n_pr`` iterations of ``label`` around nominal step ``step``.

    ``step`` is the dimensional size of one k-stage step. The adaptive
    labels need a table for their k; AIA2 fixes its coefficient from the
    nominal step.
    """
    k = stages_of(label)
    adaptive = label.startswith("sAIA")
    if adaptive and (table is None or table.k != k):
        raise ValueError(f"{label} needs a coefficient table for k={k}")
    if label == "AIA2":
        b_aia = adapt.aia_coefficient(state.omega_max, step)
        if not math.isfinite(b_aia):
            raise PipelineError(f"AIA2: no stable two-stage scheme at step {step:.4g}")
        fixed = SplittingScheme(2, b_aia, label=label)
    elif not adaptive:
        fixed = SplittingScheme.named(label)
    rnd = config.randomization
    l_bar = trajectory_length(state, step, config.tau)
    width = rnd.dt_frac * state.stability_limit(k)
    lo, hi = sorted((step, step + width))
    cap = config.divergence_cap

    n = config.n_pr
    D = model.dimension
    samples = np.empty((n, D))
    accepted = np.zeros(n, dtype=bool)
    delta_h = np.empty(n)
    dts = np.empty(n)
    Ls = np.empty(n, dtype=np.int64)
    bs = np.empty(n)
    grad_evals = n_div = n_clamped = 0
    theta = np.array(state.theta if theta0 is None else theta0, dtype=float)
    u = model.potential(theta)
    for i in range(n):
        dt = rng.uniform(lo, hi) if hi > lo else step
        while dt <= 0.0:
            dt = rng.uniform(lo, hi)
        L = int(rng.integers(1, 2 * l_bar)) if rnd.per_iteration_L else l_bar
        if adaptive:
            b, a, clamped = table.lookup(state.hbar(dt))
            n_clamped += clamped
            scheme = SplittingScheme(k, b, a, label)
        else:
            scheme = fixed
        t = hmc_iteration(model, scheme, theta, dt, L, rng, u, cap)
        theta, u = t.theta, t.potential
        samples[i] = theta
        accepted[i] = t.accepted
        delta_h[i] = t.delta_h
        dts[i] = dt
        Ls[i] = L
        bs[i] = scheme.b
        grad_evals += t.n_grad
        n_div += t.divergent
    if n_clamped:
        logger.warning("%s: %d iteration(s) beyond the coefficient table", label, n_clamped)
    return ChainRecord(label, k, float(step), l_bar, samples, accepted, delta_h, dts, Ls,
                       bs, grad_evals, n_div, n_clamped)


def start_points(state: PipelineState, n_chains, rng, overdispersion=2.0):
    """Chain 0 starts at the burn-in end point, the others at overdispersed draws."""
    starts = [np.array(state.theta)]
    scale = np.where(state.std > 0.0, state.std, 1.0)
    for _ in range(1, n_chains):
        starts.append(state.mean + overdispersion * scale * rng.standard_normal(len(scale)))
    return starts


def warm_up(model: TargetModel, config: HmcConfig, theta0=None, stream=()):
    """Tuning, burn-in and adaptation for one seed."""
    tuning = tune_step_size(model, config, make_rng(config.seed, *stream, 0), theta0)
    burn = burn_in(model, tuning.dt_vv, config, make_rng(config.seed, *stream, 1),
                   tuning.theta)
    n_grad = tuning.n_iterations * 2 + burn.n_grad
    return adapt_from_burn_in(model, burn, config, n_grad)


def nominal_step(state: PipelineState, config: HmcConfig, k):
    if config.step is not None:
        return float(config.step)
    return config.step_fraction * state.stability_limit(k)


def run_pipeline(model: TargetModel, config: HmcConfig, table: Optional[BOptTable] = None,
                 theta0=None):
    """Tune, burn in, adapt and run ``config.n_chains`` production chains.

    Returns ``(state, chains, report)``. The integrator is ``config.label``
    and its nominal step is ``config.step`` or ``step_fraction`` of its
    stability limit.
    """
    state = warm_up(model, config, theta0)
    label = config.label
    k = stages_of(label)
    if label.startswith("sAIA") and table is None:
        table = adapt.load_or_tabulate(k, config.n_grid_table)
    step = nominal_step(state, config, k)
    starts = start_points(state, config.n_chains, make_rng(config.seed, 2),
                          config.overdispersion)
    chains = [production(model, state, label, step, config, make_rng(config.seed, 3, c),
                         table, start) for c, start in enumerate(starts)]
    return state, chains, efficiency_summary(chains)


# --------------------------------------------------------------------------
# Trace files
# --------------------------------------------------------------------------

def write_trace(record: ChainRecord, path, preamble=()):
    """CSV trace: a versioned comment line, a header and one row per iteration."""
    meta = [("version", TRACE_VERSION), ("label", record.label), ("k", record.k),
            ("step", repr(record.step)), ("l_bar", record.l_bar),
            ("grad_evals", record.grad_evals), ("divergent", record.divergent),
            ("clamped", record.clamped)]
    meta += [(k, v) for k, v in preamble]
    D = record.samples.shape[1]
    with open(path, "w") as fh:
        fh.write("# saia-trace " + " ".join(f"{k}={v}" for k, v in meta) + "\n")
        fh.write(",".join(["iter", "accepted", "dH", "dt", "L", "b"]
                          + [f"theta{j}" for j in range(D)]) + "\n")
        for i in range(len(record.accepted)):
            fields = [str(i), "1" if record.accepted[i] else "0", repr(float(record.delta_h[i])),
                      repr(float(record.dt[i])), str(int(record.L[i])), repr(float(record.b[i]))]
            fields += [repr(float(v)) for v in record.samples[i]]
            fh.write(",".join(fields) + "\n")


def read_trace(path) -> ChainRecord:
    with open(path) as fh:
        first = fh.readline()
        if not first.startswith("# saia-trace "):
            raise ValueError(f"{path}: not a trace file")
        meta = dict(item.split("=", 1) for item in first[len("# saia-trace "):].split())
        if int(meta.get("version", -1)) != TRACE_VERSION:
            raise ValueError(f"{path}: trace version {meta.get('version')} "
                             f"is not supported (expected {TRACE_VERSION})")
        header = fh.readline().strip().split(",")
        if header[:6] != ["iter", "accepted", "dH", "dt", "L", "b"]:
            raise ValueError(f"{path}: bad trace header")
        rows = [ln.rstrip("\n").split(",") for ln in fh if ln.strip()]
    if not rows:
        raise ValueError(f"{path}: empty trace")
    table = np.array(rows, dtype=float)
    return ChainRecord(
        label=meta["label"], k=int(meta["k"]), step=float(meta["step"]),
        l_bar=int(meta["l_bar"]), samples=np.ascontiguousarray(table[:, 6:]),
        accepted=table[:, 1].astype(bool), delta_h=table[:, 2], dt=table[:, 3],
        L=table[:, 4].astype(np.int64), b=table[:, 5], grad_evals=int(meta["grad_evals"]),
        divergent=int(meta.get("divergent", 0)), clamped=int(meta.get("clamped", 0)))
