"""Continuous-time nonlinear opinion dynamics on the unit box.

    dz/dt = -z + sat(mu * z + k * z**2 + gamma * A z + b(t))

Integration is classical fixed-step RK4 with a clamp to [0, 1] after every
step.  Steps never straddle a discontinuity of the input schedule.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from ._kernels import rhs_into, rk4_advance
from .graph import WeightedDigraph, graph_to_json_obj, parse_instance_json, spectral_radius
from .ltm import CascadeReport, seed_state


class IntegrationError(RuntimeError):
    def __init__(self, message, time):
        super().__init__(f"{message} at t={time}")
        self.time = time


class ParameterError(ValueError):
    pass


def sat(x):
    return np.clip(x, 0.0, 1.0)


@dataclass(frozen=True)
class Pulse:
    node: int
    start: float
    end: float
    amplitude: float

    def __post_init__(self):
        if not self.start < self.end:
            raise ParameterError(f"pulse on node {self.node} needs start < end")
        if not self.amplitude >= 0:
            raise ParameterError(f"pulse on node {self.node} has negative amplitude")


@dataclass(frozen=True)
class InputSchedule:
    """Piecewise-constant exogenous input built from half-open pulses.

    ``b_i(t)`` is the sum of amplitudes of node-``i`` pulses with
    ``start <= t < end``.  ``end`` may be ``inf`` for a constant input.
    """

    n: int
    pulses: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "pulses", tuple(self.pulses))
        for p in self.pulses:
            if not 0 <= p.node < self.n:
                raise ParameterError(f"pulse node {p.node} out of range for n={self.n}")

    @classmethod
    def zero(cls, n):
        return cls(n)

    @classmethod
    def constant(cls, b):
        b = np.asarray(b, dtype=float).ravel()
        return cls(b.size, [Pulse(i, 0.0, math.inf, float(v)) for i, v in enumerate(b) if v != 0])

    def value(self, t):
        b = np.zeros(self.n)
        for p in self.pulses:
            if p.start <= t < p.end:
                b[p.node] += p.amplitude
        return b

    def breakpoints(self):
        pts = {p.start for p in self.pulses} | {p.end for p in self.pulses}
        return sorted(x for x in pts if math.isfinite(x))

    def is_zero(self):
        return all(p.amplitude == 0 for p in self.pulses)

    def max_amplitude(self):
        """Largest total input any node receives at any time."""
        best = 0.0
        for t in [0.0, *self.breakpoints()]:
            best = max(best, float(self.value(t).max()))
        return best

    def to_json_obj(self):
        return {
            "pulses": [
                {
                    "node": p.node,
                    "start": p.start,
                    "end": p.end if math.isfinite(p.end) else None,
                    "amplitude": p.amplitude,
                }
                for p in self.pulses
            ]
        }

    @classmethod
    def from_json_obj(cls, n, obj):
        pulses = []
        for d in obj.get("pulses", []):
            end = d.get("end")
            pulses.append(
                Pulse(int(d["node"]), float(d["start"]), math.inf if end is None else float(end), float(d["amplitude"]))
            )
        return cls(n, pulses)


@dataclass(frozen=True, eq=False)
class NodInstance:
    graph: WeightedDigraph
    mu: np.ndarray
    k: float
    gamma: float
    schedule: InputSchedule | None = None

    def __post_init__(self):
        mu = np.array(self.mu, dtype=float).ravel()
        if mu.size != self.graph.n:
            raise ParameterError(f"mu has length {mu.size}, expected {self.graph.n}")
        if not np.all(mu > 0):
            raise ParameterError("every linear gain mu_i must be strictly positive")
        if not self.k >= 0:
            raise ParameterError("k must be nonnegative")
        if not self.gamma >= 0:
            raise ParameterError("gamma must be nonnegative")
        mu.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "k", float(self.k))
        object.__setattr__(self, "gamma", float(self.gamma))
        sched = self.schedule if self.schedule is not None else InputSchedule.zero(self.graph.n)
        if sched.n != self.graph.n:
            raise ParameterError("schedule size does not match graph")
        object.__setattr__(self, "schedule", sched)

    @property
    def n(self):
        return self.graph.n

    def with_schedule(self, schedule):
        return NodInstance(self.graph, self.mu, self.k, self.gamma, schedule)

    def to_json_obj(self):
        obj = graph_to_json_obj(self.graph)
        obj.update(
            mu=[float(m) for m in self.mu],
            k=self.k,
            gamma=self.gamma,
            schedule=self.schedule.to_json_obj(),
        )
        return obj

    @classmethod
    def from_json_obj(cls, obj):
        g, _, _ = parse_instance_json(obj)
        sched = InputSchedule.from_json_obj(g.n, obj.get("schedule", {}))
        return cls(g, obj["mu"], obj["k"], obj["gamma"], sched)


@dataclass
class NodOptions:
    step: float = 0.01
    t_max: float = 500.0
    stall_tol: float = 1e-9
    sample_every: float = 0.1
    eps_act: float = 1e-3
    indeterminate_margin: float = 1e-3

    def __post_init__(self):
        if not self.step > 0:
            raise ParameterError("step must be positive")
        if not self.sample_every > 0:
            raise ParameterError("sample_every must be positive")
        if not self.t_max > 0:
            raise ParameterError("t_max must be positive")


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (len(times), n)
    converged: bool
    final_derivative_norm: float
    max_overshoot: float = 0.0
    step_failure: bool = False

    @property
    def final_state(self):
        return self.states[-1]

    @property
    def final_time(self):
        return float(self.times[-1])

    def to_csv(self, path):
        n = self.states.shape[1]
        header = "t," + ",".join(f"z{i}" for i in range(n))
        np.savetxt(path, np.column_stack([self.times, self.states]), delimiter=",", header=header, comments="", fmt="%.17g")


def nod_rhs(inst, z, t=0.0):
    z = np.asarray(z, dtype=float)
    b = inst.schedule.value(t)
    x = inst.mu * z + inst.k * z * z + inst.gamma * inst.graph.matvec(z) + b
    return -z + sat(x)


def _rhs_cols(inst, Z, b):
    out = np.empty_like(Z)
    indptr, indices, data = inst.graph.csr
    rhs_into(indptr, indices, data, inst.mu, inst.k, inst.gamma, b, Z, out)
    return out


@dataclass
class _BatchResult:
    final: np.ndarray  # (n, m)
    converged: np.ndarray  # (m,)
    deriv: np.ndarray  # (m,)
    final_time: np.ndarray  # (m,)
    act_time: np.ndarray  # (n, m); nan where never crossed
    max_overshoot: float
    times: list
    samples: list


def _simulate(inst, Z0, opts, record=False):
    """Integrate ``m`` initial conditions (columns of ``Z0``) together.

    A column is frozen once its derivative norm drops below ``stall_tol`` and
    no schedule breakpoint lies ahead; the batch stops when all columns are
    frozen or ``t_max`` is reached.
    """
    Z = np.ascontiguousarray(np.array(Z0, dtype=float))
    if Z.ndim == 1:
        Z = Z[:, None]
    n, m = Z.shape
    if n != inst.n:
        raise ValueError(f"initial state has {n} rows, expected {inst.n}")
    if np.any(Z < 0) or np.any(Z > 1):
        raise ValueError("initial state must lie in [0, 1]^n")
    indptr, indices, data = inst.graph.csr
    bps = inst.schedule.breakpoints()
    last_bp = bps[-1] if bps else -math.inf
    thresh = 1.0 - opts.eps_act

    final = Z.copy()
    converged = np.zeros(m, dtype=bool)
    deriv = np.full(m, np.inf)
    ftime = np.zeros(m)
    act = np.full((n, m), np.nan)
    act[Z >= thresh] = 0.0
    cols = np.arange(m)
    over = 0.0
    times, samples = [0.0], [Z[:, 0].copy()] if record else []

    t = 0.0
    j = 0  # index of the last sample-grid time reached
    bp_i = 0
    while True:
        b = inst.schedule.value(t)
        d = np.abs(_rhs_cols(inst, Z, b)).max(axis=0)
        done = (d < opts.stall_tol) & (last_bp <= t)
        if t >= opts.t_max or done.any():
            fin = np.flatnonzero(done) if t < opts.t_max else np.arange(cols.size)
            final[:, cols[fin]] = Z[:, fin]
            converged[cols[fin]] = done[fin]
            deriv[cols[fin]] = d[fin]
            ftime[cols[fin]] = t
            keep = np.setdiff1d(np.arange(cols.size), fin)
            cols = cols[keep]
            Z = np.ascontiguousarray(Z[:, keep])
            if cols.size == 0:
                break

        while bp_i < len(bps) and bps[bp_i] <= t:
            bp_i += 1
        next_sample = (j + 1) * opts.sample_every
        t_next = min(next_sample, bps[bp_i] if bp_i < len(bps) else math.inf, opts.t_max)
        nsteps = max(1, math.ceil((t_next - t) / opts.step - 1e-9))
        h = (t_next - t) / nsteps
        o, bad = rk4_advance(indptr, indices, data, inst.mu, inst.k, inst.gamma, b, Z, h, nsteps)
        if bad:
            raise IntegrationError("non-finite state", t)
        over = max(over, o)
        is_sample = t_next == next_sample
        if is_sample:
            j += 1
        t = t_next
        if is_sample or t >= opts.t_max:
            sub = act[:, cols]
            newly = np.isnan(sub) & (Z >= thresh)
            sub[newly] = t
            act[:, cols] = sub
            if record:
                times.append(t)
                samples.append(Z[:, 0].copy())

    if record and times[-1] < ftime[0]:
        times.append(float(ftime[0]))
        samples.append(final[:, 0].copy())
    if over >= 10 * opts.step:
        warnings.warn(f"pre-clamp overshoot {over:.3g} exceeds 10*step; reduce the step size", RuntimeWarning)
    return _BatchResult(final, converged, deriv, ftime, act, over, times, samples)


def integrate(inst, z0, opts=None, **kw):
    """Integrate a single initial condition and return the sampled trajectory."""
    opts = opts or NodOptions(**kw)
    res = _simulate(inst, np.asarray(z0, dtype=float)[:, None], opts, record=True)
    return Trajectory(
        times=np.array(res.times),
        states=np.array(res.samples),
        converged=bool(res.converged[0]),
        final_derivative_norm=float(res.deriv[0]),
        max_overshoot=res.max_overshoot,
        step_failure=res.max_overshoot >= 10 * opts.step,
    )


def _tipping_values(inst):
    if inst.k > 0 and np.all(inst.mu < 1):
        return (1 - inst.mu) / (2 * inst.k)
    return None


def _classify(inst, final, act_col, converged, ftime, deriv, opts, overshoot):
    thresh = 1.0 - opts.eps_act
    active = frozenset(int(i) for i in np.flatnonzero(final >= thresh))
    times = {i: float(act_col[i]) if not np.isnan(act_col[i]) else float(ftime) for i in sorted(active)}
    notes = []
    indeterminate = ()
    if not converged:
        notes.append(f"not converged by t_max={opts.t_max} (|dz/dt| = {deriv:.3g})")
        zstar = _tipping_values(inst)
        if zstar is not None:
            mid = (final > zstar + opts.indeterminate_margin) & (final < thresh)
            indeterminate = tuple(int(i) for i in np.flatnonzero(mid))
    if overshoot >= 10 * opts.step:
        notes.append("step-size failure: pre-clamp overshoot exceeded 10*step")
    return CascadeReport(
        active_set=active,
        activation_time=times,
        cascade_size=len(active),
        converged=bool(converged),
        steps_or_final_time=float(ftime),
        indeterminate=indeterminate,
        warnings=notes,
    )


def nod_cascade(inst, seed, opts=None):
    """Cascade set of the seed: nodes ending within ``eps_act`` of 1."""
    opts = opts or NodOptions()
    return nod_cascades(inst, [seed], opts)[0]


def nod_cascades(inst, seeds, opts=None):
    """Batched :func:`nod_cascade` over several seed sets."""
    opts = opts or NodOptions()
    seeds = list(seeds)
    if not seeds:
        return []
    Z0 = np.column_stack([seed_state(inst.n, s).astype(float) for s in seeds])
    res = _simulate(inst, Z0, opts)
    return [
        _classify(inst, res.final[:, c], res.act_time[:, c], res.converged[c], res.final_time[c], res.deriv[c], opts, res.max_overshoot)
        for c in range(len(seeds))
    ]


def final_states(inst, Z0, opts=None):
    """Final states and convergence flags for a batch of initial conditions."""
    res = _simulate(inst, Z0, opts or NodOptions())
    return res.final, res.converged


@dataclass(frozen=True)
class AgentThresholds:
    b_star: np.ndarray
    z_star: np.ndarray


def agent_thresholds(inst):
    """Per-agent input threshold ``(1-mu)^2/(4k)`` and tipping value ``(1-mu)/(2k)``."""
    if not inst.k > 0:
        raise ParameterError("thresholds are undefined for k = 0")
    one_minus = 1.0 - inst.mu
    return AgentThresholds(b_star=one_minus**2 / (4 * inst.k), z_star=one_minus / (2 * inst.k))


def check_neutral_stability(inst, lam=None):
    """Sufficient test for stability of z = 0 without input.

    Returns ``{"stable_sufficient", "margin"}`` with
    ``margin = 1 - gamma * lambda_max - max(mu)``.  A negative margin makes no
    claim either way.
    """
    if not inst.schedule.is_zero():
        warnings.warn("neutral stability check assumes zero input; schedule ignored", RuntimeWarning)
    if lam is None:
        lam = spectral_radius(inst.graph)
    margin = (1.0 - inst.gamma * lam) - float(np.max(inst.mu))
    return {"stable_sufficient": margin > 0, "margin": margin}


def single_agent_bifurcation(mu, k, b_grid, rel_tol=1e-12):
    """Equilibria of one uncoupled agent for each input level in ``b_grid``.

    Each entry is ``{"b": b, "equilibria": [(z, stability), ...]}`` with
    stability one of ``"stable"``, ``"unstable"``, ``"saddle-node"``.
    """
    if not (0 < mu < 1) or not k > 0:
        raise ParameterError("need 0 < mu < 1 and k > 0")
    out = []
    for b in b_grid:
        b = float(b)
        disc = (mu - 1.0) ** 2 - 4.0 * k * b
        eq = []
        if abs(disc) <= rel_tol * (mu - 1.0) ** 2:
            z = (1.0 - mu) / (2.0 * k)
            if 0 <= z < 1:
                eq.append((z, "saddle-node"))
        elif disc > 0:
            r = math.sqrt(disc)
            for z in sorted({(1.0 - mu - r) / (2.0 * k), (1.0 - mu + r) / (2.0 * k)}):
                if 0 <= z < 1:
                    slope = -1.0 + mu + 2.0 * k * z
                    eq.append((z, "stable" if slope < 0 else "unstable"))
        if mu + k + b >= 1:
            eq.append((1.0, "stable"))
        out.append({"b": b, "equilibria": eq})
    return out


def load_nod_instance(path):
    with open(path) as fh:
        return NodInstance.from_json_obj(json.load(fh))
