"""Deterministic persistent Linear Threshold Model."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .graph import GraphError, WeightedDigraph, graph_to_json_obj, parse_instance_json

TIE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class LtmInstance:
    graph: WeightedDigraph
    tau: np.ndarray

    def __post_init__(self):
        tau = np.array(self.tau, dtype=float).ravel()
        if tau.size != self.graph.n:
            raise GraphError(f"tau has length {tau.size}, expected {self.graph.n}")
        if not np.all(tau > 0) or not np.all(np.isfinite(tau)):
            raise GraphError("every threshold must be finite and strictly positive")
        tau.setflags(write=False)
        object.__setattr__(self, "tau", tau)

    @property
    def n(self):
        return self.graph.n

    def to_json_obj(self):
        return graph_to_json_obj(self.graph, self.tau)

    @classmethod
    def from_json_obj(cls, obj):
        g, tau, _ = parse_instance_json(obj)
        if tau is None:
            raise GraphError("instance has no 'tau' field")
        return cls(g, tau)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json_obj(json.load(fh))


@dataclass
class CascadeReport:
    """Outcome of a cascade run in either model.

    ``activation_time`` maps active nodes to a step index (LTM) or a
    continuous time (NOD).  ``indeterminate`` lists NOD nodes left stranded
    between their tipping value and the activation band at termination.
    """

    active_set: frozenset
    activation_time: dict
    cascade_size: int
    converged: bool
    steps_or_final_time: float
    indeterminate: tuple = ()
    warnings: list = field(default_factory=list)

    def to_json_obj(self):
        return {
            "active_set": sorted(int(i) for i in self.active_set),
            "activation_time": {str(i): self.activation_time[i] for i in sorted(self.activation_time)},
            "cascade_size": self.cascade_size,
            "converged": self.converged,
            "steps_or_final_time": self.steps_or_final_time,
            "indeterminate": [int(i) for i in self.indeterminate],
            "warnings": list(self.warnings),
        }


def _as_state(state, n):
    s = np.asarray(state)
    if s.shape != (n,):
        raise ValueError(f"state must have length {n}")
    if not np.all((s == 0) | (s == 1)):
        raise ValueError("binary state entries must be 0 or 1")
    return s.astype(np.int8)


def seed_state(n, seed):
    state = np.zeros(n, dtype=np.int8)
    for i in seed:
        if not 0 <= int(i) < n:
            raise ValueError(f"seed node {i} out of range for n={n}")
        state[int(i)] = 1
    return state


def ltm_step(inst, state):
    """One synchronous update; activation needs input strictly above threshold."""
    s = _as_state(state, inst.n)
    drive = inst.graph.matvec(s.astype(float))
    return (s.astype(bool) | (drive > inst.tau)).astype(np.int8)


def ltm_cascade(inst, seed, tie_tol=TIE_TOL):
    state = seed_state(inst.n, seed)
    times = {int(i): 0 for i in np.flatnonzero(state)}
    warnings = []
    steps = 0
    for step in range(1, inst.n + 1):
        drive = inst.graph.matvec(state.astype(float))
        if np.any(np.abs(drive - inst.tau) < tie_tol):
            msg = f"near tie between input and threshold at step {step - 1}"
            if msg not in warnings:
                warnings.append(msg)
        new = (state.astype(bool) | (drive > inst.tau)).astype(np.int8)
        if np.array_equal(new, state):
            break
        for i in np.flatnonzero(new & ~state.astype(bool)):
            times[int(i)] = step
        state = new
        steps = step
    active = frozenset(int(i) for i in np.flatnonzero(state))
    return CascadeReport(
        active_set=active,
        activation_time=times,
        cascade_size=len(active),
        converged=True,
        steps_or_final_time=steps,
        warnings=warnings,
    )
