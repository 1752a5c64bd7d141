"""Relaxing an LTM instance into opinion dynamics, and the exact-recovery bound.

The relaxation keeps the graph, sets ``mu_i = 1 - 2 sqrt(gamma k tau_i)`` and
zero input, so every agent's input threshold ``b*_i`` equals ``gamma tau_i``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .graph import inf_norm
from .nod import InputSchedule, NodInstance, ParameterError, check_neutral_stability

ENUM_CAP = 25
TIE_TOL = 1e-12
_CHUNK_BITS = 20


class EnumerationCapError(ValueError):
    pass


class DegenerateInstanceError(ValueError):
    pass


@dataclass(frozen=True)
class RelaxationParams:
    gamma: float
    k: float
    mu: np.ndarray
    mu_positive: bool
    k_ge_one: bool
    product_bound: bool
    neutral_stable_sufficient: bool


@dataclass(frozen=True)
class GammaStarResult:
    delta_gap: float
    gamma_star: float
    tau_inf: float
    a_inf: float
    enumeration_cost: int
    degenerate: bool
    min_excess: float = math.inf
    k: float | None = None
    gamma_upper: float | None = None

    def to_json_obj(self):
        def num(x):
            return None if x is None or not math.isfinite(x) else x

        return {
            "delta_gap": num(self.delta_gap),
            "gamma_star": num(self.gamma_star),
            "gamma_star_infinite": math.isinf(self.gamma_star),
            "gamma_upper": num(self.gamma_upper),
            "tau_inf": self.tau_inf,
            "a_inf": self.a_inf,
            "k": self.k,
            "enumeration_cost": self.enumeration_cost,
            "degenerate": self.degenerate,
            "min_excess": num(self.min_excess),
        }


def relax(ltm, gamma, k, lam=None):
    """Build the opinion-dynamics relaxation of ``ltm``.

    Raises :class:`ParameterError` naming the violated bound if ``gamma <= 0``,
    ``k < 1`` or ``gamma * k * max(tau) >= 1/4``.
    """
    gamma, k = float(gamma), float(k)
    if not gamma > 0:
        raise ParameterError(f"gamma must be > 0 (got {gamma})")
    if not k >= 1:
        raise ParameterError(f"k must be >= 1 (got {k})")
    prod = gamma * k * float(ltm.tau.max())
    if not prod < 0.25:
        raise ParameterError(f"gamma*k*max(tau) = {prod:.6g} violates the strict bound < 1/4")
    mu = 1.0 - 2.0 * np.sqrt(gamma * k * ltm.tau)
    inst = NodInstance(ltm.graph, mu, k, gamma, InputSchedule.zero(ltm.n))
    stab = check_neutral_stability(inst, lam)
    params = RelaxationParams(
        gamma=gamma,
        k=k,
        mu=inst.mu,
        mu_positive=bool(np.all(mu > 0)),
        k_ge_one=True,
        product_bound=True,
        neutral_stable_sufficient=stab["stable_sufficient"],
    )
    return inst, params


def reconstruct_tau(mu, gamma, k):
    return (1.0 - np.asarray(mu)) ** 2 / (4.0 * gamma * k)


def _subset_sums(w):
    sums = np.zeros(1)
    for x in w:
        sums = np.concatenate([sums, sums + x])
    return sums


def _node_scan(w, tau_i, tie_tol):
    """Return ``(gap, excess, tie, count)`` for one node's in-weights."""
    d = len(w)
    lo_bits = min(d, _CHUNK_BITS)
    base = _subset_sums(w[:lo_bits])
    gap, excess, tie = math.inf, math.inf, False
    for offset in _subset_sums(w[lo_bits:]):
        s = base + offset
        diff = tau_i - s
        ties = np.abs(diff) <= tie_tol
        tie = tie or bool(ties.any())
        below = diff[(diff > 0) & ~ties]
        if below.size:
            gap = min(gap, float(below.min()))
        above = -diff[(diff < 0) & ~ties]
        if above.size:
            excess = min(excess, float(above.min()))
    return gap, excess, tie, 1 << d


def _scan(ltm, cap, tie_tol):
    gap, excess, tie, cost = math.inf, math.inf, False, 0
    for i in range(ltm.n):
        _, w = ltm.graph.in_neighbors(i)
        if len(w) > cap:
            raise EnumerationCapError(
                f"node {i} has in-degree {len(w)} > enumeration cap {cap}; raise the cap or use a sparser instance"
            )
        g, e, t, c = _node_scan(np.asarray(w, dtype=float), float(ltm.tau[i]), tie_tol)
        gap, excess, tie, cost = min(gap, g), min(excess, e), tie or t, cost + c
    return gap, excess, tie, cost


def delta_gap(ltm, cap=ENUM_CAP, tie_tol=TIE_TOL):
    """Smallest shortfall ``tau_i - (A zeta)_i`` over subthreshold binary states.

    Enumerates subsets of each node's in-neighbourhood only, since
    ``(A zeta)_i`` depends on nothing else.  Ties within ``tie_tol`` mark the
    instance degenerate and are excluded from the minimum.
    """
    gap, excess, tie, cost = _scan(ltm, cap, tie_tol)
    return GammaStarResult(
        delta_gap=gap,
        gamma_star=math.nan,
        tau_inf=float(ltm.tau.max()),
        a_inf=inf_norm(ltm.graph),
        enumeration_cost=cost,
        degenerate=tie,
        min_excess=excess,
    )


def check_nondegenerate(ltm, cap=ENUM_CAP, tie_tol=TIE_TOL):
    return not _scan(ltm, cap, tie_tol)[2]


def gamma_star(ltm, k, cap=ENUM_CAP, tie_tol=TIE_TOL):
    """Coupling bound below which relaxed cascades equal LTM cascades.

    ``gamma_star = k * delta_gap^2 / (max(tau) * ||A||_inf^2)``; ``gamma_upper``
    is ``min(gamma_star, 1 / (4 k max(tau)))`` and is an exclusive limit.
    """
    if not k >= 1:
        raise ParameterError(f"k must be >= 1 (got {k})")
    res = delta_gap(ltm, cap, tie_tol)
    if res.degenerate:
        raise DegenerateInstanceError(
            "some subset of in-neighbour weights equals a threshold; the exact-recovery bound "
            "requires (A zeta)_i != tau_i for every binary state"
        )
    if res.a_inf == 0:
        gs = math.inf
    else:
        gs = k * res.delta_gap**2 / (res.tau_inf * res.a_inf**2)
    upper = min(gs, 1.0 / (4.0 * k * res.tau_inf))
    return GammaStarResult(
        delta_gap=res.delta_gap,
        gamma_star=gs,
        tau_inf=res.tau_inf,
        a_inf=res.a_inf,
        enumeration_cost=res.enumeration_cost,
        degenerate=False,
        min_excess=res.min_excess,
        k=float(k),
        gamma_upper=upper,
    )
