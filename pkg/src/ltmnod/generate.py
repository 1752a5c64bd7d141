"""Seeded random LTM instances."""

from __future__ import annotations

import numpy as np

from .graph import WeightedDigraph, fcm_thresholds
from .ltm import LtmInstance
from .relaxation import ENUM_CAP, check_nondegenerate

MAX_RETRIES = 100


class GenerationError(ValueError):
    pass


def random_digraph(rng, n, edge_prob, weight_range):
    """Erdos-Renyi style digraph with uniform weights on present edges."""
    lo, hi = weight_range
    mask = rng.random((n, n)) < edge_prob
    np.fill_diagonal(mask, False)
    w = np.where(mask, rng.uniform(lo, hi, size=(n, n)), 0.0)
    return WeightedDigraph(n, w)


def random_instance(n, edge_prob, weight_range, threshold_mode, rng_seed, *, cap=ENUM_CAP, max_retries=MAX_RETRIES):
    """Random LTM instance, deterministic in ``rng_seed``.

    ``threshold_mode`` is ``("uniform", lo, hi)`` for thresholds drawn from
    ``[lo, hi]`` or ``("fcm", frac)`` for fractional-contagion thresholds.
    Draws whose thresholds tie with some in-neighbour subset sum (within
    1e-12) are discarded and redrawn.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0 <= edge_prob <= 1:
        raise ValueError("edge_prob must lie in [0, 1]")
    lo, hi = weight_range
    if not 0 < lo <= hi:
        raise ValueError("weight_range must be positive with lo <= hi")
    mode = threshold_mode[0]
    if mode not in ("uniform", "fcm"):
        raise ValueError(f"unknown threshold mode {mode!r}")

    rng = np.random.default_rng(int(rng_seed) & 0xFFFF_FFFF_FFFF_FFFF)
    for _ in range(max_retries):
        g = random_digraph(rng, n, edge_prob, weight_range)
        if mode == "uniform":
            tau = rng.uniform(threshold_mode[1], threshold_mode[2], size=n)
            if np.any(tau <= 0):
                continue
        else:
            if np.any(g.row_sums() <= 0):
                continue
            tau = fcm_thresholds(g, threshold_mode[1])
        inst = LtmInstance(g, tau)
        if check_nondegenerate(inst, cap):
            return inst
    raise GenerationError(
        f"no tie-free instance found in {max_retries} draws for seed {rng_seed}; try a different seed or parameters"
    )
