"""Monte Carlo sampling of hitting times with reproducible per-replica streams.

Stream contract: replica ``r`` of a run seeded with ``seed`` draws from
``Generator(Philox(SeedSequence(seed, spawn_key=(r, *extra))))``.  Philox is
counter based, so streams are independent of one another and of thread
scheduling.  Kernels consume pre-drawn uniform buffers in fixed-size chunks,
which makes a run bit-identical for a given seed whatever the chunk timing.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable

import numba
import numpy as np
import scipy.sparse as sp

CHUNK = 1 << 16
FIRST_CHUNK = 1 << 8
DEFAULT_MAX_STEPS = 10 ** 8


def chunk_sizes(max_steps: int):
    """Buffer sizes, doubling from a small first chunk; fixed for reproducibility."""
    done, m = 0, FIRST_CHUNK
    while done < max_steps:
        k = min(m, max_steps - done)
        yield k
        done += k
        m = min(2 * m, CHUNK)


def stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=tuple(key))))


def n_threads() -> int:
    try:
        return max(1, int(os.environ.get("METASTATE_THREADS", "1")))
    except ValueError:
        return 1


def parallel_map(fn, items: Iterable):
    """Order-preserving map over replicas, threaded when ``METASTATE_THREADS > 1``."""
    items = list(items)
    k = n_threads()
    if k == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(k) as ex:
        return list(ex.map(fn, items))


@dataclass(frozen=True)
class SimConfig:
    beta: float
    seed: int = 0
    n_replicas: int = 100
    max_steps: int | None = None
    report_stride: int = 0

    def __post_init__(self):
        if self.n_replicas < 1:
            raise ValueError("n_replicas must be at least 1")
        if self.max_steps is not None and self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")
        if not self.beta >= 0:
            raise ValueError("beta must be nonnegative")

    def cap(self, prediction: float | None = None, factor: float = 50.0) -> int:
        """Censoring cap: explicit, else ``factor`` times a predicted mean, else 1e8."""
        if self.max_steps is not None:
            return int(self.max_steps)
        if prediction is not None:
            return max(1, int(math.ceil(factor * prediction)))
        return DEFAULT_MAX_STEPS


@dataclass(frozen=True)
class HittingSample:
    steps: int
    censored: bool
    first_hit_state: object

    def __post_init__(self):
        if self.censored and self.first_hit_state is not None:
            raise ValueError("a censored sample has no hit state")


@dataclass(frozen=True)
class EstimateWithCI:
    mean: float
    ci_low: float
    ci_high: float
    n_effective: int
    n_censored: int

    @property
    def lower_bound(self) -> bool:
        """True when censoring biases the mean downwards."""
        return self.n_censored > 0


def estimate_mean_exit(samples, seed: int = 0, n_boot: int = 2000,
                       level: float = 0.95) -> EstimateWithCI:
    """Mean of the uncensored samples with a percentile bootstrap interval."""
    vals = np.array([s.steps for s in samples if not s.censored], dtype=float)
    n_cens = sum(1 for s in samples if s.censored)
    if vals.size < 2:
        raise ValueError(f"need at least two uncensored samples, have {vals.size}")
    rng = stream(seed, 0)
    means = np.empty(n_boot)
    batch = max(1, 2_000_000 // vals.size)
    for lo in range(0, n_boot, batch):
        hi = min(n_boot, lo + batch)
        idx = rng.integers(0, vals.size, size=(hi - lo, vals.size))
        means[lo:hi] = vals[idx].mean(axis=1)
    alpha = (1 - level) / 2
    m = float(vals.mean())
    lo, hi = np.quantile(means, [alpha, 1 - alpha])
    return EstimateWithCI(m, min(float(lo), m), max(float(hi), m), int(vals.size), n_cens)


def estimate_probability(hits: int, n: int, level: float = 0.95):
    """Wilson score interval for a binomial proportion."""
    from scipy.stats import norm

    if n < 1:
        raise ValueError("no trials")
    z = norm.ppf(0.5 + level / 2)
    p = hits / n
    den = 1 + z * z / n
    c = (p + z * z / (2 * n)) / den
    w = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    return p, max(0.0, c - w), min(1.0, c + w)


# -- generic chains -----------------------------------------------------------------

@numba.njit(nogil=True, cache=True)
def _chain_run(indptr, indices, cum, x, target, us):
    for k in range(us.size):
        u = us[k]
        lo, hi = indptr[x], indptr[x + 1]
        y = indices[hi - 1]
        for t in range(lo, hi):
            if u < cum[t]:
                y = indices[t]
                break
        x = y
        if target[x]:
            return k + 1, x
    return us.size, x


@numba.njit(nogil=True, cache=True)
def _chain_visits(indptr, indices, cum, x, us, counts):
    for k in range(us.size):
        u = us[k]
        lo, hi = indptr[x], indptr[x + 1]
        y = indices[hi - 1]
        for t in range(lo, hi):
            if u < cum[t]:
                y = indices[t]
                break
        x = y
        counts[x] += 1
    return x


class ChainStepper:
    """Sampler for an explicit :class:`~metastate.potential.ChainAtBeta`."""

    def __init__(self, chain):
        P = sp.csr_matrix(chain.P)
        P.sort_indices()
        self.n = P.shape[0]
        self.indptr = P.indptr.astype(np.int64)
        self.indices = P.indices.astype(np.int64)
        cum = P.data.astype(float).copy()
        for x in range(self.n):
            lo, hi = self.indptr[x], self.indptr[x + 1]
            cum[lo:hi] = np.cumsum(cum[lo:hi])
            cum[hi - 1] = 1.0
        self.cum = cum

    def run(self, start, targets, rng, max_steps):
        mask = np.zeros(self.n, dtype=np.bool_)
        mask[list(targets)] = True
        x, done = int(start), 0
        for m in chunk_sizes(max_steps):
            k, x = _chain_run(self.indptr, self.indices, self.cum, x, mask, rng.random(m))
            done += k
            if mask[x]:
                return done, int(x), x
        return done, None, x

    def step(self, x, rng) -> int:
        lo, hi = self.indptr[x], self.indptr[x + 1]
        t = int(np.searchsorted(self.cum[lo:hi], rng.random(), side="right"))
        return int(self.indices[lo + min(t, hi - lo - 1)])


def metropolis_step(chain, x: int, rng) -> int:
    """One transition of an explicit chain from state ``x``."""
    return ChainStepper(chain).step(x, rng)


def sample_hitting_time(stepper, start, targets, config: SimConfig, key: tuple = (),
                        prediction: float | None = None) -> list:
    """Independent first-hitting samples; replica ``r`` uses ``stream(seed, r, *key)``.

    ``stepper`` is any object with ``run(start, targets, rng, max_steps)``
    returning ``(steps, hit_label_or_None, final_state)``.
    """
    if _satisfies(stepper, start, targets):
        raise ValueError("start state already satisfies the target predicate")

    cap = config.cap(prediction)

    def one(r):
        steps, hit, _ = stepper.run(start, targets, stream(config.seed, r, *key), cap)
        return HittingSample(int(steps), hit is None, hit)

    return parallel_map(one, range(config.n_replicas))


def _satisfies(stepper, start, targets) -> bool:
    check = getattr(stepper, "is_target", None)
    if check is not None:
        return check(start, targets)
    return start in set(targets)


def stationary_histogram(chain, n_steps: int, seed: int = 0, start: int = 0) -> np.ndarray:
    """Empirical occupation frequencies of a single long trajectory."""
    st = ChainStepper(chain)
    rng = stream(seed, 0)
    counts = np.zeros(st.n, dtype=np.int64)
    x, done = int(start), 0
    while done < n_steps:
        m = min(1 << 20, n_steps - done)
        x = _chain_visits(st.indptr, st.indices, st.cum, x, rng.random(m), counts)
        done += m
    return counts / counts.sum()


def total_variation(p, q) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())
