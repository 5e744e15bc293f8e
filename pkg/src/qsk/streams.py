"""Deterministic random-number streams and the shared worker-pool helper.

Reproducibility contract: every stochastic routine derives its randomness
from counter-based Philox generators keyed by (master seed, domain, batch
index).  Work is always split into fixed-size batches, so results are
bit-identical no matter how many workers execute the batches or in which
order they finish.  Path sampling and disorder sampling live in disjoint
domains and never share a stream.
"""

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

#: stream domains (never reuse a domain across different kinds of sampling)
DOMAIN_PATHS = 0
DOMAIN_DISORDER = 1

#: fixed batch size; changing this changes every sampled ensemble
BATCH_SIZE = 4096

WORKERS_ENV_VAR = "QSK_WORKERS"


def batch_generator(seed, domain, batch_index):
    """Philox generator for one (seed, domain, batch) cell of the layout."""
    ss = np.random.SeedSequence(entropy=(int(seed), int(domain), int(batch_index)))
    return np.random.Generator(np.random.Philox(seed=ss))


def batch_ranges(count):
    """Yield (batch_index, start, stop) covering range(count) in fixed batches."""
    for b in range(0, -(-int(count) // BATCH_SIZE)):
        start = b * BATCH_SIZE
        yield b, start, min(start + BATCH_SIZE, int(count))


def resolve_workers(workers=None):
    """Worker count: explicit argument wins, then QSK_WORKERS, then 1."""
    if workers is not None:
        return max(1, int(workers))
    env = os.environ.get(WORKERS_ENV_VAR)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1


def map_batches(fn, n_batches, workers=None):
    """Apply ``fn(batch_index)`` for each batch, in index order.

    The reduction is deterministic by construction: results are collected
    into a list indexed by batch, whatever the execution order.
    """
    workers = resolve_workers(workers)
    indices = range(n_batches)
    if workers <= 1 or n_batches <= 1:
        return [fn(b) for b in indices]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, indices))
