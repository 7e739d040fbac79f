"""Random stream splitting and the replica worker pool.

Every replica draws from a stream keyed by ``(master_seed, *keys)`` through
numpy's SeedSequence, so results never depend on scheduling or thread count.
"""
import concurrent.futures
import logging

import numpy as np

from .settings import get_settings

logger = logging.getLogger(__name__)

MAX_MASTER_SEED = 2**63 - 1
# Monte Carlo batches are cut into this many chunks whatever the thread count
N_CHUNKS = 16


def stream_seed(master_seed, *keys):
    """32-bit seed of the stream ``(master_seed, *keys)`` for the numba kernels.

    numba only seeds its generator from 32 bits, so two of R streams coincide
    with probability about R^2 / 2^33: about 1% for R = 10^4 replicas, about
    one expected coincidence at R = 10^5. A coincidence duplicates one replica;
    it never correlates the rest.
    """
    sequence = np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(k) for k in keys))
    return int(sequence.generate_state(1, dtype=np.uint32)[0])


def stream_rng(master_seed, *keys):
    """numpy Generator on the stream ``(master_seed, *keys)``."""
    sequence = np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.default_rng(sequence)


def draw_master_seed(rng):
    return int(rng.integers(0, MAX_MASTER_SEED, dtype=np.int64))


def entropy_seed():
    """Fresh master seed for runs configured without one."""
    return int(np.random.SeedSequence().entropy) % MAX_MASTER_SEED


def chunk_sizes(total, n_chunks=N_CHUNKS):
    """Split ``total`` replicas into at most ``n_chunks`` non-empty chunks."""
    n_chunks = max(1, min(n_chunks, total))
    base, extra = divmod(total, n_chunks)
    return [base + (1 if i < extra else 0) for i in range(n_chunks)]


class ReplicaPool:
    """Thread pool running independent replicas and returning results in task order."""

    def __init__(self, threads=None):
        self.threads = threads if threads else get_settings().worker_count()

    def map(self, fn, tasks):
        """Run ``fn(*task)`` for every task; result ``i`` belongs to task ``i``."""
        tasks = list(tasks)
        results = [None] * len(tasks)
        if self.threads == 1 or len(tasks) <= 1:
            for index, task in enumerate(tasks):
                results[index] = fn(*task)
            return results

        with concurrent.futures.ThreadPoolExecutor(max_workers=self.threads) as executor:
            future_to_index = {executor.submit(fn, *task): index for index, task in enumerate(tasks)}
            for future in concurrent.futures.as_completed(future_to_index):
                index = future_to_index[future]
                try:
                    results[index] = future.result()
                except Exception as e:
                    logger.error(f"Replica task {index} failed: {e}")
                    raise
        return results


def map_replicas(replicas, run_one, threads=None):
    """``[run_one(r) for r in range(replicas)]`` computed chunk-wise on the pool."""
    sizes = chunk_sizes(replicas)
    starts = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(int).tolist()

    def run_chunk(start, size):
        return [run_one(r) for r in range(start, start + size)]

    chunks = ReplicaPool(threads).map(run_chunk, zip(starts, sizes))
    return [result for chunk in chunks for result in chunk]
