import numpy as np
import pytest

import roadfuse as rf


def jittered_coords(rng, n, dim, cell=1.0):
    """Points on a jittered grid: distinct cells keep every pair separated,
    which keeps squared-exponential Gram matrices well conditioned."""
    side = int(np.ceil(n ** (1.0 / dim)))
    cells = rng.choice(side ** dim, size=n, replace=False)
    base = np.stack(np.unravel_index(cells, (side,) * dim), axis=1).astype(float)
    coords = (base + rng.uniform(0.1, 0.9, size=(n, dim))) * cell
    return coords - coords.mean(axis=0)


def random_embedding(seed, n, dim=2, cell=1.0):
    rng = np.random.default_rng(seed)
    coords = jittered_coords(rng, n, dim, cell)
    return rf.Embedding(coords=coords, dim=dim, stress=0.0)


def random_kernel(seed, n=50, dim=2, length=0.6, signal=1.0, noise=0.05, mean=0.0):
    emb = random_embedding(seed, n, dim)
    hyper = rf.KernelHyperparams(signal, (length,) * dim, noise)
    return rf.make_kernel(emb, hyper, mean)


def random_blocks(seed, kernel, n_sensors, total_obs):
    """Disjoint per-sensor observation sets with values drawn from the prior
    plus observation noise."""
    rng = np.random.default_rng(seed)
    n = kernel.n_segments
    idx = rng.choice(n, size=total_obs, replace=False)
    latent = rf.sample_gp(kernel, idx, seed=seed)
    values = latent + np.sqrt(kernel.hyper.noise_variance) * rng.standard_normal(total_obs)
    splits = np.array_split(np.arange(total_obs), n_sensors)
    return [
        rf.ObservationSet(
            indices=tuple(int(i) for i in idx[part]),
            values=values[part],
        )
        for part in splits
    ]


def summaries_for(kernel, support, blocks):
    return [rf.local_summary(kernel, support, b, k) for k, b in enumerate(blocks)]


def global_summary_for(kernel, support, blocks):
    return rf.global_summary(kernel, support, summaries_for(kernel, support, blocks))


@pytest.fixture
def path_network():
    """Three segments in a directed chain with unit feature steps."""
    segments = [("a", [0.0, 0.0]), ("b", [1.0, 0.0]), ("c", [1.0, 2.0])]
    edges = [("a", "b"), ("b", "c")]
    return rf.build_road_network(segments, edges, feature_ranges=[1.0, 1.0])


@pytest.fixture
def two_segment_network():
    segments = [("a", [0.0, 0.0]), ("b", [1.0, 1.0])]
    return rf.build_road_network(segments, [("a", "b")])


def chain_network(weights):
    """Directed chain whose consecutive edge weights equal ``weights``."""
    positions = np.concatenate([[0.0], np.cumsum(weights)])
    segments = [(f"v{i}", [float(p)]) for i, p in enumerate(positions)]
    edges = [(f"v{i}", f"v{i + 1}") for i in range(len(weights))]
    return rf.build_road_network(segments, edges, feature_ranges=[1.0])
