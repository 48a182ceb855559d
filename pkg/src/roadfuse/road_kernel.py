"""Road networks, geodesic dissimilarities, Euclidean embedding, and the
squared-exponential kernel over embedded road segments.

The pipeline: standardized-Manhattan edge weights on a weighted directed
graph, all-pairs shortest paths, symmetrization, classical multidimensional
scaling into R^p', then a squared-exponential kernel with per-dimension
length-scales whose hyperparameters can be fitted by maximum likelihood.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.spatial.distance import cdist

from . import linalg
from .errors import ConfigError, NetworkError

NETWORK_SCHEMA_VERSION = 1


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


# ---------------------------------------------------------------------------
# Road network


@dataclass(frozen=True, eq=False)
class RoadNetwork:
    """Weighted directed graph of road segments.

    Vertices are road segments carrying a p-dimensional feature vector;
    an edge (s, s') means the end of segment s connects to the start of
    segment s'. Edge weights are standardized Manhattan feature distances.
    """

    ids: tuple[str, ...]
    features: np.ndarray        # (n_segments, n_features), read-only
    edges: tuple[tuple[int, int], ...]
    feature_ranges: np.ndarray  # (n_features,), strictly positive

    @property
    def n_segments(self) -> int:
        return len(self.ids)

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @cached_property
    def _index_by_id(self) -> dict[str, int]:
        return {sid: i for i, sid in enumerate(self.ids)}

    @cached_property
    def _edge_set(self) -> frozenset[tuple[int, int]]:
        return frozenset(self.edges)

    @cached_property
    def _out_neighbors(self) -> tuple[tuple[int, ...], ...]:
        out: list[list[int]] = [[] for _ in self.ids]
        for i, j in self.edges:
            out[i].append(j)
        return tuple(tuple(sorted(n)) for n in out)

    def index_of(self, segment_id: str) -> int:
        try:
            return self._index_by_id[segment_id]
        except KeyError:
            raise NetworkError(f"unknown segment id {segment_id!r}") from None

    def has_edge(self, s: int, t: int) -> bool:
        return (s, t) in self._edge_set

    def out_neighbors(self, s: int) -> tuple[int, ...]:
        return self._out_neighbors[s]

    def max_out_degree(self) -> int:
        return max((len(n) for n in self._out_neighbors), default=0)


def build_road_network(segments, edges, feature_ranges=None) -> RoadNetwork:
    """Validate and assemble a :class:`RoadNetwork`.

    Parameters
    ----------
    segments : sequence of (id, features) pairs
    edges : sequence of (from_id, to_id) pairs
    feature_ranges : optional sequence of per-feature ranges; computed as
        max - min over all segments when omitted.
    """
    segments = list(segments)
    if not segments:
        raise NetworkError("network needs at least one segment")
    ids = []
    rows = []
    for sid, feats in segments:
        ids.append(str(sid))
        rows.append(np.asarray(feats, dtype=float))
    p = rows[0].shape
    if len(p) != 1 or p[0] < 1:
        raise NetworkError("segment features must be non-empty vectors")
    if any(r.shape != p for r in rows):
        raise NetworkError("all segments must share the same feature dimension")
    if len(set(ids)) != len(ids):
        dup = sorted({i for i in ids if ids.count(i) > 1})
        raise NetworkError(f"duplicate segment ids: {dup}")
    features = np.vstack(rows)

    if feature_ranges is None:
        ranges = features.max(axis=0) - features.min(axis=0)
    else:
        ranges = np.asarray(feature_ranges, dtype=float)
        if ranges.shape != p:
            raise NetworkError("feature_ranges length must match feature dimension")
    if np.any(ranges <= 0.0):
        bad = [int(i) for i in np.flatnonzero(ranges <= 0.0)]
        raise NetworkError(f"feature ranges must be strictly positive (features {bad})")

    index = {sid: i for i, sid in enumerate(ids)}
    edge_idx: list[tuple[int, int]] = []
    seen: set[tuple[int, int]] = set()
    for a, b in edges:
        try:
            pair = (index[str(a)], index[str(b)])
        except KeyError as exc:
            raise NetworkError(f"edge references unknown segment id {exc.args[0]!r}") from None
        if pair in seen:
            raise NetworkError(f"duplicate edge {a!r} -> {b!r}")
        seen.add(pair)
        edge_idx.append(pair)

    return RoadNetwork(
        ids=tuple(ids),
        features=_readonly(features),
        edges=tuple(edge_idx),
        feature_ranges=_readonly(ranges),
    )


def edge_weight(net: RoadNetwork, s: int, t: int) -> float:
    """Standardized Manhattan distance ``sum_i |[s]_i - [t]_i| / r_i`` of an edge."""
    if not net.has_edge(s, t):
        raise NetworkError(f"({s}, {t}) is not an edge of the network")
    diff = np.abs(net.features[s] - net.features[t]) / net.feature_ranges
    return float(diff.sum())


def _all_pairs_shortest(weights: np.ndarray) -> np.ndarray:
    # Vectorized Floyd-Warshall; np.inf marks absent edges. Hand-rolled because
    # dense csgraph input cannot represent legitimate zero-weight edges.
    d = weights.copy()
    for k in range(d.shape[0]):
        np.minimum(d, d[:, k, None] + d[None, k, :], out=d)
    return d


@dataclass(frozen=True, eq=False)
class GeodesicMatrix:
    """Symmetrized all-pairs shortest-path distances over a road network."""

    d: np.ndarray          # (n, n) symmetric, zero diagonal, np.inf unreachable
    reachable: np.ndarray  # (n, n) bool

    @property
    def n(self) -> int:
        return self.d.shape[0]

    def imputed(self, factor: float = 2.0) -> np.ndarray:
        """Finite copy with unreachable pairs pushed to ``factor * max`` distance."""
        out = self.d.copy()
        finite = out[np.isfinite(out)]
        base = float(finite.max()) if finite.size else 0.0
        if base <= 0.0:
            base = 1.0
        out[~np.isfinite(out)] = factor * base
        return out


def geodesic_distances(net: RoadNetwork) -> GeodesicMatrix:
    """All-pairs shortest paths under edge weights, symmetrized.

    Directed distances are first symmetrized as the pairwise minimum of the
    two directions, then closed under one more shortest-path sweep so the
    result is a metric on each co-reachable set; disconnection is flagged
    in ``reachable``, never fatal.
    """
    n = net.n_segments
    w = np.full((n, n), np.inf)
    np.fill_diagonal(w, 0.0)
    for s, t in net.edges:
        w[s, t] = min(w[s, t], edge_weight(net, s, t))
    directed = _all_pairs_shortest(w)
    sym = np.minimum(directed, directed.T)
    closed = _all_pairs_shortest(sym)
    np.fill_diagonal(closed, 0.0)
    return GeodesicMatrix(d=_readonly(closed), reachable=np.isfinite(closed))


# ---------------------------------------------------------------------------
# Embedding


@dataclass(frozen=True, eq=False)
class Embedding:
    """Euclidean coordinates of road segments with the residual squared loss."""

    coords: np.ndarray  # (n, dim), column means zero
    dim: int
    stress: float

    @property
    def n(self) -> int:
        return self.coords.shape[0]


def _pairwise_distances(coords: np.ndarray) -> np.ndarray:
    return cdist(coords, coords)


def _stress(d: np.ndarray, coords: np.ndarray) -> float:
    diff = d - _pairwise_distances(coords)
    return float(np.sum(diff * diff))


def _guttman_step(d: np.ndarray, coords: np.ndarray) -> np.ndarray:
    # One stress-majorization sweep (Guttman transform).
    n = coords.shape[0]
    dist = _pairwise_distances(coords)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(dist > 0.0, d / dist, 0.0)
    b = -ratio
    np.fill_diagonal(b, 0.0)
    np.fill_diagonal(b, -b.sum(axis=1))
    out = b @ coords / n
    return out - out.mean(axis=0)


def _as_distance_matrix(distances) -> np.ndarray:
    if isinstance(distances, GeodesicMatrix):
        d = distances.imputed()
    else:
        d = np.asarray(distances, dtype=float)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise ValueError("distance matrix must be square")
    if not np.all(np.isfinite(d)):
        raise ValueError("distance matrix must be finite (impute unreachable pairs first)")
    if not np.allclose(d, d.T, atol=1e-12):
        raise ValueError("distance matrix must be symmetric")
    return d


def mds_embed(distances, dim: int, refine_sweeps: int = 0) -> Embedding:
    """Embed a symmetric dissimilarity matrix into ``dim`` dimensions.

    Classical MDS (double-centered squared distances, top eigenpairs)
    provides the candidate at each dimension, optionally refined by
    ``refine_sweeps`` stress-majorization sweeps. Dimensions are built as a
    chain, keeping the zero-padded lower-dimensional solution whenever the
    classical candidate fits worse, so the reported stress
    ``sum_{s,s'} (d(s,s') - ||g(s) - g(s')||)^2`` (all ordered pairs) is
    non-increasing in ``dim`` even on non-Euclidean inputs.
    """
    d = _as_distance_matrix(distances)
    n = d.shape[0]
    if not 1 <= dim <= n - 1:
        raise ValueError(f"embedding dimension must be in [1, {n - 1}], got {dim}")
    centering = np.eye(n) - np.full((n, n), 1.0 / n)
    b = -0.5 * centering @ (d * d) @ centering
    evals, evecs = np.linalg.eigh(linalg.symmetrize(b))
    order = np.argsort(evals)[::-1][:dim]
    lam = np.clip(evals[order], 0.0, None)
    classical = evecs[:, order] * np.sqrt(lam)
    classical = classical - classical.mean(axis=0)

    best: np.ndarray | None = None
    best_stress = math.inf
    for q in range(1, dim + 1):
        coords = classical[:, :q]
        for _ in range(refine_sweeps):
            coords = _guttman_step(d, coords)
        stress = _stress(d, coords)
        if best is None or stress <= best_stress:
            best, best_stress = coords, stress
        else:
            best = np.hstack([best, np.zeros((n, 1))])
    coords = np.hstack([best, np.zeros((n, dim - best.shape[1]))])
    return Embedding(coords=_readonly(coords), dim=dim, stress=best_stress)


def choose_embedding_dim(distances, mass: float = 0.95) -> int:
    """Smallest dimension whose retained classical-MDS eigenvalue mass >= ``mass``."""
    d = _as_distance_matrix(distances)
    n = d.shape[0]
    if n < 2:
        raise ValueError("need at least two segments to choose an embedding dimension")
    centering = np.eye(n) - np.full((n, n), 1.0 / n)
    b = -0.5 * centering @ (d * d) @ centering
    evals = np.linalg.eigvalsh(linalg.symmetrize(b))[::-1]
    positive = np.clip(evals, 0.0, None)
    total = positive.sum()
    if total <= 0.0:
        return 1
    cum = np.cumsum(positive) / total
    dim = int(np.searchsorted(cum, mass) + 1)
    return max(1, min(dim, n - 1))


# ---------------------------------------------------------------------------
# Kernel


@dataclass(frozen=True, eq=False)
class KernelHyperparams:
    """Squared-exponential hyperparameters: signal variance, per-dimension
    length-scales, and observation noise variance."""

    signal_variance: float
    length_scales: tuple[float, ...]
    noise_variance: float = 0.0

    def __post_init__(self):
        if not self.signal_variance > 0.0:
            raise ValueError("signal_variance must be strictly positive")
        if not self.length_scales or any(l <= 0.0 for l in self.length_scales):
            raise ValueError("length_scales must be strictly positive")
        if self.noise_variance < 0.0:
            raise ValueError("noise_variance must be nonnegative")

    @property
    def dim(self) -> int:
        return len(self.length_scales)


@dataclass(frozen=True, eq=False)
class EmbeddedKernel:
    """Squared-exponential kernel over embedded segments plus a prior mean."""

    embedding: Embedding
    hyper: KernelHyperparams
    prior_mean: np.ndarray  # (n,)

    @property
    def n_segments(self) -> int:
        return self.embedding.n

    @cached_property
    def _scaled(self) -> np.ndarray:
        return _readonly(self.embedding.coords / np.asarray(self.hyper.length_scales))

    def mean_of(self, indices) -> np.ndarray:
        return self.prior_mean[np.asarray(list(indices), dtype=int)]

    def kernel_value(self, s: int, t: int) -> float:
        diff = self._scaled[s] - self._scaled[t]
        return self.hyper.signal_variance * math.exp(-0.5 * float(diff @ diff))

    def prior_covariance(self, a, b, include_noise: bool = False) -> np.ndarray:
        """Kernel matrix between index lists ``a`` and ``b``.

        With ``include_noise`` and ``a == b`` (the same observation list),
        ``noise_variance`` is added on the diagonal; distinct lists never get
        noise because independent observations share no noise term.
        """
        ai = np.asarray(list(a), dtype=int)
        bi = np.asarray(list(b), dtype=int)
        sq = cdist(self._scaled[ai], self._scaled[bi], "sqeuclidean")
        k = self.hyper.signal_variance * np.exp(-0.5 * sq)
        if include_noise and ai.shape == bi.shape and np.array_equal(ai, bi):
            k[np.diag_indices_from(k)] += self.hyper.noise_variance
        return k


def make_kernel(embedding: Embedding, hyper: KernelHyperparams, prior_mean=0.0) -> EmbeddedKernel:
    """Assemble an :class:`EmbeddedKernel`; scalar prior means broadcast."""
    if hyper.dim != embedding.dim:
        raise ValueError(
            f"length_scales dimension {hyper.dim} != embedding dimension {embedding.dim}"
        )
    mean = np.broadcast_to(np.asarray(prior_mean, dtype=float), (embedding.n,))
    return EmbeddedKernel(embedding=embedding, hyper=hyper, prior_mean=_readonly(mean))


# ---------------------------------------------------------------------------
# Maximum-likelihood hyperparameters


@dataclass(frozen=True)
class FitConfig:
    """Search configuration for maximum-likelihood hyperparameter fitting.

    Bounds default to data-driven ranges (multiples of the sample variance
    and of the per-dimension coordinate spans) when left as None.
    """

    restarts: int = 3
    sweeps: int = 5
    tol: float = 1e-3
    seed: int = 0
    fit_noise: bool = True
    signal_bounds: tuple[float, float] | None = None
    length_bounds: tuple[float, float] | None = None
    noise_bounds: tuple[float, float] | None = None


def log_marginal_likelihood(embedding, hyper, observed, values, prior_mean=None) -> float:
    """Gaussian log marginal likelihood of ``values`` at ``observed`` segments.

    Pure function of its inputs; ``prior_mean`` defaults to the empirical
    mean of the observed values. Returns -inf when the covariance cannot be
    factorized even after jitter.
    """
    kernel = make_kernel(
        embedding, hyper,
        float(np.mean(values)) if prior_mean is None else prior_mean,
    )
    idx = list(observed)
    z = np.asarray(values, dtype=float)
    r = z - kernel.mean_of(idx)
    cov = kernel.prior_covariance(idx, idx, include_noise=True)
    try:
        lower = linalg.chol(cov, hyper.signal_variance)
    except Exception:
        return -math.inf
    alpha = linalg.chol_solve(lower, r)
    return float(
        -0.5 * r @ alpha
        - 0.5 * linalg.logdet_from_chol(lower)
        - 0.5 * len(idx) * math.log(2.0 * math.pi)
    )


_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def _golden_min(f, lo: float, hi: float, tol: float, max_iter: int = 200):
    a, b = lo, hi
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if abs(b - a) <= tol:
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = f(d)
    return (c, fc) if fc < fd else (d, fd)


def fit_hyperparameters(embedding, observed, values, config: FitConfig = FitConfig(),
                        prior_mean=None) -> KernelHyperparams:
    """Maximize the log marginal likelihood over kernel hyperparameters.

    Multi-restart coordinate-wise golden-section search in log-space within
    the configured bounds: derivative-free and deterministic given the seed.
    The first restart starts from moment-based heuristics, the rest from
    seeded log-uniform draws.
    """
    idx = list(observed)
    z = np.asarray(values, dtype=float)
    if len(idx) < 2:
        raise ValueError("hyperparameter fitting needs at least two observations")
    if prior_mean is None:
        prior_mean = float(np.mean(z))
    dim = embedding.dim
    coords = embedding.coords[np.asarray(idx, dtype=int)]

    var = max(float(np.var(z)), 1e-12)
    spans = np.maximum(coords.max(axis=0) - coords.min(axis=0), 1e-6)
    sig_lo, sig_hi = config.signal_bounds or (1e-3 * var, 1e3 * var)
    noi_lo, noi_hi = config.noise_bounds or (1e-6 * var, 1e1 * var)

    def length_bounds(i):
        return config.length_bounds or (1e-2 * float(spans[i]), 1e2 * float(spans[i]))

    bounds = [(math.log(sig_lo), math.log(sig_hi))]
    bounds += [tuple(math.log(v) for v in length_bounds(i)) for i in range(dim)]
    if config.fit_noise:
        bounds.append((math.log(noi_lo), math.log(noi_hi)))

    def unpack(theta):
        sig = math.exp(theta[0])
        ls = tuple(math.exp(t) for t in theta[1:1 + dim])
        noise = math.exp(theta[1 + dim]) if config.fit_noise else 0.0
        return KernelHyperparams(sig, ls, noise)

    def objective(theta):
        return -log_marginal_likelihood(embedding, unpack(theta), idx, z, prior_mean)

    heuristic = [math.log(var)]
    heuristic += [math.log(max(float(np.std(coords[:, i])), 1e-6)) for i in range(dim)]
    if config.fit_noise:
        heuristic.append(math.log(0.1 * var))
    starts = [np.clip(heuristic, [b[0] for b in bounds], [b[1] for b in bounds])]

    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(config.seed)))
    for _ in range(max(config.restarts - 1, 0)):
        starts.append(np.array([rng.uniform(lo, hi) for lo, hi in bounds]))

    best_theta, best_val = None, math.inf
    for start in starts:
        theta = np.asarray(start, dtype=float)
        val = objective(theta)
        for _ in range(config.sweeps):
            improved = False
            for i, (lo, hi) in enumerate(bounds):
                def line(x, i=i):
                    t = theta.copy()
                    t[i] = x
                    return objective(t)
                x, fx = _golden_min(line, lo, hi, config.tol)
                if fx < val - 1e-12:
                    theta[i], val = x, fx
                    improved = True
            if not improved:
                break
        if val < best_val:
            best_theta, best_val = theta.copy(), val
    if best_theta is None or not math.isfinite(best_val):
        raise ValueError("likelihood not finite anywhere in the search box")
    return unpack(best_theta)


# ---------------------------------------------------------------------------
# File formats


def load_network(path) -> RoadNetwork:
    """Read a road network from the versioned JSON document."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise NetworkError(f"cannot read network file {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise NetworkError("network document must be a JSON object")
    version = doc.get("schema_version")
    if version != NETWORK_SCHEMA_VERSION:
        raise NetworkError(f"unsupported network schema version {version!r}")
    try:
        segments = [(rec["id"], rec["features"]) for rec in doc["segments"]]
        edges = [tuple(e) for e in doc["edges"]]
    except (KeyError, TypeError) as exc:
        raise NetworkError(f"malformed network document: {exc}") from exc
    return build_road_network(segments, edges, doc.get("feature_ranges"))


def save_network(net: RoadNetwork, path) -> None:
    doc = {
        "schema_version": NETWORK_SCHEMA_VERSION,
        "segments": [
            {"id": sid, "features": [float(x) for x in net.features[i]]}
            for i, sid in enumerate(net.ids)
        ],
        "edges": [[net.ids[a], net.ids[b]] for a, b in net.edges],
        "feature_ranges": [float(r) for r in net.feature_ranges],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def save_embedding(embedding: Embedding, path) -> None:
    """Write coordinates as a flat text matrix, header line ``n dim``."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{embedding.n} {embedding.dim}\n")
        for row in embedding.coords:
            fh.write(" ".join(f"{x:.17g}" for x in row) + "\n")


def load_embedding(path) -> Embedding:
    """Read a coordinate matrix written by :func:`save_embedding`.

    The file format does not carry the stress residual; loaded embeddings
    report 0.0.
    """
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ConfigError(f"bad embedding header in {path}")
        n, dim = int(header[0]), int(header[1])
        coords = np.loadtxt(fh, ndmin=2)
    if coords.shape != (n, dim):
        raise ConfigError(
            f"embedding matrix shape {coords.shape} does not match header ({n}, {dim})"
        )
    return Embedding(coords=_readonly(coords), dim=dim, stress=0.0)
