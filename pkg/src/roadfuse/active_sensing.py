"""Partially decentralized active sensing: candidate walk enumeration, the
coordination graph built from support-space correlation vectors, connected
components, per-component maximum-entropy joint walks, a centralized
exhaustive oracle, and the entropy-gap performance bound.

Joint-walk covariances over several sensors are assembled blockwise: each
sensor's segments keep their full covariance conditioned on the support set
while cross-sensor covariance flows through the global-summary inverse,
which is what makes the objective separable across graph components.
"""

from __future__ import annotations

import itertools
import math
import struct
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import linalg
from .errors import ProtocolError, SearchBudgetError
from .fusion import GlobalSummary, SupportSet, content_hash, fused_posterior
from .gp_core import joint_entropy
from .road_kernel import EmbeddedKernel, RoadNetwork


@dataclass(frozen=True, eq=False)
class Walk:
    """A directed walk: up to L segments reachable edge-by-edge from the origin."""

    origin: int
    steps: tuple[int, ...]

    @property
    def terminus(self) -> int:
        return self.steps[-1] if self.steps else self.origin


def enumerate_walks(net: RoadNetwork, origin: int, length: int) -> list[Walk]:
    """All directed walks of ``length`` steps from ``origin``, in lexicographic
    step order. A walk reaching a dead end earlier stays as a truncated
    candidate; an origin without out-neighbors yields the single empty walk.
    """
    if not 0 <= origin < net.n_segments:
        raise ValueError(f"origin {origin} out of range")
    walks: list[Walk] = []

    def extend(prefix: list[int]) -> None:
        if len(prefix) == length:
            walks.append(Walk(origin=origin, steps=tuple(prefix)))
            return
        last = prefix[-1] if prefix else origin
        nbrs = net.out_neighbors(last)
        if not nbrs:
            walks.append(Walk(origin=origin, steps=tuple(prefix)))
            return
        for nxt in nbrs:
            prefix.append(nxt)
            extend(prefix)
            prefix.pop()

    extend([])
    return walks


def induced_unobserved(walks, observed) -> tuple[int, ...]:
    """Deduplicated segments a walk (or several walks) would newly observe."""
    if isinstance(walks, Walk):
        walks = (walks,)
    obs = set(observed)
    segs = {s for w in walks for s in w.steps}
    return tuple(sorted(segs - obs))


def walk_entropy(kernel: EmbeddedKernel, summary: GlobalSummary, segments) -> float:
    """Fused-posterior joint entropy over one set of segments; 0 when empty."""
    segs = tuple(segments)
    if not segs:
        return 0.0
    return joint_entropy(fused_posterior(kernel, summary, segs))


# ---------------------------------------------------------------------------
# Coordination graph


def support_cholesky(kernel: EmbeddedKernel, summary: GlobalSummary) -> np.ndarray:
    """Lower Cholesky factor of the global-summary support matrix."""
    return linalg.chol(summary.S_ddot, kernel.hyper.signal_variance)


def psi_hash(psi: np.ndarray) -> int:
    return content_hash(np.ascontiguousarray(psi, dtype="<f8").tobytes())


def compute_phi(kernel: EmbeddedKernel, psi: np.ndarray, support: SupportSet,
                segments) -> np.ndarray:
    """Correlation vectors, one row per candidate segment: each solves the
    triangular system of the support factor against the segment's
    support-covariance column."""
    segs = tuple(segments)
    if not segs:
        return np.zeros((0, len(support)))
    k_us = kernel.prior_covariance(support.indices, segs)
    return linalg.tri_solve(psi, k_us).T


def adjacency_vector(sensor: int, phis: Sequence[np.ndarray], epsilon: float) -> np.ndarray:
    """0/1 adjacency of one sensor against all others: 1 where the largest
    absolute dot product between correlation vectors exceeds ``epsilon``;
    self-adjacency is 1 by convention."""
    n = len(phis)
    a = np.zeros(n, dtype=int)
    a[sensor] = 1
    mine = phis[sensor]
    for other in range(n):
        if other == sensor or mine.size == 0 or phis[other].size == 0:
            continue
        if np.max(np.abs(mine @ phis[other].T)) > epsilon:
            a[other] = 1
    return a


def coordination_adjacency(phis: Sequence[np.ndarray], epsilon: float) -> np.ndarray:
    """Full adjacency matrix: every sensor's adjacency vector stacked."""
    return np.array([adjacency_vector(k, phis, epsilon) for k in range(len(phis))])


def connected_components(adjacency) -> tuple[tuple[tuple[int, ...], ...], int]:
    """Connected components by depth-first search; returns the sorted vertex
    sets and the size of the largest one."""
    a = np.asarray(adjacency)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("adjacency must be square")
    if not np.array_equal(a, a.T):
        raise ValueError("adjacency must be symmetric")
    n = a.shape[0]
    seen = [False] * n
    comps: list[tuple[int, ...]] = []
    for root in range(n):
        if seen[root]:
            continue
        seen[root] = True
        stack, comp = [root], []
        while stack:
            v = stack.pop()
            comp.append(v)
            for w in range(n - 1, -1, -1):
                if a[v, w] and not seen[w]:
                    seen[w] = True
                    stack.append(w)
        comps.append(tuple(sorted(comp)))
    kappa = max((len(c) for c in comps), default=0)
    return tuple(comps), kappa


# ---------------------------------------------------------------------------
# Joint-walk search


class _PlanContext:
    """Per-search cache: kernel values among candidate segments plus their
    solved support components, so each joint-walk covariance is assembled
    from small slices."""

    def __init__(self, kernel: EmbeddedKernel, summary: GlobalSummary, segments):
        self.segments = tuple(segments)
        self.pos = {s: i for i, s in enumerate(self.segments)}
        sig = kernel.hyper.signal_variance
        u = summary.support.indices
        k_us = kernel.prior_covariance(u, self.segments)
        l_uu = linalg.chol(kernel.prior_covariance(u, u), sig)
        psi = support_cholesky(kernel, summary)
        self.k_ss = kernel.prior_covariance(self.segments, self.segments)
        self.q = linalg.tri_solve(l_uu, k_us)    # prior support components
        self.phi = linalg.tri_solve(psi, k_us)   # fused support components
        self.scale = sig

    def joint_covariance(self, blocks: Sequence[tuple[int, ...]]) -> np.ndarray:
        """Fused covariance of disjoint per-sensor blocks: cross terms through
        the global summary everywhere, full support-conditional covariance
        added on each block's own diagonal."""
        idx = np.array([self.pos[s] for b in blocks for s in b], dtype=int)
        cov = self.phi[:, idx].T @ self.phi[:, idx]
        at = 0
        for b in blocks:
            if not b:
                continue
            sl = slice(at, at + len(b))
            bidx = idx[sl]
            cov[sl, sl] += (
                self.k_ss[np.ix_(bidx, bidx)] - self.q[:, bidx].T @ self.q[:, bidx]
            )
            at += len(b)
        return linalg.symmetrize(cov)

    def joint_entropy(self, blocks: Sequence[tuple[int, ...]]) -> float:
        if not any(blocks):
            return 0.0
        cov = self.joint_covariance(blocks)
        return linalg.gaussian_entropy(cov)


def _dedup_blocks(per_sensor: Sequence[tuple[int, ...]]) -> list[tuple[int, ...]]:
    # A segment induced by several sensors' walks belongs to the first
    # (lowest-id) sensor's block.
    seen: set[int] = set()
    blocks = []
    for segs in per_sensor:
        block = tuple(s for s in segs if s not in seen)
        seen.update(block)
        blocks.append(block)
    return blocks


def blockwise_joint_entropy(kernel: EmbeddedKernel, summary: GlobalSummary,
                            per_sensor_segments: Sequence[Sequence[int]]) -> float:
    """Joint entropy of several sensors' induced segments under the blockwise
    fused covariance; equals :func:`walk_entropy` exactly for one sensor."""
    blocks = _dedup_blocks([tuple(b) for b in per_sensor_segments])
    union = tuple(s for b in blocks for s in b)
    if not union:
        return 0.0
    ctx = _PlanContext(kernel, summary, union)
    return ctx.joint_entropy(blocks)


@dataclass(frozen=True, eq=False)
class JointWalk:
    """A chosen walk per sensor of one coordination-graph component."""

    sensors: tuple[int, ...]
    walks: tuple[Walk, ...]
    walk_indices: tuple[int, ...]
    segments: tuple[int, ...]
    entropy: float


def _search_joint_walk(kernel, summary, sensors, walk_sets, observed, budget):
    sensors = tuple(sensors)
    candidate_sets = []
    for k in sensors:
        walks = walk_sets[k]
        if not walks:
            raise ValueError(f"sensor {k} has no candidate walks")
        candidate_sets.append([induced_unobserved(w, observed) for w in walks])
    combos = 1
    for c in candidate_sets:
        combos *= len(c)
    if combos > budget:
        raise SearchBudgetError(
            f"{combos} joint walks exceed the search budget of {budget}"
        )
    union = tuple(sorted({s for c in candidate_sets for segs in c for s in segs}))
    ctx = _PlanContext(kernel, summary, union)
    best_idx: tuple[int, ...] | None = None
    best_entropy = -math.inf
    best_blocks: list[tuple[int, ...]] = []
    for combo in itertools.product(*(range(len(c)) for c in candidate_sets)):
        blocks = _dedup_blocks([candidate_sets[i][j] for i, j in enumerate(combo)])
        entropy = ctx.joint_entropy(blocks)
        if entropy > best_entropy:
            best_idx, best_entropy, best_blocks = combo, entropy, blocks
    assert best_idx is not None
    return JointWalk(
        sensors=sensors,
        walks=tuple(walk_sets[k][j] for k, j in zip(sensors, best_idx)),
        walk_indices=best_idx,
        segments=tuple(s for b in best_blocks for s in b),
        entropy=best_entropy,
    )


def max_entropy_joint_walk(kernel: EmbeddedKernel, summary: GlobalSummary,
                           component: Sequence[int], walk_sets: Mapping[int, Sequence[Walk]],
                           observed, budget: int = 10**6) -> JointWalk:
    """Exhaustive maximum-entropy joint walk of one component's sensors.

    Evaluates every combination of the component members' candidate walks
    (erroring out, never truncating, past ``budget`` evaluations); ties are
    broken by the lexicographically first walk-index combination, and walks
    with nothing left to observe score 0.
    """
    return _search_joint_walk(kernel, summary, sorted(component), walk_sets, observed, budget)


def centralized_joint_walk(kernel: EmbeddedKernel, summary: GlobalSummary,
                           walk_sets: Mapping[int, Sequence[Walk]], observed,
                           budget: int = 10**6) -> JointWalk:
    """Exhaustive argmax over the full joint walk space of all sensors; the
    oracle the partially decentralized search is measured against."""
    return _search_joint_walk(kernel, summary, sorted(walk_sets), walk_sets, observed, budget)


def compute_xi(kernel: EmbeddedKernel, summary: GlobalSummary,
               components: Sequence[Sequence[int]], walk_sets: Mapping[int, Sequence[Walk]],
               observed, budget: int = 10**6) -> float:
    """Largest absolute entry over the inverses of every component's
    joint-walk covariances (desk scale only)."""
    xi = 0.0
    for component in components:
        sensors = sorted(component)
        candidate_sets = [
            [induced_unobserved(w, observed) for w in walk_sets[k]] for k in sensors
        ]
        combos = 1
        for c in candidate_sets:
            combos *= len(c)
        if combos > budget:
            raise SearchBudgetError(
                f"{combos} joint walks exceed the search budget of {budget}"
            )
        union = tuple(sorted({s for c in candidate_sets for segs in c for s in segs}))
        if not union:
            continue
        ctx = _PlanContext(kernel, summary, union)
        for combo in itertools.product(*(range(len(c)) for c in candidate_sets)):
            blocks = _dedup_blocks([candidate_sets[i][j] for i, j in enumerate(combo)])
            if not any(blocks):
                continue
            cov = ctx.joint_covariance(blocks)
            lower = linalg.chol(cov, ctx.scale)
            inv = linalg.chol_solve(lower, np.eye(cov.shape[0]))
            xi = max(xi, float(np.max(np.abs(inv))))
    return xi


# ---------------------------------------------------------------------------
# Performance bound


@dataclass(frozen=True)
class BoundCondition:
    """Entropy-gap guarantee: the bound only applies while the combined
    condition value stays below one."""

    condition_value: float
    epsilon_bar: float | None

    @property
    def satisfied(self) -> bool:
        return self.epsilon_bar is not None


def theorem2_bound(n_sensors: int, walk_length: int, kappa: int, xi: float,
                   epsilon: float) -> BoundCondition:
    """Entropy-gap bound ``0.5 log(1 / (1 - c^2))`` with
    ``c = K^1.5 L^2.5 kappa xi epsilon``; condition failure is a value."""
    c = (n_sensors ** 1.5) * (walk_length ** 2.5) * kappa * xi * epsilon
    if c < 1.0:
        return BoundCondition(condition_value=c, epsilon_bar=0.5 * math.log(1.0 / (1.0 - c * c)))
    return BoundCondition(condition_value=c, epsilon_bar=None)


@dataclass(frozen=True)
class BoundReport:
    """One desk-scale check of the entropy-gap guarantee."""

    n_sensors: int
    walk_length: int
    kappa: int
    xi: float
    epsilon: float
    condition_value: float
    epsilon_bar: float | None
    centralized_entropy: float
    decentralized_entropy: float
    achieved_gap: float
    components: tuple[tuple[int, ...], ...]

    @property
    def condition_satisfied(self) -> bool:
        return self.epsilon_bar is not None

    def to_dict(self) -> dict:
        return {
            "n_sensors": self.n_sensors,
            "walk_length": self.walk_length,
            "kappa": self.kappa,
            "xi": self.xi,
            "epsilon": self.epsilon,
            "condition_value": self.condition_value,
            "condition_satisfied": self.condition_satisfied,
            "epsilon_bar": self.epsilon_bar,
            "centralized_entropy": self.centralized_entropy,
            "decentralized_entropy": self.decentralized_entropy,
            "achieved_gap": self.achieved_gap,
            "components": [list(c) for c in self.components],
        }


def bound_report(kernel: EmbeddedKernel, summary: GlobalSummary,
                 walk_sets: Mapping[int, Sequence[Walk]], observed,
                 epsilon: float, walk_length: int, budget: int = 10**6) -> BoundReport:
    """Run the full partially-decentralized pipeline against the centralized
    oracle and report the achieved entropy gap next to its bound."""
    sensors = sorted(walk_sets)
    psi = support_cholesky(kernel, summary)
    phis = [
        compute_phi(kernel, psi, summary.support,
                    induced_unobserved(walk_sets[k], observed))
        for k in sensors
    ]
    adjacency = coordination_adjacency(phis, epsilon)
    comp_pos, kappa = connected_components(adjacency)
    components = tuple(tuple(sensors[i] for i in comp) for comp in comp_pos)

    chosen: dict[int, Walk] = {}
    for component in components:
        joint = max_entropy_joint_walk(kernel, summary, component, walk_sets, observed, budget)
        for k, w in zip(joint.sensors, joint.walks):
            chosen[k] = w
    decentralized = blockwise_joint_entropy(
        kernel, summary,
        [induced_unobserved(chosen[k], observed) for k in sensors],
    )
    star = centralized_joint_walk(kernel, summary, walk_sets, observed, budget)
    xi = compute_xi(kernel, summary, components, walk_sets, observed, budget)
    condition = theorem2_bound(len(sensors), walk_length, kappa, xi, epsilon)
    return BoundReport(
        n_sensors=len(sensors),
        walk_length=walk_length,
        kappa=kappa,
        xi=xi,
        epsilon=epsilon,
        condition_value=condition.condition_value,
        epsilon_bar=condition.epsilon_bar,
        centralized_entropy=star.entropy,
        decentralized_entropy=decentralized,
        achieved_gap=star.entropy - decentralized,
        components=components,
    )


# ---------------------------------------------------------------------------
# Wire formats


_PHI_HEADER = struct.Struct("<4Q")  # sensor id, rows, |U|, factor hash


def encode_phi(sensor_id: int, phi: np.ndarray, factor_hash: int) -> bytes:
    """Serialize correlation vectors: 4 little-endian uint64 header fields
    then the row-major matrix as little-endian float64."""
    rows, cols = phi.shape
    head = _PHI_HEADER.pack(sensor_id, rows, cols, factor_hash)
    return head + np.ascontiguousarray(phi, dtype="<f8").tobytes()


def decode_phi(data: bytes, expected_factor_hash: int) -> tuple[int, np.ndarray]:
    if len(data) < _PHI_HEADER.size:
        raise ProtocolError("truncated correlation-vector message")
    sensor_id, rows, cols, factor_hash = _PHI_HEADER.unpack_from(data)
    if factor_hash != expected_factor_hash:
        raise ProtocolError("support-factor content hash mismatch")
    expected = _PHI_HEADER.size + 8 * rows * cols
    if len(data) != expected:
        raise ProtocolError(f"bad message length {len(data)}, expected {expected}")
    phi = np.frombuffer(data, dtype="<f8", offset=_PHI_HEADER.size).reshape(rows, cols)
    return int(sensor_id), phi.astype(float)


def encode_adjacency(vector) -> bytes:
    """K-bit little-endian bitmap of one adjacency vector."""
    bits = np.asarray(vector, dtype=np.uint8)
    return np.packbits(bits, bitorder="little").tobytes()


def decode_adjacency(data: bytes, n_sensors: int) -> np.ndarray:
    bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8), bitorder="little")
    if len(bits) < n_sensors:
        raise ProtocolError("adjacency bitmap shorter than the sensor count")
    return bits[:n_sensors].astype(int)
