"""Synchronous-round multi-agent simulation over a synthetic ground-truth
phenomenon, with RMSE metrics, per-agent timing, a message-size ledger, and
centralized baselines.

Three algorithms share the round loop: "dec" runs decentralized summary
fusion plus partially decentralized planning, while "fgp" and "sod" pool
every observation centrally and plan with an exhaustive joint search under
their own posterior. All messages produced in a phase are delivered before
the next phase begins, and every random draw is keyed by (seed, round,
sensor) so results do not depend on execution interleaving.
"""

from __future__ import annotations

import csv
import itertools
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from . import linalg
from .active_sensing import (
    Walk,
    blockwise_joint_entropy,
    compute_phi,
    connected_components,
    coordination_adjacency,
    decode_adjacency,
    decode_phi,
    encode_adjacency,
    encode_phi,
    enumerate_walks,
    induced_unobserved,
    max_entropy_joint_walk,
    psi_hash,
    support_cholesky,
)
from .errors import ConfigError, SearchBudgetError
from .fusion import (
    GlobalSummary,
    SupportSet,
    decode_local_summary,
    encode_local_summary,
    fused_posterior,
    global_summary,
    local_summary,
    pitc_posterior,
    summary_message_size,
)
from .gp_core import ObservationSet, gp_posterior, greedy_select, sample_gp, stack_observations
from .road_kernel import (
    EmbeddedKernel,
    FitConfig,
    KernelHyperparams,
    build_road_network,
    choose_embedding_dim,
    fit_hyperparameters,
    geodesic_distances,
    load_network,
    make_kernel,
    mds_embed,
)

ALGORITHMS = ("dec", "sod", "fgp")

# SeedSequence spawn-key streams
_PLACEMENT_STREAM = 1
_NOISE_STREAM = 2
_PILOT_STREAM = 3
_SYNTH_STREAM = 4


def _rng(seed: int, *key: int) -> np.random.Generator:
    seq = np.random.SeedSequence(entropy=seed, spawn_key=tuple(key))
    return np.random.Generator(np.random.Philox(seq))


# ---------------------------------------------------------------------------
# Configuration


@dataclass(frozen=True)
class SimConfig:
    """One simulation cell: a fixed sensor count, walk length, and seed."""

    n_sensors: int
    walk_length: int
    support_size: int
    epsilon: float
    noise_variance: float
    budget: int
    seed: int = 0
    truth_seed: int = 0
    signal_variance: float = 1.0
    length_scales: object = 1.0   # scalar, per-dimension sequence, or "fit"
    prior_mean: float = 0.0
    embed_dim: int | None = None
    walk_search_budget: int = 10**6
    workers: int = 1
    network_path: str | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    """A grid of simulation cells plus the algorithms to run on each."""

    network_path: str | None
    n_sensors: tuple[int, ...]
    walk_length: tuple[int, ...]
    support_size: int
    epsilon: float
    noise_variance: float
    budget: int
    seeds: tuple[int, ...]
    algorithms: tuple[str, ...]
    truth_seed: int = 0
    signal_variance: float = 1.0
    length_scales: object = 1.0
    prior_mean: float = 0.0
    embed_dim: int | None = None
    walk_search_budget: int = 10**6
    workers: int = 1

    def cell(self, n_sensors: int, walk_length: int, seed: int) -> SimConfig:
        return SimConfig(
            n_sensors=n_sensors,
            walk_length=walk_length,
            support_size=self.support_size,
            epsilon=self.epsilon,
            noise_variance=self.noise_variance,
            budget=self.budget,
            seed=seed,
            truth_seed=self.truth_seed,
            signal_variance=self.signal_variance,
            length_scales=self.length_scales,
            prior_mean=self.prior_mean,
            embed_dim=self.embed_dim,
            walk_search_budget=self.walk_search_budget,
            workers=self.workers,
            network_path=self.network_path,
        )


_CONFIG_KEYS = {
    "network_path", "K", "L", "U_size", "epsilon", "sigma_n2", "signal_variance",
    "length_scales", "prior_mean", "budget", "seeds", "truth_seed", "algorithms",
    "embed_dim", "walk_search_budget", "workers",
}


def _as_tuple(value) -> tuple:
    if isinstance(value, (list, tuple)):
        return tuple(value)
    return (value,)


def parse_experiment_config(doc: dict) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(doc) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        algorithms = doc.get("algorithms", ["dec"])
        if algorithms == "all":
            algorithms = list(ALGORITHMS)
        algorithms = tuple(str(a) for a in _as_tuple(algorithms))
        for a in algorithms:
            if a not in ALGORITHMS:
                raise ConfigError(f"unknown algorithm {a!r}; expected one of {ALGORITHMS}")
        ls = doc.get("length_scales", 1.0)
        if isinstance(ls, list):
            ls = tuple(float(x) for x in ls)
        elif ls != "fit":
            ls = float(ls)
        return ExperimentConfig(
            network_path=doc.get("network_path"),
            n_sensors=tuple(int(k) for k in _as_tuple(doc["K"])),
            walk_length=tuple(int(l) for l in _as_tuple(doc["L"])),
            support_size=int(doc["U_size"]),
            epsilon=float(doc["epsilon"]),
            noise_variance=float(doc["sigma_n2"]),
            budget=int(doc["budget"]),
            seeds=tuple(int(s) for s in _as_tuple(doc.get("seeds", 0))),
            algorithms=algorithms,
            truth_seed=int(doc.get("truth_seed", 0)),
            signal_variance=float(doc.get("signal_variance", 1.0)),
            length_scales=ls,
            prior_mean=float(doc.get("prior_mean", 0.0)),
            embed_dim=None if doc.get("embed_dim") is None else int(doc["embed_dim"]),
            walk_search_budget=int(doc.get("walk_search_budget", 10**6)),
            workers=int(doc.get("workers", 1)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config: {exc}") from exc


def load_experiment_config(path) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_experiment_config(doc)


# ---------------------------------------------------------------------------
# Synthetic networks


def random_network(n_segments: int, seed: int = 0, n_features: int = 3,
                   out_degree: int = 2):
    """Strongly connected synthetic road network with uniform out-degree:
    a ring plus seeded random shortcut edges, random feature vectors."""
    if n_segments < 2:
        raise ValueError("need at least two segments")
    rng = _rng(seed, _SYNTH_STREAM)
    scales = np.array([10.0 ** i for i in range(n_features)])
    features = rng.uniform(0.0, 1.0, size=(n_segments, n_features)) * scales
    segments = [(f"s{i:04d}", features[i]) for i in range(n_segments)]
    edges = []
    for i in range(n_segments):
        targets = {(i + 1) % n_segments}
        while len(targets) < min(out_degree, n_segments - 1):
            t = int(rng.integers(0, n_segments))
            if t != i:
                targets.add(t)
        for t in sorted(targets):
            edges.append((f"s{i:04d}", f"s{t:04d}"))
    return build_road_network(segments, edges)


# ---------------------------------------------------------------------------
# World state


@dataclass(frozen=True, eq=False)
class SensorState:
    """One mobile sensor: where it sits and what it has observed so far."""

    sensor_id: int
    position: int
    obs: ObservationSet
    inbox: tuple[bytes, ...] = ()
    outbox: tuple[bytes, ...] = ()


@dataclass(frozen=True, eq=False)
class WorldState:
    """Everything one simulation cell needs: immutable between rounds."""

    network: object
    kernel: EmbeddedKernel
    support: SupportSet
    truth: np.ndarray
    sensors: tuple[SensorState, ...]
    round_index: int
    total_obs: int
    config: SimConfig


def observed_union(world: WorldState) -> tuple[int, ...]:
    return tuple(sorted({i for s in world.sensors for i in s.obs.indices}))


def _observe(world: WorldState, sensor_id: int, segments: Sequence[int],
             round_index: int) -> np.ndarray:
    rng = _rng(world.config.seed, _NOISE_STREAM, round_index, sensor_id)
    noise = np.sqrt(world.config.noise_variance) * rng.standard_normal(len(segments))
    return world.truth[np.asarray(segments, dtype=int)] + noise


def _fitted_kernel(config: SimConfig, embedding, truth: np.ndarray) -> EmbeddedKernel:
    rng = _rng(config.seed, _PILOT_STREAM)
    n = embedding.n
    m = min(max(2 * config.support_size, 16), n)
    idx = np.sort(rng.choice(n, size=m, replace=False))
    z = truth[idx] + np.sqrt(config.noise_variance) * rng.standard_normal(m)
    hyper = fit_hyperparameters(
        embedding, idx, z, FitConfig(seed=config.seed, restarts=2, sweeps=3, tol=1e-2)
    )
    return make_kernel(embedding, hyper, float(np.mean(z)))


def init_world(config: SimConfig, network=None) -> WorldState:
    """Build the ground truth, the support set, and the starting sensors.

    The phenomenon is one seeded prior draw on the whole network; sensors
    are placed uniformly at random and observe their origin segment if the
    budget allows; the support set is selected greedily, offline, before
    any observation.
    """
    if network is None:
        if config.network_path is None:
            raise ConfigError("no network given: set network_path or pass one in")
        network = load_network(config.network_path)
    n = network.n_segments
    geo = geodesic_distances(network)
    dim = config.embed_dim if config.embed_dim is not None else choose_embedding_dim(geo)
    embedding = mds_embed(geo, dim)

    ls = config.length_scales
    if isinstance(ls, str):
        if ls != "fit":
            raise ConfigError(f"length_scales must be numeric or 'fit', got {ls!r}")
        heuristic = tuple(max(float(s), 1e-6) for s in embedding.coords.std(axis=0))
        gen_hyper = KernelHyperparams(config.signal_variance, heuristic, config.noise_variance)
    else:
        scales = (float(ls),) * dim if np.isscalar(ls) else tuple(float(x) for x in ls)
        gen_hyper = KernelHyperparams(config.signal_variance, scales, config.noise_variance)
    gen_kernel = make_kernel(embedding, gen_hyper, config.prior_mean)
    truth = sample_gp(gen_kernel, range(n), config.truth_seed)
    kernel = _fitted_kernel(config, embedding, truth) if ls == "fit" else gen_kernel

    support_size = min(config.support_size, n)
    support = SupportSet(tuple(sorted(greedy_select(kernel, range(n), support_size))))

    placement = _rng(config.seed, _PLACEMENT_STREAM)
    positions = placement.integers(0, n, size=config.n_sensors)
    stub = WorldState(network, kernel, support, truth, (), 0, 0, config)
    sensors = []
    total = 0
    take_initial = config.budget >= config.n_sensors
    for k in range(config.n_sensors):
        pos = int(positions[k])
        if take_initial:
            obs = ObservationSet(indices=(pos,), values=_observe(stub, k, [pos], 0))
            total += 1
        else:
            obs = ObservationSet.empty()
        sensors.append(SensorState(sensor_id=k, position=pos, obs=obs))
    return WorldState(
        network=network,
        kernel=kernel,
        support=support,
        truth=truth,
        sensors=tuple(sensors),
        round_index=0,
        total_obs=total,
        config=config,
    )


# ---------------------------------------------------------------------------
# Metrics and message ledger


@dataclass(frozen=True)
class Message:
    """One broadcast: float64 payload scalars and/or raw bits."""

    kind: str  # "summary" | "phi" | "adjacency" | "observations"
    scalars: int = 0
    bits: int = 0


@dataclass(frozen=True)
class RoundPayload:
    summary_scalars: int = 0
    phi_scalars: int = 0
    observation_scalars: int = 0
    adjacency_bits: int = 0

    @property
    def total_scalars(self) -> int:
        return self.summary_scalars + self.phi_scalars + self.observation_scalars


def ledger_account(messages: Iterable[Message]) -> RoundPayload:
    """Total per-kind payload of one round's broadcasts."""
    sums = {"summary": 0, "phi": 0, "adjacency": 0, "observations": 0}
    bits = 0
    for m in messages:
        if m.kind not in sums:
            raise ValueError(f"unknown message kind {m.kind!r}")
        sums[m.kind] += m.scalars
        bits += m.bits
    return RoundPayload(
        summary_scalars=sums["summary"],
        phi_scalars=sums["phi"],
        observation_scalars=sums["observations"],
        adjacency_bits=bits,
    )


@dataclass(frozen=True)
class MetricsRow:
    algorithm: str
    n_sensors: int
    walk_length: int
    seed: int
    round_index: int
    n_observations: int
    rmse: float
    kappa: int
    payload_scalars: int
    summary_scalars: int
    adjacency_bits: int
    max_agent_ms: float


def rmse(predicted, truth) -> float:
    """Root mean squared error over aligned prediction and truth vectors."""
    predicted = np.asarray(predicted, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if predicted.shape != truth.shape:
        raise ValueError(f"shape mismatch {predicted.shape} vs {truth.shape}")
    diff = predicted - truth
    return float(np.sqrt(np.mean(diff * diff)))


# ---------------------------------------------------------------------------
# Round execution


def _map(fn, items, workers: int):
    items = list(items)
    if workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def _timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


@dataclass(frozen=True)
class _FusionPhase:
    prediction_mean: np.ndarray
    rmse: float
    messages: tuple[Message, ...]
    outboxes: tuple[tuple[bytes, ...], ...]
    max_sensor_seconds: float
    reduce_seconds: float
    gsum: GlobalSummary | None          # dec only
    conditioning: tuple[ObservationSet, ...] | None  # baselines only


def _dec_fusion(world: WorldState) -> _FusionPhase:
    cfg = world.config
    kernel, support = world.kernel, world.support

    def summarize(sensor: SensorState):
        return _timed(
            lambda: encode_local_summary(local_summary(kernel, support, sensor.obs, sensor.sensor_id))
        )
    results = _map(summarize, world.sensors, cfg.workers)
    wires = [r[0] for r in results]
    times = [r[1] for r in results]
    decoded = [decode_local_summary(w, support) for w in wires]

    def reduce_and_predict():
        gsum = global_summary(kernel, support, decoded)
        pred = fused_posterior(kernel, gsum, range(world.network.n_segments))
        return gsum, pred
    (gsum, pred), reduce_s = _timed(reduce_and_predict)
    messages = tuple(
        Message("summary", scalars=summary_message_size(d)) for d in decoded
    )
    return _FusionPhase(
        prediction_mean=pred.mean,
        rmse=rmse(pred.mean, world.truth),
        messages=messages,
        outboxes=tuple((w,) for w in wires),
        max_sensor_seconds=max(times),
        reduce_seconds=reduce_s,
        gsum=gsum,
        conditioning=None,
    )


def _sod_subset(kernel: EmbeddedKernel, blocks, size: int) -> list[int]:
    d_idx, _ = stack_observations(blocks)
    unique = sorted(set(d_idx))
    return greedy_select(kernel, unique, min(size, len(unique)))


def _baseline_fusion(world: WorldState, algorithm: str) -> _FusionPhase:
    cfg = world.config
    blocks = tuple(s.obs for s in world.sensors)

    def fuse():
        if algorithm == "sod":
            subset = _sod_subset(world.kernel, blocks, cfg.support_size)
            conditioning = tuple(b.restricted_to(subset) for b in blocks)
        else:
            conditioning = blocks
        pred = gp_posterior(world.kernel, conditioning, range(world.network.n_segments))
        return conditioning, pred
    (conditioning, pred), fuse_s = _timed(fuse)
    # Each sensor rebroadcasts its full local observation set (id + value per
    # observation) so any sensor could redo the fusion after a dropout.
    messages = tuple(
        Message("observations", scalars=2 * len(s.obs)) for s in world.sensors
    )
    return _FusionPhase(
        prediction_mean=pred.mean,
        rmse=rmse(pred.mean, world.truth),
        messages=messages,
        outboxes=tuple((b"",) for _ in world.sensors),
        max_sensor_seconds=fuse_s,
        reduce_seconds=0.0,
        gsum=None,
        conditioning=conditioning,
    )


def _centralized_plan(kernel: EmbeddedKernel, conditioning, walk_sets, observed,
                      budget: int):
    """Exhaustive joint-walk argmax under the exact posterior of the given
    conditioning observations (the centralized baselines' objective)."""
    sensors = sorted(walk_sets)
    candidate_sets = [
        [induced_unobserved(w, observed) for w in walk_sets[k]] for k in sensors
    ]
    combos = 1
    for c in candidate_sets:
        combos *= len(c)
    if combos > budget:
        raise SearchBudgetError(f"{combos} joint walks exceed the search budget of {budget}")
    union = tuple(sorted({s for c in candidate_sets for segs in c for s in segs}))
    pos = {s: i for i, s in enumerate(union)}
    if union:
        cond_cov = gp_posterior(kernel, conditioning, union).cov
    else:
        cond_cov = np.zeros((0, 0))
    best_idx = None
    best_entropy = -np.inf
    for combo in itertools.product(*(range(len(c)) for c in candidate_sets)):
        segs = sorted({s for i, j in enumerate(combo) for s in candidate_sets[i][j]})
        if segs:
            sel = np.array([pos[s] for s in segs], dtype=int)
            entropy = linalg.gaussian_entropy(cond_cov[np.ix_(sel, sel)])
        else:
            entropy = 0.0
        if entropy > best_entropy:
            best_idx, best_entropy = combo, entropy
    return {k: walk_sets[k][j] for k, j in zip(sensors, best_idx)}, best_entropy


def _execute_walks(world: WorldState, chosen: dict[int, Walk],
                   observed_at_planning, round_index: int):
    cfg = world.config
    blocked = set(observed_at_planning)
    remaining = cfg.budget - world.total_obs
    new_sensors = []
    added = 0
    for sensor in world.sensors:
        walk = chosen[sensor.sensor_id]
        fresh = []
        seen: set[int] = set()
        for seg in walk.steps:
            if seg in blocked or seg in seen:
                continue
            seen.add(seg)
            fresh.append(seg)
        take = max(min(len(fresh), remaining - added), 0)
        fresh = fresh[:take]
        if fresh:
            values = _observe(world, sensor.sensor_id, fresh, round_index)
            obs = sensor.obs.extended(fresh, values)
            added += len(fresh)
        else:
            obs = sensor.obs
        new_sensors.append(replace(sensor, position=walk.terminus, obs=obs))
    return tuple(new_sensors), added


def step_round(world: WorldState, algorithm: str) -> tuple[WorldState, MetricsRow]:
    """One full synchronous round: fuse, predict, plan, move, observe."""
    if algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    cfg = world.config
    if world.total_obs >= cfg.budget:
        raise ValueError("observation budget exhausted")
    round_index = world.round_index + 1
    observed = observed_union(world)
    walk_sets = {
        s.sensor_id: enumerate_walks(world.network, s.position, cfg.walk_length)
        for s in world.sensors
    }
    messages: list[Message] = []

    if algorithm == "dec":
        fusion = _dec_fusion(world)
        messages.extend(fusion.messages)
        psi = support_cholesky(world.kernel, fusion.gsum)
        factor_hash = psi_hash(psi)

        def make_phi(sensor: SensorState):
            segs = induced_unobserved(walk_sets[sensor.sensor_id], observed)
            return _timed(lambda: encode_phi(
                sensor.sensor_id,
                compute_phi(world.kernel, psi, world.support, segs),
                factor_hash,
            ))
        phi_results = _map(make_phi, world.sensors, cfg.workers)
        phis = [decode_phi(r[0], factor_hash)[1] for r in phi_results]
        phi_seconds = max(r[1] for r in phi_results)
        messages.extend(Message("phi", scalars=p.size) for p in phis)

        adjacency = coordination_adjacency(phis, cfg.epsilon)
        bitmap_wires = [encode_adjacency(row) for row in adjacency]
        adjacency = np.array([
            decode_adjacency(w, cfg.n_sensors) for w in bitmap_wires
        ])
        messages.extend(Message("adjacency", bits=cfg.n_sensors) for _ in bitmap_wires)
        components, kappa = connected_components(adjacency)

        def plan(component):
            return _timed(lambda: max_entropy_joint_walk(
                world.kernel, fusion.gsum, component, walk_sets, observed,
                cfg.walk_search_budget,
            ))
        plans = _map(plan, components, cfg.workers)
        chosen: dict[int, Walk] = {}
        for joint, _ in plans:
            for k, w in zip(joint.sensors, joint.walks):
                chosen[k] = w
        plan_seconds = max(p[1] for p in plans)
        agent_seconds = fusion.max_sensor_seconds + fusion.reduce_seconds + phi_seconds + plan_seconds
    else:
        fusion = _baseline_fusion(world, algorithm)
        messages.extend(fusion.messages)
        (chosen, _), plan_seconds = _timed(lambda: _centralized_plan(
            world.kernel, fusion.conditioning, walk_sets, observed,
            cfg.walk_search_budget,
        ))
        kappa = cfg.n_sensors
        agent_seconds = fusion.max_sensor_seconds + plan_seconds

    sensors, added = _execute_walks(world, chosen, observed, round_index)
    sensors = tuple(
        replace(s, outbox=out) for s, out in zip(sensors, fusion.outboxes)
    )
    payload = ledger_account(messages)
    row = MetricsRow(
        algorithm=algorithm,
        n_sensors=cfg.n_sensors,
        walk_length=cfg.walk_length,
        seed=cfg.seed,
        round_index=round_index,
        n_observations=world.total_obs,
        rmse=fusion.rmse,
        kappa=kappa,
        payload_scalars=payload.total_scalars,
        summary_scalars=payload.summary_scalars,
        adjacency_bits=payload.adjacency_bits,
        max_agent_ms=1000.0 * agent_seconds,
    )
    new_world = replace(
        world, sensors=sensors, round_index=round_index,
        total_obs=world.total_obs + added,
    )
    return new_world, row


def _snapshot_row(world: WorldState, algorithm: str) -> MetricsRow:
    # Closing fusion-only row so the final observation set gets an RMSE point.
    if algorithm == "dec":
        fusion = _dec_fusion(world)
    else:
        fusion = _baseline_fusion(world, algorithm)
    payload = ledger_account(fusion.messages)
    return MetricsRow(
        algorithm=algorithm,
        n_sensors=world.config.n_sensors,
        walk_length=world.config.walk_length,
        seed=world.config.seed,
        round_index=world.round_index + 1 if world.round_index else 0,
        n_observations=world.total_obs,
        rmse=fusion.rmse,
        kappa=0,
        payload_scalars=payload.total_scalars,
        summary_scalars=payload.summary_scalars,
        adjacency_bits=payload.adjacency_bits,
        max_agent_ms=1000.0 * (fusion.max_sensor_seconds + fusion.reduce_seconds),
    )


def run_cell(world: WorldState, algorithm: str) -> list[MetricsRow]:
    """Round loop for one cell: steps until the budget is spent or a round
    stops yielding observations, then a closing fusion snapshot."""
    rows: list[MetricsRow] = []
    while world.total_obs < world.config.budget:
        before = world.total_obs
        world, row = step_round(world, algorithm)
        rows.append(row)
        if world.total_obs == before:
            break
    rows.append(_snapshot_row(world, algorithm))
    return rows


def run_experiment(config: ExperimentConfig, algorithms=None, network=None) -> list[MetricsRow]:
    """Run every (algorithm, K, L, seed) cell of the grid and collect rows."""
    algorithms = tuple(algorithms) if algorithms is not None else config.algorithms
    for a in algorithms:
        if a not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {a!r}")
    rows: list[MetricsRow] = []
    for algorithm in algorithms:
        for n_sensors in config.n_sensors:
            for walk_length in config.walk_length:
                for seed in config.seeds:
                    world = init_world(config.cell(n_sensors, walk_length, seed), network)
                    rows.extend(run_cell(world, algorithm))
    return rows


def pitc_reference(world: WorldState, targets=None):
    """Centralized PITC posterior on the union of all observations: the
    continuous regression reference for the fused prediction."""
    targets = range(world.network.n_segments) if targets is None else targets
    blocks = [s.obs for s in world.sensors]
    return pitc_posterior(world.kernel, world.support, blocks, targets)


# ---------------------------------------------------------------------------
# Metrics files


METRICS_COLUMNS = (
    "algorithm", "K", "L", "seed", "round", "n_obs", "rmse", "kappa",
    "payload_scalars", "summary_scalars", "adjacency_bits",
)
TIMING_COLUMNS = ("algorithm", "K", "L", "seed", "round", "max_agent_ms")


def write_metrics(rows: Sequence[MetricsRow], path) -> None:
    """Deterministic metrics table; wall times go to the separate timing file
    because they vary run to run."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_COLUMNS)
        for r in rows:
            writer.writerow([
                r.algorithm, r.n_sensors, r.walk_length, r.seed, r.round_index,
                r.n_observations, f"{r.rmse:.12g}", r.kappa,
                r.payload_scalars, r.summary_scalars, r.adjacency_bits,
            ])


def write_timings(rows: Sequence[MetricsRow], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TIMING_COLUMNS)
        for r in rows:
            writer.writerow([
                r.algorithm, r.n_sensors, r.walk_length, r.seed, r.round_index,
                f"{r.max_agent_ms:.6f}",
            ])


# ---------------------------------------------------------------------------
# Fusion scaling benchmark


def fusion_timing_benchmark(n_segments: int = 400, obs_sizes=(512, 1024, 2048, 3200),
                            n_sensors: int = 8, support_size: int = 64,
                            target_size: int = 64, seed: int = 0,
                            repeats: int = 3) -> list[dict]:
    """Measure centralized exact fusion against the decentralized pipeline.

    For each observation count, times full-GP prediction (one cubic solve in
    the pooled observations) against the decentralized path (slowest local
    summary plus the reduction and fused prediction). Returns one record per
    observation count with best-of-``repeats`` seconds.
    """
    net = random_network(n_segments, seed=seed, out_degree=3)
    geo = geodesic_distances(net)
    embedding = mds_embed(geo, 2)
    spans = embedding.coords.std(axis=0)
    hyper = KernelHyperparams(1.0, tuple(max(float(s), 1e-6) for s in spans), 0.1)
    kernel = make_kernel(embedding, hyper, 0.0)
    support = SupportSet(tuple(sorted(greedy_select(kernel, range(n_segments), support_size))))
    rng = _rng(seed, _SYNTH_STREAM, 1)
    targets = tuple(int(t) for t in rng.choice(n_segments, size=target_size, replace=False))

    records = []
    for n_obs in obs_sizes:
        per = n_obs // n_sensors
        if per > n_segments:
            raise ValueError(f"{n_obs} observations over {n_sensors} sensors "
                             f"exceed {n_segments} unique segments per sensor")
        blocks = []
        for k in range(n_sensors):
            block_rng = _rng(seed, _SYNTH_STREAM, 2, n_obs, k)
            idx = block_rng.choice(n_segments, size=per, replace=False)
            blocks.append(ObservationSet(
                indices=tuple(int(i) for i in idx),
                values=block_rng.standard_normal(per),
            ))
        fgp_best = np.inf
        dec_best = np.inf
        for _ in range(repeats):
            _, t = _timed(lambda: gp_posterior(kernel, blocks, targets))
            fgp_best = min(fgp_best, t)
            local_times = []
            summaries = []
            for k, b in enumerate(blocks):
                s, t_local = _timed(lambda k=k, b=b: local_summary(kernel, support, b, k))
                summaries.append(s)
                local_times.append(t_local)
            def reduce_predict():
                gsum = global_summary(kernel, support, summaries)
                return fused_posterior(kernel, gsum, targets)
            _, t_reduce = _timed(reduce_predict)
            dec_best = min(dec_best, max(local_times) + t_reduce)
        records.append({
            "n_obs": int(sum(len(b) for b in blocks)),
            "fgp_seconds": float(fgp_best),
            "dec_seconds": float(dec_best),
        })
    return records
