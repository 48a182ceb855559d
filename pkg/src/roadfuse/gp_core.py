"""Exact Gaussian-process regression, entropy, the subset-of-data
approximation, greedy informative-subset selection, and prior sampling.

Everything conditions through Cholesky factorizations; explicit inverses
never appear outside test oracles.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import linalg
from .road_kernel import EmbeddedKernel


@dataclass(frozen=True, eq=False)
class ObservationSet:
    """Observed segment indices and their measurements, aligned."""

    indices: tuple[int, ...]
    values: np.ndarray

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=float)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if len(self.indices) != len(values):
            raise ValueError("indices and values must have equal length")
        if len(set(self.indices)) != len(self.indices):
            raise ValueError("observation indices must be unique within a set")

    def __len__(self) -> int:
        return len(self.indices)

    @classmethod
    def empty(cls) -> "ObservationSet":
        return cls(indices=(), values=np.zeros(0))

    def restricted_to(self, subset: Iterable[int]) -> "ObservationSet":
        keep = set(subset)
        pairs = [(i, v) for i, v in zip(self.indices, self.values) if i in keep]
        if not pairs:
            return ObservationSet.empty()
        idx, vals = zip(*pairs)
        return ObservationSet(indices=tuple(idx), values=np.array(vals))

    def extended(self, indices: Sequence[int], values: Sequence[float]) -> "ObservationSet":
        return ObservationSet(
            indices=self.indices + tuple(int(i) for i in indices),
            values=np.concatenate([self.values, np.asarray(values, dtype=float)]),
        )


@dataclass(frozen=True, eq=False)
class GaussianBelief:
    """Multivariate Gaussian over the measurements at ``index_set``."""

    mean: np.ndarray
    cov: np.ndarray
    index_set: tuple[int, ...]

    def __post_init__(self):
        for name in ("mean", "cov"):
            a = np.ascontiguousarray(getattr(self, name), dtype=float)
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    def variances(self) -> np.ndarray:
        return np.diag(self.cov)


def _as_blocks(obs) -> tuple[ObservationSet, ...]:
    if isinstance(obs, ObservationSet):
        return (obs,)
    return tuple(obs)


def stack_observations(obs) -> ObservationSet | tuple[list[int], np.ndarray]:
    """Concatenate observation sets into one index list and value vector.

    Duplicate segments across sets are kept as distinct noisy observations.
    """
    blocks = _as_blocks(obs)
    idx: list[int] = []
    vals: list[np.ndarray] = []
    for b in blocks:
        idx.extend(b.indices)
        vals.append(b.values)
    return idx, (np.concatenate(vals) if vals else np.zeros(0))


def gp_posterior(kernel: EmbeddedKernel, obs, targets, observation_noise: bool = False) -> GaussianBelief:
    """Exact GP posterior over ``targets`` given observations.

    ``obs`` may be one :class:`ObservationSet` or a sequence of them (their
    concatenation is conditioned on; repeats across sets stay distinct).
    The returned covariance is over the noise-free latent field unless
    ``observation_noise`` adds the noise variance back on the diagonal.
    """
    y = tuple(int(t) for t in targets)
    d_idx, z = stack_observations(obs)
    mean = kernel.mean_of(y).copy()
    cov = kernel.prior_covariance(y, y)
    if d_idx:
        k_dd = kernel.prior_covariance(d_idx, d_idx, include_noise=True)
        lower = linalg.chol(k_dd, kernel.hyper.signal_variance)
        k_yd = kernel.prior_covariance(y, d_idx)
        mean += k_yd @ linalg.chol_solve(lower, z - kernel.mean_of(d_idx))
        half = linalg.tri_solve(lower, k_yd.T)
        cov = linalg.symmetrize(cov - half.T @ half)
    if observation_noise:
        cov = cov + kernel.hyper.noise_variance * np.eye(len(y))
    return GaussianBelief(mean=mean, cov=cov, index_set=y)


def joint_entropy(belief: GaussianBelief) -> float:
    """Gaussian joint entropy ``0.5 log((2 pi e)^n det cov)``; 0 for empty sets."""
    return linalg.gaussian_entropy(belief.cov)


def sod_posterior(kernel: EmbeddedKernel, obs, subset, targets,
                  observation_noise: bool = False) -> GaussianBelief:
    """Subset-of-data posterior: condition only on the observations at ``subset``.

    ``subset`` must consist of observed segments; the rest of the data is
    discarded, so the cost is cubic in ``|subset|`` instead of the full set.
    """
    d_idx, _ = stack_observations(obs)
    missing = sorted(set(subset) - set(d_idx))
    if missing:
        raise ValueError(f"subset segments {missing} are not observed")
    blocks = _as_blocks(obs)
    restricted = [b.restricted_to(subset) for b in blocks]
    return gp_posterior(kernel, restricted, targets, observation_noise)


def greedy_select(kernel: EmbeddedKernel, candidates, count: int) -> list[int]:
    """Greedy maximum-posterior-variance selection of ``count`` segments.

    At each step the candidate with the largest variance conditioned on the
    noise-free measurements at the already-selected set is appended; exact
    ties go to the lowest segment index. Returns the selection in greedy
    order.
    """
    cands = sorted(int(c) for c in candidates)
    if len(set(cands)) != len(cands):
        raise ValueError("candidates must be unique")
    if count > len(cands):
        raise ValueError(f"cannot select {count} of {len(cands)} candidates")
    if count <= 0:
        return []
    floor = 1e-12 * kernel.hyper.signal_variance
    var = np.array([kernel.kernel_value(s, s) for s in cands])
    # Incremental Cholesky: basis[i] holds the solved components of candidate
    # i against the selected set, so variances update by one rank per step.
    basis = np.zeros((len(cands), count))
    chosen: list[int] = []
    for step in range(count):
        pick = int(np.argmax(var))
        chosen.append(cands[pick])
        if step + 1 == count:
            break
        ell = math.sqrt(max(float(var[pick]), floor))
        cross = kernel.prior_covariance(cands, [cands[pick]])[:, 0]
        component = (cross - basis[:, :step] @ basis[pick, :step]) / ell
        basis[:, step] = component
        var = np.maximum(var - component * component, 0.0)
        var[pick] = -np.inf
    return chosen


def sample_gp(kernel: EmbeddedKernel, indices, seed: int) -> np.ndarray:
    """One prior draw at ``indices`` from a counter-based deterministic generator."""
    idx = tuple(int(i) for i in indices)
    cov = kernel.prior_covariance(idx, idx)
    lower = linalg.chol(cov, kernel.hyper.signal_variance)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    return kernel.mean_of(idx) + lower @ rng.standard_normal(len(idx))


# ---------------------------------------------------------------------------
# File format: two-column delimited text (segment_id, value)


def write_observations(obs: ObservationSet, net, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        for i, v in zip(obs.indices, obs.values):
            writer.writerow([net.ids[i], f"{v:.17g}"])


def read_observations(net, path) -> ObservationSet:
    indices: list[int] = []
    values: list[float] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for row in csv.reader(fh):
            if not row:
                continue
            if len(row) != 2:
                raise ValueError(f"expected two columns in {path}, got {row!r}")
            indices.append(net.index_of(row[0]))
            values.append(float(row[1]))
    return ObservationSet(indices=tuple(indices), values=np.array(values))
