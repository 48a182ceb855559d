"""Decentralized data fusion: per-sensor local summaries over a common
support set, their sum-aggregated global summary, the fused predictive
distribution each sensor can compute from it, and the centralized PITC
construction the fused distribution is provably equivalent to.

Support-set covariances are noise-free (the support set need not be
observed); observed-set covariances carry the noise variance on their
diagonal.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from . import linalg
from .errors import ProtocolError
from .gp_core import GaussianBelief, ObservationSet, stack_observations
from .road_kernel import EmbeddedKernel

WIRE_SCHEMA_VERSION = 1


def content_hash(data: bytes) -> int:
    """64-bit content hash used to pin wire messages to their context."""
    return int.from_bytes(hashlib.sha256(data).digest()[:8], "little")


@dataclass(frozen=True, eq=False)
class SupportSet:
    """Fixed set of (possibly unobserved) segments all summaries are defined on."""

    indices: tuple[int, ...]

    def __post_init__(self):
        if len(set(self.indices)) != len(self.indices):
            raise ValueError("support indices must be unique")

    def __len__(self) -> int:
        return len(self.indices)

    @cached_property
    def hash(self) -> int:
        return content_hash(",".join(str(i) for i in self.indices).encode())


@dataclass(frozen=True, eq=False)
class LocalSummary:
    """One sensor's observations compressed onto the support set."""

    sensor_id: int
    z_dot: np.ndarray   # (|U|,)
    S_dot: np.ndarray   # (|U|, |U|), symmetric PSD
    obs_count: int
    support_hash: int


@dataclass(frozen=True, eq=False)
class GlobalSummary:
    """Sum of all local summaries; sufficient for every sensor's prediction."""

    support: SupportSet
    z_ddot: np.ndarray  # (|U|,)
    S_ddot: np.ndarray  # (|U|, |U|), includes the support prior covariance
    sensor_ids: tuple[int, ...]


def conditional_covariance(kernel: EmbeddedKernel, support: SupportSet,
                           indices: Sequence[int]) -> np.ndarray:
    """Covariance of the observations at ``indices`` given the support values:
    noisy prior minus the part explained through the support set."""
    u = support.indices
    k_dd = kernel.prior_covariance(indices, indices, include_noise=True)
    if not u:
        return k_dd
    k_ud = kernel.prior_covariance(u, indices)
    l_uu = linalg.chol(kernel.prior_covariance(u, u), kernel.hyper.signal_variance)
    half = linalg.tri_solve(l_uu, k_ud)
    return linalg.symmetrize(k_dd - half.T @ half)


def local_summary(kernel: EmbeddedKernel, support: SupportSet,
                  obs: ObservationSet, sensor_id: int = 0) -> LocalSummary:
    """Compress one sensor's observations onto the support set.

    The summary is the pair (K_UD C^-1 (z - mu_D), K_UD C^-1 K_DU) with C
    the conditional covariance of the sensor's observations given the
    support values; both are all-zero for an empty observation set.
    """
    m = len(support)
    if len(obs) == 0:
        return LocalSummary(
            sensor_id=sensor_id,
            z_dot=np.zeros(m),
            S_dot=np.zeros((m, m)),
            obs_count=0,
            support_hash=support.hash,
        )
    d = list(obs.indices)
    cond = conditional_covariance(kernel, support, d)
    lower = linalg.chol(cond, kernel.hyper.signal_variance)
    k_ud = kernel.prior_covariance(support.indices, d)
    z_dot = k_ud @ linalg.chol_solve(lower, obs.values - kernel.mean_of(d))
    half = linalg.tri_solve(lower, k_ud.T)
    return LocalSummary(
        sensor_id=sensor_id,
        z_dot=z_dot,
        S_dot=linalg.symmetrize(half.T @ half),
        obs_count=len(obs),
        support_hash=support.hash,
    )


def global_summary(kernel: EmbeddedKernel, support: SupportSet,
                   summaries: Sequence[LocalSummary]) -> GlobalSummary:
    """Sum local summaries into the global one.

    Summation runs in ascending sensor id so the result is bit-reproducible
    regardless of arrival order. All summaries must be built on the same
    support set.
    """
    ordered = sorted(summaries, key=lambda s: s.sensor_id)
    ids = tuple(s.sensor_id for s in ordered)
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate sensor ids in summaries")
    for s in ordered:
        if s.support_hash != support.hash:
            raise ProtocolError(
                f"summary from sensor {s.sensor_id} was built on a different support set"
            )
    m = len(support)
    z_ddot = np.zeros(m)
    s_ddot = kernel.prior_covariance(support.indices, support.indices)
    for s in ordered:
        z_ddot = z_ddot + s.z_dot
        s_ddot = s_ddot + s.S_dot
    return GlobalSummary(
        support=support,
        z_ddot=z_ddot,
        S_ddot=linalg.symmetrize(s_ddot),
        sensor_ids=ids,
    )


def fused_posterior(kernel: EmbeddedKernel, summary: GlobalSummary, targets) -> GaussianBelief:
    """Globally consistent predictive Gaussian from the global summary.

    mean  = mu_Y + K_YU S''^-1 z''
    cov   = K_YY - K_YU (K_UU^-1 - S''^-1) K_UY
    """
    y = tuple(int(t) for t in targets)
    u = summary.support.indices
    sig = kernel.hyper.signal_variance
    k_uy = kernel.prior_covariance(u, y)
    l_uu = linalg.chol(kernel.prior_covariance(u, u), sig)
    l_dd = linalg.chol(summary.S_ddot, sig)
    mean = kernel.mean_of(y) + k_uy.T @ linalg.chol_solve(l_dd, summary.z_ddot)
    half_prior = linalg.tri_solve(l_uu, k_uy)
    half_fused = linalg.tri_solve(l_dd, k_uy)
    cov = (
        kernel.prior_covariance(y, y)
        - half_prior.T @ half_prior
        + half_fused.T @ half_fused
    )
    return GaussianBelief(mean=mean, cov=linalg.symmetrize(cov), index_set=y)


def pitc_lambda(kernel: EmbeddedKernel, support: SupportSet,
                blocks: Sequence[ObservationSet]) -> np.ndarray:
    """Block-diagonal matrix of per-block conditional covariances; off-block
    entries are exactly zero by construction."""
    sizes = [len(b) for b in blocks]
    total = sum(sizes)
    lam = np.zeros((total, total))
    at = 0
    for b in blocks:
        if len(b) == 0:
            continue
        lam[at:at + len(b), at:at + len(b)] = conditional_covariance(
            kernel, support, list(b.indices)
        )
        at += len(b)
    return lam


def pitc_posterior(kernel: EmbeddedKernel, support: SupportSet,
                   blocks: Sequence[ObservationSet], targets) -> GaussianBelief:
    """Centralized partially-independent-training-conditional posterior.

    Training blocks are conditionally independent given the support values:
    cross-covariances go through the support set (Gamma terms) while each
    block keeps its own full conditional covariance. Assembled explicitly;
    serves as the oracle the decentralized fusion is checked against.
    """
    y = tuple(int(t) for t in targets)
    d_idx, z = stack_observations(blocks)
    if not d_idx:
        return GaussianBelief(
            mean=kernel.mean_of(y),
            cov=kernel.prior_covariance(y, y),
            index_set=y,
        )
    u = support.indices
    sig = kernel.hyper.signal_variance
    l_uu = linalg.chol(kernel.prior_covariance(u, u), sig)
    q_d = linalg.tri_solve(l_uu, kernel.prior_covariance(u, d_idx))
    q_y = linalg.tri_solve(l_uu, kernel.prior_covariance(u, y))
    gamma_dd = q_d.T @ q_d
    gamma_yd = q_y.T @ q_d
    m = linalg.symmetrize(gamma_dd + pitc_lambda(kernel, support, blocks))
    l_m = linalg.chol(m, sig)
    mean = kernel.mean_of(y) + gamma_yd @ linalg.chol_solve(l_m, z - kernel.mean_of(d_idx))
    half = linalg.tri_solve(l_m, gamma_yd.T)
    cov = kernel.prior_covariance(y, y) - half.T @ half
    return GaussianBelief(mean=mean, cov=linalg.symmetrize(cov), index_set=y)


# ---------------------------------------------------------------------------
# Wire format


def summary_message_size(summary: LocalSummary) -> int:
    """Payload scalars in one local-summary broadcast: the summary vector plus
    the lower triangle of the summary matrix. Independent of how many
    observations the sensor compressed."""
    m = len(summary.z_dot)
    return m + m * (m + 1) // 2


_HEADER = struct.Struct("<5Q")  # version, sensor id, |U|, support hash, obs count


def encode_local_summary(summary: LocalSummary) -> bytes:
    """Serialize: 5 little-endian uint64 header fields, then the summary
    vector and the row-major lower triangle of the summary matrix as
    little-endian float64."""
    m = len(summary.z_dot)
    head = _HEADER.pack(
        WIRE_SCHEMA_VERSION, summary.sensor_id, m, summary.support_hash, summary.obs_count
    )
    tril = summary.S_dot[np.tril_indices(m)]
    return head + summary.z_dot.astype("<f8").tobytes() + tril.astype("<f8").tobytes()


def decode_local_summary(data: bytes, support: SupportSet) -> LocalSummary:
    """Parse a local-summary message, rejecting schema or support mismatches."""
    if len(data) < _HEADER.size:
        raise ProtocolError("truncated local-summary message")
    version, sensor_id, m, support_hash, obs_count = _HEADER.unpack_from(data)
    if version != WIRE_SCHEMA_VERSION:
        raise ProtocolError(f"unsupported wire schema version {version}")
    if support_hash != support.hash:
        raise ProtocolError("support-set content hash mismatch")
    if m != len(support):
        raise ProtocolError(f"summary size {m} does not match support size {len(support)}")
    expected = _HEADER.size + 8 * (m + m * (m + 1) // 2)
    if len(data) != expected:
        raise ProtocolError(f"bad message length {len(data)}, expected {expected}")
    body = np.frombuffer(data, dtype="<f8", offset=_HEADER.size)
    z_dot = body[:m].astype(float)
    s_dot = np.zeros((m, m))
    s_dot[np.tril_indices(m)] = body[m:]
    s_dot = s_dot + np.tril(s_dot, -1).T
    return LocalSummary(
        sensor_id=int(sensor_id),
        z_dot=z_dot,
        S_dot=s_dot,
        obs_count=int(obs_count),
        support_hash=int(support_hash),
    )


def read_support(path) -> tuple[str, ...]:
    """Support-set file: one segment id per line."""
    with open(path, "r", encoding="utf-8") as fh:
        return tuple(line.strip() for line in fh if line.strip())


def write_support(ids: Sequence[str], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for sid in ids:
            fh.write(f"{sid}\n")
