"""Bandwidth-limited component selection and transmission encoding.

A sensor that must broadcast its intensity under a component budget B picks
what to send with one of five policies: full broadcast, the rank rule (top-B
weights), the threshold rule (weights above tau), weighted random sampling
with replacement (counts plus one shared weight), and weighted sampling
without replacement (exponential-keys selection with inclusion-probability
weight correction).

Each policy produces a ``Transmission`` that the receiver turns back into a
Gaussian mixture with ``reconstruct``.  ``transmission_cost`` accounts for
the scalars on the wire, and ``encode_transmission`` / ``decode_transmission``
give a byte-exact binary form whose length matches the cost accounting.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .gaussian import GaussianMixture

__all__ = [
    "PolicyTag",
    "TransmissionEntry",
    "Transmission",
    "SamplingConfig",
    "CostRecord",
    "select_full",
    "select_rank",
    "select_threshold",
    "sample_with_replacement",
    "sample_without_replacement",
    "reconstruct",
    "transmission_cost",
    "encode_transmission",
    "decode_transmission",
    "FullPolicy",
    "RankPolicy",
    "ThresholdPolicy",
    "SampleWithReplacementPolicy",
    "SampleWithoutReplacementPolicy",
]


class PolicyTag(enum.Enum):
    FULL = "full"
    RANK = "rank"
    THRESHOLD = "threshold"
    SAMPLE_REPLACEMENT = "sample_replacement"
    SAMPLE_NO_REPLACEMENT = "sample_no_replacement"


_TAG_TO_WIRE = {tag: index for index, tag in enumerate(PolicyTag)}
_WIRE_TO_TAG = {index: tag for tag, index in _TAG_TO_WIRE.items()}


@dataclass(frozen=True)
class TransmissionEntry:
    """One transmitted component: exactly one of ``count`` / ``weight`` is set.

    Count entries rely on the transmission's shared weight (component weight
    is ``count * shared_weight``); weight entries carry the weight verbatim.
    """

    mean: np.ndarray
    covariance: np.ndarray
    count: int | None = None
    weight: float | None = None

    def __post_init__(self) -> None:
        mean = np.asarray(self.mean, dtype=float).reshape(-1)
        cov = np.asarray(self.covariance, dtype=float)
        if cov.shape != (mean.size, mean.size):
            raise ValueError("entry covariance shape does not match its mean")
        if (self.count is None) == (self.weight is None):
            raise ValueError("entry must carry exactly one of count or weight")
        if self.count is not None and (not isinstance(self.count, (int, np.integer)) or self.count < 1):
            raise ValueError("entry count must be a positive integer")
        if self.weight is not None and (not np.isfinite(self.weight) or self.weight < 0.0):
            raise ValueError("entry weight must be finite and non-negative")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)
        if self.count is not None:
            object.__setattr__(self, "count", int(self.count))
        if self.weight is not None:
            object.__setattr__(self, "weight", float(self.weight))


@dataclass(frozen=True)
class Transmission:
    """What one sensor puts on the wire in one consensus round."""

    policy: PolicyTag
    entries: tuple[TransmissionEntry, ...]
    shared_weight: float | None
    dimension: int

    def __post_init__(self) -> None:
        entries = tuple(self.entries)
        if self.dimension < 1:
            raise ValueError("transmission dimension must be positive")
        count_mode = [entry.count is not None for entry in entries]
        if any(count_mode) and not all(count_mode):
            raise ValueError("entries must be uniformly count-based or weight-based")
        uses_counts = bool(entries) and all(count_mode)
        if uses_counts != (self.shared_weight is not None):
            raise ValueError("shared_weight must be present exactly for count-based entries")
        if self.shared_weight is not None and (
            not np.isfinite(self.shared_weight) or self.shared_weight < 0.0
        ):
            raise ValueError("shared_weight must be finite and non-negative")
        for entry in entries:
            if entry.mean.size != self.dimension:
                raise ValueError("entry dimension differs from transmission dimension")
        object.__setattr__(self, "entries", entries)
        if self.shared_weight is not None:
            object.__setattr__(self, "shared_weight", float(self.shared_weight))

    @property
    def uses_counts(self) -> bool:
        return self.shared_weight is not None

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[TransmissionEntry]:
        return iter(self.entries)


@dataclass(frozen=True)
class SamplingConfig:
    """Budget and draw scheme for the random sampling policies.

    draw_mode "stop_at_B_distinct" keeps drawing until a draw would introduce
    a (B+1)-th distinct component (that draw is discarded); "fixed_draws"
    takes exactly ``draws`` draws (default 4*B).  ``inclusion_replicates``
    sizes the Monte Carlo pre-pass that estimates inclusion probabilities for
    sampling without replacement.
    """

    bandwidth: int
    draw_mode: str = "stop_at_B_distinct"
    draws: int | None = None
    replacement: bool = True
    inclusion_replicates: int = 10_000

    def __post_init__(self) -> None:
        if self.bandwidth < 1:
            raise ValueError("bandwidth must be at least 1")
        if self.draw_mode not in ("stop_at_B_distinct", "fixed_draws"):
            raise ValueError(f"unknown draw_mode: {self.draw_mode!r}")
        if self.draws is not None and self.draws < 1:
            raise ValueError("fixed draw count must be at least 1")
        if self.inclusion_replicates < 1:
            raise ValueError("inclusion_replicates must be at least 1")

    @property
    def fixed_draw_count(self) -> int:
        if self.draws is not None:
            return self.draws
        return 4 * self.bandwidth


@dataclass(frozen=True)
class CostRecord:
    """Scalar counts transmitted: 8-byte floats, 4-byte integers, components."""

    floats: int
    integers: int
    components: int


def _explicit_entries(gm: GaussianMixture, indices: np.ndarray, weights: np.ndarray) -> tuple[TransmissionEntry, ...]:
    return tuple(
        TransmissionEntry(
            mean=gm.means[l], covariance=gm.covariances[l], weight=float(weights[pos])
        )
        for pos, l in enumerate(indices)
    )


def select_full(gm: GaussianMixture) -> Transmission:
    """Broadcast every component with its exact weight."""
    indices = np.arange(gm.size)
    return Transmission(
        policy=PolicyTag.FULL,
        entries=_explicit_entries(gm, indices, gm.weights),
        shared_weight=None,
        dimension=gm.dimension,
    )


def _top_indices(weights: np.ndarray, budget: int) -> np.ndarray:
    """Indices of the ``budget`` largest weights, earlier index wins ties,
    returned in original order."""
    order = np.argsort(-weights, kind="stable")
    return np.sort(order[:budget])


def select_rank(gm: GaussianMixture, bandwidth: int) -> Transmission:
    """Broadcast the ``bandwidth`` highest-weight components verbatim."""
    if bandwidth < 1:
        raise ValueError("bandwidth must be at least 1")
    indices = _top_indices(gm.weights, bandwidth) if gm.size > bandwidth else np.arange(gm.size)
    return Transmission(
        policy=PolicyTag.RANK,
        entries=_explicit_entries(gm, indices, gm.weights[indices]),
        shared_weight=None,
        dimension=gm.dimension,
    )


def select_threshold(gm: GaussianMixture, tau: float) -> Transmission:
    """Broadcast components whose weight strictly exceeds ``tau``."""
    if tau < 0.0:
        raise ValueError("tau must be non-negative")
    indices = np.flatnonzero(gm.weights > tau)
    return Transmission(
        policy=PolicyTag.THRESHOLD,
        entries=_explicit_entries(gm, indices, gm.weights[indices]),
        shared_weight=None,
        dimension=gm.dimension,
    )


def _sampling_probabilities(gm: GaussianMixture) -> np.ndarray:
    if gm.size == 0:
        raise ValueError("cannot sample from an empty mixture")
    total = gm.total_weight()
    if total <= 0.0:
        raise ValueError("cannot sample from a mixture with zero total weight")
    return gm.weights / total


def _draw_until_b_distinct(
    probabilities: np.ndarray, bandwidth: int, rng: np.random.Generator
) -> np.ndarray:
    """Counts per index after drawing i.i.d. until a draw would create the
    (B+1)-th distinct index; that boundary draw is discarded."""
    cumulative = np.cumsum(probabilities)
    cumulative[-1] = 1.0
    counts = np.zeros(probabilities.size, dtype=np.int64)
    distinct = 0
    while True:
        chunk = np.searchsorted(cumulative, rng.random(128), side="right")
        for index in chunk:
            if counts[index] == 0:
                if distinct == bandwidth:
                    return counts
                distinct += 1
            counts[index] += 1


def sample_with_replacement(
    gm: GaussianMixture, config: SamplingConfig, rng: np.random.Generator
) -> Transmission:
    """Algorithmic sampling rule with replacement.

    Indices are drawn i.i.d. with probability proportional to weight.  The
    transmission carries one count per distinct index plus a single shared
    weight ``total_weight / draws``, so the reconstructed integral equals the
    sender's total weight deterministically.

    When at most ``bandwidth`` components have positive weight the budget is
    vacuous and all of them are sent with exact weights instead (the
    stop-at-B-distinct loop could never terminate).
    """
    if not config.replacement:
        raise ValueError("sample_with_replacement needs a replacement=True config")
    probabilities = _sampling_probabilities(gm)
    positive = np.flatnonzero(probabilities > 0.0)
    budget = config.bandwidth
    if config.draw_mode == "fixed_draws":
        draws = config.fixed_draw_count
        if positive.size > budget and draws > budget:
            raise ValueError(
                f"fixed_draws({draws}) can exceed the budget of {budget} distinct "
                f"components when {positive.size} components have positive weight"
            )
        indices = rng.choice(gm.size, size=draws, p=probabilities)
        counts = np.bincount(indices, minlength=gm.size)
    else:
        if positive.size <= budget:
            # The stop-at-B-distinct loop cannot terminate when the budget is
            # vacuous; send every positive-weight component exactly instead.
            return Transmission(
                policy=PolicyTag.SAMPLE_REPLACEMENT,
                entries=_explicit_entries(gm, positive, gm.weights[positive]),
                shared_weight=None,
                dimension=gm.dimension,
            )
        counts = _draw_until_b_distinct(probabilities, budget, rng)
    draws_taken = int(counts.sum())
    shared = gm.total_weight() / draws_taken
    selected = np.flatnonzero(counts)
    entries = tuple(
        TransmissionEntry(mean=gm.means[l], covariance=gm.covariances[l], count=int(counts[l]))
        for l in selected
    )
    return Transmission(
        policy=PolicyTag.SAMPLE_REPLACEMENT,
        entries=entries,
        shared_weight=shared,
        dimension=gm.dimension,
    )


def _exponential_key_selection(
    weights: np.ndarray, bandwidth: int, rng: np.random.Generator
) -> np.ndarray:
    """Weighted sampling without replacement: the B smallest exponential keys
    ``-log(U)/w`` win (equivalent to the largest ``U**(1/w)``)."""
    keys = -np.log(rng.random(weights.size)) / weights
    return np.sort(np.argpartition(keys, bandwidth - 1)[:bandwidth])


def estimate_inclusion_probabilities(
    weights: np.ndarray, bandwidth: int, replicates: int, rng: np.random.Generator
) -> np.ndarray:
    """Monte Carlo estimate of P(l selected) under exponential-keys sampling.

    The scheme has no closed-form first-order inclusion probabilities, so they
    are estimated by replaying the selection ``replicates`` times.
    """
    keys = -np.log(rng.random((replicates, weights.size))) / weights
    selected = np.argpartition(keys, bandwidth - 1, axis=1)[:, :bandwidth]
    hits = np.bincount(selected.ravel(), minlength=weights.size)
    return hits / replicates


def sample_without_replacement(
    gm: GaussianMixture, config: SamplingConfig, rng: np.random.Generator
) -> Transmission:
    """Weighted sampling without replacement with bias-correcting weights.

    B distinct components are drawn by the exponential-keys method; each
    selected component is sent with weight ``w_l / P(l selected)`` so that the
    expected reconstructed weight per component equals the original.  The
    inclusion probabilities come from a Monte Carlo pre-pass sharing the same
    random stream.
    """
    if config.replacement:
        raise ValueError("sample_without_replacement needs a replacement=False config")
    if gm.size == 0:
        raise ValueError("cannot sample from an empty mixture")
    budget = config.bandwidth
    if budget > gm.size:
        raise ValueError(f"bandwidth {budget} exceeds the component count {gm.size}")
    if np.any(gm.weights <= 0.0):
        raise ValueError("sampling without replacement requires strictly positive weights")
    if budget == gm.size:
        indices = np.arange(gm.size)
        return Transmission(
            policy=PolicyTag.SAMPLE_NO_REPLACEMENT,
            entries=_explicit_entries(gm, indices, gm.weights),
            shared_weight=None,
            dimension=gm.dimension,
        )
    indices = _exponential_key_selection(gm.weights, budget, rng)
    inclusion = estimate_inclusion_probabilities(
        gm.weights, budget, config.inclusion_replicates, rng
    )
    if np.any(inclusion[indices] <= 0.0):
        raise ArithmeticError(
            "estimated inclusion probability of 0 for a selected component; "
            "increase inclusion_replicates"
        )
    corrected = gm.weights[indices] / inclusion[indices]
    return Transmission(
        policy=PolicyTag.SAMPLE_NO_REPLACEMENT,
        entries=_explicit_entries(gm, indices, corrected),
        shared_weight=None,
        dimension=gm.dimension,
    )


def reconstruct(transmission: Transmission) -> GaussianMixture:
    """Rebuild the transmitted intensity on the receiver side."""
    entries = transmission.entries
    if not entries:
        return GaussianMixture.empty(transmission.dimension)
    if transmission.uses_counts:
        weights = np.array([entry.count * transmission.shared_weight for entry in entries])
    else:
        weights = np.array([entry.weight for entry in entries])
    return GaussianMixture(
        weights=weights,
        means=np.stack([entry.mean for entry in entries]),
        covariances=np.stack([entry.covariance for entry in entries]),
        dimension=transmission.dimension,
    )


def transmission_cost(transmission: Transmission) -> CostRecord:
    """Scalars on the wire: each entry costs mean + packed covariance floats,
    weights cost one float each (or a single shared float), counts are ints."""
    count = len(transmission.entries)
    if count == 0:
        return CostRecord(floats=0, integers=0, components=0)
    dim = transmission.dimension
    per_entry = dim + dim * (dim + 1) // 2
    if transmission.uses_counts:
        return CostRecord(floats=count * per_entry + 1, integers=count, components=count)
    return CostRecord(floats=count * per_entry + count, integers=0, components=count)


_HEADER = struct.Struct("<BBHI")
_FLAG_SHARED = 0x01
_FLAG_COUNTS = 0x02


def encode_transmission(transmission: Transmission) -> bytes:
    """Length-prefixed binary record.

    Layout after the 4-byte length prefix: policy tag (1 byte), flags
    (1 byte: shared weight present, entries carry counts), state dimension
    (2 bytes), entry count (4 bytes), optional shared weight (8 bytes), then
    per entry the mean, the upper-triangular covariance, and either a 4-byte
    count or an 8-byte weight.  The byte length equals
    ``12 + 8*floats + 4*integers`` of the transmission's cost record.
    """
    dim = transmission.dimension
    flags = 0
    if transmission.shared_weight is not None:
        flags |= _FLAG_SHARED | _FLAG_COUNTS
    chunks = [_HEADER.pack(_TAG_TO_WIRE[transmission.policy], flags, dim, len(transmission.entries))]
    if transmission.shared_weight is not None:
        chunks.append(struct.pack("<d", transmission.shared_weight))
    upper = np.triu_indices(dim)
    for entry in transmission.entries:
        chunks.append(entry.mean.astype("<f8").tobytes())
        chunks.append(np.ascontiguousarray(entry.covariance[upper], dtype="<f8").tobytes())
        if entry.count is not None:
            chunks.append(struct.pack("<I", entry.count))
        else:
            chunks.append(struct.pack("<d", entry.weight))
    body = b"".join(chunks)
    return struct.pack("<I", len(body)) + body


def decode_transmission(buffer: bytes, offset: int = 0) -> tuple[Transmission, int]:
    """Decode one record starting at ``offset``; returns it and the next offset."""
    if len(buffer) < offset + 4:
        raise ValueError("truncated transmission record")
    (body_length,) = struct.unpack_from("<I", buffer, offset)
    end = offset + 4 + body_length
    if len(buffer) < end:
        raise ValueError("truncated transmission record")
    cursor = offset + 4
    wire_tag, flags, dim, entry_count = _HEADER.unpack_from(buffer, cursor)
    cursor += _HEADER.size
    if wire_tag not in _WIRE_TO_TAG:
        raise ValueError(f"unknown policy tag {wire_tag}")
    if dim < 1:
        raise ValueError("transmission dimension must be positive")
    shared = None
    if flags & _FLAG_SHARED:
        (shared,) = struct.unpack_from("<d", buffer, cursor)
        cursor += 8
    uses_counts = bool(flags & _FLAG_COUNTS)
    if uses_counts != (shared is not None):
        raise ValueError("inconsistent shared-weight / count flags")
    upper = np.triu_indices(dim)
    packed_len = dim * (dim + 1) // 2
    entries = []
    for _ in range(entry_count):
        mean = np.frombuffer(buffer, dtype="<f8", count=dim, offset=cursor).copy()
        cursor += 8 * dim
        packed = np.frombuffer(buffer, dtype="<f8", count=packed_len, offset=cursor)
        cursor += 8 * packed_len
        cov = np.zeros((dim, dim))
        cov[upper] = packed
        cov.T[upper] = packed
        if uses_counts:
            (count,) = struct.unpack_from("<I", buffer, cursor)
            cursor += 4
            entries.append(TransmissionEntry(mean=mean, covariance=cov, count=count))
        else:
            (weight,) = struct.unpack_from("<d", buffer, cursor)
            cursor += 8
            entries.append(TransmissionEntry(mean=mean, covariance=cov, weight=weight))
    if cursor != end:
        raise ValueError("transmission record length mismatch")
    transmission = Transmission(
        policy=_WIRE_TO_TAG[wire_tag], entries=tuple(entries), shared_weight=shared, dimension=dim
    )
    return transmission, end


@dataclass(frozen=True)
class FullPolicy:
    """No bandwidth limit: broadcast the whole mixture."""

    tag: PolicyTag = PolicyTag.FULL

    def select(self, gm: GaussianMixture, rng: np.random.Generator | None = None) -> Transmission:
        return select_full(gm)


@dataclass(frozen=True)
class RankPolicy:
    bandwidth: int
    tag: PolicyTag = PolicyTag.RANK

    def select(self, gm: GaussianMixture, rng: np.random.Generator | None = None) -> Transmission:
        return select_rank(gm, self.bandwidth)


@dataclass(frozen=True)
class ThresholdPolicy:
    tau: float
    tag: PolicyTag = PolicyTag.THRESHOLD

    def select(self, gm: GaussianMixture, rng: np.random.Generator | None = None) -> Transmission:
        return select_threshold(gm, self.tau)


@dataclass(frozen=True)
class SampleWithReplacementPolicy:
    config: SamplingConfig
    tag: PolicyTag = PolicyTag.SAMPLE_REPLACEMENT

    def select(self, gm: GaussianMixture, rng: np.random.Generator | None = None) -> Transmission:
        if rng is None:
            raise ValueError("sampling policies need a random generator")
        return sample_with_replacement(gm, self.config, rng)


@dataclass(frozen=True)
class SampleWithoutReplacementPolicy:
    config: SamplingConfig
    tag: PolicyTag = PolicyTag.SAMPLE_NO_REPLACEMENT

    def select(self, gm: GaussianMixture, rng: np.random.Generator | None = None) -> Transmission:
        if rng is None:
            raise ValueError("sampling policies need a random generator")
        return sample_without_replacement(gm, self.config, rng)
