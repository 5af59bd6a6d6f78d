"""The 16 per-flow features and the CSV dataset that carries them.

Feature ids 1..16 follow the column order of FEATURE_NAMES.  Zero-duration
flows use a 1 ms floor before any division, and the three directional
ratios guard against an empty backward direction with a denominator of
max(value, 1).
"""

from __future__ import annotations

import csv
from dataclasses import astuple, dataclass

import numpy as np

from .errors import ContractError, FormatError
from .flow import FlowRecord

FEATURE_NAMES = (
    "lport", "hport", "duration", "transproto", "tcpflags_fwd", "tcpflags_bwd",
    "pps", "bps", "mean_iat", "pkt_ratio", "byte_ratio", "pktlen_ratio",
    "bidir_packets", "bidir_bytes", "tos", "mean_pkt_len",
)

NUM_FEATURES = len(FEATURE_NAMES)

DURATION_FLOOR = 0.001


class SchemaError(FormatError):
    """A dataset file's columns do not match the canonical header."""


@dataclass(frozen=True, slots=True)
class FeatureVector:
    """One flow reduced to 16 numbers, optionally labeled."""

    lport: float
    hport: float
    duration: float
    transproto: float
    tcpflags_fwd: float
    tcpflags_bwd: float
    pps: float
    bps: float
    mean_iat: float
    pkt_ratio: float
    byte_ratio: float
    pktlen_ratio: float
    bidir_packets: float
    bidir_bytes: float
    tos: float
    mean_pkt_len: float
    label: str | None = None

    def values(self) -> tuple[float, ...]:
        return astuple(self)[:NUM_FEATURES]

    def value(self, feature_id: int) -> float:
        if not 1 <= feature_id <= NUM_FEATURES:
            raise ContractError(f"feature id {feature_id} outside 1..{NUM_FEATURES}")
        return self.values()[feature_id - 1]

    def with_label(self, label: str | None) -> "FeatureVector":
        return FeatureVector(*self.values(), label=label)

    @classmethod
    def from_values(cls, values, label: str | None = None) -> "FeatureVector":
        values = tuple(float(v) for v in values)
        if len(values) != NUM_FEATURES:
            raise ContractError(f"expected {NUM_FEATURES} values, got {len(values)}")
        return cls(*values, label=label)


def feature_name(feature_id: int) -> str:
    if not 1 <= feature_id <= NUM_FEATURES:
        raise ContractError(f"feature id {feature_id} outside 1..{NUM_FEATURES}")
    return FEATURE_NAMES[feature_id - 1]


def featurize(flow: FlowRecord, label: str | None = None) -> FeatureVector:
    """Compute the 16 features of one flow episode."""
    key = flow.key
    raw_duration = (flow.last_ts - flow.first_ts) / 1e6
    duration = raw_duration if raw_duration > 0 else DURATION_FLOOR
    packets = flow.total_packets
    total_bytes = flow.total_bytes
    mean_fwd_len = flow.fwd_bytes / flow.fwd_packets
    mean_bwd_len = flow.bwd_bytes / flow.bwd_packets if flow.bwd_packets else 0.0
    return FeatureVector(
        lport=float(min(key.port_lo, key.port_hi)),
        hport=float(max(key.port_lo, key.port_hi)),
        duration=duration,
        transproto=float(int(key.proto)),
        tcpflags_fwd=float(flow.tcp_flags_fwd),
        tcpflags_bwd=float(flow.tcp_flags_bwd),
        pps=packets / duration,
        bps=total_bytes / duration,
        mean_iat=duration / packets,
        pkt_ratio=flow.fwd_packets / max(flow.bwd_packets, 1),
        byte_ratio=flow.fwd_bytes / max(flow.bwd_bytes, 1),
        pktlen_ratio=mean_fwd_len / max(mean_bwd_len, 1.0),
        bidir_packets=float(packets),
        bidir_bytes=float(total_bytes),
        tos=float(flow.tos),
        mean_pkt_len=total_bytes / packets,
        label=label,
    )


@dataclass
class Dataset:
    """Feature vectors plus the label alphabet they may draw from."""

    vectors: list[FeatureVector]
    alphabet: tuple[str, ...]

    def __post_init__(self) -> None:
        known = set(self.alphabet)
        if len(known) != len(self.alphabet):
            raise ContractError("alphabet contains duplicate labels")
        for i, vec in enumerate(self.vectors):
            if vec.label is not None and vec.label not in known:
                raise ContractError(f"row {i}: label {vec.label!r} not in alphabet")

    @classmethod
    def from_vectors(cls, vectors) -> "Dataset":
        vectors = list(vectors)
        alphabet = tuple(sorted({v.label for v in vectors if v.label is not None}))
        return cls(vectors, alphabet)

    def __len__(self) -> int:
        return len(self.vectors)

    def __iter__(self):
        return iter(self.vectors)

    def labels(self) -> list[str | None]:
        return [v.label for v in self.vectors]

    def matrix(self, feature_ids=None) -> np.ndarray:
        """Rows x selected features as float64; all 16 when ids is None."""
        if feature_ids is None:
            feature_ids = range(1, NUM_FEATURES + 1)
        cols = [fid - 1 for fid in feature_ids]
        for c in cols:
            if not 0 <= c < NUM_FEATURES:
                raise ContractError(f"feature id {c + 1} outside 1..{NUM_FEATURES}")
        if not self.vectors:
            return np.empty((0, len(cols)))
        data = np.array([v.values() for v in self.vectors], dtype=np.float64)
        return data[:, cols]

    def labeled_only(self) -> "Dataset":
        return Dataset([v for v in self.vectors if v.label is not None], self.alphabet)


_CSV_HEADER = FEATURE_NAMES + ("label",)


def _format(value: float) -> str:
    return f"{value:.9g}"


def write_dataset(ds: Dataset, path) -> None:
    """Write a dataset CSV; numbers carry 9 significant digits."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_CSV_HEADER)
        for vec in ds.vectors:
            writer.writerow(
                [_format(v) for v in vec.values()] + [vec.label if vec.label else ""]
            )


def read_dataset(path) -> Dataset:
    """Read a dataset CSV written by :func:`write_dataset`.

    The header must match the canonical column list exactly; the error for
    a mismatch names the missing and unexpected columns.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = tuple(next(reader))
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        if header != _CSV_HEADER:
            missing = [c for c in _CSV_HEADER if c not in header]
            extra = [c for c in header if c not in _CSV_HEADER]
            raise SchemaError(
                f"{path}: bad header (missing: {missing or 'none'}, "
                f"unexpected: {extra or 'none'})"
            )
        vectors = []
        for line, row in enumerate(reader, start=2):
            if len(row) != len(_CSV_HEADER):
                raise SchemaError(f"{path}: line {line}: expected {len(_CSV_HEADER)} fields")
            try:
                values = [float(v) for v in row[:NUM_FEATURES]]
            except ValueError as exc:
                raise SchemaError(f"{path}: line {line}: {exc}") from None
            label = row[NUM_FEATURES] or None
            vectors.append(FeatureVector.from_values(values, label))
    return Dataset.from_vectors(vectors)
