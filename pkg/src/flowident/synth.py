"""Synthetic workload generation for tests and demos.

A spec file describes labeled traffic classes twice over: per-feature
Gaussians for generating feature datasets directly, and packet-level
distributions (packet count, packet size, inter-arrival time) for
generating whole captures.  Everything is driven by one seed, so a spec
generates identical bytes on every run.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, FormatError
from .features import FEATURE_NAMES, Dataset, FeatureVector
from .flow import PacketRecord, Proto, canonical_key
from .ingest.labels import LabelRow

_BASE_EPOCH_US = 1_700_000_000_000_000
_START_WINDOW_S = 60.0
_MAX_PKT_LEN = 1500

_TCP_SYN = 0x02
_TCP_SYNACK = 0x12
_TCP_ACK = 0x10
_TCP_FINACK = 0x11


@dataclass(frozen=True)
class Dist:
    """A one-dimensional sampling distribution from a spec file."""

    kind: str
    params: tuple[float, ...]

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.kind == "fixed":
            return np.full(size, self.params[0])
        if self.kind == "uniform":
            return rng.uniform(self.params[0], self.params[1], size)
        if self.kind == "uniform_int":
            return rng.integers(int(self.params[0]), int(self.params[1]) + 1, size).astype(float)
        if self.kind == "normal":
            return rng.normal(self.params[0], self.params[1], size)
        if self.kind == "exponential":
            return rng.exponential(self.params[0], size)
        raise ContractError(f"unknown distribution kind {self.kind!r}")


_DIST_PARAMS = {
    "fixed": ("value",),
    "uniform": ("low", "high"),
    "uniform_int": ("low", "high"),
    "normal": ("mean", "std"),
    "exponential": ("mean",),
}


def _parse_dist(doc, context: str) -> Dist:
    if not isinstance(doc, dict) or "kind" not in doc:
        raise FormatError(f"{context}: distribution needs a 'kind'")
    kind = doc["kind"]
    if kind not in _DIST_PARAMS:
        raise FormatError(f"{context}: unknown distribution kind {kind!r}")
    try:
        params = tuple(float(doc[name]) for name in _DIST_PARAMS[kind])
    except KeyError as exc:
        raise FormatError(f"{context}: {kind} distribution needs {exc.args[0]!r}") from None
    return Dist(kind, params)


@dataclass(frozen=True)
class FeatureGen:
    mean: float
    std: float


@dataclass
class ClassSpec:
    label: str
    flows: int
    proto: Proto = Proto.UDP
    server_port: int = 9000
    features: dict[str, FeatureGen] = field(default_factory=dict)
    pkt_count: Dist | None = None
    pkt_size: Dist | None = None
    iat: Dist | None = None


@dataclass
class SynthSpec:
    seed: int
    classes: list[ClassSpec]


def parse_synth_spec(doc: dict) -> SynthSpec:
    if not isinstance(doc, dict) or "classes" not in doc:
        raise FormatError("spec needs a 'classes' list")
    classes = []
    for i, cls in enumerate(doc["classes"]):
        context = f"classes[{i}]"
        if "label" not in cls or "flows" not in cls:
            raise FormatError(f"{context}: needs 'label' and 'flows'")
        flows = int(cls["flows"])
        if flows < 1:
            raise FormatError(f"{context}: flows must be >= 1")
        proto_name = str(cls.get("proto", "udp")).upper()
        if proto_name not in ("TCP", "UDP"):
            raise FormatError(f"{context}: proto must be tcp or udp")
        features = {}
        for name, gen in cls.get("features", {}).items():
            if name not in FEATURE_NAMES:
                raise FormatError(f"{context}: unknown feature {name!r}")
            try:
                features[name] = FeatureGen(float(gen["mean"]), float(gen["std"]))
            except (KeyError, TypeError) as exc:
                raise FormatError(f"{context}: feature {name!r} needs mean and std") from None
        packets = cls.get("packets")
        pkt_count = pkt_size = iat = None
        if packets is not None:
            for key in ("count", "size", "iat"):
                if key not in packets:
                    raise FormatError(f"{context}: packets needs a {key!r} distribution")
            pkt_count = _parse_dist(packets["count"], f"{context}.packets.count")
            pkt_size = _parse_dist(packets["size"], f"{context}.packets.size")
            iat = _parse_dist(packets["iat"], f"{context}.packets.iat")
        classes.append(
            ClassSpec(
                label=str(cls["label"]),
                flows=flows,
                proto=Proto[proto_name],
                server_port=int(cls.get("server_port", 9000)),
                features=features,
                pkt_count=pkt_count,
                pkt_size=pkt_size,
                iat=iat,
            )
        )
    if not classes:
        raise FormatError("spec has no classes")
    labels = [c.label for c in classes]
    if len(set(labels)) != len(labels):
        raise FormatError("class labels must be distinct")
    return SynthSpec(seed=int(doc.get("seed", 0)), classes=classes)


def load_synth_spec(path) -> SynthSpec:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON ({exc})") from None
    try:
        return parse_synth_spec(doc)
    except FormatError as exc:
        raise FormatError(f"{path}: {exc}") from None


def generate_dataset(spec: SynthSpec) -> Dataset:
    """Draw labeled feature vectors straight from the per-class Gaussians.

    Features a class does not mention default to the standard normal, which
    gives classifier tests a supply of uninformative columns for free.
    """
    rng = np.random.default_rng(spec.seed)
    vectors: list[FeatureVector] = []
    for cls in spec.classes:
        columns = []
        for name in FEATURE_NAMES:
            gen = cls.features.get(name, FeatureGen(0.0, 1.0))
            columns.append(rng.normal(gen.mean, gen.std, cls.flows))
        block = np.column_stack(columns)
        vectors.extend(
            FeatureVector.from_values(row, label=cls.label) for row in block
        )
    return Dataset(vectors, tuple(sorted({c.label for c in spec.classes})))


def _flow_flags(proto: Proto, count: int, directions: list[bool]) -> list[int]:
    if proto is not Proto.TCP:
        return [0] * count
    flags = [_TCP_ACK] * count
    flags[0] = _TCP_SYN if directions[0] else _TCP_SYNACK
    first_bwd = next((i for i, d in enumerate(directions) if not d), None)
    if first_bwd is not None:
        flags[first_bwd] = _TCP_SYNACK
    last_fwd = max((i for i, d in enumerate(directions) if d), default=None)
    if last_fwd is not None and last_fwd != 0:
        flags[last_fwd] = _TCP_FINACK
    if first_bwd is not None:
        last_bwd = max(i for i, d in enumerate(directions) if not d)
        if last_bwd != first_bwd:
            flags[last_bwd] = _TCP_FINACK
    return flags


def generate_packets(spec: SynthSpec) -> tuple[list[PacketRecord], list[LabelRow]]:
    """Generate a time-ordered capture and the matching flow labels."""
    rng = np.random.default_rng(spec.seed)
    packets: list[PacketRecord] = []
    labels: list[LabelRow] = []
    serial = 0
    for cls_idx, cls in enumerate(spec.classes):
        if cls.pkt_count is None or cls.pkt_size is None or cls.iat is None:
            raise ContractError(f"class {cls.label!r} has no packet generators")
        min_len = 40 if cls.proto is Proto.TCP else 28
        server_ip = (192 << 24) | (168 << 16) | (cls_idx << 8) | 1
        for _ in range(cls.flows):
            count = max(1, int(round(float(cls.pkt_count.draw(rng, 1)[0]))))
            sizes = np.clip(
                np.round(cls.pkt_size.draw(rng, count)), min_len, _MAX_PKT_LEN
            ).astype(int)
            gaps_us = np.maximum(
                np.round(cls.iat.draw(rng, max(count - 1, 1)) * 1e6), 0
            ).astype(np.int64)
            start = _BASE_EPOCH_US + int(rng.uniform(0, _START_WINDOW_S) * 1e6)
            ts = start + np.concatenate(([0], np.cumsum(gaps_us[: count - 1])))
            directions = [True] + [bool(rng.random() < 0.5) for _ in range(count - 1)]
            flags = _flow_flags(cls.proto, count, directions)
            client_ip = (10 << 24) + serial + 1
            client_port = 40000 + serial % 20000
            flow_packets = []
            for j in range(count):
                if directions[j]:
                    src, dst = (client_ip, client_port), (server_ip, cls.server_port)
                else:
                    src, dst = (server_ip, cls.server_port), (client_ip, client_port)
                flow_packets.append(
                    PacketRecord(
                        ts=int(ts[j]),
                        src_ip=src[0], dst_ip=dst[0],
                        src_port=src[1], dst_port=dst[1],
                        proto=cls.proto,
                        length=int(sizes[j]),
                        tcp_flags=flags[j],
                    )
                )
            key, _ = canonical_key(flow_packets[0])
            labels.append(LabelRow(key=key, first_ts=flow_packets[0].ts, label=cls.label))
            packets.extend(flow_packets)
            serial += 1
    packets.sort(key=lambda p: p.ts)
    return packets, labels
