"""Packet records, canonical flow keys, and bidirectional flow aggregation.

A flow is keyed by the unordered five-tuple: the (ip, port) endpoint pair is
sorted so the numerically smaller IP (then port) comes first, which makes the
key identical for both directions of a conversation.  Within one aggregated
episode, "forward" means the direction of the episode's first packet.
"""

from __future__ import annotations

import enum
import ipaddress
from dataclasses import dataclass

from .errors import ContractError

# TCP flag bits as they appear in the header's flags byte.
TCP_FIN = 0x01
TCP_SYN = 0x02
TCP_RST = 0x04
TCP_ACK = 0x10

DEFAULT_INACTIVE_TIMEOUT = 15.0
DEFAULT_ACTIVE_TIMEOUT = 1800.0

# Accepted clock skew for slightly out-of-order captures.
REORDER_TOLERANCE_US = 1_000_000

_U16 = 0xFFFF
_U32 = 0xFFFFFFFF


class Proto(enum.IntEnum):
    """Transport protocols the toolkit understands."""

    TCP = 6
    UDP = 17


class Direction(enum.Enum):
    FORWARD = "forward"
    BACKWARD = "backward"


def ip_to_str(ip: int) -> str:
    return str(ipaddress.IPv4Address(ip))


def str_to_ip(text: str) -> int:
    return int(ipaddress.IPv4Address(text))


@dataclass(frozen=True, slots=True)
class PacketRecord:
    """One captured IPv4 TCP or UDP packet.

    Timestamps are integer microseconds since the epoch; ``length`` is the
    IP total length, so it is never below the 20-byte header minimum.
    """

    ts: int
    src_ip: int
    dst_ip: int
    src_port: int
    dst_port: int
    proto: Proto
    length: int
    tcp_flags: int = 0
    tos: int = 0

    def __post_init__(self) -> None:
        if not 0 <= self.src_ip <= _U32 or not 0 <= self.dst_ip <= _U32:
            raise ContractError("IP addresses must be unsigned 32-bit values")
        if not 0 <= self.src_port <= _U16 or not 0 <= self.dst_port <= _U16:
            raise ContractError("ports must be in [0, 65535]")
        if self.length < 20:
            raise ContractError("packet length below IP header minimum")
        if self.proto is Proto.UDP and self.tcp_flags:
            raise ContractError("UDP packets cannot carry TCP flags")
        if not 0 <= self.tcp_flags <= 0xFF or not 0 <= self.tos <= 0xFF:
            raise ContractError("tcp_flags and tos are single bytes")


@dataclass(frozen=True, slots=True)
class FlowKey:
    """Canonical bidirectional five-tuple; (ip_lo, port_lo) is the endpoint
    with the smaller IP (ties broken by port)."""

    ip_lo: int
    port_lo: int
    ip_hi: int
    port_hi: int
    proto: Proto

    def sort_tuple(self) -> tuple[int, int, int, int, int]:
        return (self.ip_lo, self.port_lo, self.ip_hi, self.port_hi, int(self.proto))


def canonical_key(pkt: PacketRecord) -> tuple[FlowKey, Direction]:
    """Return the packet's canonical key and which way the packet travels.

    FORWARD means the packet goes from the key's low endpoint to its high
    endpoint.  Both directions of a conversation map to the same key.
    """
    src = (pkt.src_ip, pkt.src_port)
    dst = (pkt.dst_ip, pkt.dst_port)
    if src <= dst:
        key = FlowKey(src[0], src[1], dst[0], dst[1], pkt.proto)
        return key, Direction.FORWARD
    key = FlowKey(dst[0], dst[1], src[0], src[1], pkt.proto)
    return key, Direction.BACKWARD


@dataclass(frozen=True, slots=True)
class FlowRecord:
    """One aggregated flow episode.

    Forward is the direction of the episode's first packet;
    ``initiator_lo`` records whether that packet travelled from the key's
    low endpoint to the high one, which is what lets an exporter
    reconstruct real source/destination addresses.
    """

    key: FlowKey
    first_ts: int
    last_ts: int
    fwd_packets: int
    fwd_bytes: int
    bwd_packets: int
    bwd_bytes: int
    tcp_flags_fwd: int = 0
    tcp_flags_bwd: int = 0
    tos: int = 0
    complete: bool = False
    initiator_lo: bool = True

    def __post_init__(self) -> None:
        if self.last_ts < self.first_ts:
            raise ContractError("flow ends before it starts")
        if self.fwd_packets < 1:
            raise ContractError("a flow has at least one forward packet")
        if self.bwd_packets < 0:
            raise ContractError("negative backward packet count")
        if self.fwd_bytes < 20 * self.fwd_packets:
            raise ContractError("forward bytes below IP header minimum")
        if self.bwd_packets and self.bwd_bytes < 20 * self.bwd_packets:
            raise ContractError("backward bytes below IP header minimum")

    @property
    def total_packets(self) -> int:
        return self.fwd_packets + self.bwd_packets

    @property
    def total_bytes(self) -> int:
        return self.fwd_bytes + self.bwd_bytes

    @property
    def duration_seconds(self) -> float:
        return (self.last_ts - self.first_ts) / 1e6


class _Episode:
    __slots__ = (
        "key", "orientation", "first_ts", "last_ts",
        "fwd_packets", "fwd_bytes", "bwd_packets", "bwd_bytes",
        "flags_fwd", "flags_bwd", "tos", "syn_seen", "fin_seen",
        "close_fwd", "close_bwd", "packets",
    )

    def __init__(self, key: FlowKey, orientation: Direction, keep: bool) -> None:
        self.key = key
        self.orientation = orientation
        self.first_ts = -1
        self.last_ts = -1
        self.fwd_packets = 0
        self.fwd_bytes = 0
        self.bwd_packets = 0
        self.bwd_bytes = 0
        self.flags_fwd = 0
        self.flags_bwd = 0
        self.tos = 0
        self.syn_seen = False
        self.fin_seen = False
        self.close_fwd = False
        self.close_bwd = False
        self.packets: list[PacketRecord] | None = [] if keep else None

    def add(self, pkt: PacketRecord, direction: Direction) -> None:
        if self.first_ts < 0:
            self.first_ts = pkt.ts
            self.last_ts = pkt.ts
        else:
            # min/max, not first/last seen: tolerated reordering may deliver
            # a packet with an earlier stamp than the episode start.
            self.first_ts = min(self.first_ts, pkt.ts)
            self.last_ts = max(self.last_ts, pkt.ts)
        episode_fwd = direction is self.orientation
        if episode_fwd:
            self.fwd_packets += 1
            self.fwd_bytes += pkt.length
            self.flags_fwd |= pkt.tcp_flags
        else:
            self.bwd_packets += 1
            self.bwd_bytes += pkt.length
            self.flags_bwd |= pkt.tcp_flags
        self.tos |= pkt.tos
        if pkt.proto is Proto.TCP:
            if pkt.tcp_flags & TCP_SYN:
                self.syn_seen = True
            if pkt.tcp_flags & TCP_FIN:
                self.fin_seen = True
            if pkt.tcp_flags & (TCP_FIN | TCP_RST):
                if episode_fwd:
                    self.close_fwd = True
                else:
                    self.close_bwd = True
        if self.packets is not None:
            self.packets.append(pkt)

    @property
    def closed_both_ways(self) -> bool:
        return self.close_fwd and self.close_bwd

    def to_record(self) -> FlowRecord:
        return FlowRecord(
            key=self.key,
            first_ts=self.first_ts,
            last_ts=self.last_ts,
            fwd_packets=self.fwd_packets,
            fwd_bytes=self.fwd_bytes,
            bwd_packets=self.bwd_packets,
            bwd_bytes=self.bwd_bytes,
            tcp_flags_fwd=self.flags_fwd,
            tcp_flags_bwd=self.flags_bwd,
            tos=self.tos,
            complete=self.key.proto is Proto.TCP and self.syn_seen and self.fin_seen,
            initiator_lo=self.orientation is Direction.FORWARD,
        )


class FlowAggregator:
    """Streaming packet-to-flow aggregator.

    An episode closes when the gap since its last packet exceeds
    ``inactive_timeout``, when its age exceeds ``active_timeout``, or (TCP)
    once FIN or RST has been seen in both directions.  Packets arriving more
    than one second behind the stream clock are rejected and counted in
    ``rejected`` rather than silently misfiled.
    """

    def __init__(
        self,
        inactive_timeout: float = DEFAULT_INACTIVE_TIMEOUT,
        active_timeout: float = DEFAULT_ACTIVE_TIMEOUT,
        keep_packets: bool = False,
    ) -> None:
        if inactive_timeout <= 0 or active_timeout <= 0:
            raise ContractError("timeouts must be positive")
        self._inactive_us = int(inactive_timeout * 1e6)
        self._active_us = int(active_timeout * 1e6)
        self._keep = keep_packets
        self._open: dict[FlowKey, _Episode] = {}
        self._done: list[tuple[FlowRecord, list[PacketRecord] | None]] = []
        self._clock = -(1 << 62)
        self.accepted = 0
        self.rejected = 0

    def add(self, pkt: PacketRecord) -> None:
        if pkt.ts < self._clock - REORDER_TOLERANCE_US:
            self.rejected += 1
            return
        self._clock = max(self._clock, pkt.ts)
        self.accepted += 1
        key, direction = canonical_key(pkt)
        episode = self._open.get(key)
        if episode is not None:
            idle = pkt.ts - episode.last_ts
            age = pkt.ts - episode.first_ts
            if idle > self._inactive_us or age > self._active_us:
                self._close(key)
                episode = None
        if episode is None:
            episode = _Episode(key, direction, self._keep)
            self._open[key] = episode
        episode.add(pkt, direction)
        if pkt.proto is Proto.TCP and episode.closed_both_ways:
            self._close(key)

    def _close(self, key: FlowKey) -> None:
        episode = self._open.pop(key)
        self._done.append((episode.to_record(), episode.packets))

    def flush(self) -> None:
        for key in list(self._open):
            self._close(key)

    def _sorted(self) -> list[tuple[FlowRecord, list[PacketRecord] | None]]:
        return sorted(self._done, key=lambda item: (item[0].first_ts, item[0].key.sort_tuple()))

    def records(self) -> list[FlowRecord]:
        return [record for record, _ in self._sorted()]

    def records_with_packets(self) -> list[tuple[FlowRecord, list[PacketRecord]]]:
        if not self._keep:
            raise ContractError("aggregator was not asked to keep packets")
        return [(record, pkts) for record, pkts in self._sorted() if pkts is not None]


def aggregate(
    packets,
    inactive_timeout: float = DEFAULT_INACTIVE_TIMEOUT,
    active_timeout: float = DEFAULT_ACTIVE_TIMEOUT,
) -> list[FlowRecord]:
    """Aggregate a time-ordered packet stream into flow episodes."""
    agg = FlowAggregator(inactive_timeout, active_timeout)
    for pkt in packets:
        agg.add(pkt)
    agg.flush()
    return agg.records()


def aggregate_with_packets(
    packets,
    inactive_timeout: float = DEFAULT_INACTIVE_TIMEOUT,
    active_timeout: float = DEFAULT_ACTIVE_TIMEOUT,
) -> list[tuple[FlowRecord, list[PacketRecord]]]:
    """Like :func:`aggregate` but returns each episode's packets as well."""
    agg = FlowAggregator(inactive_timeout, active_timeout, keep_packets=True)
    for pkt in packets:
        agg.add(pkt)
    agg.flush()
    return agg.records_with_packets()
