"""Packet records and bidirectional flow assembly.

A flow is every packet of one socket-to-socket conversation, keyed by the
5-tuple normalized so the lexicographically smaller (address, port) endpoint
comes first. The endpoint that sent the first packet is the initiator; its
packets form the "up" direction.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field


class Protocol(str, enum.Enum):
    TCP = "TCP"
    UDP = "UDP"
    OTHER = "OTHER"


@dataclass(frozen=True)
class PacketRecord:
    timestamp: float
    src_addr: str
    dst_addr: str
    src_port: int
    dst_port: int
    protocol: Protocol
    length: int
    tcp_flags: int = 0

    def __post_init__(self) -> None:
        if self.length < 0:
            raise ValueError("packet length must be >= 0")
        if not (0 <= self.src_port <= 65535 and 0 <= self.dst_port <= 65535):
            raise ValueError("ports must be in 0..65535")


FlowKey = tuple[tuple[str, int], tuple[str, int], Protocol]


def normalized_key(packet: PacketRecord) -> FlowKey:
    """Direction-independent 5-tuple: smaller (addr, port) endpoint first."""
    a = (packet.src_addr, packet.src_port)
    b = (packet.dst_addr, packet.dst_port)
    return (a, b, packet.protocol) if a <= b else (b, a, packet.protocol)


@dataclass
class Flow:
    key: FlowKey
    start_time: float
    packets_up: list[PacketRecord] = field(default_factory=list)
    packets_down: list[PacketRecord] = field(default_factory=list)
    initiator: tuple[str, int] = ("", 0)

    @property
    def packets(self) -> list[PacketRecord]:
        """All packets of the flow in timestamp order."""
        merged = self.packets_up + self.packets_down
        merged.sort(key=lambda p: p.timestamp)
        return merged

    @property
    def packet_count(self) -> int:
        return len(self.packets_up) + len(self.packets_down)


def assemble_flows(packets: list[PacketRecord]) -> list[Flow]:
    """Group timestamp-sorted packets into bidirectional flows.

    The first packet seen for a key defines the initiator endpoint; packets
    from that endpoint go up, the rest down. Flows are returned in order of
    first appearance.
    """
    flows: dict[FlowKey, Flow] = {}
    for packet in packets:
        key = normalized_key(packet)
        flow = flows.get(key)
        if flow is None:
            flow = Flow(
                key=key,
                start_time=packet.timestamp,
                initiator=(packet.src_addr, packet.src_port),
            )
            flows[key] = flow
        if (packet.src_addr, packet.src_port) == flow.initiator:
            flow.packets_up.append(packet)
        else:
            flow.packets_down.append(packet)
    return list(flows.values())
