"""Classic pcap reader producing per-packet records.

Supports both endiannesses and the microsecond/nanosecond magic variants of
the classic format (pcapng is out of scope). Only Ethernet-framed IPv4/IPv6
packets carrying TCP or UDP become records; everything else is skipped and
counted.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

from .errors import MalformedPcap
from .flows import PacketRecord, Protocol

MAGIC_MICRO = 0xA1B2C3D4
MAGIC_NANO = 0xA1B23C4D

_ETHERTYPE_IPV4 = 0x0800
_ETHERTYPE_IPV6 = 0x86DD
_ETHERTYPE_VLAN = 0x8100
_LINKTYPE_ETHERNET = 1

_PROTO_TCP = 6
_PROTO_UDP = 17


@dataclass
class PcapStats:
    """Counts of what the reader kept and what it skipped."""

    packets: int = 0
    skipped_non_ip: int = 0
    skipped_non_tcp_udp: int = 0
    truncated: int = 0
    by_reason: dict = field(default_factory=dict)

    @property
    def skipped(self) -> int:
        return self.skipped_non_ip + self.skipped_non_tcp_udp + self.truncated


def parse_pcap(path: str | Path) -> list[PacketRecord]:
    """Read a classic pcap file and return TCP/UDP records sorted by time."""
    records, _ = parse_pcap_with_stats(path)
    return records


def parse_pcap_with_stats(path: str | Path) -> tuple[list[PacketRecord], PcapStats]:
    data = Path(path).read_bytes()
    if len(data) < 24:
        raise MalformedPcap(f"{path}: file shorter than the 24-byte global header")
    magic_be = struct.unpack(">I", data[:4])[0]
    magic_le = struct.unpack("<I", data[:4])[0]
    if magic_be in (MAGIC_MICRO, MAGIC_NANO):
        endian, magic = ">", magic_be
    elif magic_le in (MAGIC_MICRO, MAGIC_NANO):
        endian, magic = "<", magic_le
    else:
        raise MalformedPcap(f"{path}: unrecognized magic 0x{magic_be:08X}")
    subsec_divisor = 1e9 if magic == MAGIC_NANO else 1e6
    linktype = struct.unpack(endian + "I", data[20:24])[0]
    if linktype != _LINKTYPE_ETHERNET:
        raise MalformedPcap(f"{path}: unsupported link type {linktype}")

    stats = PcapStats()
    records: list[PacketRecord] = []
    offset = 24
    rec_header = struct.Struct(endian + "IIII")
    while offset < len(data):
        if offset + 16 > len(data):
            stats.truncated += 1
            break
        ts_sec, ts_sub, incl_len, orig_len = rec_header.unpack_from(data, offset)
        offset += 16
        if offset + incl_len > len(data):
            stats.truncated += 1
            break
        frame = data[offset : offset + incl_len]
        offset += incl_len
        timestamp = ts_sec + ts_sub / subsec_divisor
        record = _decode_frame(frame, timestamp, orig_len, stats)
        if record is not None:
            records.append(record)
            stats.packets += 1
    records.sort(key=lambda r: r.timestamp)
    return records, stats


def _count(stats: PcapStats, reason: str) -> None:
    stats.by_reason[reason] = stats.by_reason.get(reason, 0) + 1


def _decode_frame(frame: bytes, timestamp: float, orig_len: int, stats: PcapStats):
    if len(frame) < 14:
        stats.truncated += 1
        _count(stats, "short-ethernet")
        return None
    ethertype = struct.unpack(">H", frame[12:14])[0]
    payload = frame[14:]
    if ethertype == _ETHERTYPE_VLAN:
        if len(payload) < 4:
            stats.truncated += 1
            _count(stats, "short-vlan")
            return None
        ethertype = struct.unpack(">H", payload[2:4])[0]
        payload = payload[4:]
    if ethertype == _ETHERTYPE_IPV4:
        return _decode_ipv4(payload, timestamp, orig_len, stats)
    if ethertype == _ETHERTYPE_IPV6:
        return _decode_ipv6(payload, timestamp, orig_len, stats)
    stats.skipped_non_ip += 1
    _count(stats, "non-ip")
    return None


def _decode_ipv4(payload: bytes, timestamp: float, orig_len: int, stats: PcapStats):
    if len(payload) < 20:
        stats.truncated += 1
        _count(stats, "short-ipv4")
        return None
    header_len = (payload[0] & 0x0F) * 4
    if header_len < 20 or len(payload) < header_len:
        stats.truncated += 1
        _count(stats, "bad-ipv4-ihl")
        return None
    frag_offset = struct.unpack(">H", payload[6:8])[0] & 0x1FFF
    if frag_offset:
        stats.skipped_non_tcp_udp += 1
        _count(stats, "ip-fragment")
        return None
    proto = payload[9]
    src = ".".join(str(b) for b in payload[12:16])
    dst = ".".join(str(b) for b in payload[16:20])
    return _decode_l4(
        payload[header_len:], proto, src, dst, timestamp, orig_len, stats
    )


def _decode_ipv6(payload: bytes, timestamp: float, orig_len: int, stats: PcapStats):
    if len(payload) < 40:
        stats.truncated += 1
        _count(stats, "short-ipv6")
        return None
    next_header = payload[6]
    src = _ipv6_str(payload[8:24])
    dst = _ipv6_str(payload[24:40])
    # Extension-header chains are not walked; TCP/UDP must follow directly.
    return _decode_l4(payload[40:], next_header, src, dst, timestamp, orig_len, stats)


def _ipv6_str(raw: bytes) -> str:
    return ":".join(f"{raw[i]:02x}{raw[i + 1]:02x}" for i in range(0, 16, 2))


def _decode_l4(
    segment: bytes,
    proto: int,
    src: str,
    dst: str,
    timestamp: float,
    orig_len: int,
    stats: PcapStats,
):
    if proto == _PROTO_TCP:
        if len(segment) < 14:
            stats.truncated += 1
            _count(stats, "short-tcp")
            return None
        sport, dport = struct.unpack(">HH", segment[:4])
        flags = segment[13]
        protocol = Protocol.TCP
    elif proto == _PROTO_UDP:
        if len(segment) < 8:
            stats.truncated += 1
            _count(stats, "short-udp")
            return None
        sport, dport = struct.unpack(">HH", segment[:4])
        flags = 0
        protocol = Protocol.UDP
    else:
        stats.skipped_non_tcp_udp += 1
        _count(stats, "non-tcp-udp")
        return None
    return PacketRecord(
        timestamp=timestamp,
        src_addr=src,
        dst_addr=dst,
        src_port=sport,
        dst_port=dport,
        protocol=protocol,
        length=orig_len,
        tcp_flags=flags,
    )
