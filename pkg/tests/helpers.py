"""Shared test utilities: a byte-level pcap writer independent of the
package's reader, and a central finite-difference gradient helper."""

from __future__ import annotations

import struct

import numpy as np
import torch

MAGIC_MICRO = 0xA1B2C3D4
MAGIC_NANO = 0xA1B23C4D


def pcap_global_header(endian: str = "<", nano: bool = False, linktype: int = 1) -> bytes:
    magic = MAGIC_NANO if nano else MAGIC_MICRO
    return struct.pack(endian + "IHHiIII", magic, 2, 4, 0, 0, 65535, linktype)


def pcap_packet_header(
    ts: float, frame_len: int, endian: str = "<", nano: bool = False,
    orig_len: int | None = None,
) -> bytes:
    scale = 1_000_000_000 if nano else 1_000_000
    sec = int(ts)
    sub = int(round((ts - sec) * scale))
    return struct.pack(
        endian + "IIII", sec, sub, frame_len,
        frame_len if orig_len is None else orig_len,
    )


def ethernet(payload: bytes, ethertype: int) -> bytes:
    return b"\xaa" * 6 + b"\xbb" * 6 + struct.pack(">H", ethertype) + payload


def ipv4(payload: bytes, proto: int, src: str, dst: str) -> bytes:
    def addr(a: str) -> bytes:
        return bytes(int(x) for x in a.split("."))

    total = 20 + len(payload)
    header = struct.pack(
        ">BBHHHBBH4s4s", 0x45, 0, total, 0, 0, 64, proto, 0, addr(src), addr(dst)
    )
    return header + payload


def tcp(sport: int, dport: int, flags: int = 0x10, payload: bytes = b"") -> bytes:
    header = struct.pack(">HHIIBBHHH", sport, dport, 0, 0, 5 << 4, flags, 8192, 0, 0)
    return header + payload


def udp(sport: int, dport: int, payload: bytes = b"") -> bytes:
    return struct.pack(">HHHH", sport, dport, 8 + len(payload), 0) + payload


def tcp_frame(src, dst, sport, dport, flags=0x10, payload=b""):
    return ethernet(ipv4(tcp(sport, dport, flags, payload), 6, src, dst), 0x0800)


def udp_frame(src, dst, sport, dport, payload=b""):
    return ethernet(ipv4(udp(sport, dport, payload), 17, src, dst), 0x0800)


def arp_frame() -> bytes:
    return ethernet(b"\x00" * 28, 0x0806)


def write_pcap(path, frames: list[tuple[float, bytes]], endian="<", nano=False) -> None:
    """frames: list of (timestamp, frame bytes); incl_len == orig_len."""
    blob = pcap_global_header(endian, nano)
    for ts, frame in frames:
        blob += pcap_packet_header(ts, len(frame), endian, nano) + frame
    with open(path, "wb") as fh:
        fh.write(blob)


def finite_difference_grad(
    loss_fn, tensor: torch.Tensor, indices: list[tuple], step: float = 1e-4
) -> dict[tuple, float]:
    """Central differences of loss_fn w.r.t. selected tensor coordinates."""
    grads = {}
    with torch.no_grad():
        for index in indices:
            original = tensor[index].item()
            tensor[index] = original + step
            plus = float(loss_fn())
            tensor[index] = original - step
            minus = float(loss_fn())
            tensor[index] = original
            grads[index] = (plus - minus) / (2.0 * step)
    return grads


def relative_errors(
    analytic: torch.Tensor, numeric: dict[tuple, float], floor: float = 1e-5
) -> list[float]:
    """Relative error with an absolute floor on the denominator.

    Central differences carry a roundoff noise floor of about
    |loss| * eps / step, so coordinates whose true gradient sits below
    `floor` are effectively compared absolutely (gradcheck-style
    atol + rtol), keeping the check meaningful instead of dividing by ~0.
    """
    errors = []
    for index, fd in numeric.items():
        ana = float(analytic[index])
        denom = max(abs(ana), abs(fd), floor)
        errors.append(abs(ana - fd) / denom)
    return errors


def sample_indices(shape: tuple, count: int, seed: int) -> list[tuple]:
    rng = np.random.default_rng(seed)
    return [
        tuple(int(rng.integers(0, dim)) for dim in shape) for _ in range(count)
    ]
