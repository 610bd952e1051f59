"""Shared fixture builders: synthetic pcaps, traces, and matrices."""

from __future__ import annotations

import struct

import numpy as np
import pytest

from typeclust.clustering import Cluster
from typeclust.dissimilarity import DissimilarityMatrix, SegmentValue
from typeclust.segmentation import Segment


def build_pcap(
    payload_specs,
    little_endian: bool = False,
    network: int = 1,
) -> bytes:
    """Assemble a classic pcap with one Ethernet/IPv4 packet per spec.

    Each spec is (transport, sport, dport, payload) with transport "udp" or
    "tcp", or ("rawdata", bytes) for opaque packet data.
    """
    endian = "<" if little_endian else ">"
    out = bytearray(struct.pack(endian + "IHHiIII", 0xA1B2C3D4, 2, 4, 0, 0, 65535, network))
    for index, spec in enumerate(payload_specs):
        if spec[0] == "rawdata":
            packet = spec[1]
        else:
            transport, sport, dport, payload = spec
            packet = build_ethernet_packet(transport, sport, dport, payload)
        out += struct.pack(endian + "IIII", 1_600_000_000 + index, 0, len(packet), len(packet))
        out += packet
    return bytes(out)


def build_ethernet_packet(
    transport: str, sport: int, dport: int, payload: bytes, fragmented: bool = False
) -> bytes:
    if transport == "udp":
        seg = struct.pack(">HHHH", sport, dport, 8 + len(payload), 0) + payload
        proto = 17
    elif transport == "tcp":
        seg = struct.pack(">HHIIBBHHH", sport, dport, 1, 1, 5 << 4, 0x18, 8192, 0, 0) + payload
        proto = 6
    else:
        raise ValueError(transport)
    total = 20 + len(seg)
    flags_frag = 0x2000 if fragmented else 0
    ip = struct.pack(
        ">BBHHHBBHII", 0x45, 0, total, 1, flags_frag, 64, proto, 0, 0x0A000001, 0x0A000002
    ) + seg
    eth = b"\xaa" * 6 + b"\xbb" * 6 + struct.pack(">H", 0x0800)
    return eth + ip


def make_matrix(distances, member_counts=None, lengths=None) -> DissimilarityMatrix:
    """Wrap a symmetric distance array in a DissimilarityMatrix.

    Synthetic values get distinct two-byte contents and the requested number
    of member segments (default 1 each).
    """
    d = np.asarray(distances, dtype=np.float64)
    n = d.shape[0]
    values = []
    for i in range(n):
        content = bytes([i // 256, i % 256] + [0] * ((lengths[i] - 2) if lengths else 0))
        count = member_counts[i] if member_counts else 1
        members = [
            Segment(message_id=i * 1000 + c, offset=0, length=len(content), bytes=content)
            for c in range(count)
        ]
        values.append(SegmentValue(content, members))
    d = d.copy()
    d.flags.writeable = False
    return DissimilarityMatrix(values, d)


def symmetric_random(n: int, rng: np.random.Generator, low=0.05, high=0.95) -> np.ndarray:
    """Random symmetric matrix with zero diagonal and positive off-diagonals."""
    d = rng.uniform(low, high, size=(n, n))
    d = np.triu(d, k=1)
    d = d + d.T
    return d


def two_blob_matrix(
    sizes=(12, 12),
    isolated: int = 6,
    intra=(0.049, 0.051),
    inter=(0.78, 0.84),
    seed: int = 7,
) -> np.ndarray:
    """Two tight blobs plus scattered points, all cross distances at inter scale."""
    rng = np.random.default_rng(seed)
    n = sum(sizes) + isolated
    d = rng.uniform(*inter, size=(n, n))
    start = 0
    for size in sizes:
        block = rng.uniform(*intra, size=(size, size))
        d[start : start + size, start : start + size] = block
        start += size
    d = np.triu(d, k=1)
    d = d + d.T
    return d


def cluster_of(members) -> Cluster:
    return Cluster(id=0, members=sorted(members))


@pytest.fixture
def rng():
    return np.random.default_rng(20260809)
