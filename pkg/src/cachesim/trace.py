"""Trace ingestion: MSR Cambridge CSV parsing, synthetic workloads and the
canonical ``seq,block_id,R|W`` file format.

Everything here yields :class:`AccessRecord` streams lazily so that long
traces replay in constant memory.
"""
from __future__ import annotations

import enum
import itertools
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

log = logging.getLogger(__name__)

DEFAULT_BLOCK_SIZE = 4096


class TraceParseError(ValueError):
    def __init__(self, msg: str, lineno: int | None = None):
        self.lineno = lineno
        if lineno is not None:
            msg = f"line {lineno}: {msg}"
        super().__init__(msg)


class Op(enum.Enum):
    READ = "R"
    WRITE = "W"


@dataclass(frozen=True)
class AccessRecord:
    seq: int
    block_id: int
    op: Op = Op.READ


@dataclass(frozen=True)
class TraceMeta:
    name: str
    length: int
    unique_blocks: int
    block_size_bytes: int = DEFAULT_BLOCK_SIZE

    def __post_init__(self):
        if self.unique_blocks > self.length:
            raise ValueError("unique_blocks cannot exceed length")
        b = self.block_size_bytes
        if b <= 0 or b & (b - 1):
            raise ValueError(f"block size must be a power of two, got {b}")


def _check_block_size(block_size: int) -> None:
    if block_size <= 0 or block_size & (block_size - 1):
        raise ValueError(f"block size must be a power of two, got {block_size}")


def parse_msr_blocks(line: str, block_size: int = DEFAULT_BLOCK_SIZE,
                     lineno: int | None = None) -> list[tuple[int, Op]]:
    """Split one MSR CSV line into ``(block_id, op)`` pairs in ascending block order.

    MSR layout: Timestamp,Hostname,DiskNumber,Type,Offset,Size,ResponseTime.
    A zero-size request touches no blocks.
    """
    fields = line.strip().split(",")
    if len(fields) != 7:
        raise TraceParseError(f"expected 7 fields, got {len(fields)}", lineno)
    kind = fields[3].strip().lower()
    if kind == "read":
        op = Op.READ
    elif kind == "write":
        op = Op.WRITE
    else:
        raise TraceParseError(f"unknown request type {fields[3]!r}", lineno)
    try:
        offset = int(fields[4])
        size = int(fields[5])
    except ValueError:
        raise TraceParseError("offset/size are not integers", lineno) from None
    if offset < 0 or size < 0:
        raise TraceParseError("offset/size must be non-negative", lineno)
    if size == 0:
        return []
    first = offset // block_size
    last = (offset + size - 1) // block_size
    return [(b, op) for b in range(first, last + 1)]


def parse_msr_line(line: str, block_size: int = DEFAULT_BLOCK_SIZE, start_seq: int = 0,
                   lineno: int | None = None) -> list[AccessRecord]:
    """Parse one MSR line into records numbered from ``start_seq``."""
    blocks = parse_msr_blocks(line, block_size, lineno)
    return [AccessRecord(start_seq + i, b, op) for i, (b, op) in enumerate(blocks)]


def read_msr(path: str | Path, block_size: int = DEFAULT_BLOCK_SIZE,
             limit: int | None = None) -> Iterator[AccessRecord]:
    """Stream block accesses from an MSR CSV file.

    A first line that does not start with a digit is taken as a header and
    skipped. ``limit`` caps the number of emitted (expanded) accesses.
    """
    _check_block_size(block_size)
    seq = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            if lineno == 1 and not line.lstrip()[:1].isdigit():
                log.warning("%s: skipping header line", path)
                continue
            for block, op in parse_msr_blocks(line, block_size, lineno):
                if limit is not None and seq >= limit:
                    return
                yield AccessRecord(seq, block, op)
                seq += 1


def synth_cyclic(num_blocks: int, length: int, seed: int = 0) -> Iterator[AccessRecord]:
    """Loop over blocks ``0..num_blocks-1`` repeatedly. ``seed`` is accepted
    for interface uniformity; the stream does not depend on it."""
    if num_blocks < 2:
        raise ValueError("cyclic trace needs at least 2 blocks")
    if length < 1:
        raise ValueError("length must be >= 1")
    for t in range(length):
        yield AccessRecord(t, t % num_blocks)


def zipf_pmf(num_blocks: int, exponent: float) -> np.ndarray:
    ranks = np.arange(1, num_blocks + 1, dtype=np.float64)
    w = ranks ** -exponent
    return w / w.sum()


def synth_zipf(num_blocks: int, length: int, exponent: float,
               seed: int = 0) -> Iterator[AccessRecord]:
    """I.i.d. draws over ``0..num_blocks-1`` where id ``i`` has mass
    proportional to ``(i+1)**-exponent``."""
    if exponent <= 0:
        raise ValueError("zipf exponent must be positive")
    if num_blocks < 1 or length < 1:
        raise ValueError("num_blocks and length must be >= 1")
    rng = np.random.default_rng(seed)
    cdf = np.cumsum(zipf_pmf(num_blocks, exponent))
    cdf[-1] = 1.0
    chunk = 1 << 16
    t = 0
    while t < length:
        n = min(chunk, length - t)
        ids = np.searchsorted(cdf, rng.random(n), side="right")
        for b in ids.tolist():
            yield AccessRecord(t, b)
            t += 1


def synth_uniform(num_blocks: int, length: int, seed: int = 0) -> Iterator[AccessRecord]:
    if num_blocks < 1 or length < 1:
        raise ValueError("num_blocks and length must be >= 1")
    rng = np.random.default_rng(seed)
    for t, b in enumerate(rng.integers(0, num_blocks, size=length).tolist()):
        yield AccessRecord(t, b)


def from_blocks(blocks: Iterable[int]) -> Iterator[AccessRecord]:
    for t, b in enumerate(blocks):
        yield AccessRecord(t, int(b))


def write_canonical(records: Iterable[AccessRecord], path: str | Path) -> int:
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            fh.write(f"{r.seq},{r.block_id},{r.op.value}\n")
            n += 1
    return n


def read_canonical(path: str | Path) -> Iterator[AccessRecord]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise TraceParseError("expected seq,block_id,R|W", lineno)
            try:
                yield AccessRecord(int(parts[0]), int(parts[1]), Op(parts[2]))
            except ValueError:
                raise TraceParseError(f"bad record {line!r}", lineno) from None


def open_trace(path: str | Path, block_size: int = DEFAULT_BLOCK_SIZE,
               limit: int | None = None) -> Iterator[AccessRecord]:
    """Dispatch on file shape: 3-field lines are canonical, 7-field lines MSR."""
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        first = ""
        for first in fh:
            if first.strip() and first.lstrip()[:1].isdigit():
                break
    if first.count(",") == 2:
        it = read_canonical(path)
        return itertools.islice(it, limit) if limit is not None else it
    return read_msr(path, block_size, limit)


def trace_meta(name: str, records: Iterable[AccessRecord],
               block_size: int = DEFAULT_BLOCK_SIZE) -> TraceMeta:
    n = 0
    seen = set()
    for r in records:
        n += 1
        seen.add(r.block_id)
    return TraceMeta(name, n, len(seen), block_size)
