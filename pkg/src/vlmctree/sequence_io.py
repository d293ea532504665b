"""FASTA / label-file parsing and alphabet encoding."""

from __future__ import annotations

import io
import os
from dataclasses import dataclass, field
from typing import IO, Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "AMINO_ACIDS",
    "BREAK",
    "Alphabet",
    "FormatError",
    "LabeledDataset",
    "SymbolSequence",
    "UnknownSymbolError",
    "decode",
    "encode",
    "load_labels",
    "parse_fasta",
    "read_fasta",
    "read_labels",
    "write_fasta",
]

AMINO_ACIDS = "ACDEFGHIKLMNPQRSTVWY"

#: Code used in place of a run of out-of-alphabet characters.
BREAK = -1


class FormatError(ValueError):
    """Malformed FASTA or label input."""


class UnknownSymbolError(ValueError):
    """Out-of-alphabet character under the ``error`` policy."""

    def __init__(self, position: int, char: str, seq_id: str = ""):
        self.position = position
        self.char = char
        where = f" in {seq_id!r}" if seq_id else ""
        super().__init__(f"unknown symbol {char!r} at position {position}{where}")


@dataclass(frozen=True)
class Alphabet:
    symbols: str = AMINO_ACIDS
    unknown_policy: str = "break"
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        symbols = self.symbols
        if len(symbols) < 2:
            raise ValueError("an alphabet needs at least two symbols")
        if len(set(symbols.upper())) != len(symbols):
            raise ValueError(f"alphabet symbols are not distinct: {symbols!r}")
        if self.unknown_policy not in ("break", "error"):
            raise ValueError(f"unknown_policy must be 'break' or 'error', got {self.unknown_policy!r}")
        object.__setattr__(self, "_index", {c.upper(): i for i, c in enumerate(symbols)})

    @property
    def size(self) -> int:
        return len(self.symbols)

    def __len__(self) -> int:
        return len(self.symbols)

    def index(self, char: str) -> int:
        return self._index[char.upper()]


@dataclass(frozen=True, eq=False)
class SymbolSequence:
    """An encoded sequence; ``codes`` is a read-only int array, ``BREAK`` marks gaps."""

    id: str
    codes: np.ndarray
    alphabet: Alphabet

    def __post_init__(self):
        codes = np.asarray(self.codes, dtype=np.int32)
        if codes.ndim != 1:
            raise ValueError("codes must be one-dimensional")
        if codes.size and (codes.min() < BREAK or codes.max() >= self.alphabet.size):
            raise ValueError("codes contain values outside the alphabet")
        brk = codes == BREAK
        if np.any(brk[1:] & brk[:-1]):
            raise ValueError("consecutive BREAK markers must be collapsed")
        codes = codes.copy()
        codes.flags.writeable = False
        object.__setattr__(self, "codes", codes)

    @property
    def length(self) -> int:
        """Number of in-alphabet symbols."""
        return int(np.count_nonzero(self.codes != BREAK))

    def __len__(self) -> int:
        return self.length

    def segments(self) -> list[np.ndarray]:
        """Split at BREAK markers, dropping empty pieces."""
        cuts = np.flatnonzero(self.codes == BREAK)
        pieces = np.split(self.codes, cuts)
        out = []
        for k, piece in enumerate(pieces):
            if k > 0:
                piece = piece[1:]
            if piece.size:
                out.append(piece)
        return out

    def __eq__(self, other):
        if not isinstance(other, SymbolSequence):
            return NotImplemented
        return (
            self.id == other.id
            and self.alphabet.symbols == other.alphabet.symbols
            and np.array_equal(self.codes, other.codes)
        )

    __hash__ = None


def encode(alphabet: Alphabet, raw: str, id: str = "") -> SymbolSequence:
    """Map ``raw`` onto alphabet indices.

    Matching is case-insensitive. Unknown characters either become a single
    ``BREAK`` per run (policy ``break``) or raise :class:`UnknownSymbolError`
    with the 1-based position (policy ``error``).
    """
    index = alphabet._index
    codes = []
    prev_break = False
    for pos, ch in enumerate(raw.upper(), start=1):
        code = index.get(ch)
        if code is None:
            if alphabet.unknown_policy == "error":
                raise UnknownSymbolError(pos, raw[pos - 1], id)
            if not prev_break:
                codes.append(BREAK)
            prev_break = True
        else:
            codes.append(code)
            prev_break = False
    return SymbolSequence(id, np.array(codes, dtype=np.int32), alphabet)


def decode(seq: SymbolSequence, break_char: str = "X") -> str:
    symbols = seq.alphabet.symbols.upper()
    return "".join(break_char if c == BREAK else symbols[c] for c in seq.codes)


def _lines(source) -> Iterable[str]:
    if isinstance(source, (bytes, bytearray)):
        source = io.BytesIO(source)
    elif isinstance(source, str):
        source = io.StringIO(source)
    for line in source:
        if isinstance(line, (bytes, bytearray)):
            line = line.decode("utf-8")
        yield line


def parse_fasta(source) -> list[tuple[str, str]]:
    """Parse FASTA records into ``(id, sequence)`` pairs.

    ``source`` may be a text or binary stream, or the content itself as
    ``str``/``bytes``. The id is the first whitespace token of the header.
    """
    records: list[tuple[str, list[str]]] = []
    seen: set[str] = set()
    for lineno, line in enumerate(_lines(source), start=1):
        line = line.strip()
        if not line:
            continue
        if line.startswith(">"):
            parts = line[1:].split(None, 1)
            if not parts:
                raise FormatError(f"line {lineno}: empty FASTA header")
            rid = parts[0]
            if rid in seen:
                raise FormatError(f"duplicate sequence id {rid!r}")
            seen.add(rid)
            records.append((rid, []))
        else:
            if not records:
                raise FormatError(f"line {lineno}: sequence data before the first header")
            records[-1][1].append("".join(line.split()))
    return [(rid, "".join(chunks)) for rid, chunks in records]


def read_fasta(path: str | os.PathLike) -> list[tuple[str, str]]:
    with open(path, "rb") as fh:
        return parse_fasta(fh)


def write_fasta(records: Iterable[tuple[str, str]], handle: IO[str], width: int = 60) -> None:
    for rid, seq in records:
        handle.write(f">{rid}\n")
        for start in range(0, len(seq), width):
            handle.write(seq[start:start + width] + "\n")


def load_labels(source) -> dict[str, str]:
    """Read ``id<TAB>label`` lines (LF or CRLF)."""
    labels: dict[str, str] = {}
    for lineno, line in enumerate(_lines(source), start=1):
        line = line.rstrip("\r\n")
        if not line.strip():
            continue
        if "\t" not in line:
            raise FormatError(f"line {lineno}: expected 'id<TAB>label'")
        key, label = line.split("\t", 1)
        key, label = key.strip(), label.strip()
        if key in labels:
            raise FormatError(f"line {lineno}: duplicate id {key!r}")
        labels[key] = label
    return labels


def read_labels(path: str | os.PathLike) -> dict[str, str]:
    with open(path, "rb") as fh:
        return load_labels(fh)


@dataclass(frozen=True)
class LabeledDataset:
    """Parallel ids / items / labels; items may be sequences or trees."""

    ids: tuple
    items: tuple
    labels: tuple

    def __post_init__(self):
        object.__setattr__(self, "ids", tuple(self.ids))
        object.__setattr__(self, "items", tuple(self.items))
        object.__setattr__(self, "labels", tuple(self.labels))
        if not (len(self.ids) == len(self.items) == len(self.labels)):
            raise ValueError("ids, items and labels must have equal length")
        if len(set(self.ids)) != len(self.ids):
            dup = next(i for i in self.ids if self.ids.count(i) > 1)
            raise ValueError(f"duplicate item id {dup!r}")

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def label_set(self) -> list[str]:
        return sorted({lab for lab in self.labels if lab is not None})

    def subset(self, indices: Sequence[int]) -> "LabeledDataset":
        return LabeledDataset(
            [self.ids[i] for i in indices],
            [self.items[i] for i in indices],
            [self.labels[i] for i in indices],
        )

    @classmethod
    def from_mapping(cls, items: Mapping[str, object], labels: Mapping[str, str] | None = None):
        labels = labels or {}
        ids = list(items)
        return cls(ids, [items[i] for i in ids], [labels.get(i) for i in ids])
