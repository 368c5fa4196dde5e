"""Byte-level BPE tokenizer: lossless, reversible sub-word segmentation.

A vocabulary is the 256 single-byte tokens plus an ordered list of merges.
Encoding repeatedly applies the lowest-ranked merge present anywhere in the
token sequence (all non-overlapping occurrences, left to right) until no
merge applies, so any byte string round-trips exactly.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

_SINGLE_BYTES = [bytes([i]) for i in range(256)]
_VOCAB_HEADER = "bpe-vocab v1"


class VocabFormatError(ValueError):
    """Raised when a vocab file is malformed; carries the 1-based line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class UnknownTokenIdError(KeyError):
    """Raised by decode() for an id not present in the vocabulary."""

    def __init__(self, token_id: int, position: int):
        super().__init__(f"unknown token id {token_id} at position {position}")
        self.token_id = token_id
        self.position = position


@dataclass
class BpeVocab:
    """Merge table plus the derived token<->id maps.

    Ids 0..255 are the single bytes; merge i produces id 256+i.
    """

    merges: list[tuple[bytes, bytes]]
    token_to_id: dict[bytes, int] = field(repr=False)
    id_to_token: list[bytes] = field(repr=False)
    pair_ranks: dict[tuple[bytes, bytes], int] = field(repr=False)

    @property
    def size(self) -> int:
        return len(self.id_to_token)

    @classmethod
    def byte_only(cls) -> "BpeVocab":
        """Vocabulary with no merges: every byte is its own token."""
        return cls.from_merges([])

    @classmethod
    def from_merges(cls, merges: list[tuple[bytes, bytes]]) -> "BpeVocab":
        token_to_id = {tok: i for i, tok in enumerate(_SINGLE_BYTES)}
        id_to_token = list(_SINGLE_BYTES)
        pair_ranks: dict[tuple[bytes, bytes], int] = {}
        for rank, (left, right) in enumerate(merges):
            if left not in token_to_id or right not in token_to_id:
                missing = left if left not in token_to_id else right
                raise ValueError(f"merge {rank} references unknown token {missing!r}")
            if (left, right) in pair_ranks:
                raise ValueError(f"duplicate merge {(left, right)!r} at rank {rank}")
            out = left + right
            if out in token_to_id:
                raise ValueError(f"merge {rank} output {out!r} already a token")
            pair_ranks[(left, right)] = rank
            token_to_id[out] = 256 + rank
            id_to_token.append(out)
        return cls(
            merges=list(merges),
            token_to_id=token_to_id,
            id_to_token=id_to_token,
            pair_ranks=pair_ranks,
        )


@dataclass
class TokenSequence:
    ids: list[int]
    source_byte_len: int

    def __len__(self) -> int:
        return len(self.ids)


def load_vocab(document: str) -> BpeVocab:
    """Parse the text vocab format: header line, then one hex merge per line."""
    lines = document.splitlines()
    if not lines or lines[0].strip() != _VOCAB_HEADER:
        raise VocabFormatError(1, f"expected header {_VOCAB_HEADER!r}")
    merges: list[tuple[bytes, bytes]] = []
    token_to_id = {tok: i for i, tok in enumerate(_SINGLE_BYTES)}
    for line_no, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) != 2:
            raise VocabFormatError(line_no, f"expected two hex fields, got {len(fields)}")
        pair = []
        for f in fields:
            try:
                pair.append(bytes.fromhex(f))
            except ValueError:
                raise VocabFormatError(line_no, f"invalid hex token {f!r}") from None
        left, right = pair
        if not left or not right:
            raise VocabFormatError(line_no, "empty token in merge")
        if left not in token_to_id:
            raise VocabFormatError(line_no, f"merge references unknown token {left.hex()}")
        if right not in token_to_id:
            raise VocabFormatError(line_no, f"merge references unknown token {right.hex()}")
        out = left + right
        if out in token_to_id:
            raise VocabFormatError(line_no, f"duplicate merge: {out.hex()} already a token")
        token_to_id[out] = 256 + len(merges)
        merges.append((left, right))
    return BpeVocab.from_merges(merges)


def dump_vocab(vocab: BpeVocab) -> str:
    """Inverse of load_vocab (used by fixtures and round-trip tests)."""
    lines = [_VOCAB_HEADER]
    lines += [f"{l.hex()} {r.hex()}" for l, r in vocab.merges]
    return "\n".join(lines) + "\n"


def _merge_run(data: bytes, vocab: BpeVocab) -> list[bytes]:
    """Full BPE loop over one byte run: lowest rank first, all occurrences."""
    seq: list[bytes] = [_SINGLE_BYTES[b] for b in data]
    ranks = vocab.pair_ranks
    while len(seq) > 1:
        best_rank: int | None = None
        prev = seq[0]
        for i in range(1, len(seq)):
            cur = seq[i]
            r = ranks.get((prev, cur))
            if r is not None and (best_rank is None or r < best_rank):
                best_rank = r
            prev = cur
        if best_rank is None:
            break
        left, right = vocab.merges[best_rank]
        merged = left + right
        out: list[bytes] = []
        i = 0
        n = len(seq)
        while i < n:
            if i + 1 < n and seq[i] == left and seq[i + 1] == right:
                out.append(merged)
                i += 2
            else:
                out.append(seq[i])
                i += 1
        seq = out
    return seq


def encode(text: str | bytes, vocab: BpeVocab) -> TokenSequence:
    """Tokenize any byte string; decode(encode(x)) == x always holds."""
    data = text.encode("utf-8") if isinstance(text, str) else bytes(text)
    if not data or not vocab.merges:
        # Byte ids coincide with byte values.
        return TokenSequence(ids=list(data), source_byte_len=len(data))

    # A merged token always covers a contiguous occurrence of its own byte
    # sequence, so merging can only happen inside regions where some merge
    # output occurs. Mask those regions and run the merge loop per region;
    # everything else is emitted as plain byte tokens.
    mask = bytearray(len(data))
    any_hit = False
    for left, right in vocab.merges:
        out = left + right
        start = data.find(out)
        while start != -1:
            any_hit = True
            mask[start : start + len(out)] = b"\x01" * len(out)
            start = data.find(out, start + 1)
    if not any_hit:
        return TokenSequence(ids=list(data), source_byte_len=len(data))

    ids: list[int] = []
    token_to_id = vocab.token_to_id
    pos = 0
    for m in re.finditer(b"\x01+", bytes(mask)):
        s, e = m.span()
        ids.extend(data[pos:s])  # plain bytes: id == byte value
        ids.extend(token_to_id[tok] for tok in _merge_run(data[s:e], vocab))
        pos = e
    ids.extend(data[pos:])
    return TokenSequence(ids=ids, source_byte_len=len(data))


def decode(seq: TokenSequence | list[int], vocab: BpeVocab) -> bytes:
    """Concatenate token byte sequences; errors on ids outside the vocab."""
    ids = seq.ids if isinstance(seq, TokenSequence) else seq
    table = vocab.id_to_token
    n = len(table)
    parts = []
    for pos, token_id in enumerate(ids):
        if not 0 <= token_id < n:
            raise UnknownTokenIdError(token_id, pos)
        parts.append(table[token_id])
    return b"".join(parts)


def count_tokens(text: str | bytes, vocab: BpeVocab) -> int:
    return len(encode(text, vocab).ids)
