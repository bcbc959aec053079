"""Sentence → word vectors.

Embedding files use the plain-text word2vec layout: a ``V D`` header line followed by
V lines of ``word v1 ... vD``.
"""
from __future__ import annotations
import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Sequence, Tuple

import numpy as np

from .errors import EmptyInputError, FormatError, ShapeError

STRIP_CHARS = ".,!?;:\"'()"
DEFAULT_DIM = 200


class Token(str):
    """Lowercased word surface without whitespace."""

    def __new__(cls, surface: str):
        if not surface or any(ch.isspace() for ch in surface):
            raise ValueError(f"invalid token {surface!r}")
        return super().__new__(cls, surface)


def tokenize(text: str) -> List[Token]:
    tokens = []
    for piece in text.split():
        surface = piece.strip(STRIP_CHARS).lower()
        if surface:
            tokens.append(Token(surface))
    if not tokens:
        raise EmptyInputError(f"sentence has no tokens: {text!r}")
    return tokens


def fallback_vector(word: str, dim: int, seed: int) -> np.ndarray:
    digest = hashlib.sha256(f"{seed}\x1f{word}".encode("utf-8")).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
    vec = rng.standard_normal(dim)
    norm = np.linalg.norm(vec)
    while norm == 0.0:
        vec = rng.standard_normal(dim)
        norm = np.linalg.norm(vec)
    return vec / norm


@dataclass(frozen=True)
class EmbeddingTable:
    dim: int = DEFAULT_DIM
    entries: Mapping[str, np.ndarray] = field(default_factory=dict)
    fallback_seed: int = 0

    def __post_init__(self):
        frozen: Dict[str, np.ndarray] = {}
        for word, vec in self.entries.items():
            arr = np.array(vec, dtype=np.float64)
            if arr.shape != (self.dim,):
                raise ShapeError(f"vector for {word!r} has shape {arr.shape}, expected ({self.dim},)")
            arr.setflags(write=False)
            frozen[word] = arr
        object.__setattr__(self, "entries", frozen)

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, word: object) -> bool:
        return word in self.entries

    def vector(self, word: str) -> np.ndarray:
        if word in self.entries:
            return self.entries[word]
        return fallback_vector(word, self.dim, self.fallback_seed)


@dataclass(frozen=True, eq=False)
class EmbeddedSentence:
    tokens: Tuple[Token, ...]
    vectors: np.ndarray

    def __post_init__(self):
        vecs = np.array(self.vectors, dtype=np.float64)
        if not self.tokens or vecs.ndim != 2 or vecs.shape[0] != len(self.tokens):
            raise ShapeError(f"{len(self.tokens)} tokens but vectors of shape {vecs.shape}")
        vecs.setflags(write=False)
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "vectors", vecs)

    def __len__(self) -> int:
        return len(self.tokens)


def load_word2vec_text(path: Path, fallback_seed: int = 0) -> EmbeddingTable:
    lines = Path(path).read_text(encoding="utf-8").split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise FormatError(f"{path}: line 1: missing 'V D' header")
    header = lines[0].split()
    try:
        vocab_size, dim = (int(x) for x in header)
    except ValueError:
        raise FormatError(f"{path}: line 1: header must be 'V D', got {lines[0]!r}")
    if vocab_size < 0 or dim < 1:
        raise FormatError(f"{path}: line 1: invalid header values V={vocab_size} D={dim}")

    body = lines[1:]
    if len(body) != vocab_size:
        raise FormatError(f"{path}: line {len(body) + 1}: header declares {vocab_size} rows, body has {len(body)}")
    entries: Dict[str, np.ndarray] = {}
    for offset, line in enumerate(body):
        lineno = offset + 2
        parts = line.rstrip("\r").split(" ")
        parts = [p for p in parts if p != ""]
        if not parts:
            raise FormatError(f"{path}: line {lineno}: empty row")
        word, values = parts[0], parts[1:]
        if len(values) != dim:
            raise FormatError(f"{path}: line {lineno}: {word!r} has {len(values)} values, expected {dim}")
        if word in entries:
            raise FormatError(f"{path}: line {lineno}: duplicate word {word!r}")
        try:
            entries[word] = np.array([float(v) for v in values], dtype=np.float64)
        except ValueError as e:
            raise FormatError(f"{path}: line {lineno}: {e}")
    return EmbeddingTable(dim=dim, entries=entries, fallback_seed=fallback_seed)


def save_word2vec_text(table: EmbeddingTable, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = [f"{len(table)} {table.dim}"]
    for word, vec in table.entries.items():
        rows.append(word + " " + " ".join(f"{x:.9g}" for x in vec))
    path.write_text("\n".join(rows) + "\n", encoding="utf-8", newline="\n")
    return path


def embed(tokens: Sequence[str], table: EmbeddingTable) -> EmbeddedSentence:
    if not tokens:
        raise EmptyInputError("cannot embed an empty token list")
    toks = tuple(Token(t) for t in tokens)
    vectors = np.stack([table.vector(t) for t in toks])
    return EmbeddedSentence(toks, vectors)


def embed_text(text: str, table: EmbeddingTable) -> EmbeddedSentence:
    return embed(tokenize(text), table)


def load_table(path: str | Path | None, dim: int, fallback_seed: int) -> EmbeddingTable:
    """Load the configured table, or an empty one whose words all take the seeded fallback."""
    if path is None:
        return EmbeddingTable(dim=dim, entries={}, fallback_seed=fallback_seed)
    table = load_word2vec_text(Path(path), fallback_seed=fallback_seed)
    if table.dim != dim:
        raise FormatError(f"{path}: table dim {table.dim} does not match embed_dim {dim}")
    return table


def vocabulary(texts: Iterable[str]) -> List[str]:
    seen: Dict[str, None] = {}
    for text in texts:
        for tok in tokenize(text):
            seen.setdefault(tok, None)
    return sorted(seen)
