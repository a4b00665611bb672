"""Token-to-cell cross attention and its per-step capture.

Text enters as a start token followed by N content tokens; every denoising
step yields one 16x16 attention map per token, softmax-normalized across
tokens at each spatial cell. Stacks from parallel rounds are averaged
before mask generation. A small binary container ("ATNS") lets external
runtimes hand real attention to the mask module.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import fileio
from .numerics import softmax_rows
from .util import seeded_rng

ATTN_RES = 16
START_WORD = "<start>"
_MAGIC = b"ATNS"
_VERSION = 1
_HEADER = struct.Struct("<4sHIHHHH")  # magic, version, timestep, rounds, tokens, h, w

_TOKEN_SALT = 0x7E11
_START_SALT = 0x5A17
_PROJ_SALTS = {"q": 0x9001, "k": 0x9002, "v": 0x9003}


def token_id(word: str) -> int:
    """Stable 32-bit id for a token string."""
    return zlib.crc32(word.encode("utf-8"))


@dataclass(frozen=True)
class TokenSequence:
    """Start token at position 0 followed by N >= 1 content tokens."""

    ids: tuple[int, ...]
    words: tuple[str, ...] | None = None

    def __post_init__(self):
        if len(self.ids) < 2:
            raise ValueError("need at least one content token after the start")
        if self.words is not None and len(self.words) != len(self.ids):
            raise ValueError("words and ids length mismatch")

    @property
    def n_content(self) -> int:
        return len(self.ids) - 1

    @classmethod
    def from_words(cls, words) -> "TokenSequence":
        words = [w for w in words if w]
        if not words:
            raise ValueError("empty token sequence")
        ids = (0,) + tuple(token_id(w) for w in words)
        return cls(ids=ids, words=(START_WORD, *words))

    @classmethod
    def from_text(cls, text: str) -> "TokenSequence":
        return cls.from_words(text.split())


@dataclass(frozen=True)
class TextFeatures:
    """(N+1) x d_k embedding matrix, start row first."""

    vectors: np.ndarray

    @property
    def d_k(self) -> int:
        return self.vectors.shape[1]


@dataclass(frozen=True)
class ProjectionSet:
    """Frozen seeded linear maps standing in for trained projections."""

    w_q: np.ndarray  # (latent_channels, d_k)
    w_k: np.ndarray  # (d_k, d_k)
    w_v: np.ndarray  # (d_k, d_k)

    @classmethod
    def seeded(cls, latent_channels: int, d_k: int, seed: int) -> "ProjectionSet":
        def mat(rows, cols, salt):
            rng = seeded_rng(seed, salt)
            return rng.standard_normal((rows, cols)) / np.sqrt(rows)

        return cls(w_q=mat(latent_channels, d_k, _PROJ_SALTS["q"]),
                   w_k=mat(d_k, d_k, _PROJ_SALTS["k"]),
                   w_v=mat(d_k, d_k, _PROJ_SALTS["v"]))


@dataclass(frozen=True)
class AttentionStack:
    """One 16x16 map per token for a single step: index 0 is the start token.

    At every spatial cell the values across tokens form a distribution.
    """

    maps: np.ndarray  # (N+1, ATTN_RES, ATTN_RES)
    timestep: int
    round_index: int = 0

    @property
    def n_tokens(self) -> int:
        return self.maps.shape[0]

    def validate(self) -> "AttentionStack":
        if self.maps.ndim != 3 or self.maps.shape[1:] != (ATTN_RES, ATTN_RES):
            raise ValueError(f"bad stack shape {self.maps.shape}")
        if self.maps.shape[0] < 2:
            raise ValueError("stack needs a start map and one content map")
        if np.any(self.maps < 0):
            raise ValueError("attention maps must be non-negative")
        sums = self.maps.sum(axis=0)
        if not np.allclose(sums, 1.0, atol=1e-6, rtol=0):
            raise ValueError("token values at each cell must sum to 1")
        return self


def encode_text(tokens: TokenSequence, d_k: int, seed: int) -> TextFeatures:
    """Deterministic per-token embeddings from a seeded hash table.

    The start row is the mean of the content rows plus a fixed seed-derived
    offset, so it carries whole-sequence semantics.
    """
    if d_k <= 0:
        raise ValueError(f"d_k must be positive, got {d_k}")
    content = []
    for tid in tokens.ids[1:]:
        v = seeded_rng(seed, _TOKEN_SALT, tid).standard_normal(d_k)
        content.append(v / np.linalg.norm(v))
    offset = seeded_rng(seed, _START_SALT).standard_normal(d_k)
    offset = 0.25 * offset / np.linalg.norm(offset)
    start = np.mean(content, axis=0) + offset
    return TextFeatures(vectors=np.vstack([start, *content]))


def attention_probs(q: np.ndarray, k: np.ndarray, heads: int = 1) -> np.ndarray:
    """softmax(Q Kh^T / sqrt(d_head)) per head, averaged over heads.

    q: (cells, d_k), k: (tokens, d_k). Returns (cells, tokens), each row a
    distribution over tokens.
    """
    q = np.asarray(q, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    if q.shape[1] != k.shape[1]:
        raise ValueError(f"feature dim mismatch: {q.shape[1]} vs {k.shape[1]}")
    if q.shape[1] % heads:
        raise ValueError(f"d_k {q.shape[1]} not divisible by {heads} heads")
    dh = q.shape[1] // heads
    acc = np.zeros((q.shape[0], k.shape[0]))
    for h in range(heads):
        sl = slice(h * dh, (h + 1) * dh)
        acc += softmax_rows(q[:, sl] @ k[:, sl].T, np.sqrt(dh))
    return acc / heads


def _pool_to_attention_res(latent: np.ndarray) -> np.ndarray:
    c, h, w = latent.shape
    if h < ATTN_RES or w < ATTN_RES:
        raise ValueError(f"latent {h}x{w} smaller than {ATTN_RES}x{ATTN_RES}")
    if h % ATTN_RES or w % ATTN_RES:
        raise ValueError(f"latent {h}x{w} not reducible to {ATTN_RES}x{ATTN_RES}")
    fh, fw = h // ATTN_RES, w // ATTN_RES
    return latent.reshape(c, ATTN_RES, fh, ATTN_RES, fw).mean(axis=(2, 4))


def cross_attention(latent: np.ndarray, feats: TextFeatures,
                    proj: ProjectionSet, heads: int = 4, timestep: int = 0,
                    round_index: int = 0) -> AttentionStack:
    """Per-token spatial attention from projected latent cells and text rows."""
    latent = np.asarray(latent, dtype=np.float64)
    if latent.ndim != 3:
        raise ValueError(f"latent must be (C, H, W), got {latent.shape}")
    if latent.shape[0] != proj.w_q.shape[0]:
        raise ValueError(
            f"latent channels {latent.shape[0]} do not match projection "
            f"input {proj.w_q.shape[0]}")
    if feats.vectors.shape[1] != proj.w_k.shape[0]:
        raise ValueError("text feature dim does not match projection input")
    pooled = _pool_to_attention_res(latent)
    cells = pooled.reshape(pooled.shape[0], -1).T  # (256, C)
    q = cells @ proj.w_q
    k = feats.vectors @ proj.w_k
    probs = attention_probs(q, k, heads=heads)  # (256, N+1)
    maps = probs.T.reshape(-1, ATTN_RES, ATTN_RES)
    return AttentionStack(maps=maps, timestep=timestep,
                          round_index=round_index).validate()


def aggregate_rounds(stacks: list[AttentionStack]) -> AttentionStack:
    """Elementwise mean over parallel rounds of the same step."""
    if not stacks:
        raise ValueError("no stacks to aggregate")
    first = stacks[0]
    for s in stacks[1:]:
        if s.maps.shape != first.maps.shape:
            raise ValueError(
                f"mixed stack shapes: {s.maps.shape} vs {first.maps.shape}")
        if s.timestep != first.timestep:
            raise ValueError(
                f"mixed timesteps: {s.timestep} vs {first.timestep}")
    mean = np.mean([s.maps for s in stacks], axis=0)
    return AttentionStack(maps=mean, timestep=first.timestep, round_index=0)


def write_attention_dump(path: str | Path, stacks: list[AttentionStack],
                         words: tuple[str, ...] | None = None) -> None:
    """Serialize per-round stacks to the ATNS container (+ JSON sidecar)."""
    if not stacks:
        raise ValueError("nothing to write")
    first = stacks[0]
    for s in stacks:
        s.validate()
        if s.maps.shape != first.maps.shape or s.timestep != first.timestep:
            raise ValueError("all stacks in a dump must share shape and timestep")
    n_tokens, h, w = first.maps.shape
    header = _HEADER.pack(_MAGIC, _VERSION, first.timestep, len(stacks),
                          n_tokens, h, w)
    data = np.stack([s.maps for s in stacks]).astype("<f4").tobytes()
    fileio.atomic_write_bytes(path, header + data)
    if words is not None:
        fileio.write_json(Path(str(path) + ".json"), {
            "version": _VERSION,
            "timestep": first.timestep,
            "tokens": list(words),
        })


def read_attention_dump(path: str | Path) -> tuple[list[AttentionStack],
                                                   list[str] | None]:
    """Read an ATNS container; returns per-round stacks and sidecar tokens."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated attention dump")
    magic, version, timestep, rounds, tokens, h, w = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise ValueError(f"{path}: not an attention dump (bad magic {magic!r})")
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported dump version {version}")
    count = rounds * tokens * h * w
    body = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size)
    if body.size != count:
        raise ValueError(f"{path}: expected {count} values, found {body.size}")
    maps = body.astype(np.float64).reshape(rounds, tokens, h, w)
    stacks = [AttentionStack(maps=maps[r], timestep=timestep,
                             round_index=r).validate()
              for r in range(rounds)]
    sidecar = Path(str(path) + ".json")
    words = None
    if sidecar.exists():
        words = list(fileio.read_json(sidecar)["tokens"])
    return stacks, words
