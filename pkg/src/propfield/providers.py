"""Patch-embedding providers.

A provider turns image patches (and material-name strings) into unit-norm
embedding vectors:

    embed(patches)      list of (h, w, 3) uint8 arrays -> (M, E) float32
    embed_text(names)   list of strings                -> (K, E) float32

Two analytic providers keep the whole pipeline testable without any
neural model; the file-backed provider replays embeddings computed
offline by an external encoder, keyed by (point, view, scale) request
tuples.
"""

import hashlib
import json
from pathlib import Path

import numpy as np

from . import tensorio
from .errors import BundleLoadError, BundleStructureError


def _unit(rows: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(rows, axis=1, keepdims=True)
    return (rows / np.maximum(norms, 1e-30)).astype(np.float32)


def _hash_direction(text: str, dim: int) -> np.ndarray:
    seed = int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "little")
    vec = np.random.default_rng(seed).standard_normal(dim)
    return vec / np.linalg.norm(vec)


class MeanColorProvider:
    """Embeds a patch as its normalized mean RGB; text via a stable hash.

    The image embedding occupies the first three dimensions, so two
    patches are similar exactly when their average colors are. Useful as a
    deterministic stand-in whenever real encoder output is unavailable.
    """

    def __init__(self, dim: int = 8):
        if dim < 3:
            raise ValueError("mean-color embeddings need dim >= 3")
        self.dim = dim

    def embed(self, patches) -> np.ndarray:
        out = np.zeros((len(patches), self.dim))
        for i, patch in enumerate(patches):
            out[i, :3] = np.asarray(patch, dtype=np.float64).reshape(-1, 3).mean(axis=0)
        return _unit(out)

    def embed_text(self, names) -> np.ndarray:
        return _unit(np.stack([_hash_direction(n, self.dim) for n in names]))


class AnalyticPartProvider:
    """Maps patches to a one-hot code of the nearest palette color.

    Built from a (material name -> RGB) palette; `embed_text` of a palette
    name returns the matching one-hot, so grounding becomes exact on
    synthetic scenes where parts are painted in palette colors.
    """

    def __init__(self, palette: dict[str, tuple[int, int, int]], dim: int | None = None):
        if not palette:
            raise ValueError("palette must not be empty")
        self.names = list(palette.keys())
        self.colors = np.array([palette[n] for n in self.names], dtype=np.float64)
        self.dim = dim or max(len(self.names), 3)
        if self.dim < len(self.names):
            raise ValueError(f"dim {self.dim} cannot hold {len(self.names)} palette entries")

    def _one_hot(self, index: int) -> np.ndarray:
        vec = np.zeros(self.dim, dtype=np.float32)
        vec[index] = 1.0
        return vec

    def embed(self, patches) -> np.ndarray:
        out = np.zeros((len(patches), self.dim), dtype=np.float32)
        for i, patch in enumerate(patches):
            mean = np.asarray(patch, dtype=np.float64).reshape(-1, 3).mean(axis=0)
            nearest = int(np.argmin(((self.colors - mean) ** 2).sum(axis=1)))
            out[i] = self._one_hot(nearest)
        return out

    def embed_text(self, names) -> np.ndarray:
        out = np.zeros((len(names), self.dim), dtype=np.float32)
        for i, name in enumerate(names):
            if name in self.names:
                out[i] = self._one_hot(self.names.index(name))
        return out


class FileBackedProvider:
    """Replays embeddings precomputed by an external encoder.

    The store is an ordered float32 blob plus a JSON index mapping
    (point, view, scale) request tuples to blob rows; text embeddings for
    the material names ride along in the index. Providers of this kind are
    keyed by request, not by pixels, so they implement `embed_requests`.
    """

    def __init__(self, rows: np.ndarray, index: dict[tuple[int, int, int], int], text: dict[str, np.ndarray]):
        self.rows = np.asarray(rows, dtype=np.float32)
        self.index = index
        self.text = text

    @classmethod
    def load(cls, prefix) -> "FileBackedProvider":
        prefix = Path(prefix)
        blob = prefix.with_suffix(".f32")
        index_path = prefix.with_suffix(".index.json")
        rows = tensorio.read_tensor(blob)
        if rows.ndim != 2:
            raise BundleStructureError(f"embedding blob must be rank 2, got {rows.ndim}")
        try:
            doc = json.loads(index_path.read_text())
        except OSError as exc:
            raise BundleLoadError(f"missing embedding index: {index_path}") from exc
        index = {(int(p), int(v), int(s)): int(row) for p, v, s, row in doc["requests"]}
        text = {name: np.array(vec, dtype=np.float32) for name, vec in doc.get("text", {}).items()}
        return cls(rows=rows, index=index, text=text)

    def embed_requests(self, requests) -> np.ndarray:
        picked = np.empty(len(requests), dtype=np.int64)
        for i, req in enumerate(requests):
            key = (req.point_index, req.view_index, req.scale)
            if key not in self.index:
                raise KeyError(f"no precomputed embedding for request {key}")
            picked[i] = self.index[key]
        return self.rows[picked]

    def embed_text(self, names) -> np.ndarray:
        missing = [n for n in names if n not in self.text]
        if missing:
            raise KeyError(f"no precomputed text embeddings for {missing}")
        return np.stack([self.text[n] for n in names])


def save_embeddings(prefix, requests, embeddings, text: dict[str, np.ndarray]) -> None:
    """Write a FileBackedProvider store (blob + index) for later replay."""
    prefix = Path(prefix)
    emb = np.asarray(embeddings, dtype=np.float32)
    tensorio.write_tensor(prefix.with_suffix(".f32"), emb)
    doc = {
        "dim": int(emb.shape[1]),
        "requests": [
            [req.point_index, req.view_index, req.scale, row] for row, req in enumerate(requests)
        ],
        "text": {name: [float(x) for x in vec] for name, vec in text.items()},
    }
    prefix.with_suffix(".index.json").write_text(json.dumps(doc) + "\n")
