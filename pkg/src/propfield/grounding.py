"""Material dictionaries and similarity-weighted property regression.

A dictionary lists candidate materials with physical property values (or
[min, max] ranges) in SI units and an estimated shell thickness. Point
features are grounded against the material-name text embeddings by cosine
similarity, then property values follow from a temperature-softmax
weighted mean over the candidates.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BundleLoadError, BundleValidationError, MaterialError

# Canonical property names and SI units; the list is extensible, unknown
# names are carried through untouched.
PROPERTY_UNITS = {
    "density": "kg/m^3",
    "elastic_modulus": "GPa",
    "hardness_shore": "Shore",
    "thermal_conductivity": "W/(mK)",
    "friction": "",
}


@dataclass
class MaterialEntry:
    """One candidate material: name, property values/ranges, shell thickness."""

    name: str
    properties: dict[str, tuple[float, float]]
    thickness_m: float


@dataclass
class MaterialDictionary:
    entries: list[MaterialEntry]
    source: str = "file"
    _text_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if not self.entries:
            raise BundleValidationError("material dictionary has no entries")
        for e in self.entries:
            if not np.isfinite(e.thickness_m) or e.thickness_m <= 0:
                raise BundleValidationError(
                    f"material {e.name!r} has non-positive thickness {e.thickness_m}"
                )
            for prop, (lo, hi) in e.properties.items():
                if not (np.isfinite(lo) and np.isfinite(hi)):
                    raise BundleValidationError(f"material {e.name!r}: {prop} is not finite")
                if lo > hi:
                    raise BundleValidationError(
                        f"material {e.name!r}: {prop} range [{lo}, {hi}] has min > max"
                    )

    def __len__(self):
        return len(self.entries)

    @property
    def names(self) -> list[str]:
        return [e.name for e in self.entries]

    def property_values(self, prop: str) -> np.ndarray:
        """(K, 2) low/high array for `prop`; errors if any entry lacks it."""
        missing = [e.name for e in self.entries if prop not in e.properties]
        if missing:
            raise MaterialError(f"property {prop!r} missing for materials: {missing}")
        return np.array([e.properties[prop] for e in self.entries], dtype=np.float64)

    def thicknesses(self) -> np.ndarray:
        return np.array([e.thickness_m for e in self.entries], dtype=np.float64)

    @property
    def property_names(self) -> list[str]:
        names: list[str] = []
        for e in self.entries:
            for p in e.properties:
                if p not in names:
                    names.append(p)
        return names

    def text_embeddings(self, provider) -> np.ndarray:
        """Unit-norm (K, E) embeddings of the material names, cached per provider."""
        key = id(provider)
        if key not in self._text_cache:
            emb = np.asarray(provider.embed_text(self.names), dtype=np.float64)
            norms = np.linalg.norm(emb, axis=1, keepdims=True)
            self._text_cache[key] = emb / np.maximum(norms, 1e-30)
        return self._text_cache[key]


def _coerce_range(name, prop, value):
    if isinstance(value, (int, float)):
        return float(value), float(value)
    if isinstance(value, (list, tuple)) and len(value) == 2:
        try:
            return float(value[0]), float(value[1])
        except (TypeError, ValueError):
            pass
    raise BundleValidationError(
        f"material {name!r}: {prop} must be a number or [min, max], got {value!r}"
    )


def parse_materials(doc, source=None) -> MaterialDictionary:
    """Build a validated dictionary from decoded materials JSON."""
    if not isinstance(doc, dict) or "entries" not in doc:
        raise BundleValidationError("materials document must be an object with 'entries'")
    entries = []
    for item in doc["entries"]:
        name = item.get("name")
        if not name or not isinstance(name, str):
            raise BundleValidationError(f"material entry without a name: {item!r}")
        thickness = item.get("thickness_m")
        if not isinstance(thickness, (int, float)):
            raise BundleValidationError(f"material {name!r}: thickness_m must be a number")
        props = {
            prop: _coerce_range(name, prop, val)
            for prop, val in (item.get("properties") or {}).items()
        }
        entries.append(MaterialEntry(name=name, properties=props, thickness_m=float(thickness)))
    return MaterialDictionary(entries=entries, source=source or doc.get("source", "file"))


def load_materials(path) -> MaterialDictionary:
    """Load and validate a materials.json file."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise BundleLoadError(f"missing materials file: {path}") from exc
    except json.JSONDecodeError as exc:
        raise BundleValidationError(f"materials file is not valid JSON: {path}: {exc}") from exc
    return parse_materials(doc)


def save_materials(path, dictionary: MaterialDictionary) -> None:
    doc = {
        "source": dictionary.source,
        "entries": [
            {
                "name": e.name,
                "thickness_m": e.thickness_m,
                "properties": {
                    p: (lo if lo == hi else [lo, hi]) for p, (lo, hi) in e.properties.items()
                },
            }
            for e in dictionary.entries
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def material_similarity(features, text_embeddings) -> np.ndarray:
    """Cosine similarity between fused point features and material names.

    Both inputs are expected unit-norm; the result is their plain dot
    product, shape (S, K), each value in [-1, 1].
    """
    f = np.atleast_2d(np.asarray(features, dtype=np.float64))
    return f @ np.asarray(text_embeddings, dtype=np.float64).T


def softmax_weights(similarities, temperature: float) -> np.ndarray:
    """Temperature softmax over the material axis, numerically stabilized."""
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    sims = np.atleast_2d(np.asarray(similarities, dtype=np.float64))
    if np.isnan(sims).any():
        raise MaterialError("NaN similarity passed to kernel regression")
    scaled = sims / temperature
    scaled -= scaled.max(axis=1, keepdims=True)
    w = np.exp(scaled)
    return w / w.sum(axis=1, keepdims=True)


def kernel_regress(similarities, values, temperature: float) -> np.ndarray:
    """Similarity-weighted property regression over material candidates.

    Args:
        similarities: (S, K) raw similarities (or already-normalized weights
            fed through :func:`regress_with_weights` instead).
        values: (K,) scalars or (K, 2) low/high ranges; ranges regress
            endpoint-wise.
        temperature: Softmax temperature (smaller -> closer to argmax).

    Returns:
        (S,) or (S, 2) regressed values — always a convex combination of
        the inputs, so the result stays inside [min(values), max(values)].
    """
    return regress_with_weights(softmax_weights(similarities, temperature), values)


def regress_with_weights(weights, values) -> np.ndarray:
    """Apply precomputed convex weights (S, K) to per-material values."""
    w = np.atleast_2d(np.asarray(weights, dtype=np.float64))
    y = np.asarray(values, dtype=np.float64)
    return w @ y
