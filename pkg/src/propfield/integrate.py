"""Object-level estimation: thickness-aware surface-voxel mass integration.

Each field point stands for a thin surface voxel b x b x theta. The voxel
side b is adapted so the total represented area matches the sampled
surface: b = sqrt((L * scale_factor)^2 / N) with L an effective
characteristic length whose square estimates the sampled surface area.
Summing material-weighted density * thickness over points, times b^2 and
a global correction factor, yields the mass.
"""

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .densify import PropertyField
from .grounding import MaterialDictionary

AREA_KNN = 8


@dataclass
class IntegrationConfig:
    lam: float = 0.6
    scale_factor: float = 1.0
    temperature: float = 0.1  # kept with the grounding stage's value for reporting

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")
        if self.scale_factor <= 0:
            raise ValueError(f"scale_factor must be positive, got {self.scale_factor}")
        if self.temperature <= 0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")


@dataclass
class ObjectEstimate:
    mass_kg: float
    mass_range: tuple[float, float]
    center_of_mass: np.ndarray
    per_material: dict[str, float]
    b_adap: float
    characteristic_length: float
    point_count: int
    lam: float
    scale_factor: float

    def to_json_dict(self) -> dict:
        return {
            "mass_kg": self.mass_kg,
            "mass_range_kg": list(self.mass_range),
            "center_of_mass_m": [float(x) for x in self.center_of_mass],
            "per_material_kg": self.per_material,
            "b_adap_m": self.b_adap,
            "characteristic_length_m": self.characteristic_length,
            "point_count": self.point_count,
            "lambda": self.lam,
            "scale_factor": self.scale_factor,
        }


def adaptive_voxel_side(length: float, scale_factor: float, n_points: int) -> float:
    """Side of the per-point surface voxel: sqrt((L * scale_factor)^2 / N)."""
    if length < 0:
        raise ValueError(f"characteristic length must be >= 0, got {length}")
    if n_points < 1:
        raise ValueError(f"point count must be >= 1, got {n_points}")
    return float(np.sqrt((length * scale_factor) ** 2 / n_points))


def characteristic_length(positions, k: int = AREA_KNN) -> float:
    """Effective length L with L^2 estimating the sampled surface area.

    Uses the k-th nearest-neighbor spacing: for points distributed
    uniformly over a surface of area A, pi * d_k^2 / k is an unbiased
    estimate of the area each point represents, so A is approximated by
    summing it. A bounding-box axis cannot play this role — it misstates
    the area of anything that is not a single flat face (a closed cube's
    area is six times its squared edge). Degenerate clouds (fewer than 4
    points) fall back to the longest bbox axis.
    """
    p = np.asarray(positions, dtype=np.float64)
    n = p.shape[0]
    if n == 0:
        return 0.0
    if n < 4:
        extent = p.max(axis=0) - p.min(axis=0)
        return float(extent.max())
    k_eff = min(k, n - 1)
    tree = cKDTree(p)
    dist, _ = tree.query(p, k=k_eff + 1)
    d_k = dist[:, k_eff]
    area = float(np.pi / k_eff * np.sum(d_k * d_k))
    return float(np.sqrt(area))


def integrate_mass(
    fld: PropertyField, dictionary: MaterialDictionary, config: IntegrationConfig
) -> ObjectEstimate:
    """Integrate the densified field into a mass estimate.

    Per point: the material-probability-weighted sum of density * thickness,
    times the adaptive voxel area, summed and scaled by lambda. Ranged
    densities produce a [low, high] mass range around the midpoint value.
    The center of mass weights each point by its mass contribution, with
    positions pushed half a thickness inward along the normal when normals
    are available.
    """
    n = len(fld)
    if n == 0:
        return ObjectEstimate(
            mass_kg=0.0,
            mass_range=(0.0, 0.0),
            center_of_mass=np.zeros(3),
            per_material={name: 0.0 for name in dictionary.names},
            b_adap=0.0,
            characteristic_length=0.0,
            point_count=0,
            lam=config.lam,
            scale_factor=config.scale_factor,
        )

    density = dictionary.property_values("density")
    theta = dictionary.thicknesses()
    weights = fld.probabilities

    length = characteristic_length(fld.positions)
    b = adaptive_voxel_side(length, config.scale_factor, n)
    cell_area = b * b

    mid_density = (density[:, 0] + density[:, 1]) / 2.0
    weight_totals = weights.sum(axis=0)

    per_material = {}
    mass_total = 0.0
    mass_lo = 0.0
    mass_hi = 0.0
    for idx, name in enumerate(dictionary.names):
        contrib = config.lam * cell_area * theta[idx] * weight_totals[idx]
        per_material[name] = contrib * mid_density[idx]
        mass_total += per_material[name]
        mass_lo += contrib * density[idx, 0]
        mass_hi += contrib * density[idx, 1]

    point_mass = config.lam * cell_area * (weights @ (mid_density * theta))
    total = point_mass.sum()
    if total > 0:
        centers = fld.positions.astype(np.float64)
        if fld.normals is not None:
            mean_theta = weights @ theta
            centers = centers - (mean_theta[:, None] / 2.0) * fld.normals
        com = (point_mass[:, None] * centers).sum(axis=0) / total
    else:
        com = fld.positions.astype(np.float64).mean(axis=0)

    return ObjectEstimate(
        mass_kg=float(mass_total),
        mass_range=(float(mass_lo), float(mass_hi)),
        center_of_mass=com,
        per_material=per_material,
        b_adap=b,
        characteristic_length=length,
        point_count=n,
        lam=config.lam,
        scale_factor=config.scale_factor,
    )
