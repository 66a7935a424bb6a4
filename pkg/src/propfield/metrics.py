"""Mass-accuracy metrics over (predicted, ground-truth) pairs.

Four complementary views of the same errors: ADE (mean absolute), ALDE
(mean absolute log), APE (mean absolute percentage), and MnRE (mean of
min(p/g, g/p), a symmetric ratio score in (0, 1] where 1 is perfect —
higher is better, matching how ablation tables rank it).
"""

from dataclasses import dataclass

import numpy as np


@dataclass
class MassEval:
    predicted: np.ndarray
    truth: np.ndarray
    ade: float
    alde: float
    ape: float
    mnre: float

    @property
    def count(self) -> int:
        return self.predicted.shape[0]

    def to_json_dict(self) -> dict:
        return {"count": self.count, "ADE": self.ade, "ALDE": self.alde, "APE": self.ape, "MnRE": self.mnre}


def evaluate(pairs) -> MassEval:
    """Compute all four metrics for positive (predicted, truth) pairs.

    Args:
        pairs: Iterable of (predicted_kg, truth_kg) or an (N, 2) array.

    Raises:
        ValueError: On empty input or any non-positive value (the log and
            ratio metrics are undefined there).
    """
    arr = np.asarray(list(pairs) if not isinstance(pairs, np.ndarray) else pairs, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("need at least one (predicted, truth) pair")
    arr = arr.reshape(-1, 2)
    p = arr[:, 0]
    g = arr[:, 1]
    if np.any(p <= 0) or np.any(g <= 0):
        raise ValueError("all masses must be positive for log/ratio metrics")

    ratio = p / g
    return MassEval(
        predicted=p,
        truth=g,
        ade=float(np.mean(np.abs(p - g))),
        alde=float(np.mean(np.abs(np.log(p) - np.log(g)))),
        ape=float(np.mean(np.abs(p - g) / g)),
        mnre=float(np.mean(np.minimum(ratio, 1.0 / ratio))),
    )
