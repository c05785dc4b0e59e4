"""Instance augmentation by plane isometries and best-of-augmentation solving."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .core import Instance, Solution, evaluate_cost
from .decode import DecodeConfig, decode

log = logging.getLogger(__name__)

KINDS = ("none", "fold2", "fold4", "fold8_flip", "fold8_rotation")


@dataclass(frozen=True)
class Transform:
    """Affine map ``xy -> xy @ A.T + b``."""
    name: str
    A: np.ndarray
    b: np.ndarray

    def __call__(self, xy) -> np.ndarray:
        return np.asarray(xy, dtype=np.float64) @ self.A.T + self.b


@dataclass(frozen=True)
class AugmentSet:
    kind: str
    transforms: Tuple[Transform, ...]

    def __len__(self):
        return len(self.transforms)


def _t(name, A, b=(0.0, 0.0)):
    return Transform(name, np.array(A, dtype=np.float64), np.array(b, dtype=np.float64))


IDENTITY = _t("id", [[1, 0], [0, 1]])
SWAP = _t("swap", [[0, 1], [1, 0]])
FLIP_X = _t("1-x", [[-1, 0], [0, 1]], (1, 0))


def _compose(f: Transform, g: Transform) -> Transform:
    """f after g."""
    return Transform(f"{f.name}*{g.name}" if g.name != "id" else f.name, f.A @ g.A, f.A @ g.b + f.b)


def _dihedral() -> List[Transform]:
    # (x,y) (1-x,y) (x,1-y) (1-x,1-y) and the same four with x and y exchanged
    flips = [
        _t("id", [[1, 0], [0, 1]]),
        _t("1-x,y", [[-1, 0], [0, 1]], (1, 0)),
        _t("x,1-y", [[1, 0], [0, -1]], (0, 1)),
        _t("1-x,1-y", [[-1, 0], [0, -1]], (1, 1)),
    ]
    return flips + [_compose(f, SWAP) for f in flips]


def _rotation(k: int) -> Transform:
    a = k * math.pi / 4
    c, s = math.cos(a), math.sin(a)
    if k % 2 == 0:  # exact entries for multiples of 90 degrees
        c, s = round(c), round(s)
    A = np.array([[c, -s], [s, c]], dtype=np.float64)
    center = np.array([0.5, 0.5])
    return Transform(f"rot{45 * k}", A, center - A @ center)


def make_transforms(kind: str) -> AugmentSet:
    if kind == "none":
        ts = [IDENTITY]
    elif kind == "fold2":
        ts = [IDENTITY, SWAP]
    elif kind == "fold4":
        ts = [IDENTITY, SWAP, FLIP_X, _compose(SWAP, FLIP_X)]
    elif kind == "fold8_flip":
        ts = _dihedral()
    elif kind == "fold8_rotation":
        ts = [_rotation(k) for k in range(8)]
    else:
        raise ValueError(f"unknown augmentation {kind!r}")
    return AugmentSet(kind, tuple(ts))


def transform_instance(instance: Instance, t: Transform) -> Instance:
    return instance.with_coords(t(instance.coords), name=f"{instance.name}@{t.name}")


@dataclass
class AugmentResult:
    best: Optional[Solution]
    costs: List[Optional[float]]  # per transform, on the original instance
    errors: List[Optional[str]]

    @property
    def best_index(self) -> int:
        return min((c, i) for i, c in enumerate(self.costs) if c is not None)[1]


def augment_solve(policy, instance: Instance, augset: AugmentSet,
                  decode_config: DecodeConfig = DecodeConfig()) -> AugmentResult:
    """Decode every transformed copy and keep the cheapest tour.

    Customer indices are unchanged by a transform, so each tour is scored on
    the original instance. A failing transform is recorded and skipped.
    """
    best, costs, errors = None, [], []
    for t in augset.transforms:
        try:
            res = decode(policy, transform_instance(instance, t), decode_config)
        except Exception as exc:  # noqa: BLE001 - one bad transform must not sink the rest
            log.warning("augmentation %s failed: %s", t.name, exc)
            costs.append(None)
            errors.append(f"{type(exc).__name__}: {exc}")
            continue
        sol = Solution.from_tokens(instance, res.best.tokens)
        costs.append(evaluate_cost(instance, sol))
        errors.append(None)
        if best is None or sol.cost < best.cost:
            best = sol
    return AugmentResult(best, costs, errors)
