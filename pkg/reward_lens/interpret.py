"""
Saliency for gridworld reward models.

Two methods, both producing one map per frame of a transition:

- gradient saliency: ``|dR/ds|`` and ``|dR/ds'|``
- occlusion: blend a Gaussian-blurred copy of one frame into it around each
  pixel and record how much the predicted reward moves

Maps can be written as plain PGM images or JSON.
"""

import json
import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import numpy.typing as npt

from reward_lens.errors import FormatError, ShapeError, UsageError
from reward_lens.gridworld import CELLS, GRID_SIZE, Transition, encode_transition
from reward_lens.reward_learning import GRID_INPUT_DIM
from reward_lens.tensor_core import RewardNet, Tensor, forward_batch, input_gradient
from reward_lens.types import (
    HeatmapPayload,
    OcclusionDifference,
    OcclusionOverrides,
    SaliencyMethod,
    SaliencyPayload,
)

logger = logging.getLogger(__name__)

# Scaled down for 11x11 grids; 3.0 is the usual choice on 84x84 frames.
DEFAULT_SIGMA_BLUR = 1.5
DEFAULT_SIGMA_MASK = 1.5
DEFAULT_STRIDE = 1
# The default mask leaks over neighbouring rows; row-localized audits use a tighter one.
STRIP_AUDIT_SIGMA_MASK = 0.5

HEATMAP_FORMATS = ("pgm", "json")
PGM_MAXVAL = 255


@dataclass(frozen=True)
class OcclusionConfig:
    """
    Occlusion settings.

    ``difference`` selects ``|dR|`` (default) or ``dR**2`` as the map value.
    """

    sigma_blur: float = DEFAULT_SIGMA_BLUR
    sigma_mask: float = DEFAULT_SIGMA_MASK
    stride: int = DEFAULT_STRIDE
    difference: OcclusionDifference = "absolute"

    def __post_init__(self) -> None:
        for name, sigma in (("sigma_blur", self.sigma_blur), ("sigma_mask", self.sigma_mask)):
            if not (math.isfinite(sigma) and sigma > 0):
                raise UsageError(f"{name} must be a positive finite number, got {sigma}")
        if self.stride < 1:
            raise UsageError(f"stride must be at least 1, got {self.stride}")
        if self.difference not in ("absolute", "squared"):
            raise UsageError(f"Unknown occlusion difference '{self.difference}'")

    @property
    def radius(self) -> int:
        """Blur kernel truncation radius."""
        return math.ceil(3 * self.sigma_blur)

    def with_overrides(self, overrides: OcclusionOverrides) -> "OcclusionConfig":
        return OcclusionConfig(
            sigma_blur=overrides.get("sigma_blur", self.sigma_blur),
            sigma_mask=overrides.get("sigma_mask", self.sigma_mask),
            stride=overrides.get("stride", self.stride),
            difference=overrides.get("difference", self.difference),
        )


def mass_ratio(map_s: Tensor, map_sprime: Tensor) -> float:
    """Share of total saliency on s'; 0.5 when both maps are empty."""
    mass_s = float(np.abs(map_s).sum())
    mass_sp = float(np.abs(map_sprime).sum())
    total = mass_s + mass_sp
    return 0.5 if total == 0.0 else mass_sp / total


@dataclass(frozen=True, eq=False)
class SaliencyPair:
    """Saliency maps over s and s' for one transition."""

    map_s: Tensor
    map_sprime: Tensor
    method: SaliencyMethod

    @property
    def mass_ratio(self) -> float:
        return mass_ratio(self.map_s, self.map_sprime)

    def to_dict(self, checkpoint: Optional[str] = None) -> SaliencyPayload:
        payload: SaliencyPayload = {
            "method": self.method,
            "map_s": self.map_s.tolist(),
            "map_sprime": self.map_sprime.tolist(),
            "mass_ratio": self.mass_ratio,
        }
        if checkpoint is not None:
            payload["checkpoint"] = checkpoint
        return payload


def _check_grid_net(net: RewardNet) -> None:
    if net.input_dim != GRID_INPUT_DIM:
        raise ShapeError("reward model input dim", GRID_INPUT_DIM, net.input_dim)


# ===========================================
# GRADIENT SALIENCY
# ===========================================


def gradient_saliency(net: RewardNet, t: Transition, signed: bool = False) -> SaliencyPair:
    """
    Gradient magnitude of ``R(s, s')`` with respect to each pixel of each frame.

    Args:
        net: Reward model with 242 inputs
        t: Transition to explain
        signed: Keep the sign of the gradient instead of its magnitude

    Returns:
        Maps over s and s'
    """
    _check_grid_net(net)
    grad = input_gradient(net, encode_transition(t.s, t.s_prime))
    if not signed:
        grad = np.abs(grad)
    return SaliencyPair(
        map_s=grad[:CELLS].reshape(GRID_SIZE, GRID_SIZE),
        map_sprime=grad[CELLS:].reshape(GRID_SIZE, GRID_SIZE),
        method="gradient",
    )


def mean_mass_ratio(net: RewardNet, transitions: Iterable[Transition]) -> float:
    """Average gradient mass ratio over ``transitions``."""
    ratios = [gradient_saliency(net, t).mass_ratio for t in transitions]
    if not ratios:
        raise UsageError("mean_mass_ratio needs at least one transition")
    return float(np.mean(ratios))


# ===========================================
# BLUR AND OCCLUSION
# ===========================================


@lru_cache(maxsize=32)
def _blur_matrix(n: int, sigma: float) -> Tensor:
    """Row-normalized truncated Gaussian as an (n, n) smoothing matrix."""
    radius = math.ceil(3 * sigma)
    offsets = np.arange(n)[None, :] - np.arange(n)[:, None]
    weights = np.exp(-(offsets**2) / (2.0 * sigma * sigma)) * (np.abs(offsets) <= radius)
    weights /= weights.sum(axis=1, keepdims=True)
    weights.setflags(write=False)
    return weights


def gaussian_blur(grid: npt.ArrayLike, sigma: float) -> Tensor:
    """
    Separable Gaussian blur truncated at ``ceil(3 sigma)``.

    Near the border the kernel is renormalized over the pixels that exist, so
    every output pixel is a convex combination of input pixels.

    Raises:
        UsageError: If ``sigma`` is not a positive finite number
    """
    if not (math.isfinite(sigma) and sigma > 0):
        raise UsageError(f"sigma must be a positive finite number, got {sigma}")
    arr = np.asarray(grid, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError("blur input", "2-d grid", arr.shape)
    rows = _blur_matrix(arr.shape[0], float(sigma))
    cols = _blur_matrix(arr.shape[1], float(sigma))
    return rows @ arr @ cols.T


def gaussian_mask(
    center: Tuple[int, int], sigma: float, shape: Tuple[int, int] = (GRID_SIZE, GRID_SIZE)
) -> Tensor:
    """Gaussian bump with peak 1 at ``center``."""
    rows = np.arange(shape[0])[:, None] - center[0]
    cols = np.arange(shape[1])[None, :] - center[1]
    return np.exp(-(rows**2 + cols**2) / (2.0 * sigma * sigma))


def _centers(stride: int) -> List[Tuple[int, int]]:
    return [(i, j) for i in range(0, GRID_SIZE, stride) for j in range(0, GRID_SIZE, stride)]


def occlusion_map(
    net: RewardNet, t: Transition, cfg: OcclusionConfig = OcclusionConfig()
) -> SaliencyPair:
    """
    Occlusion saliency for both frames.

    For each center ``(i, j)`` on the stride grid, one frame at a time is
    replaced by ``x * (1 - M) + blur(x) * M`` with ``M`` a unit-peak Gaussian
    mask of width ``sigma_mask`` at ``(i, j)``; the map value is the change in
    predicted reward. Entries off the stride grid stay 0.

    Args:
        net: Reward model with 242 inputs
        t: Transition to explain
        cfg: Blur, mask, stride and difference settings

    Returns:
        Maps over s and s'
    """
    _check_grid_net(net)
    s, s_prime = t.s, t.s_prime
    centers = _centers(cfg.stride)
    masks = np.stack([gaussian_mask(c, cfg.sigma_mask) for c in centers])

    def perturbed(frame: Tensor) -> Tensor:
        blurred = gaussian_blur(frame, cfg.sigma_blur)
        return frame[None] * (1.0 - masks) + blurred[None] * masks

    base = encode_transition(s, s_prime)
    k = len(centers)
    batch = np.empty((1 + 2 * k, GRID_INPUT_DIM))
    batch[0] = base
    batch[1 : 1 + k, :CELLS] = perturbed(s).reshape(k, CELLS)
    batch[1 : 1 + k, CELLS:] = base[CELLS:]
    batch[1 + k :, :CELLS] = base[:CELLS]
    batch[1 + k :, CELLS:] = perturbed(s_prime).reshape(k, CELLS)

    rewards = forward_batch(net, batch)
    delta = rewards[1:] - rewards[0]
    values = delta * delta if cfg.difference == "squared" else np.abs(delta)

    map_s = np.zeros((GRID_SIZE, GRID_SIZE))
    map_sprime = np.zeros((GRID_SIZE, GRID_SIZE))
    for index, (i, j) in enumerate(centers):
        map_s[i, j] = values[index]
        map_sprime[i, j] = values[k + index]
    return SaliencyPair(map_s=map_s, map_sprime=map_sprime, method="occlusion")


def row_mass_share(saliency_map: npt.ArrayLike, rows: Sequence[int]) -> float:
    """Fraction of a map's total mass that lies in ``rows`` (0.0 for an empty map)."""
    arr = np.abs(np.asarray(saliency_map, dtype=np.float64))
    total = float(arr.sum())
    if total == 0.0:
        return 0.0
    return float(arr[list(rows)].sum()) / total


# ===========================================
# OUTPUT FILES
# ===========================================


def _pgm_body(arr: Tensor) -> str:
    peak = float(arr.max()) if arr.size else 0.0
    if peak > 0.0:
        levels = np.rint(arr / peak * PGM_MAXVAL).astype(int)
    else:
        levels = np.zeros(arr.shape, dtype=int)
    lines = ["P2", f"{arr.shape[1]} {arr.shape[0]}", str(PGM_MAXVAL)]
    lines.extend(" ".join(str(v) for v in row) for row in levels)
    return "\n".join(lines) + "\n"


def render_heatmap(saliency_map: npt.ArrayLike, path: Union[str, Path], fmt: str = "pgm") -> None:
    """
    Write a nonnegative map as a plain (P2) PGM scaled to its maximum, or as JSON.

    Raises:
        UsageError: If the map has negative entries or the format is unknown
        FormatError: If the file cannot be written
    """
    if fmt not in HEATMAP_FORMATS:
        raise UsageError(
            f"Unknown heatmap format '{fmt}'", details={"known": list(HEATMAP_FORMATS)}
        )
    arr = np.asarray(saliency_map, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError("heatmap", "2-d map", arr.shape)
    if (arr < 0).any():
        raise UsageError("heatmap values must be nonnegative")
    if fmt == "pgm":
        body = _pgm_body(arr)
    else:
        payload: HeatmapPayload = {"shape": list(arr.shape), "data": arr.tolist()}
        body = json.dumps(payload)
    try:
        Path(path).write_text(body, encoding="utf-8")
    except OSError as e:
        raise FormatError(f"cannot write heatmap {path}: {e.strerror}", field="path") from e


def load_heatmap(path: Union[str, Path]) -> Tensor:
    """Read a JSON heatmap written by ``render_heatmap``."""
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        return np.asarray(payload["data"], dtype=np.float64).reshape(payload["shape"])
    except OSError as e:
        raise FormatError(f"cannot read heatmap {path}: {e.strerror}", field="path") from e
    except (ValueError, KeyError, TypeError) as e:
        raise FormatError(f"heatmap {path} is malformed: {e}") from e


def write_saliency(
    pair: SaliencyPair, prefix: Union[str, Path], checkpoint: Optional[str] = None
) -> List[Path]:
    """
    Write ``<prefix>_s.pgm``, ``<prefix>_sprime.pgm`` and ``<prefix>.json``.

    The JSON document is ``pair.to_dict(checkpoint)``, the same body the
    saliency endpoints return.

    Signed gradient maps are written with their magnitude in the PGM images.

    Returns:
        The written paths
    """
    prefix = Path(prefix)
    paths = [
        prefix.with_name(prefix.name + "_s.pgm"),
        prefix.with_name(prefix.name + "_sprime.pgm"),
        prefix.with_name(prefix.name + ".json"),
    ]
    render_heatmap(np.abs(pair.map_s), paths[0], "pgm")
    render_heatmap(np.abs(pair.map_sprime), paths[1], "pgm")
    try:
        paths[2].write_text(json.dumps(pair.to_dict(checkpoint)), encoding="utf-8")
    except OSError as e:
        raise FormatError(f"cannot write saliency {paths[2]}: {e.strerror}", field="path") from e
    return paths
