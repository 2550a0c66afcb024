import zlib
from dataclasses import asdict, dataclass, field
from typing import Optional, Tuple

import numpy as np
from scipy.ndimage import gaussian_filter

from hspn.common.constants import IMAGE_HEIGHT, IMAGE_WIDTH, MAX_OCCLUSION, MAX_SLICES, MIN_OCCLUSION, \
    NUM_POINTS, OCCLUSION_MODES, SLAB_THICKNESS_RATIO, TRAIN_FRACTION

BRAIN_AXES = (0.8, 1.0, 0.7)
NUM_HARMONICS = 8
MAX_AMPLITUDE = 0.12


def real_harmonics(directions):
    """Real spherical harmonics of degree 2 and 3 (unnormalized) at unit directions [N, 3], shape [N, 8]."""
    x, y, z = directions[:, 0], directions[:, 1], directions[:, 2]
    return np.stack([x * y,
                     y * z,
                     x * z,
                     x ** 2 - y ** 2,
                     3 * z ** 2 - 1,
                     x * (x ** 2 - 3 * y ** 2),
                     z * (5 * z ** 2 - 3),
                     y * (5 * z ** 2 - 1)], axis=1)


def sample_bumpy_ellipsoid(rng, num_points=NUM_POINTS, axes=BRAIN_AXES, amplitudes=None):
    """Points on an ellipsoid whose radius is modulated by low-order harmonics, in model coordinates."""
    directions = rng.normal(size=(num_points, 3))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    radius = np.ones(num_points)
    if amplitudes is not None:
        radius = radius + real_harmonics(directions) @ np.asarray(amplitudes, dtype=np.float64)
    return directions * radius[:, None] * np.asarray(axes, dtype=np.float64)


def normalize_points(points):
    centered = points - points.mean(axis=0)
    scale = np.linalg.norm(centered, axis=1).max()
    return centered / scale if scale > 0 else centered


def make_shape(seed, num_points=NUM_POINTS):
    """A normalized random brain-like cloud; the same seed always yields the same cloud."""
    rng = np.random.default_rng(seed)
    axes = np.asarray(BRAIN_AXES) * rng.uniform(0.9, 1.1, size=3)
    amplitudes = rng.uniform(-MAX_AMPLITUDE, MAX_AMPLITUDE, size=NUM_HARMONICS)
    points = sample_bumpy_ellipsoid(rng, num_points, axes, amplitudes)
    return normalize_points(points).astype(np.float32)


@dataclass(frozen=True)
class OcclusionSpec:
    mode: str = 'half-space'
    fraction: float = 0.3
    seed: int = 0
    direction: Optional[Tuple[float, float, float]] = None

    def __post_init__(self):
        if self.mode not in OCCLUSION_MODES:
            raise ValueError('Unknown occlusion mode {}, expected one of {}'.format(self.mode, OCCLUSION_MODES))
        if not 0 <= self.fraction <= 0.5:
            raise ValueError('Occlusion fraction must lie in [0, 0.5], got {}'.format(self.fraction))

    def to_dict(self):
        values = asdict(self)
        values['direction'] = None if self.direction is None else list(self.direction)
        return values

    @classmethod
    def from_dict(cls, values):
        values = dict(values)
        if values.get('direction') is not None:
            values['direction'] = tuple(values['direction'])
        return cls(**values)

    @classmethod
    def random(cls, seed):
        rng = np.random.default_rng([seed, 1])
        return cls(mode=str(rng.choice(OCCLUSION_MODES)), fraction=float(rng.uniform(MIN_OCCLUSION, MAX_OCCLUSION)),
                   seed=seed)


def _unit(vector):
    vector = np.asarray(vector, dtype=np.float64)
    return vector / np.linalg.norm(vector)


def _plane_basis(normal):
    helper = np.array([1.0, 0.0, 0.0]) if abs(normal[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    u = _unit(np.cross(normal, helper))
    return u, np.cross(normal, u)


def make_occlusion(gt, occ: OcclusionSpec):
    """Removes round(fraction * N) points of `gt` and returns (partial, visible_mask)."""
    gt = np.asarray(gt)
    n = len(gt)
    removed = int(round(occ.fraction * n))
    mask = np.ones(n, dtype=bool)
    if removed == 0:
        return gt.copy(), mask

    rng = np.random.default_rng([occ.seed, 2])
    direction = _unit(occ.direction) if occ.direction is not None else _unit(rng.normal(size=3))
    points = gt.astype(np.float64)
    if occ.mode == 'half-space':
        score = points @ direction
    elif occ.mode == 'sphere-cut':
        anchor = points[rng.integers(n)]
        score = -np.linalg.norm(points - anchor, axis=1)
    else:
        anchor = points[rng.integers(n)]
        u, v = _plane_basis(direction)
        offset = points - anchor
        score = -np.maximum(np.abs(offset @ u), np.abs(offset @ v))

    mask[np.argsort(-score, kind='stable')[:removed]] = False
    return gt[mask], mask


def _slab(points, axis, offset, thickness_ratio):
    extent = points[:, axis].max() - points[:, axis].min()
    return np.abs(points[:, axis] - offset) <= thickness_ratio * extent / 2


def _rasterize(points, axis, shape):
    rows_axis, cols_axis = [a for a in range(3) if a != axis]
    height, width = shape
    rows = np.clip(((points[:, rows_axis] + 1) / 2 * height).astype(int), 0, height - 1)
    cols = np.clip(((points[:, cols_axis] + 1) / 2 * width).astype(int), 0, width - 1)
    counts = np.zeros(shape, dtype=np.float64)
    np.add.at(counts, (rows, cols), 1.0)
    return counts


def render_slice(gt, occ: Optional[OcclusionSpec] = None, plane=(2, 0.0), shape=(IMAGE_HEIGHT, IMAGE_WIDTH),
                 thickness_ratio=SLAB_THICKNESS_RATIO, sigma=1.0, visible_mask=None):
    """Thickness projection of the slab around `plane` = (axis, offset), normalized to [0, 1].

    Pixels where the occluded points dominate the slab are set to 0.
    """
    points = np.asarray(gt, dtype=np.float64)
    axis, offset = plane
    in_slab = _slab(points, axis, offset, thickness_ratio)
    if not in_slab.any():
        raise ValueError('Plane {} does not intersect the shape'.format(plane))

    if visible_mask is None:
        visible_mask = make_occlusion(points, occ)[1] if occ is not None else np.ones(len(points), dtype=bool)

    visible = gaussian_filter(_rasterize(points[in_slab & visible_mask], axis, shape), sigma)
    hidden = gaussian_filter(_rasterize(points[in_slab & ~visible_mask], axis, shape), sigma)
    image = visible + hidden
    image = image / image.max()
    image[hidden > visible] = 0.0
    return np.clip(image, 0.0, 1.0).astype(np.float32)


def render_slices(gt, visible_mask, num_slices=MAX_SLICES, axis=2, offset=0.0, shape=(IMAGE_HEIGHT, IMAGE_WIDTH),
                  thickness_ratio=SLAB_THICKNESS_RATIO):
    """Parallel slices centred on `offset`, one slab thickness apart, shape [num_slices, H, W]."""
    points = np.asarray(gt, dtype=np.float64)
    spacing = thickness_ratio * (points[:, axis].max() - points[:, axis].min())
    offsets = offset + (np.arange(num_slices) - (num_slices - 1) / 2) * spacing
    return np.stack([render_slice(points, plane=(axis, o), shape=shape, thickness_ratio=thickness_ratio,
                                  visible_mask=visible_mask) for o in offsets])


def centred_slices(images, k):
    """The k central slices of a stack."""
    if k < 1 or k > images.shape[-3] or k % 2 == 0:
        raise ValueError('Cannot take {} centred slices out of {}'.format(k, images.shape[-3]))
    start = (images.shape[-3] - k) // 2
    return images[..., start:start + k, :, :]


def split_of(seed):
    return 'train' if zlib.crc32(str(seed).encode()) % 100 < TRAIN_FRACTION * 100 else 'test'


@dataclass
class SyntheticSample:
    id: str
    seed: int
    image: np.ndarray
    gt: np.ndarray
    partial: np.ndarray
    visible_mask: np.ndarray
    occ: OcclusionSpec
    split: str = field(default='train')

    def slices(self, k=1):
        return centred_slices(self.image, k)


def sample_id(seed):
    return 'sample-{:06d}'.format(seed)


def make_sample(seed, num_slices=MAX_SLICES):
    gt = make_shape(seed)
    occ = OcclusionSpec.random(seed)
    partial, mask = make_occlusion(gt, occ)
    image = render_slices(gt, mask, num_slices=num_slices)
    return SyntheticSample(id=sample_id(seed), seed=seed, image=image, gt=gt, partial=partial, visible_mask=mask,
                           occ=occ, split=split_of(seed))
