import json
from pathlib import Path

import numpy as np
import plyfile

from hspn.common.constants import HEATMAP_SCALE
from hspn.geometry.distances import pc_to_pc_error

LOW_COLOR = np.array([0, 0, 255])
HIGH_COLOR = np.array([255, 0, 0])
PERCENTILE = 95


def error_colors(errors, top=None):
    """Linear blue -> red ramp over [0, top]; `top` defaults to the 95th percentile of the errors."""
    errors = np.asarray(errors, dtype=np.float64)
    top = np.percentile(errors, PERCENTILE) if top is None else top
    if top <= 0:
        t = np.where(errors > 0, 1.0, 0.0)
    else:
        t = np.clip(errors / top, 0.0, 1.0)
    colors = LOW_COLOR[None, :] * (1 - t[:, None]) + HIGH_COLOR[None, :] * t[:, None]
    return np.rint(colors).astype(np.uint8), float(top)


def sidecar_path(path):
    return Path(path).with_suffix('.json')


def export_heatmap(pred, gt, path):
    """Writes `pred` as an ASCII PLY coloured by PC-to-PC error against `gt`.

    A JSON sidecar next to the file records the ramp bounds, raw and in units of 1e-4.
    """
    pred = np.asarray(pred, dtype=np.float32)
    errors = pc_to_pc_error(pred, np.asarray(gt, dtype=np.float32)).double().numpy()
    colors, top = error_colors(errors)

    vertices = np.empty(len(pred), dtype=[('x', 'f4'), ('y', 'f4'), ('z', 'f4'),
                                          ('red', 'u1'), ('green', 'u1'), ('blue', 'u1')])
    vertices['x'] = pred[:, 0]
    vertices['y'] = pred[:, 1]
    vertices['z'] = pred[:, 2]
    vertices['red'] = colors[:, 0]
    vertices['green'] = colors[:, 1]
    vertices['blue'] = colors[:, 2]
    plyfile.PlyData([plyfile.PlyElement.describe(vertices, 'vertex')], text=True).write(str(path))

    sidecar = {'metric': 'pc_to_pc_error',
               'scale': HEATMAP_SCALE,
               'ramp_min': 0.0,
               'ramp_max': top,
               'ramp_max_scaled': top / HEATMAP_SCALE,
               'max_error': float(errors.max()),
               'mean_error': float(errors.mean()),
               'percentile': PERCENTILE}
    with open(sidecar_path(path), 'w') as f:
        json.dump(sidecar, f, indent=2, sort_keys=True)
    return errors


def read_heatmap(path):
    """Parses a heatmap PLY back into (points [N, 3] float32, colors [N, 3] uint8) and its sidecar."""
    vertex = plyfile.PlyData.read(str(path))['vertex']
    points = np.stack([vertex['x'], vertex['y'], vertex['z']], axis=1).astype(np.float32)
    colors = np.stack([vertex['red'], vertex['green'], vertex['blue']], axis=1).astype(np.uint8)
    with open(sidecar_path(path)) as f:
        sidecar = json.load(f)
    return points, colors, sidecar
