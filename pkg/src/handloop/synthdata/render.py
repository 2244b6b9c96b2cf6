"""Orthographic z-buffer rendering of capsules and ellipsoids into depth frames."""
import numpy as np

from .skeleton import CubeParams, forward_kinematics


def pixel_grid(cube, resolution):
    """World x, y (mm) of every pixel centre; row 0 is the top (+y) edge."""
    cx, cy, _ = cube.center
    h = cube.half_extent
    step = 2.0 * h / resolution
    centers = (np.arange(resolution) + 0.5) * step
    xs = cx - h + centers
    ys = cy + h - centers
    return np.meshgrid(xs, ys)


def _sphere_front(px, py, c, r):
    d2 = (px - c[0]) ** 2 + (py - c[1]) ** 2
    inside = d2 <= r * r
    return np.where(inside, c[2] - np.sqrt(np.where(inside, r * r - d2, 0.0)), np.inf)


def _cylinder_front(px, py, a, b, r):
    d = b - a
    length2 = float(d @ d)
    if length2 < 1e-12:
        return np.full(px.shape, np.inf)
    dh = d / np.sqrt(length2)
    w0x, w0y, w0z = px - a[0], py - a[1], -a[2]
    proj = w0x * dh[0] + w0y * dh[1] + w0z * dh[2]
    ux, uy, uz = w0x - proj * dh[0], w0y - proj * dh[1], w0z - proj * dh[2]
    v = np.array([0.0, 0.0, 1.0]) - dh[2] * dh
    qa = float(v @ v)
    if qa < 1e-12:
        # axis parallel to the viewing ray: only the caps are visible
        return np.full(px.shape, np.inf)
    qb = 2.0 * (ux * v[0] + uy * v[1] + uz * v[2])
    qc = ux * ux + uy * uy + uz * uz - r * r
    disc = qb * qb - 4.0 * qa * qc
    hit = disc >= 0
    t = (-qb - np.sqrt(np.where(hit, disc, 0.0))) / (2.0 * qa)
    s = (w0x * d[0] + w0y * d[1] + (t - a[2]) * d[2]) / length2
    ok = hit & (s >= 0.0) & (s <= 1.0)
    return np.where(ok, t, np.inf)


def _capsule_front(px, py, a, b, r):
    if r <= 0:
        return np.full(px.shape, np.inf)
    z = np.minimum(_sphere_front(px, py, a, r), _sphere_front(px, py, b, r))
    return np.minimum(z, _cylinder_front(px, py, a, b, r))


def _ellipsoid_front(px, py, c, axes, rot):
    if np.any(np.asarray(axes) <= 0):
        return np.full(px.shape, np.inf)
    m = rot @ np.diag(1.0 / np.asarray(axes) ** 2) @ rot.T
    qx, qy, qz = px - c[0], py - c[1], -c[2]
    qa = m[2, 2]
    qb = 2.0 * (qx * m[0, 2] + qy * m[1, 2] + qz * m[2, 2])
    qc = (m[0, 0] * qx * qx + m[1, 1] * qy * qy + m[2, 2] * qz * qz
          + 2.0 * (m[0, 1] * qx * qy + m[0, 2] * qx * qz + m[1, 2] * qy * qz) - 1.0)
    disc = qb * qb - 4.0 * qa * qc
    hit = disc >= 0
    t = (-qb - np.sqrt(np.where(hit, disc, 0.0))) / (2.0 * qa)
    return np.where(hit, t, np.inf)


def render_primitives(prims, cube, resolution):
    """Nearest-surface depth (mm) per pixel; NaN where nothing is hit."""
    px, py = pixel_grid(cube, resolution)
    z = np.full(px.shape, np.inf)
    for a, b, r in prims.get("capsules", ()):
        z = np.minimum(z, _capsule_front(px, py, np.asarray(a), np.asarray(b), r))
    for c, axes, rot in prims.get("ellipsoids", ()):
        z = np.minimum(z, _ellipsoid_front(px, py, np.asarray(c), axes, rot))
    return np.where(np.isfinite(z), z, np.nan)


def normalize_cube(depth_mm, cube):
    """Map depths in ``[cz - h, cz + h]`` linearly to ``[-1, 1]``.

    Values outside are clipped to the front/rear face; undefined (NaN) pixels
    go to the rear face, +1.
    """
    depth = np.asarray(depth_mm, dtype=np.float64)
    norm = (depth - cube.center[2]) / cube.half_extent
    norm = np.where(np.isnan(norm), 1.0, norm)
    return np.clip(norm, -1.0, 1.0)


def render_depth(angles, skeleton, cube=None, resolution=64):
    """Normalized ``R x R`` depth frame of the hand for an angle vector."""
    cube = cube or CubeParams()
    _, prims = forward_kinematics(angles, skeleton, cube)
    return normalize_cube(render_primitives(prims, cube, resolution), cube)
