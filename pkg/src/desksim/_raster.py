"""numba kernels behind the splat and triangle rasterizers.

The splat compositor runs one thread per 16x16 tile; tiles own disjoint
pixel rectangles and gaussians arrive pre-sorted, so the output is
independent of tile scheduling.  The triangle pass is serial over
triangles (scene meshes are small) which makes z-fighting resolution
deterministic: strict less-than keeps the earlier triangle.
"""
from __future__ import annotations

import numpy as np
from numba import njit, prange

TILE = 16
ALPHA_SKIP = 1.0 / 255.0
T_STOP = 1e-4
ALPHA_EMPTY = 1e-4  # below this, expected depth is undefined -> +inf


@njit(cache=True, parallel=True)
def composite_tiles(width, height, means2d, conics, depths, opacities, colors,
                    tile_offsets, tile_items, mesh_depth, mesh_color, has_mesh,
                    background, out_color, out_alpha, out_depth):
    """Front-to-back splat compositing, optionally against a mesh z-buffer.

    means2d (m,2), conics (m,3) as (a,b,c) of the inverse 2D covariance,
    depths/opacities (m,), colors (m,3): gaussians in canonical composite
    order.  tile_items[tile_offsets[t]:tile_offsets[t+1]] lists the gaussians
    overlapping tile t, preserving that order.
    """
    n_tx = (width + TILE - 1) // TILE
    n_ty = (height + TILE - 1) // TILE
    for t in prange(n_tx * n_ty):
        ty = t // n_tx
        tx = t % n_tx
        x0 = tx * TILE
        y0 = ty * TILE
        x1 = min(x0 + TILE, width)
        y1 = min(y0 + TILE, height)
        lo = tile_offsets[t]
        hi = tile_offsets[t + 1]
        for py in range(y0, y1):
            for px in range(x0, x1):
                t_rem = 1.0
                acc_r = 0.0
                acc_g = 0.0
                acc_b = 0.0
                acc_w = 0.0
                acc_d = 0.0
                md = mesh_depth[py, px] if has_mesh else np.inf
                for k in range(lo, hi):
                    g = tile_items[k]
                    z = depths[g]
                    if z > md:
                        continue  # behind the mesh surface at this pixel
                    dx = px - means2d[g, 0]
                    dy = py - means2d[g, 1]
                    power = -0.5 * (conics[g, 0] * dx * dx
                                    + conics[g, 2] * dy * dy) - conics[g, 1] * dx * dy
                    alpha = opacities[g] * np.exp(power)
                    if alpha < ALPHA_SKIP:
                        continue
                    t_next = t_rem * (1.0 - alpha)
                    if t_next < T_STOP:
                        break
                    w = alpha * t_rem
                    acc_r += w * colors[g, 0]
                    acc_g += w * colors[g, 1]
                    acc_b += w * colors[g, 2]
                    acc_d += w * z
                    acc_w += w
                    t_rem = t_next
                if has_mesh and md < np.inf:
                    out_color[py, px, 0] = acc_r + t_rem * mesh_color[py, px, 0]
                    out_color[py, px, 1] = acc_g + t_rem * mesh_color[py, px, 1]
                    out_color[py, px, 2] = acc_b + t_rem * mesh_color[py, px, 2]
                    out_alpha[py, px] = acc_w + t_rem
                else:
                    out_color[py, px, 0] = acc_r + t_rem * background[0]
                    out_color[py, px, 1] = acc_g + t_rem * background[1]
                    out_color[py, px, 2] = acc_b + t_rem * background[2]
                    out_alpha[py, px] = acc_w
                splat_depth = acc_d / acc_w if acc_w >= ALPHA_EMPTY else np.inf
                out_depth[py, px] = min(md, splat_depth)


@njit(cache=True)
def raster_triangles(width, height, pts, zs, cols, shades, near,
                     out_color, out_depth):
    """Serial z-buffered triangle fill with perspective-correct attributes.

    pts (n,3,2) screen positions, zs (n,3) camera depths (all >= near after
    clipping), cols (n,3,3) per-vertex colors, shades (n,) flat light factor.
    Pixel centers sit at integer coordinates; coverage is inclusive of edges.
    """
    for i in range(pts.shape[0]):
        x0 = pts[i, 0, 0]
        y0 = pts[i, 0, 1]
        x1 = pts[i, 1, 0]
        y1 = pts[i, 1, 1]
        x2 = pts[i, 2, 0]
        y2 = pts[i, 2, 1]
        area = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
        if area == 0.0:
            continue
        inv_area = 1.0 / area
        lox = max(0, int(np.ceil(min(x0, min(x1, x2)))))
        hix = min(width - 1, int(np.floor(max(x0, max(x1, x2)))))
        loy = max(0, int(np.ceil(min(y0, min(y1, y2)))))
        hiy = min(height - 1, int(np.floor(max(y0, max(y1, y2)))))
        iz0 = 1.0 / zs[i, 0]
        iz1 = 1.0 / zs[i, 1]
        iz2 = 1.0 / zs[i, 2]
        for py in range(loy, hiy + 1):
            for px in range(lox, hix + 1):
                w0 = ((x1 - px) * (y2 - py) - (x2 - px) * (y1 - py)) * inv_area
                w1 = ((x2 - px) * (y0 - py) - (x0 - px) * (y2 - py)) * inv_area
                w2 = 1.0 - w0 - w1
                if w0 < 0.0 or w1 < 0.0 or w2 < 0.0:
                    continue
                denom = w0 * iz0 + w1 * iz1 + w2 * iz2
                z = 1.0 / denom
                if z < near:
                    continue
                if z < out_depth[py, px]:
                    out_depth[py, px] = z
                    s = shades[i]
                    for ch in range(3):
                        c = (w0 * cols[i, 0, ch] * iz0 + w1 * cols[i, 1, ch] * iz1
                             + w2 * cols[i, 2, ch] * iz2) / denom
                        out_color[py, px, ch] = c * s
