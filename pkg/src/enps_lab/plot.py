"""SVG rendering of roads and trajectories.

Dependency-free: the road polygon is drawn in grey, the first
controller's trajectory in red, the second's in green, with start and
finish markers.  Coordinates are in meters; y is flipped so north is up.
"""

from __future__ import annotations

from .sim import RoadGeometry

ROAD_COLOR = "#b0b0b0"
SPINE_COLOR = "#808080"
M1_COLOR = "#d62728"  # red
M2_COLOR = "#2ca02c"  # green


def _bounds(points_lists, pad):
    xs = [p[0] for pts in points_lists for p in pts]
    ys = [p[1] for pts in points_lists for p in pts]
    return min(xs) - pad, min(ys) - pad, max(xs) + pad, max(ys) + pad


def _polyline(points, transform, stroke, width, dash=None, fill="none"):
    path = " ".join(f"{x:.2f},{y:.2f}" for x, y in (transform(p) for p in points))
    dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
    return (
        f'<polyline points="{path}" fill="{fill}" stroke="{stroke}" '
        f'stroke-width="{width:.2f}" stroke-linejoin="round"{dash_attr}/>'
    )


def render_svg(
    road: RoadGeometry,
    trajectories=(),
    colors=(M1_COLOR, M2_COLOR),
    size_px: int = 800,
) -> str:
    """Road plus any number of trajectories (poses or xy pairs)."""
    tracks = []
    for traj in trajectories:
        tracks.append(
            [(p.x, p.y) if hasattr(p, "x") else (p[0], p[1]) for p in traj]
        )

    pad = max(road.width, 0.05)
    x0, y0, x1, y1 = _bounds([road.left, road.right, road.spine] + tracks, pad)
    span = max(x1 - x0, y1 - y0)
    scale = size_px / span

    def tf(p):
        return ((p[0] - x0) * scale, (y1 - p[1]) * scale)

    w = (x1 - x0) * scale
    h = (y1 - y0) * scale
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0f}" height="{h:.0f}" '
        f'viewBox="0 0 {w:.2f} {h:.2f}">',
        '<rect width="100%" height="100%" fill="white"/>',
    ]
    polygon = list(road.left) + list(reversed(road.right))
    path = " ".join(f"{x:.2f},{y:.2f}" for x, y in (tf(p) for p in polygon))
    parts.append(f'<polygon points="{path}" fill="{ROAD_COLOR}" stroke="none"/>')
    parts.append(_polyline(road.spine, tf, SPINE_COLOR, 1.0, dash="6,6"))

    line_w = max(1.5, road.width * scale * 0.08)
    for track, color in zip(tracks, colors):
        if len(track) >= 2:
            parts.append(_polyline(track, tf, color, line_w))

    sx, sy = tf(road.spine[0])
    fx, fy = tf(road.finish_center)
    marker_r = max(3.0, road.width * scale * 0.15)
    parts.append(f'<circle cx="{sx:.2f}" cy="{sy:.2f}" r="{marker_r:.2f}" fill="#1f77b4"/>')
    parts.append(
        f'<circle cx="{fx:.2f}" cy="{fy:.2f}" r="{marker_r:.2f}" fill="none" '
        f'stroke="#1f77b4" stroke-width="2"/>'
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
