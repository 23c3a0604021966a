"""Minimal deterministic SVG figures: curves, scatters, contours.

Everything is written with fixed float formatting so identical inputs give
byte-identical files; no plotting library is involved.
"""

from __future__ import annotations

import numpy as np


def _f(x):
    return f"{float(x):.6g}"


# a small blue-to-yellow color ramp (hex stops, linear interpolation)
_RAMP = [(68, 1, 84), (59, 82, 139), (33, 145, 140), (94, 201, 98), (253, 231, 37)]


def ramp_color(u):
    u = min(max(float(u), 0.0), 1.0)
    x = u * (len(_RAMP) - 1)
    i = min(int(x), len(_RAMP) - 2)
    t = x - i
    c0, c1 = _RAMP[i], _RAMP[i + 1]
    rgb = [round(a + t * (b - a)) for a, b in zip(c0, c1)]
    return "#{:02x}{:02x}{:02x}".format(*rgb)


class Figure:
    """A fixed-size canvas with one data-coordinate axes box."""

    def __init__(self, xlim, ylim, width=640, height=480, margin=50,
                 title="", xlabel="", ylabel=""):
        self.width = width
        self.height = height
        self.margin = margin
        self.x0, self.x1 = map(float, xlim)
        self.y0, self.y1 = map(float, ylim)
        if self.x1 <= self.x0:
            self.x1 = self.x0 + 1.0
        if self.y1 <= self.y0:
            self.y1 = self.y0 + 1.0
        self.parts = []
        self.title = title
        self.xlabel = xlabel
        self.ylabel = ylabel

    def tx(self, x):
        u = (x - self.x0) / (self.x1 - self.x0)
        return self.margin + u * (self.width - 2 * self.margin)

    def ty(self, y):
        u = (y - self.y0) / (self.y1 - self.y0)
        return self.height - self.margin - u * (self.height - 2 * self.margin)

    def polyline(self, xs, ys, color="#1f77b4", width=1.5, dash=None):
        pts = " ".join(
            f"{_f(self.tx(x))},{_f(self.ty(y))}" for x, y in zip(xs, ys)
        )
        dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
        self.parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" '
            f'stroke-width="{_f(width)}"{dash_attr}/>'
        )

    def segments(self, segs, color="#1f77b4", width=1.0):
        for (xa, ya), (xb, yb) in segs:
            self.parts.append(
                f'<line x1="{_f(self.tx(xa))}" y1="{_f(self.ty(ya))}" '
                f'x2="{_f(self.tx(xb))}" y2="{_f(self.ty(yb))}" '
                f'stroke="{color}" stroke-width="{_f(width)}"/>'
            )

    def scatter(self, pts, color="#d62728", r=2.5, opacity=1.0):
        for x, y in np.atleast_2d(pts):
            self.parts.append(
                f'<circle cx="{_f(self.tx(x))}" cy="{_f(self.ty(y))}" '
                f'r="{_f(r)}" fill="{color}" fill-opacity="{_f(opacity)}"/>'
            )

    def text(self, x, y, s, size=12, color="#000000", anchor="start"):
        self.parts.append(
            f'<text x="{_f(x)}" y="{_f(y)}" font-size="{size}" '
            f'fill="{color}" text-anchor="{anchor}" '
            f'font-family="sans-serif">{s}</text>'
        )

    def legend(self, entries):
        x = self.width - self.margin - 150
        y = self.margin + 10
        for label, color in entries:
            self.parts.append(
                f'<line x1="{_f(x)}" y1="{_f(y - 4)}" x2="{_f(x + 24)}" '
                f'y2="{_f(y - 4)}" stroke="{color}" stroke-width="2"/>'
            )
            self.text(x + 30, y, label, size=11)
            y += 16

    def _axes(self):
        m = self.margin
        out = [
            f'<rect x="{_f(m)}" y="{_f(m)}" width="{_f(self.width - 2 * m)}" '
            f'height="{_f(self.height - 2 * m)}" fill="none" stroke="#444444"/>'
        ]
        for frac in (0.0, 0.5, 1.0):
            xv = self.x0 + frac * (self.x1 - self.x0)
            yv = self.y0 + frac * (self.y1 - self.y0)
            out.append(
                f'<text x="{_f(self.tx(xv))}" y="{_f(self.height - m + 16)}" '
                f'font-size="10" fill="#444444" text-anchor="middle" '
                f'font-family="sans-serif">{_f(xv)}</text>'
            )
            out.append(
                f'<text x="{_f(m - 6)}" y="{_f(self.ty(yv) + 3)}" '
                f'font-size="10" fill="#444444" text-anchor="end" '
                f'font-family="sans-serif">{_f(yv)}</text>'
            )
        return out

    def render(self):
        head = (
            '<?xml version="1.0" encoding="UTF-8"?>\n'
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" '
            f'height="{self.height}" viewBox="0 0 {self.width} {self.height}">\n'
            f'<rect width="{self.width}" height="{self.height}" fill="#ffffff"/>'
        )
        labels = []
        if self.title:
            labels.append(
                f'<text x="{_f(self.width / 2)}" y="{_f(self.margin - 16)}" '
                f'font-size="14" text-anchor="middle" '
                f'font-family="sans-serif">{self.title}</text>'
            )
        if self.xlabel:
            labels.append(
                f'<text x="{_f(self.width / 2)}" y="{_f(self.height - 10)}" '
                f'font-size="12" text-anchor="middle" '
                f'font-family="sans-serif">{self.xlabel}</text>'
            )
        if self.ylabel:
            labels.append(
                f'<text x="14" y="{_f(self.height / 2)}" font-size="12" '
                f'text-anchor="middle" font-family="sans-serif" '
                f'transform="rotate(-90 14 {_f(self.height / 2)})">'
                f"{self.ylabel}</text>"
            )
        body = "\n".join(self._axes() + self.parts + labels)
        return head + "\n" + body + "\n</svg>\n"

    def save(self, path):
        with open(path, "w") as f:
            f.write(self.render())


def contour_segments(vertices, triangles, values, levels):
    """Marching-triangles iso-segments of a P1 field, grouped by level."""
    p = vertices[triangles]  # (nt, 3, 2)
    v = values[triangles]  # (nt, 3)
    out = {lev: [] for lev in levels}
    for lev in levels:
        for tri_pts, tri_vals in zip(p, v):
            pts = []
            for i, j in ((0, 1), (1, 2), (2, 0)):
                a, b = tri_vals[i], tri_vals[j]
                if (a - lev) * (b - lev) < 0:
                    t = (lev - a) / (b - a)
                    pts.append(tri_pts[i] + t * (tri_pts[j] - tri_pts[i]))
            if len(pts) == 2:
                out[lev].append((pts[0], pts[1]))
    return out


def field_contour_figure(space, coeffs, title="", n_levels=9):
    """Contour plot of a nodal field (P2 fields are split into P1 pieces)."""
    mesh = space.mesh
    if space.degree == 1:
        verts, tris, vals = mesh.vertices, mesh.triangles, coeffs
    else:
        # vertices + edge midpoints carry nodal values already
        verts = space.dof_coords
        tris = []
        for conn in space.conn:
            v0, v1, v2, e01, e12, e20 = conn
            tris.extend([(v0, e01, e20), (v1, e12, e01),
                         (v2, e20, e12), (e01, e12, e20)])
        tris = np.array(tris)
        vals = coeffs
    lo, hi = float(vals.min()), float(vals.max())
    if hi <= lo:
        hi = lo + 1.0
    levels = [lo + (i + 1) / (n_levels + 1) * (hi - lo) for i in range(n_levels)]
    xlim = (verts[:, 0].min(), verts[:, 0].max())
    ylim = (verts[:, 1].min(), verts[:, 1].max())
    fig = Figure(xlim, ylim, title=title, xlabel="x", ylabel="y")
    segs_by_level = contour_segments(verts, tris, vals, levels)
    for i, lev in enumerate(levels):
        color = ramp_color(i / max(len(levels) - 1, 1))
        fig.segments(segs_by_level[lev], color=color, width=1.2)
    for segs, in [(mesh.boundary_segments(),)]:
        fig.segments(segs, color="#000000", width=1.0)
    return fig
