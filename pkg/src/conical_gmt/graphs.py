"""Lipschitz graphs over a base plane, anchored at cone-separated points.

A point set whose pairwise differences avoid the half-aperture cone
K(0, V, alpha/2) projects injectively onto V^perp, and the induced map
pi_perp(x) -> pi_V(x) is Lipschitz with constant at most sqrt(4/alpha^2 - 1).
The graph is extended off the anchors componentwise by the symmetric
McShane-Whitney rule with L' = 2/alpha,

    F_j(z) = ( min_i (F_j(z_i) + L' |z - z_i|)
             + max_i (F_j(z_i) - L' |z - z_i|) ) / 2,

which reproduces anchors exactly, is L'-Lipschitz per component, and keeps
constant anchor data constant.  The componentwise extension can inflate the
full vector constant by up to sqrt(n); reports carry the componentwise
constant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConeViolation, DimensionMismatch, InvalidParams
from .geometry import Plane


def cone_separation_violations(points: np.ndarray, direction: Plane,
                               aperture: float) -> list[tuple[int, int]]:
    """All pairs (i, j) with x_j inside the half-aperture cone at x_i.

    The membership test is symmetric, so each violating pair appears once.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != direction.ambient_dim:
        raise DimensionMismatch("anchor points and plane dimensions differ")
    half = aperture / 2.0
    out = []
    basis = direction.basis
    for i in range(len(pts) - 1):
        diff = pts[i + 1:] - pts[i][None, :]
        dist = np.linalg.norm(diff, axis=1)
        par = (diff @ basis.T) @ basis
        perp = np.linalg.norm(diff - par, axis=1)
        bad = np.nonzero(perp < half * dist)[0]
        out.extend((i, i + 1 + int(b)) for b in bad)
    return out


@dataclass(frozen=True)
class LipschitzGraph:
    """Graph map over ``base`` (dimension n) with values in ``normal``."""

    base: Plane
    normal: Plane
    anchors_base: np.ndarray    # (k, n) coordinates in base basis
    anchors_value: np.ndarray   # (k, d-n) coordinates in normal basis
    lip_measured: float         # max anchor-pair slope
    extension_constant: float   # per-component extension slope L'

    @property
    def ambient_dim(self) -> int:
        return self.base.ambient_dim

    @property
    def anchor_count(self) -> int:
        return len(self.anchors_base)

    def evaluate(self, zcoords: np.ndarray) -> np.ndarray:
        """Graph values at base-plane coordinates, anchors reproduced exactly."""
        z = np.atleast_2d(np.asarray(zcoords, dtype=float))
        d = self.extension_constant * np.linalg.norm(
            z[:, None, :] - self.anchors_base[None, :, :], axis=2)[:, :, None]
        upper = np.min(self.anchors_value[None, :, :] + d, axis=1)
        lower = np.max(self.anchors_value[None, :, :] - d, axis=1)
        vals = 0.5 * (upper + lower)
        return vals if np.asarray(zcoords).ndim > 1 else vals[0]

    def ambient_anchors(self) -> np.ndarray:
        return self.base.embed(self.anchors_base) + self.normal.embed(self.anchors_value)

    def embed(self, zcoords: np.ndarray) -> np.ndarray:
        z = np.atleast_2d(np.asarray(zcoords, dtype=float))
        return self.base.embed(z) + self.normal.embed(np.atleast_2d(self.evaluate(z)))

    def vertical_distance(self, points: np.ndarray) -> np.ndarray:
        """|pi_V(x) - F(pi_perp(x))| per point; an upper bound on dist(x, graph)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[1] != self.ambient_dim:
            raise DimensionMismatch("points and graph ambient dimensions differ")
        z = self.base.coords(pts)
        v = self.normal.coords(pts)
        dev = np.linalg.norm(v - np.atleast_2d(self.evaluate(z)), axis=1)
        return dev if np.asarray(points).ndim > 1 else dev[0]

    def to_json(self) -> dict:
        return {
            "base_plane": self.base.basis.tolist(),
            "normal_plane": self.normal.basis.tolist(),
            "anchors": [[z.tolist(), v.tolist()]
                        for z, v in zip(self.anchors_base, self.anchors_value)],
            "L": self.lip_measured,
            "extension_constant": self.extension_constant,
        }

    @staticmethod
    def from_json(data: dict) -> "LipschitzGraph":
        base = Plane(np.asarray(data["base_plane"], dtype=float))
        if "normal_plane" in data:
            normal = Plane(np.asarray(data["normal_plane"], dtype=float))
        else:
            normal = base.complement()
        anchors = data["anchors"]
        zs = np.asarray([a[0] for a in anchors], dtype=float)
        vs = np.asarray([a[1] for a in anchors], dtype=float)
        lip = float(data.get("L", 0.0))
        ext = float(data.get("extension_constant", max(lip, 1.0)))
        return LipschitzGraph(base, normal, zs, vs, lip, ext)


def fit_lipschitz_graph(anchor_points, direction: Plane, aperture: float) -> LipschitzGraph:
    """Fit the graph through ambient anchors after validating cone separation.

    ``direction`` is the cone direction V (dimension d - n); the graph lives
    over V^perp.  Raises ConeViolation with the first offending pair when the
    anchors are not half-aperture separated (an upstream bug or a parameter
    regime the separation lemmas do not cover).
    """
    pts = np.atleast_2d(np.asarray(anchor_points, dtype=float))
    if pts.shape[0] == 0:
        raise InvalidParams("need at least one anchor")
    if not 0 < aperture < 1:
        raise InvalidParams("aperture must lie in (0, 1)")
    pts = np.unique(pts, axis=0)
    violations = cone_separation_violations(pts, direction, aperture)
    if violations:
        raise ConeViolation(violations[0],
                            f"{len(violations)} anchor pair(s) violate cone separation")
    base = direction.complement()
    z = base.coords(pts)
    vals = direction.coords(pts)
    lip = 0.0
    if len(pts) > 1:
        for i in range(len(pts) - 1):
            dz = np.linalg.norm(z[i + 1:] - z[i][None, :], axis=1)
            dv = np.linalg.norm(vals[i + 1:] - vals[i][None, :], axis=1)
            with np.errstate(divide="ignore", invalid="ignore"):
                slopes = np.where(dz > 0, dv / dz, np.inf)
            lip = max(lip, float(np.max(slopes)))
    return LipschitzGraph(base, direction, z, vals, lip, 2.0 / aperture)
