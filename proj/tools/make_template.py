#!/usr/bin/env python3
"""Regenerates data/template_60.tsv and the default prior tables.

Coordinates follow the idealised spherical 10-10 layout: x points right,
y towards the nasion, z to the vertex. The 10% circumference ring sits at a
polar angle of 72 degrees; midline sites step by 18 degrees. Lateral sites on
a row are placed at equal angles along the circle through the row's ring
electrodes and its midline electrode.
"""
import math
import pathlib

import numpy as np

OUT = pathlib.Path(__file__).resolve().parent.parent / "data"


def sph(polar_deg, azim_deg):
    t, p = math.radians(polar_deg), math.radians(azim_deg)
    return np.array([math.sin(t) * math.cos(p), math.sin(t) * math.sin(p), math.cos(t)])


def row_points(left, mid, right, n_side):
    """Points dividing the circle arc left -> mid -> right into 2*n_side steps."""
    pts = np.stack([left, mid, right])
    normal = np.cross(pts[1] - pts[0], pts[2] - pts[0])
    normal /= np.linalg.norm(normal)
    centre = normal * np.dot(normal, pts[0])
    u = (pts[1] - centre) / np.linalg.norm(pts[1] - centre)
    v = np.cross(normal, u)
    radius = np.linalg.norm(pts[1] - centre)

    def angle(p):
        d = p - centre
        return math.atan2(np.dot(d, v), np.dot(d, u))

    a_left, a_right = angle(left), angle(right)
    out = []
    for i in range(2 * n_side + 1):
        if i <= n_side:
            a = a_left * (1 - i / n_side)
        else:
            a = a_right * ((i - n_side) / n_side)
        p = centre + radius * (math.cos(a) * u + math.sin(a) * v)
        out.append(p / np.linalg.norm(p))
    return out


ring = {name: sph(72, az) for name, az in [
    ("FPZ", 90), ("FP1", 108), ("AF7", 126), ("F7", 144), ("FT7", 162), ("T7", 180),
    ("TP7", 198), ("P7", 216), ("PO7", 234), ("O1", 252), ("OZ", 270), ("O2", 288),
    ("PO8", 306), ("P8", 324), ("TP8", 342), ("T8", 0), ("FT8", 18), ("F8", 36),
    ("AF8", 54), ("FP2", 72)]}
mid = {"AFZ": sph(54, 90), "FZ": sph(36, 90), "FCZ": sph(18, 90), "CZ": sph(0, 0),
       "CPZ": sph(18, 270), "PZ": sph(36, 270), "POZ": sph(54, 270)}

pos = dict(ring)
pos.update(mid)
rows = {
    "AF": ("AF7", "AFZ", "AF8", ["AF7", "AF5", "AF3", "AF1", "AFZ", "AF2", "AF4", "AF6", "AF8"]),
    "F": ("F7", "FZ", "F8", ["F7", "F5", "F3", "F1", "FZ", "F2", "F4", "F6", "F8"]),
    "FC": ("FT7", "FCZ", "FT8", ["FT7", "FC5", "FC3", "FC1", "FCZ", "FC2", "FC4", "FC6", "FT8"]),
    "C": ("T7", "CZ", "T8", ["T7", "C5", "C3", "C1", "CZ", "C2", "C4", "C6", "T8"]),
    "CP": ("TP7", "CPZ", "TP8", ["TP7", "CP5", "CP3", "CP1", "CPZ", "CP2", "CP4", "CP6", "TP8"]),
    "P": ("P7", "PZ", "P8", ["P7", "P5", "P3", "P1", "PZ", "P2", "P4", "P6", "P8"]),
    "PO": ("PO7", "POZ", "PO8", ["PO7", "PO5", "PO3", "PO1", "POZ", "PO2", "PO4", "PO6", "PO8"]),
}
for left, m, right, names in rows.values():
    for name, p in zip(names, row_points(pos[left], pos[m], pos[right], 4)):
        pos.setdefault(name, p)

# SEED 62-channel cap without the two cerebellar references (CB1, CB2).
channels = [
    "FP1", "FPZ", "FP2", "AF3", "AF4",
    "F7", "F5", "F3", "F1", "FZ", "F2", "F4", "F6", "F8",
    "FT7", "FC5", "FC3", "FC1", "FCZ", "FC2", "FC4", "FC6", "FT8",
    "T7", "C5", "C3", "C1", "CZ", "C2", "C4", "C6", "T8",
    "TP7", "CP5", "CP3", "CP1", "CPZ", "CP2", "CP4", "CP6", "TP8",
    "P7", "P5", "P3", "P1", "PZ", "P2", "P4", "P6", "P8",
    "PO7", "PO5", "PO3", "POZ", "PO4", "PO6", "PO8",
    "O1", "OZ", "O2",
]
assert len(channels) == 60

# Hemisphere split per row; FT/T/TP kept apart, Fp apart from AF, O apart from PO.
# Midline sites join the left region of their row.
regions = {
    "FP1": "Fp_L", "FPZ": "Fp_L", "FP2": "Fp_R",
    "AF3": "AF_L", "AF4": "AF_R",
    "F7": "F_L", "F5": "F_L", "F3": "F_L", "F1": "F_L", "FZ": "F_L",
    "F2": "F_R", "F4": "F_R", "F6": "F_R", "F8": "F_R",
    "FT7": "FT_L", "FT8": "FT_R",
    "FC5": "FC_L", "FC3": "FC_L", "FC1": "FC_L", "FCZ": "FC_L",
    "FC2": "FC_R", "FC4": "FC_R", "FC6": "FC_R",
    "T7": "T_L", "T8": "T_R",
    "C5": "C_L", "C3": "C_L", "C1": "C_L", "CZ": "C_L",
    "C2": "C_R", "C4": "C_R", "C6": "C_R",
    "TP7": "TP_L", "TP8": "TP_R",
    "CP5": "CP_L", "CP3": "CP_L", "CP1": "CP_L", "CPZ": "CP_L",
    "CP2": "CP_R", "CP4": "CP_R", "CP6": "CP_R",
    "P7": "P_L", "P5": "P_L", "P3": "P_L", "P1": "P_L", "PZ": "P_L",
    "P2": "P_R", "P4": "P_R", "P6": "P_R", "P8": "P_R",
    "PO7": "PO_L", "PO5": "PO_L", "PO3": "PO_L", "POZ": "PO_L",
    "PO4": "PO_R", "PO6": "PO_R", "PO8": "PO_R",
    "O1": "O_L", "OZ": "O_L", "O2": "O_R",
}
region_order = [f"{r}_{s}" for r in ["Fp", "AF", "F", "FT", "FC", "T", "C", "TP", "CP", "P", "PO", "O"]
                for s in "LR"]
assert len(region_order) == 24 and set(regions.values()) == set(region_order)

priors = {
    "affect": {"Fp", "AF", "F", "FT", "FC", "T", "TP", "C"},
    "motor": {"C", "CP", "P"},
}

with open(OUT / "template_60.tsv", "w") as f:
    f.write("# template v1: name\tx\ty\tz\tregion (unit sphere, x right, y nasion, z vertex)\n")
    for ch in channels:
        x, y, z = pos[ch]
        f.write(f"{ch}\t{x:.6f}\t{y:.6f}\t{z:.6f}\t{regions[ch]}\n")

with open(OUT / "regions_24.tsv", "w") as f:
    f.write("# region order v1: index\tname\n")
    for i, r in enumerate(region_order):
        f.write(f"{i}\t{r}\n")

for state in ["affect", "motor", "others"]:
    with open(OUT / f"prior_{state}.tsv", "w") as f:
        f.write(f"# channel prior v1 for state '{state}': name\tweight\n")
        for ch in channels:
            if state == "others":
                w = 0.5
            else:
                w = 1.0 if regions[ch].rsplit("_", 1)[0] in priors[state] else 0.0
            f.write(f"{ch}\t{w:.1f}\n")
