"""Gaussian label maps and the peak picker that inverts them.

Run: python demos/04_labels_and_peaks.py
"""
import numpy as np

from hoadoa.roomsim import DoaSet
from hoadoa.sphharm import Direction, angular_distance
from hoadoa.sps import extract_peaks, gaussian_label

truth = DoaSet((Direction(-100, 20), Direction(45, -30), Direction(178.5, 5), Direction(0, 88)))
label = gaussian_label(truth)
v = label.values
print("label shape", v.shape, " max", v.max(), " cells > 0.5:", int((v > 0.5).sum()))

# The +-180 degree seam wraps: the 178.5 degree source spills into the first columns.
print("column 0 vs column 119 near el 5:", v[31, 0].round(3), v[31, 119].round(3))

peaks = extract_peaks(label, 0.5)
for t in truth:
    p = min(peaks, key=lambda q: angular_distance(q, t))
    print(f"truth ({t.azimuth:7.1f}, {t.elevation:5.1f}) -> peak ({p.azimuth:7.1f}, {p.elevation:5.1f})  "
          f"err {angular_distance(p, t):.2f}")

# Sources closer than the label width merge into one peak.
close = DoaSet((Direction(0, 0), Direction(3, 0)))
print("two sources 3 degrees apart ->", len(extract_peaks(gaussian_label(close), 0.5)), "peak(s)")
