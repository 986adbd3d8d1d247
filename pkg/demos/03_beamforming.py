"""Eigenbeam covariances and the MVDR / MUSIC spatial spectra.

Run: python demos/03_beamforming.py  (writes mvdr.pgm and music.pgm in the cwd)
"""
import numpy as np

from hoadoa.ebdsp import eb_music_spectrum, eb_mvdr_spectrum, freq_smoothed_cov, time_cov
from hoadoa.evaluation import emit_heatmap
from hoadoa.roomsim import RoomSpec, encode_hoa, enumerate_images, first_order_truth, synth_source
from hoadoa.sphharm import angular_distance
from hoadoa.sps import extract_peaks, normalize_map, top_peaks

room = RoomSpec((6.0, 5.0, 3.0), 0.5)
src, mic = (4.5, 3.5, 1.6), (2.0, 2.0, 1.4)
images = enumerate_images(room, src, mic, 4)
truth = first_order_truth(images, mic)
frame = encode_hoa(images, synth_source("speech-like", 6000, seed=3), 4, 16000, mic=mic, n_samples=5000, start=800)

# The full-band frequency-smoothed covariance equals the time-domain one.
Rt, Rf = time_cov(frame), freq_smoothed_cov(frame)
print("Parseval mismatch:", np.linalg.norm(Rt.values - Rf.values) / np.linalg.norm(Rt.values))

# Restricting the band changes the estimate (here 300 Hz - 3 kHz).
Rb = freq_smoothed_cov(frame, band=(94, 938))
print("band-limited trace / full trace:", round(Rb.trace / Rt.trace, 3))

mvdr = eb_mvdr_spectrum(Rt)
music = eb_music_spectrum(Rt, n_signals=7)  # direct path + six first-order images

# Threshold-0.5 peaks of the normalised MVDR map; top-7 local maxima of MUSIC.
for name, peaks in (("MVDR", extract_peaks(normalize_map(mvdr), 0.5)), ("MUSIC", top_peaks(music, 7))):
    errs = [min(angular_distance(p, t) for t in truth) for p in peaks]
    print(f"{name}: {len(peaks)} peaks, errors to nearest truth:", np.round(errs, 1))

emit_heatmap(normalize_map(mvdr), "mvdr.pgm", "pgm", truth=truth)
emit_heatmap(normalize_map(music), "music.pgm", "pgm")
print("wrote mvdr.pgm (+ mvdr.pgm.truth.csv) and music.pgm")
