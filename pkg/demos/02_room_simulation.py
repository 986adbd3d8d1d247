"""Shoebox image sources, ground truth and impulse-response decay.

Run: python demos/02_room_simulation.py
"""
import numpy as np

from hoadoa.roomsim import (
    RoomSpec,
    encode_hoa,
    enumerate_images,
    first_order_truth,
    impulse_response,
    sabine_beta,
    schroeder_t60,
    synth_source,
)

# A 4 x 5 x 2.6 m room with T60 = 0.8 s; Sabine fixes the wall absorption.
room = RoomSpec((4.0, 5.0, 2.6), 0.8)
src, mic = (3.0, 3.0, 1.5), (2.0, 2.0, 1.5)
print(f"absorption {room.absorption:.4f}, reflection coefficient {sabine_beta(room):.4f}")

# Images up to fourth order. The first seven (direct + six walls) are the labels.
images = enumerate_images(room, src, mic, 4)
print("images with <= 4 reflections:", len(images))
for d in first_order_truth(images, mic):
    print(f"  truth az {d.azimuth:7.2f}  el {d.elevation:6.2f}")

# Encode half a second of speech-like signal into 25 HOA channels.
s = synth_source("speech-like", 8000, 16000, seed=1)
frame = encode_hoa(images, s, 4, 16000, mic=mic)
print("HOA frame:", frame.samples.shape, "W-channel RMS", np.sqrt(np.mean(frame.samples[0] ** 2)).round(4))

# Reverberation time from the Schroeder curve of an omni impulse response.
# The raw sum of same-signed image impulses carries a slowly decaying
# low-frequency build-up; the default 100 Hz high-pass removes it.
h = impulse_response(room, src, mic, fs=16000, duration=1.0)
raw = impulse_response(room, src, mic, fs=16000, duration=1.0, highpass=None)
print(f"T20 estimate {schroeder_t60(h, 16000):.3f} s (raw sum {schroeder_t60(raw, 16000):.3f} s, target 0.8 s)")
