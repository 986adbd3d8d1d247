import itertools
import math

import numpy as np
import pytest

from hoadoa.errors import DomainError, InfeasibleRoomError
from hoadoa.roomsim import (
    HoaFrame,
    ImageSource,
    RoomSpec,
    encode_hoa,
    enumerate_images,
    first_order_truth,
    image_lattice,
    impulse_response,
    sabine_beta,
    schroeder_t60,
    synth_source,
)
from hoadoa.sphharm import Direction, sh_matrix

REF_ROOM = RoomSpec((4.0, 5.0, 2.6), 0.8)
REF_SRC = (3.0, 3.0, 1.5)
REF_MIC = (2.0, 2.0, 1.5)


def allen_berkley_images(dims, src, max_order):
    """Images from the (q, n) parametrisation: x = (1 - 2q) x_s + 2 n L,
    with |n - q| + |n| reflections along that axis."""
    out = []
    rng = range(-max_order, max_order + 1)
    for q in itertools.product((0, 1), repeat=3):
        for n in itertools.product(rng, repeat=3):
            order = sum(abs(ni - qi) + abs(ni) for ni, qi in zip(n, q))
            if order <= max_order:
                pos = tuple(round((1 - 2 * qi) * s + 2 * ni * L, 9) for qi, ni, s, L in zip(q, n, src, dims))
                out.append((pos, order))
    return sorted(out)


def test_sabine_beta_reference_room():
    assert REF_ROOM.volume == pytest.approx(52.0)
    assert REF_ROOM.surface == pytest.approx(86.8)
    assert REF_ROOM.absorption == pytest.approx(0.161 * 52 / (86.8 * 0.8))
    assert REF_ROOM.absorption == pytest.approx(0.1206, abs=1e-4)
    assert sabine_beta(REF_ROOM) == pytest.approx(0.9378, abs=1e-4)


def test_sabine_beta_lossless_limit():
    assert sabine_beta(RoomSpec((4, 5, 3), 1e9)) == pytest.approx(1.0, abs=1e-8)


def test_infeasible_room():
    with pytest.raises(InfeasibleRoomError):
        RoomSpec((3, 3, 2), 0.05)
    with pytest.raises(DomainError):
        RoomSpec((3, -1, 2), 0.5)


def test_image_counts():
    assert len(enumerate_images(REF_ROOM, REF_SRC, REF_MIC, 0)) == 1
    assert len(enumerate_images(REF_ROOM, REF_SRC, REF_MIC, 1)) == 7


def test_mirror_formula():
    images = enumerate_images(REF_ROOM, REF_SRC, REF_MIC, 1)
    xs = sorted(im.position[0] for im in images if im.reflection_order == 1)
    assert 5.0 in xs  # across x = Lx: 2 * 4 - 3
    assert -3.0 in xs  # across x = 0


@pytest.mark.parametrize("K", [0, 1, 2, 3, 4])
def test_images_match_allen_berkley(K):
    dims = REF_ROOM.dimensions
    ours = sorted(
        (tuple(round(float(c), 9) for c in im.position), im.reflection_order)
        for im in enumerate_images(REF_ROOM, REF_SRC, REF_MIC, K)
    )
    assert ours == allen_berkley_images(dims, REF_SRC, K)


def test_image_amplitude_and_delay():
    beta = sabine_beta(REF_ROOM)
    for im in enumerate_images(REF_ROOM, REF_SRC, REF_MIC, 3):
        d = np.linalg.norm(im.position - np.array(REF_MIC))
        assert im.amplitude == pytest.approx(beta**im.reflection_order / d)
        assert im.delay == pytest.approx(d / 343.0)
        assert im.amplitude > 0 and im.delay >= 0


def test_enumerate_rejects_outside_points():
    with pytest.raises(DomainError):
        enumerate_images(REF_ROOM, (5.0, 1, 1), REF_MIC, 1)
    with pytest.raises(DomainError):
        enumerate_images(REF_ROOM, REF_MIC, REF_MIC, 1)


def test_first_order_truth_reference_geometry():
    images = enumerate_images(REF_ROOM, REF_SRC, REF_MIC, 2)
    truth = first_order_truth(images, REF_MIC)
    assert len(truth) == 7
    direct = truth[0]
    assert direct.azimuth == pytest.approx(45.0)
    assert direct.elevation == pytest.approx(0.0, abs=1e-12)
    floor = [d for d in truth if d.elevation < -60]
    assert len(floor) == 1
    assert floor[0].azimuth == pytest.approx(45.0)
    assert floor[0].elevation == pytest.approx(math.degrees(math.atan2(-3.0, math.sqrt(2))), abs=1e-9)
    assert floor[0].elevation == pytest.approx(-64.76, abs=1e-2)


def test_white_source_determinism_and_mean():
    a = synth_source("white", 5000, 16000, seed=7)
    b = synth_source("white", 5000, 16000, seed=7)
    np.testing.assert_array_equal(a, b)
    assert abs(a.mean()) < 3 / math.sqrt(5000)
    assert not np.array_equal(a, synth_source("white", 5000, 16000, seed=8))


def test_speech_like_source():
    x = synth_source("speech-like", 16000, 16000, seed=3)
    np.testing.assert_array_equal(x, synth_source("speech-like", 16000, 16000, seed=3))
    assert abs(x.mean()) < 1e-12
    spec = np.abs(np.fft.rfft(x)) ** 2
    freqs = np.fft.rfftfreq(len(x), 1 / 16000)
    assert (spec * freqs).sum() / spec.sum() < 2000.0
    # syllable envelope leaves near-silent stretches
    env = np.convolve(x**2, np.ones(400) / 400, mode="same")
    assert env.min() < 1e-2 * env.max()


def test_source_errors():
    with pytest.raises(DomainError):
        synth_source("white", 0)
    with pytest.raises(DomainError):
        synth_source("pink", 10)


def _single(direction: Direction, amplitude=1.0, delay=0.0):
    return ImageSource(direction.unit_vector() * 2.0, 0, amplitude, delay)


def test_encode_single_plane_wave():
    d = Direction(30, -10)
    s = synth_source("white", 1000, 16000, seed=1)
    frame = encode_hoa([_single(d)], s, 4, 16000)
    y = sh_matrix(4, d.azimuth, d.elevation)
    np.testing.assert_allclose(frame.samples, np.outer(y, s), atol=1e-13)
    np.testing.assert_allclose(frame.samples[0], 0.2820948 * s, atol=1e-7)


def test_encode_linearity():
    d1, d2 = Direction(30, -10), Direction(-120, 45)
    s = synth_source("white", 800, 16000, seed=2)
    both = encode_hoa([_single(d1, 0.7), _single(d2, 0.2)], s, 3, 16000).samples
    sep = encode_hoa([_single(d1, 0.7)], s, 3, 16000).samples + encode_hoa([_single(d2, 0.2)], s, 3, 16000).samples
    np.testing.assert_allclose(both, sep, atol=1e-13)
    y1 = sh_matrix(3, d1.azimuth, d1.elevation)
    y2 = sh_matrix(3, d2.azimuth, d2.elevation)
    np.testing.assert_allclose(both, 0.7 * np.outer(y1, s) + 0.2 * np.outer(y2, s), atol=1e-13)
    doubled = encode_hoa([_single(d1, 0.7)], 2 * s, 3, 16000).samples
    np.testing.assert_allclose(doubled, 2 * encode_hoa([_single(d1, 0.7)], s, 3, 16000).samples, atol=1e-13)


def test_encode_fractional_delay():
    s = np.arange(10, dtype=float)
    d = Direction(0, 90)
    frame = encode_hoa([_single(d, 1.0, 2.5 / 16000)], s, 0, 16000)
    w = frame.samples[0] / 0.28209479177387814
    np.testing.assert_allclose(w, np.r_[0, 0, 0, 0.5, 1.5, 2.5, 3.5, 4.5, 5.5, 6.5], atol=1e-12)


def test_encode_requires_images():
    with pytest.raises(DomainError):
        encode_hoa([], np.ones(10), 2, 16000)


def test_hoaframe_validation():
    with pytest.raises(DomainError):
        HoaFrame(4, np.zeros((24, 10)))
    with pytest.raises(DomainError):
        HoaFrame(1, np.zeros((4, 0)))


def test_simulation_deterministic():
    kw = dict(room=REF_ROOM, src=REF_SRC, mic=REF_MIC, fs=16000, duration=0.1)
    np.testing.assert_array_equal(impulse_response(**kw), impulse_response(**kw))


def test_schroeder_on_synthetic_exponential():
    fs = 16000
    t = np.arange(int(1.2 * fs)) / fs
    rng = np.random.default_rng(0)
    h = rng.standard_normal(len(t)) * 10 ** (-3 * t / 0.6)  # 60 dB energy decay in 0.6 s
    assert schroeder_t60(h, fs) == pytest.approx(0.6, rel=0.05)


def _image_energy_t20(room, src, mic, duration):
    # Schroeder fit on per-image energies, independent of sampling and filtering
    pos, order, dist = image_lattice(room, src, mic, 400, max_distance=room.c * duration)
    beta = np.sqrt(1 - room.absorption)
    t, e = dist / room.c, beta ** (2.0 * order) / dist**2
    k = np.argsort(t)
    t, e = t[k], e[k]
    edc = 10 * np.log10(np.cumsum(e[::-1])[::-1] / e.sum())
    sel = (edc <= -5) & (edc >= -25)
    return -60 / np.polyfit(t[sel], edc[sel], 1)[0]


@pytest.mark.parametrize("dims,t60", [((6.0, 5.0, 3.0), 0.5), ((4.0, 3.5, 2.4), 0.4)])
def test_filtered_ir_decay_matches_image_energies(dims, t60):
    room = RoomSpec(dims, t60)
    d = np.array(dims)
    src, mic = tuple(0.3 * d + 0.2), tuple(0.65 * d - 0.1)
    ref = _image_energy_t20(room, src, mic, 2 * t60)
    h = impulse_response(room, src, mic, fs=16000, duration=1.1 * t60)
    assert schroeder_t60(h, 16000) == pytest.approx(ref, rel=0.08)
    # the unfiltered sum of same-signed impulses decays visibly slower
    raw = impulse_response(room, src, mic, fs=16000, duration=1.1 * t60, highpass=None)
    assert schroeder_t60(raw, 16000) > 1.2 * ref


def test_raw_ir_places_direct_path():
    room = RoomSpec((5.0, 4.0, 3.0), 0.4)
    src, mic = (1.0, 1.0, 1.0), (3.0, 1.0, 1.0)
    h = impulse_response(room, src, mic, fs=16000, duration=0.05, highpass=None)
    t = 2.0 / room.c * 16000
    i0 = int(np.floor(t))
    assert h[i0] + h[i0 + 1] == pytest.approx(0.5, rel=1e-9)  # 1/d split over two taps
    assert np.all(h[:i0] == 0)
    with pytest.raises(DomainError):
        impulse_response(room, src, mic, fs=16000, duration=0.05, highpass=9000.0)


def _directional_decay_t20(room, duration, fs=4000, n_dirs=200_000):
    # Specular lattice: along unit direction n a path of length c t meets
    # c t sum_i |n_i| / L_i walls, so intensity ~ mean_n beta^(2 c t g(n)).
    n = np.random.default_rng(0).standard_normal((n_dirs, 3))
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    g = np.abs(n) @ (1 / np.asarray(room.dimensions))
    t = np.arange(1, int(duration * fs)) / fs
    log_beta2 = np.log(1 - room.absorption)
    e = np.array([np.mean(np.exp(log_beta2 * room.c * tt * g)) for tt in t])
    edc = 10 * np.log10(np.cumsum(e[::-1])[::-1] / e.sum())
    sel = (edc <= -5) & (edc >= -25)
    return -60 / np.polyfit(t[sel], edc[sel], 1)[0]


@pytest.mark.parametrize("dims,t60", [((3.0, 3.0, 2.0), 0.3), ((9.0, 8.0, 3.0), 0.7), ((7.0, 4.5, 2.8), 1.0)])
def test_t60_tracks_directional_decay_model(dims, t60):
    room = RoomSpec(dims, t60)
    d = np.array(dims)
    h = impulse_response(room, tuple(0.3 * d + 0.2), tuple(0.65 * d - 0.1), fs=16000, duration=1.1 * t60)
    assert schroeder_t60(h, 16000) == pytest.approx(_directional_decay_t20(room, 2 * t60), rel=0.1)
