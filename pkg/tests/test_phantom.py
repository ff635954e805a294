import numpy as np
import pytest

from stress_sr.phantom import PhantomSpec, generate_phantom, z_power_spectrum
from stress_sr.volume import foreground_mask


def test_deterministic():
    a, ka = generate_phantom(PhantomSpec(shape=(32, 32, 32), seed=3))
    b, kb = generate_phantom(PhantomSpec(shape=(32, 32, 32), seed=3))
    c, _ = generate_phantom(PhantomSpec(shape=(32, 32, 32), seed=4))
    assert a.data.tobytes() == b.data.tobytes()
    assert ka == kb
    assert not np.array_equal(a.data, c.data)


def test_empty_spec_is_zero():
    v, _ = generate_phantom(PhantomSpec(shape=(20, 20, 20), num_ellipsoids=0, texture_amplitude=0))
    assert not v.data.any()


def test_bounds_and_background():
    v, _ = generate_phantom(PhantomSpec())
    assert v.data.min() >= 0 and v.data.max() <= 1
    # corners lie outside the head ellipsoid
    assert v.data[0, 0, 0] == 0 and v.data[-1, -1, -1] == 0
    fg = foreground_mask(v)
    assert fg.mean() > 0.05
    assert np.all(v.data[fg] >= 0.05)


def test_centred_origin():
    spec = PhantomSpec(shape=(20, 30, 40), spacing=(1, 2, 0.5))
    v, _ = generate_phantom(spec)
    np.testing.assert_allclose(v.index_to_world(np.array([[9.5, 14.5, 19.5]])), 0, atol=1e-12)


def test_keypoints_returned():
    spec = PhantomSpec(eye_left=(-5, 10, 0), eye_right=(5, 10, 0), shoulder_mid=(0, -3, -15))
    _, kp = generate_phantom(spec)
    np.testing.assert_array_equal(kp.as_array(), [[-5, 10, 0], [5, 10, 0], [0, -3, -15]])


def test_keypoints_outside_fov():
    with pytest.raises(ValueError, match="field of view"):
        generate_phantom(PhantomSpec(shape=(20, 20, 20), eye_left=(-30, 0, 0)))


def test_too_small():
    with pytest.raises(ValueError):
        PhantomSpec(shape=(8, 64, 64))


def test_energy_above_subsampled_nyquist():
    v, _ = generate_phantom(PhantomSpec())
    freqs, power = z_power_spectrum(v)
    nyquist_4 = 0.5 / 4  # a frame with N_I=4 samples every fourth slice
    high = power[freqs > nyquist_4].sum()
    assert high > 1e-3 * power[1:].sum()


def test_default_keypoints_scale_with_fov():
    np.testing.assert_array_equal(PhantomSpec().keypoints.as_array(), [[-7, 12, 3], [7, 12, 3], [0, -4, -20]])
    small = PhantomSpec(shape=(32, 32, 32)).keypoints.as_array()
    np.testing.assert_allclose(small, np.array([[-7, 12, 3], [7, 12, 3], [0, -4, -20]]) * 31 / 63)


def test_z_constant_variant():
    v, _ = generate_phantom(PhantomSpec(shape=(32, 32, 24), z_constant=True))
    assert v.data.any()
    np.testing.assert_array_equal(v.data, np.repeat(v.data[:, :, :1], 24, axis=2))
