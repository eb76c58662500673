import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gcdenoise import noise
from conftest import smooth_image


def test_zero_density_is_identity(smooth):
    img = smooth()
    out, mask = noise.inject(img, noise.NoiseParams(0.0, 0.5, 3))
    np.testing.assert_array_equal(out, img)
    assert mask.count == 0


def test_full_density_all_extreme(smooth):
    out, mask = noise.inject(smooth(), noise.NoiseParams(1.0, 0.5, 3))
    assert np.isin(out, [0, 255]).all()
    assert mask.flags.all()


def test_mask_kinds_match_values(smooth):
    out, mask = noise.inject(smooth(), noise.NoiseParams(0.4, 0.3, 9))
    assert (out[mask.kind == noise.SALT] == 255).all()
    assert (out[mask.kind == noise.PEPPER] == 0).all()


def test_salt_fraction_extremes(smooth):
    out, mask = noise.inject(smooth(), noise.NoiseParams(0.5, 1.0, 1))
    assert not (mask.kind == noise.PEPPER).any()
    out, mask = noise.inject(smooth(), noise.NoiseParams(0.5, 0.0, 1))
    assert not (mask.kind == noise.SALT).any()


@pytest.mark.parametrize("seed", [0, 1, 12345])
def test_density_concentration(seed):
    # binomial: mean 0.3 * 262144 = 78643.2, sigma = sqrt(n p (1-p)) = 234.63
    img = np.full((512, 512), 128, dtype=np.uint8)
    _, mask = noise.inject(img, noise.NoiseParams(0.3, 0.5, seed))
    assert abs(mask.count - 78643.2) <= 938.51


def test_inject_deterministic(smooth):
    p = noise.NoiseParams(0.3, 0.5, 77)
    a, ma = noise.inject(smooth(), p)
    b, mb = noise.inject(smooth(), p)
    assert a.tobytes() == b.tobytes()
    np.testing.assert_array_equal(ma.kind, mb.kind)
    c, _ = noise.inject(smooth(), noise.NoiseParams(0.3, 0.5, 78))
    assert a.tobytes() != c.tobytes()


def test_params_validation():
    with pytest.raises(ValueError):
        noise.NoiseParams(1.5)
    with pytest.raises(ValueError):
        noise.NoiseParams(0.5, -0.1)


def test_detect_defaults():
    img = np.array([[0, 255, 128]], dtype=np.uint8)
    mask = noise.detect(img)
    assert mask.kind.tolist() == [[noise.PEPPER, noise.SALT, noise.CLEAN]]
    assert noise.detect(np.full((4, 4), 128, dtype=np.uint8)).count == 0


def test_detect_closed_thresholds():
    img = np.array([[0, 5, 6, 249, 250, 255]], dtype=np.uint8)
    mask = noise.detect(img, 5, 250)
    assert mask.flags.tolist() == [[True, True, False, False, True, True]]


@pytest.mark.parametrize("t_p, t_s", [(10, 10), (20, 5), (-1, 255), (0, 256)])
def test_detect_bad_thresholds(t_p, t_s):
    with pytest.raises(ValueError):
        noise.detect(np.zeros((2, 2), dtype=np.uint8), t_p, t_s)


def test_detect_reproduces_injected_mask(smooth):
    clean = smooth((64, 64), seed=4)
    noisy, truth = noise.inject(clean, noise.NoiseParams(0.3, 0.5, 21))
    np.testing.assert_array_equal(noise.detect(noisy).kind, truth.kind)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0, 1), st.integers(0, 2**32 - 1))
def test_detect_recall_and_false_positives(img_seed, density, seed):
    clean = np.random.default_rng(img_seed).integers(0, 256, (16, 16)).astype(np.uint8)
    noisy, truth = noise.inject(clean, noise.NoiseParams(density, 0.5, seed))
    found = noise.detect(noisy)
    assert (found.flags | ~truth.flags).all()
    false_pos = found.flags & ~truth.flags
    assert np.isin(clean[false_pos], [0, 255]).all()


def test_mask_serialisation(smooth):
    _, mask = noise.inject(smooth((8, 8)), noise.NoiseParams(0.5, 0.5, 2))
    text = mask.to_csv()
    assert text.splitlines()[0] == "row,col,kind"
    back = noise.NoiseMask.from_csv(text, (8, 8))
    np.testing.assert_array_equal(back.kind, mask.kind)
    pgm = mask.to_pgm_array()
    assert set(np.unique(pgm)) <= {0, 255}
    np.testing.assert_array_equal(pgm == 255, mask.flags)


def test_estimate_thresholds():
    rng = np.random.default_rng(0)
    img = rng.integers(20, 236, (64, 64)).astype(np.uint8)
    assert noise.estimate_thresholds(img) == (0, 255)
    img.flat[:300] = 3
    img.flat[300:600] = 252
    assert noise.estimate_thresholds(img) == (3, 252)
