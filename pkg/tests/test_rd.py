import numpy as np
import pytest

from samv.amv import IterationControl
from samv.array import DomainError
from samv.rd import (
    CANONICAL_LAYOUT,
    RdImage,
    RdMethod,
    RdScene,
    Target,
    build_rd_dictionary,
    canonical_scene,
    detected_targets,
    image_peaks,
    p3_code,
    rd_image,
    sidelobe_level_db,
)


def test_p3_phases_length_four():
    s = p3_code(4)
    np.testing.assert_allclose(np.angle(s) % (2 * np.pi), [0.0, np.pi / 4, np.pi, np.pi / 4], atol=1e-12)
    np.testing.assert_allclose(np.abs(s), 1.0)


def test_p3_rejects_length_one():
    with pytest.raises(DomainError):
        p3_code(1)


def test_p3_zero_lag_autocorrelation():
    s = p3_code(30)
    assert abs(np.vdot(s, s)) == pytest.approx(30.0)


def test_dictionary_shape_and_norms():
    g = build_rd_dictionary(p3_code(6), 4, 3)
    assert g.dictionary.A.shape == (9, 12)
    np.testing.assert_allclose(np.linalg.norm(g.dictionary.A, axis=0), np.sqrt(6))
    np.testing.assert_allclose(g.dictionary.A[:6, g.column(0, 0)], p3_code(6))
    assert np.all(g.dictionary.A[6:, g.column(0, 0)] == 0)


def test_disjoint_support_is_orthogonal():
    L = 5
    g = build_rd_dictionary(p3_code(L), L + 1, 2)
    A = g.dictionary.A
    for f in range(2):
        assert np.vdot(A[:, g.column(0, 0)], A[:, g.column(L, f)]) == 0


def test_columns_pairwise_distinct():
    g = build_rd_dictionary(p3_code(4), 5, 4)
    A = g.dictionary.A
    K = A.shape[1]
    for i in range(K):
        for j in range(i + 1, K):
            assert not np.allclose(A[:, i], A[:, j])


def test_reshape_is_delay_major():
    g = build_rd_dictionary(p3_code(3), 2, 3)
    img = g.reshape(np.arange(6))
    assert img[1, 2] == g.column(1, 2) == 5


def test_matched_filter_single_target():
    g = build_rd_dictionary(p3_code(30), 20, 20)
    y = 3.0 * g.dictionary.A[:, g.column(7, 12)]
    img = rd_image("mf", g, y)
    assert np.unravel_index(np.argmax(img.power), img.power.shape) == (7, 12)


def test_matched_filter_energy_sanity_small_grid():
    g = build_rd_dictionary(p3_code(30), 10, 10)
    A = g.dictionary.A
    ref = 4.0  # ||2 a||^2 / L
    for k in range(A.shape[1]):
        total = rd_image("mf", g, 2.0 * A[:, k]).power.sum()
        assert ref / 10 <= total <= ref * 10


def test_matched_filter_energy_rayleigh_bound():
    """Image energy is y^H A A^H y / L^2, so it grows with the number of overlapping bins."""
    g = build_rd_dictionary(p3_code(30), 20, 20)
    A = g.dictionary.A
    ev = np.linalg.eigvalsh(A @ A.conj().T)
    y = 2.0 * A[:, g.column(4, 9)]
    total = rd_image("mf", g, y).power.sum()
    ref = np.vdot(y, y).real / 30
    assert total == pytest.approx((np.linalg.norm(A.conj().T @ y) ** 2) / 30**2)
    assert ev[0] / 30 <= total / ref <= ev[-1] / 30


@pytest.mark.parametrize("method", list(RdMethod))
def test_every_method_takes_one_snapshot(method):
    scene = RdScene(8, 5, 5, (Target(1, 2, 20.0), Target(3, 4, 15.0)), seed=3)
    g = scene.grid()
    img = rd_image(method, g, scene.observe(g), IterationControl(max_iters=100, record_states=False))
    assert img.power.shape == (5, 5)
    assert np.all(np.isfinite(img.power)) and np.all(img.power >= 0)


def test_observation_length_checked():
    g = build_rd_dictionary(p3_code(4), 3, 3)
    with pytest.raises(DomainError):
        rd_image("mf", g, np.zeros(5))


def test_unknown_method():
    with pytest.raises(DomainError, match="valid"):
        RdMethod.parse("capon")


def test_scene_rejects_targets_off_grid():
    with pytest.raises(DomainError):
        RdScene(8, 5, 5, (Target(5, 0, 10.0),))


def test_scene_observation_reproducible():
    scene = canonical_scene(5.0)
    np.testing.assert_array_equal(scene.observe(), scene.observe())


def test_canonical_layout():
    scene = canonical_scene(5.0)
    assert len(scene.targets) == len(CANONICAL_LAYOUT) == 9
    weak = [t for t in scene.targets if t.power_db == 5.0]
    assert len(weak) == 3
    for i, a in enumerate(CANONICAL_LAYOUT):
        for b in CANONICAL_LAYOUT[i + 1 :]:
            assert max(abs(a[0] - b[0]), abs(a[1] - b[1])) >= 3


def test_image_peaks_and_detection():
    power = np.zeros((6, 6))
    power[1, 1] = 100.0
    power[4, 4] = 1.0
    power[4, 1] = 1e-6
    assert image_peaks(power, 40.0).sum() == 2
    img = RdImage("x", power)
    found = detected_targets(img, [Target(2, 2, 0.0), Target(4, 4, 0.0), Target(4, 1, 0.0)], 40.0)
    assert found == [True, True, False]


def test_sidelobe_level():
    power = np.full((8, 8), 1e-3)
    power[2, 2] = 1.0
    power[7, 7] = 0.1
    img = RdImage("x", power)
    assert sidelobe_level_db(img, [Target(2, 2, 0.0)]) == pytest.approx(-10.0)
    assert sidelobe_level_db(img, [Target(2, 2, 0.0), Target(7, 7, 0.0)]) == pytest.approx(-30.0)
