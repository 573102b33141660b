import numpy as np
import pytest

from spcdi.analysis import depth_to_phase
from spcdi.errors import InvalidArgument
from spcdi.objects import (
    IMAGE_NAMES,
    NATURAL_PAIRS,
    etched_target,
    flat_object,
    image,
    natural_object,
    random_object,
    text_mask,
)


def test_images_load_in_unit_range():
    for name in IMAGE_NAMES:
        img = image(name, 16)
        assert img.shape == (16, 16)
        assert img.min() == 0 and img.max() == 1


def test_pairs_use_known_images():
    assert len(NATURAL_PAIRS) == 10
    assert all(a in IMAGE_NAMES and p in IMAGE_NAMES for a, p in NATURAL_PAIRS)


def test_natural_object_ranges():
    o = natural_object(32, amp_floor=0.2, phase_range=2.0)
    assert o.amplitude.min() == pytest.approx(0.2) and o.amplitude.max() == pytest.approx(1.0)
    assert o.phase.min() == pytest.approx(0.0, abs=1e-12) and o.phase.max() == pytest.approx(2.0)


def test_unknown_image():
    with pytest.raises(InvalidArgument):
        image("barbara", 8)


def test_flat_and_random():
    assert np.array_equal(flat_object(4).data, np.ones((4, 4)))
    a, b = random_object(8, 1), random_object(8, 1)
    assert a == b and a != random_object(8, 2)
    assert a.amplitude.min() >= 0.2


def test_etched_target_phase_step():
    o = etched_target(64, 400e-9, 488e-9, 0.463)
    mask = text_mask(64)
    step = depth_to_phase(400e-9, 488e-9, 0.463)
    assert np.allclose(o.phase[mask], step)
    assert np.allclose(o.phase[~mask], 0)
    assert np.allclose(o.amplitude, 1)
    assert 0.05 < mask.mean() < 0.5


def test_text_too_small():
    with pytest.raises(InvalidArgument):
        text_mask(12)
