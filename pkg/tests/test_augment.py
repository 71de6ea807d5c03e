import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from models.augment import (
    MASK_TOKEN, METHODS, AugmentationConfig, apply_method, augment_crop, augment_mask,
    augment_reorder, choose_methods, sample_views,
)
from utils.errors import ConfigError
from utils.helpers import make_rng

HISTORY = list(range(10))


def test_crop_keeps_a_contiguous_slice(rng):
    view = augment_crop(HISTORY, 0.7, rng)
    assert len(view) == 7
    assert view == list(range(view[0], view[0] + 7))


def test_mask_replaces_exactly_floor_ratio_positions(rng):
    view = augment_mask(HISTORY, 0.3, rng)
    assert len(view) == 10
    assert view.count(MASK_TOKEN) == 3
    assert all(v == i for i, v in enumerate(view) if v != MASK_TOKEN)


def test_reorder_shuffles_one_window(rng):
    view = augment_reorder(HISTORY, 0.3, rng)
    assert sorted(view) == HISTORY
    moved = [i for i, v in enumerate(view) if v != i]
    if moved:
        assert moved[-1] - moved[0] < 3


def test_single_document_history(rng):
    assert augment_crop([5], 0.7, rng) == [5]
    assert augment_mask([5], 0.3, rng) == [5]
    assert augment_reorder([5], 0.3, rng) == [5]


def test_ratio_one_masks_everything(rng):
    assert augment_mask(HISTORY, 1.0, rng) == [MASK_TOKEN] * 10


@pytest.mark.parametrize("ratio", [0.0, -0.1, 1.5])
def test_ratios_outside_unit_interval(ratio):
    with pytest.raises(ConfigError):
        AugmentationConfig(crop_ratio=ratio)


def test_two_distinct_methods(rng):
    for _ in range(20):
        first, second = choose_methods(rng)
        assert first != second
        assert {first, second} <= set(METHODS)


def test_unknown_method(rng):
    with pytest.raises(ConfigError):
        apply_method("rotate", HISTORY, AugmentationConfig(), rng)


def test_views_are_deterministic_per_seed():
    config = AugmentationConfig()
    assert sample_views(HISTORY, config, make_rng(3)) == sample_views(HISTORY, config, make_rng(3))


@settings(deadline=None, max_examples=60)
@given(
    n=st.integers(min_value=1, max_value=40),
    ratio=st.floats(min_value=0.05, max_value=1.0),
    seed=st.integers(min_value=0, max_value=10_000),
)
def test_view_lengths(n, ratio, seed):
    rng = make_rng(seed)
    history = list(range(n))
    crop = augment_crop(history, ratio, rng)
    assert 1 <= len(crop) <= n
    masked = augment_mask(history, ratio, rng)
    assert len(masked) == n
    assert masked.count(MASK_TOKEN) <= n
    assert sorted(augment_reorder(history, ratio, rng)) == history
