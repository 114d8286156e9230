import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from pdeid.core import GridField, PdeSpec, normalize_field
from pdeid.motion import OFFSETS, MotionField, best_offsets, motion_magnitude, motion_vectors
from pdeid.solver import solve

from .oracles import brute_motion_magnitude, brute_offsets, translating_field


def offsets_of(u):
    return np.array(OFFSETS)[best_offsets(u)]


def test_offsets_are_ordered_nearest_first():
    assert OFFSETS[:4] == ((-1, 0), (0, -1), (0, 1), (1, 0))
    assert len(OFFSETS) == 8 and (0, 0) not in OFFSETS


def test_unit_translation_in_x():
    mv = motion_vectors(GridField(translating_field()))
    assert np.all(mv.vx == 1.0) and np.all(mv.vy == 0.0)
    assert motion_magnitude(mv) == 1.0


def test_static_constant_field_pinned():
    mv = motion_vectors(GridField(np.ones((4, 5, 5))))
    # all offsets tie; the first in tie-break order is (-1, 0)
    assert np.all(mv.vx == -1.0) and np.all(mv.vy == 0.0)
    assert motion_magnitude(mv) == 1.0


def test_hand_field_matches_exhaustive_search():
    u = np.array(
        [
            [[0, 1, 2], [3, 4, 5], [6, 7, 8]],
            [[4.2, 9, 9], [9, 9, 3.9], [9, 9, 9]],
        ],
        dtype=float,
    )
    np.testing.assert_array_equal(offsets_of(u), brute_offsets(u))
    assert tuple(offsets_of(u)[0, 0, 0]) == (1, 0)


def test_random_fields_match_exhaustive_search():
    rng = np.random.default_rng(42)
    for _ in range(100):
        u = rng.random((3, 5, 5))
        np.testing.assert_array_equal(offsets_of(u), brute_offsets(u))
        assert motion_magnitude(motion_vectors(GridField(u))) == pytest.approx(brute_motion_magnitude(u), rel=1e-14)


@settings(max_examples=50)
@given(arrays(np.int64, (3, 5, 5), elements=st.integers(0, 4)))
def test_tied_integer_fields_match_exhaustive_search(u):
    u = u.astype(float)
    np.testing.assert_array_equal(offsets_of(u), brute_offsets(u))


def test_alternating_vectors_norm_before_average():
    mv = MotionField(np.array([1.0, -1.0, 1.0, -1.0]), np.zeros(4))
    assert motion_magnitude(mv) == 1.0


@given(arrays(np.int64, (3, 5, 5), elements=st.integers(-50, 50)), st.integers(-1000, 1000))
def test_invariant_to_global_constant(u, k):
    u = u.astype(float)
    a = motion_vectors(GridField(u))
    b = motion_vectors(GridField(u + k))
    np.testing.assert_array_equal(a.vectors, b.vectors)


@settings(max_examples=50)
@given(arrays(np.float64, (4, 6, 6), elements=st.floats(-1e3, 1e3)))
def test_magnitude_bounded(u):
    m = motion_magnitude(motion_vectors(GridField(u)))
    assert 0 <= m <= np.sqrt(2) + 1e-12


def test_rot90_rotates_vectors():
    rng = np.random.default_rng(3)
    for _ in range(20):
        u = rng.random((4, 7, 7))
        a = motion_vectors(GridField(u))
        b = motion_vectors(GridField(np.rot90(u, axes=(1, 2)).copy()))
        # counter-clockwise rotation of (row, col) arrays maps (vx, vy) -> (vy, -vx)
        np.testing.assert_allclose(b.vx, a.vy, atol=1e-12)
        np.testing.assert_allclose(b.vy, -a.vx, atol=1e-12)


def test_convection_raises_motion_over_matched_diffusion():
    conv, diff = [], []
    for c, bc in itertools.product((1, 11), itertools.product((1.0, 6.0), repeat=3)):
        bcs = (*bc, 0.1)
        f, _ = normalize_field(solve(PdeSpec(e=0, d=1, c=c, bc=bcs)))
        diff.append(motion_magnitude(motion_vectors(f)))
        for b in ((70, 70), (130, 130), (70, 130)):
            f, _ = normalize_field(solve(PdeSpec(e=0, d=1, c=c, bx=b[0], by=b[1], bc=bcs)))
            conv.append(motion_magnitude(motion_vectors(f)))
    assert np.mean(conv) > np.mean(diff)
