import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from ocrdir.field import GridSpec
from ocrdir.sampler import gradient_at, image_gradient, sample_bicubic


@pytest.fixture
def grid():
    return GridSpec(16, 16)


def test_identity_reproduces_nodes_exactly(grid):
    rng = np.random.default_rng(11)
    img = rng.uniform(0, 1, grid.shape)
    out = sample_bicubic(grid, img, grid.cell_centers())
    np.testing.assert_array_equal(out, img)


@pytest.mark.parametrize("m,n", [(7, 7), (49, 49), (13, 31)])
def test_identity_reproduces_nodes_awkward_sizes(m, n):
    # sizes whose 1/m is inexact in binary must still reproduce nodes bitwise
    g = GridSpec(m, n)
    rng = np.random.default_rng(m * 100 + n)
    img = rng.uniform(0, 1, g.shape)
    out = sample_bicubic(g, img, g.cell_centers())
    np.testing.assert_array_equal(out, img)


def test_linear_image_reproduced_between_nodes(grid):
    # Catmull-Rom reproduces affine data wherever no tap is reflected,
    # i.e. at least two nodes in from the boundary
    x = grid.cell_centers()
    img = 0.3 * x[0] + 0.5 * x[1] + 0.1
    rng = np.random.default_rng(5)
    pts = np.stack(
        [
            rng.uniform(2 * grid.h_x, 1.0 - 2 * grid.h_x, (40,)),
            rng.uniform(2 * grid.h_y, 1.0 - 2 * grid.h_y, (40,)),
        ]
    )
    want = 0.3 * pts[0] + 0.5 * pts[1] + 0.1
    np.testing.assert_allclose(sample_bicubic(grid, img, pts), want, atol=1e-10)


def test_out_of_domain_clamps_to_node_range(grid):
    rng = np.random.default_rng(3)
    img = rng.uniform(0, 1, grid.shape)
    far = np.array([[-0.5], [0.5]])
    clamped = np.array([[grid.h_x], [0.5]])
    np.testing.assert_array_equal(
        sample_bicubic(grid, img, far), sample_bicubic(grid, img, clamped)
    )
    far_hi = np.array([[2.0], [0.5]])
    clamped_hi = np.array([[1.0], [0.5]])
    np.testing.assert_array_equal(
        sample_bicubic(grid, img, far_hi), sample_bicubic(grid, img, clamped_hi)
    )


def test_point_shapes_are_preserved(grid):
    img = np.zeros(grid.shape)
    pts = np.zeros((2, 3, 5)) + 0.5
    assert sample_bicubic(grid, img, pts).shape == (3, 5)
    assert gradient_at(grid, img, pts).shape == (2, 3, 5)


@settings(max_examples=40, deadline=None)
@given(
    img=hnp.arrays(
        np.float64,
        (8, 8),
        elements=st.floats(0, 1, allow_nan=False, allow_infinity=False),
    ),
    px=st.floats(0, 1),
    py=st.floats(0, 1),
)
def test_overshoot_bound(img, px, py):
    # 2D Catmull-Rom worst case for [0,1] data is (9/8)^2 + (1/8)^2 = 1.28125
    g = GridSpec(8, 8)
    val = sample_bicubic(g, img, np.array([[px], [py]]))[0]
    assert -0.28125 - 1e-12 <= val <= 1.28125 + 1e-12


def test_image_gradient_of_ramp(grid):
    x = grid.cell_centers()
    img = x[0].copy()
    gi = image_gradient(grid, img)
    np.testing.assert_allclose(gi[0][1:-1, :], 1.0, atol=1e-12)
    np.testing.assert_allclose(gi[0][0, :], 0.5, atol=1e-12)
    np.testing.assert_allclose(gi[0][-1, :], 0.5, atol=1e-12)
    np.testing.assert_allclose(gi[1], 0.0, atol=1e-12)


def test_gradient_at_matches_grid_gradient_at_nodes(grid):
    rng = np.random.default_rng(17)
    img = rng.uniform(0, 1, grid.shape)
    at_nodes = gradient_at(grid, img, grid.cell_centers())
    np.testing.assert_array_equal(at_nodes, image_gradient(grid, img))


def test_gradient_at_smooth_field_accuracy():
    g = GridSpec(64, 64)
    x = g.cell_centers()
    img = np.sin(np.pi * x[0]) * np.sin(np.pi * x[1])
    rng = np.random.default_rng(23)
    pts = np.stack([rng.uniform(0.2, 0.8, (50,)), rng.uniform(0.2, 0.8, (50,))])
    got = gradient_at(g, img, pts)
    want = np.stack(
        [
            np.pi * np.cos(np.pi * pts[0]) * np.sin(np.pi * pts[1]),
            np.pi * np.sin(np.pi * pts[0]) * np.cos(np.pi * pts[1]),
        ]
    )
    np.testing.assert_allclose(got, want, atol=5e-3)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), a=st.floats(-4, 4), b=st.floats(-4, 4))
def test_sampling_linear_in_image(seed, a, b):
    g = GridSpec(8, 8)
    rng = np.random.default_rng(seed)
    img1 = rng.uniform(0, 1, g.shape)
    img2 = rng.uniform(0, 1, g.shape)
    pts = np.stack([rng.uniform(0, 1, (10,)), rng.uniform(0, 1, (10,))])
    lhs = sample_bicubic(g, a * img1 + b * img2, pts)
    rhs = a * sample_bicubic(g, img1, pts) + b * sample_bicubic(g, img2, pts)
    np.testing.assert_allclose(lhs, rhs, atol=1e-10 * (1 + abs(a) + abs(b)))
