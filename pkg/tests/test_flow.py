import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from covact.flow import FlowField, FlowParams, dump_flow, estimate_flow, flow_derivatives, spatial_gradient


def gaussian_blob(cx, cy, shape=(48, 48), sigma=5.0):
    y, x = np.mgrid[0 : shape[0], 0 : shape[1]].astype(float)
    return 255.0 * np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2 * sigma**2))


def stencil_oracle(a):
    """d/dx and d/dy by explicit loops: central inside, one-sided at borders."""
    H, W = a.shape
    dx = np.zeros_like(a)
    dy = np.zeros_like(a)
    for i in range(H):
        for j in range(W):
            if j == 0:
                dx[i, j] = a[i, 1] - a[i, 0]
            elif j == W - 1:
                dx[i, j] = a[i, W - 1] - a[i, W - 2]
            else:
                dx[i, j] = (a[i, j + 1] - a[i, j - 1]) / 2
            if i == 0:
                dy[i, j] = a[1, j] - a[0, j]
            elif i == H - 1:
                dy[i, j] = a[H - 1, j] - a[H - 2, j]
            else:
                dy[i, j] = (a[i + 1, j] - a[i - 1, j]) / 2
    return dx, dy


def test_identical_frames_give_zero_flow(rng):
    f = rng.uniform(0, 255, (20, 30))
    flow = estimate_flow(f, f)
    assert np.max(np.abs(flow.u)) < 1e-6
    assert np.max(np.abs(flow.v)) < 1e-6


def test_uniform_frames_give_zero_flow():
    a = np.full((16, 16), 80.0)
    b = np.full((16, 16), 80.0)
    flow = estimate_flow(a, b)
    assert np.all(flow.u == 0) and np.all(flow.v == 0)


def test_translated_blob_recovers_shift():
    a, b = gaussian_blob(23, 24), gaussian_blob(24, 24)
    flow = estimate_flow(a, b)
    support = a > 0.1 * 255
    assert abs(flow.u[support].mean() - 1.0) <= 0.25
    assert abs(flow.v[support].mean()) <= 0.25


def test_vertical_shift_recovers_v():
    a, b = gaussian_blob(24, 23), gaussian_blob(24, 24)
    flow = estimate_flow(a, b)
    support = a > 0.1 * 255
    assert abs(flow.v[support].mean() - 1.0) <= 0.25
    assert abs(flow.u[support].mean()) <= 0.25


def test_nonconvergence_flag():
    a, b = gaussian_blob(23, 24), gaussian_blob(24, 24)
    flow = estimate_flow(a, b, FlowParams(max_iterations=3))
    assert not flow.converged and flow.iterations == 3
    assert np.all(np.isfinite(flow.u))


@pytest.mark.parametrize("a,b", [((10, 10), (10, 11)), ((2, 2), (2, 2))])
def test_estimate_flow_rejects_bad_shapes(a, b):
    with pytest.raises(ValueError):
        estimate_flow(np.zeros(a), np.zeros(b))


def test_spatial_gradient_matches_loop_oracle(rng):
    a = rng.normal(size=(7, 9))
    dx, dy = spatial_gradient(a)
    ox, oy = stencil_oracle(a)
    np.testing.assert_allclose(dx, ox, atol=1e-12)
    np.testing.assert_allclose(dy, oy, atol=1e-12)


def test_constant_flow_has_zero_derivatives():
    flows = [FlowField(np.full((6, 8), 0.7), np.full((6, 8), -0.2)) for _ in range(3)]
    for k in range(3):
        der = flow_derivatives(flows, k)
        for arr in (der.du_dx, der.du_dy, der.dv_dx, der.dv_dy, der.du_dt, der.dv_dt):
            assert np.all(arr == 0)


def test_linear_field_derivatives():
    y, x = np.mgrid[0:10, 0:12].astype(float)
    flows = [FlowField(x, y), FlowField(x, y)]
    der = flow_derivatives(flows, 0)
    inner = (slice(1, -1), slice(1, -1))
    np.testing.assert_allclose(der.du_dx[inner], 1.0)
    np.testing.assert_allclose(der.dv_dy[inner], 1.0)
    np.testing.assert_allclose(der.du_dy[inner], 0.0)
    np.testing.assert_allclose(der.dv_dx[inner], 0.0)


def smooth_field(rng, shape=(9, 11)):
    y, x = np.mgrid[0 : shape[0], 0 : shape[1]].astype(float)
    c = rng.normal(size=6)
    return c[0] * np.sin(0.3 * x + c[1]) + c[2] * np.cos(0.2 * y + c[3]) + c[4] * x * y / 50 + c[5]


def test_random_smooth_field_matches_stencil_oracle(rng):
    flows = [FlowField(smooth_field(rng), smooth_field(rng)) for _ in range(4)]
    for k in range(4):
        der = flow_derivatives(flows, k)
        ux, uy = stencil_oracle(flows[k].u)
        vx, vy = stencil_oracle(flows[k].v)
        np.testing.assert_allclose(der.du_dx, ux, atol=1e-10)
        np.testing.assert_allclose(der.du_dy, uy, atol=1e-10)
        np.testing.assert_allclose(der.dv_dx, vx, atol=1e-10)
        np.testing.assert_allclose(der.dv_dy, vy, atol=1e-10)
        nxt, cur = (flows[k + 1], flows[k]) if k < 3 else (flows[3], flows[2])
        np.testing.assert_allclose(der.du_dt, nxt.u - cur.u, atol=1e-10)
        np.testing.assert_allclose(der.dv_dt, nxt.v - cur.v, atol=1e-10)


def test_derivatives_need_two_fields():
    with pytest.raises(ValueError):
        flow_derivatives([FlowField(np.zeros((3, 3)), np.zeros((3, 3)))], 0)


@settings(max_examples=30, deadline=None)
@given(st.integers(-6, 6), st.integers(0, 2**16))
def test_derivative_linearity(power, seed):
    # powers of two scale without rounding, so equality is exact
    rng = np.random.default_rng(seed)
    alpha = 2.0**power
    flows = [FlowField(rng.normal(size=(5, 6)), rng.normal(size=(5, 6))) for _ in range(3)]
    scaled = [f.scaled(alpha) for f in flows]
    for k in range(3):
        a, b = flow_derivatives(flows, k), flow_derivatives(scaled, k)
        for name in ("du_dx", "du_dy", "dv_dx", "dv_dy", "du_dt", "dv_dt"):
            assert np.array_equal(getattr(b, name), alpha * getattr(a, name))


def test_derivative_linearity_general_scale(rng):
    flows = [FlowField(rng.normal(size=(5, 6)), rng.normal(size=(5, 6))) for _ in range(3)]
    alpha = -1.37
    a, b = flow_derivatives(flows, 1), flow_derivatives([f.scaled(alpha) for f in flows], 1)
    np.testing.assert_allclose(b.du_dt, alpha * a.du_dt, rtol=1e-14, atol=1e-15)


def test_border_completeness(rng):
    flows = [FlowField(rng.normal(size=(4, 4)), rng.normal(size=(4, 4))) for _ in range(2)]
    der = flow_derivatives(flows, 1)
    g = der.gradient_tensor()
    assert g.shape == (4, 4, 2, 2)
    assert np.all(np.isfinite(g))


def test_dump_flow_roundtrip(tmp_path, rng):
    from covact.io import read_pnm

    flow = FlowField(rng.normal(size=(6, 7)), rng.normal(size=(6, 7)))
    dump_flow(flow, tmp_path / "f")
    rows = (tmp_path / "f_scale.txt").read_text().split("\n")[1:3]
    for row, comp in zip(rows, (flow.u, flow.v)):
        name, off, scale = row.split()
        pix = read_pnm(tmp_path / f"f_{name}.pgm").astype(float)
        np.testing.assert_allclose(float(off) + pix * float(scale), comp, atol=float(scale) / 2 + 1e-12)
