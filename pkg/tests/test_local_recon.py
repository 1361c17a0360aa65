import numpy as np
import pytest

from fintact.calibration import BallSpec, calibrate_session
from fintact.errors import GridMismatch, SizeMismatch
from fintact.global_recon import (
    SurfaceCloud,
    fit_incline_profile,
    reconstruct_view_face,
    to_locally_undeformed_face,
)
from fintact.image import Frame, average_frames, binarize, extract_silhouette_edges, refine_edges_subpixel
from fintact.local_recon import (
    DepthMap,
    MappingPolynomial,
    apply_mapping,
    compose_contact_cloud,
    normalized_diff,
)
from fintact.simulator import FingerState, Press, Renderer, SceneConfig


def frame_of(arr):
    return Frame(pixels=np.asarray(arr, dtype=np.uint8))


# --- normalized_diff ---------------------------------------------------------


def test_diff_identity_is_zero():
    f = frame_of(np.full((20, 30), 150))
    out = normalized_diff(f, f)
    assert np.all(out.values == 0.0)
    assert np.all(out.valid)


def test_diff_arithmetic():
    live = frame_of(np.full((10, 10), 150))
    ref = frame_of(np.full((10, 10), 200))
    out = normalized_diff(live, ref)
    assert np.allclose(out.values, 0.25)


def test_diff_dark_reference_masked():
    live = frame_of(np.full((8, 8), 10))
    ref = frame_of(np.zeros((8, 8)))
    out = normalized_diff(live, ref)
    assert not out.valid.any()
    assert np.all(np.isfinite(out.values))


def test_diff_clamped_to_unit_interval():
    live = frame_of(np.full((8, 8), 250))
    ref = frame_of(np.full((8, 8), 100))
    out = normalized_diff(live, ref)
    assert np.all(out.values == 0.0)  # brighter live clamps at zero


def test_diff_size_mismatch():
    with pytest.raises(SizeMismatch):
        normalized_diff(frame_of(np.zeros((5, 5))), frame_of(np.zeros((6, 5))))


def test_diff_window():
    live = frame_of(np.full((20, 20), 100))
    ref = frame_of(np.full((20, 20), 200))
    out = normalized_diff(live, ref, window=((4, 6), (8, 10)))
    assert out.values.shape == (8, 10)
    assert out.origin == (4, 6)


# --- apply_mapping ---------------------------------------------------------


IDENTITY_MAP = MappingPolynomial(coeffs=np.array([0.0, 2.5]), domain=(0.0, 0.8))


def test_mapping_below_threshold_masked():
    from fintact.local_recon import DiffField

    vals = np.full((4, 4), 0.03)
    field = DiffField(values=vals, valid=np.ones((4, 4), bool), origin=(0, 0))
    dm = apply_mapping(field, IDENTITY_MAP, contact_threshold=0.04)
    assert not dm.mask.any()
    assert np.all(dm.depth == 0.0)


def test_mapping_monotone_larger_diff_deeper():
    from fintact.local_recon import DiffField

    vals = np.array([[0.1, 0.2, 0.4, 0.6]])
    field = DiffField(values=vals, valid=np.ones((1, 4), bool), origin=(0, 0))
    dm = apply_mapping(field, IDENTITY_MAP, contact_threshold=0.04)
    d = dm.depth[0]
    assert np.all(np.diff(d) >= 0)


def test_mapping_clamps_saturated_inputs():
    from fintact.local_recon import DiffField

    vals = np.array([[0.95]])
    field = DiffField(values=vals, valid=np.ones((1, 1), bool), origin=(0, 0))
    dm = apply_mapping(field, IDENTITY_MAP, contact_threshold=0.04)
    assert dm.depth[0, 0] == pytest.approx(2.5 * 0.8)  # domain edge value
    assert dm.saturated[0, 0]


def test_depthmap_invariants():
    with pytest.raises(ValueError):
        DepthMap(depth=np.array([[1.0]]), mask=np.array([[False]]))


# --- compose_contact_cloud ----------------------------------------------------


def flat_cloud(rows=6, cols=8, z=75.0):
    pts = np.zeros((rows, cols, 3))
    pts[..., 2] = z
    return SurfaceCloud(points=pts, valid=np.ones((rows, cols), bool), origin=(10, 20))


def test_compose_zero_depth_identity():
    luf = flat_cloud()
    dm = DepthMap(depth=np.zeros((6, 8)), mask=np.zeros((6, 8), bool), origin=(10, 20))
    out = compose_contact_cloud(luf, dm)
    assert np.array_equal(out.points, luf.points)


def test_compose_only_masked_pixels_move():
    luf = flat_cloud()
    depth = np.zeros((6, 8))
    mask = np.zeros((6, 8), bool)
    depth[2, 3] = 1.25
    mask[2, 3] = True
    out = compose_contact_cloud(luf, DepthMap(depth=depth, mask=mask, origin=(10, 20)))
    assert out.points[2, 3, 2] == pytest.approx(75.0 - 1.25)
    moved = np.abs(out.points[..., 2] - 75.0) > 0
    assert moved.sum() == 1


def test_compose_grid_mismatch():
    luf = flat_cloud()
    dm = DepthMap(depth=np.zeros((6, 8)), mask=np.zeros((6, 8), bool), origin=(0, 0))
    with pytest.raises(GridMismatch):
        compose_contact_cloud(luf, dm)


# --- end-to-end depth reconstruction ---------------------------------------------


@pytest.fixture(scope="module")
def calibrated():
    scene = SceneConfig()
    r = Renderer(scene)
    bend = (75.0, 0.0, 0.0)
    press = Press(30.0, 0.0, 4.0, 2.4)
    live = average_frames(r.render(FingerState(bend=bend, presses=(press,)), seed=1000 + i) for i in range(8))
    ref = average_frames(r.render(FingerState(bend=bend), seed=2000 + i) for i in range(8))
    _, mapping, _ = calibrate_session(live, ref, scene.intrinsics, BallSpec(4.0), scene.finger)
    return scene, r, mapping


def reconstruct_depth(scene, r, mapping, state, ref_state, seed):
    live = r.render(state, seed=seed)
    ref = r.render(ref_state, seed=seed + 5000)
    k = scene.intrinsics
    edges = refine_edges_subpixel(extract_silhouette_edges(binarize(live)), live)
    vf = reconstruct_view_face(edges, k, scene.finger)
    luf = to_locally_undeformed_face(vf, fit_incline_profile(edges, k, scene.finger), scene.finger)
    window = ((luf.origin[0], luf.origin[1]), luf.shape)
    diff = normalized_diff(live, ref, window=window)
    dm = apply_mapping(diff, mapping)
    return luf, dm


def test_mapping_inverts_brightness_law(calibrated):
    scene, r, mapping = calibrated
    d = np.linspace(0.2, 2.0, 31)
    err = np.abs(mapping(scene.brightness_drop(d)) - d)
    assert err.max() <= 0.1


def test_sphere_press_reconstruction(calibrated):
    scene, r, mapping = calibrated
    press = Press(s_mm=26.0, lateral_mm=3.0, radius_mm=4.0, depth_mm=1.5)
    bend = (76.0, 0.05, 0.0008)
    state = FingerState(bend=bend, presses=(press,))
    luf, dm = reconstruct_depth(scene, r, mapping, state, FingerState(bend=bend), seed=42)
    cloud = compose_contact_cloud(luf, dm)
    gt = r.ground_truth(state)
    # compare depth against ground truth on the shared grid
    dv = luf.origin[1] - gt.depth.origin[1]
    du = luf.origin[0] - gt.depth.origin[0]
    rows = min(dm.shape[0], gt.depth.shape[0] - dv)
    cols = min(dm.shape[1], gt.depth.shape[1] - du)
    est = dm.depth[:rows, :cols]
    ref_d = gt.depth.depth[dv : dv + rows, du : du + cols]
    both = dm.mask[:rows, :cols] & (ref_d > 0.1)
    rmse = np.sqrt(np.mean((est[both] - ref_d[both]) ** 2))
    assert rmse <= 0.1
    # reconstructed contact points lie on the pressing sphere
    center = r.press_center_3d(state, press)
    rr, cc = np.nonzero(both)
    vf_pts = (
        reconstruct_view_face(
            refine_edges_subpixel(
                extract_silhouette_edges(binarize(r.render(state, seed=42))), r.render(state, seed=42)
            ),
            scene.intrinsics,
            scene.finger,
        ).points[:rows, :cols][rr, cc]
    )
    luf_pts = luf.points[:rows, :cols][rr, cc]
    scale = luf_pts[:, 2] / vf_pts[:, 2]
    pts = np.stack(
        [vf_pts[:, 0] * scale, vf_pts[:, 1] * scale, cloud.points[:rows, :cols][rr, cc, 2]], axis=1
    )
    dist = np.linalg.norm(pts - center, axis=1)
    assert np.percentile(np.abs(dist - press.radius_mm), 95) < 0.15


def test_locality_outside_mask(calibrated):
    scene, r, mapping = calibrated
    press = Press(s_mm=30.0, lateral_mm=0.0, radius_mm=4.0, depth_mm=1.2)
    bend = (75.0, 0.0, 0.0)
    state = FingerState(bend=bend, presses=(press,))
    luf, dm = reconstruct_depth(scene, r, mapping, state, FingerState(bend=bend), seed=7)
    cloud = compose_contact_cloud(luf, dm)
    outside = ~dm.mask
    assert np.array_equal(cloud.points[outside], luf.points[outside])
