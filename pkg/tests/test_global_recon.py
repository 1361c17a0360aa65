import numpy as np
import pytest

from fintact.errors import DegenerateWidth, ExtremeIncline, InsufficientRows
from fintact.geometry import CameraIntrinsics
from fintact.global_recon import (
    FingerConfig,
    fit_incline_profile,
    reconstruct_view_face,
    solve_edge_depth,
    to_locally_undeformed_face,
)
from fintact.image import EdgePair, binarize, extract_silhouette_edges, refine_edges_subpixel
from fintact.simulator import FingerState, Renderer, walk_states

K = CameraIntrinsics(fx=1000.0, fy=1000.0, cx=480.0, cy=270.0, width=960, height=540)
CFG = FingerConfig()


def synthetic_edges(z_of_row, rows, k=K, w=CFG.width_mm):
    """Edge pair whose implied per-row depth is exactly z_of_row."""
    z = np.array([z_of_row(v) for v in rows], dtype=float)
    half = w * k.fx / z / 2.0
    return EdgePair(rows=np.asarray(rows), left_u=k.cx - half, right_u=k.cx + half)


# --- solve_edge_depth -------------------------------------------------------


def test_closed_form_depth():
    # gap of 500 px with f=1000 px and W=20 mm puts the edge at 40 mm
    z = solve_edge_depth((100.0, 50.0), (600.0, 50.0), K, width_mm=20.0)
    assert z == pytest.approx(40.0)


def test_depth_degenerate_gap():
    with pytest.raises(DegenerateWidth):
        solve_edge_depth((100.0, 50.0), (100.5, 50.0), K, width_mm=20.0)


def test_depth_requires_shared_row():
    with pytest.raises(DegenerateWidth):
        solve_edge_depth((100.0, 50.0), (600.0, 51.0), K, width_mm=20.0)


def test_depth_scales_with_width():
    a = solve_edge_depth((100.0, 0.0), (500.0, 0.0), K, width_mm=10.0)
    b = solve_edge_depth((100.0, 0.0), (500.0, 0.0), K, width_mm=25.0)
    assert b == pytest.approx(2.5 * a)


def test_depth_on_simulated_bend(scene, renderer):
    state = FingerState(bend=(75.0, 0.12, -0.001))
    frame = renderer.render(state, seed=3)
    edges = refine_edges_subpixel(extract_silhouette_edges(binarize(frame)), frame)
    gt = renderer.ground_truth(state)
    gt_rows = {v: gt.view_face.points[i, :, 2].max() for i, v in enumerate(
        range(gt.view_face.origin[1], gt.view_face.origin[1] + gt.view_face.shape[0]))}
    k = scene.intrinsics
    errs = []
    for i, v in enumerate(edges.rows):
        if v not in gt_rows:
            continue
        z = solve_edge_depth((edges.left_u[i], v), (edges.right_u[i], v), k, scene.finger.width_mm)
        errs.append(abs(z - gt_rows[v]))
    assert np.max(errs) < 0.5


# --- reconstruct_view_face ----------------------------------------------------


def test_flat_face_reconstruction():
    rows = np.arange(100, 400)
    edges = synthetic_edges(lambda v: 75.0, rows)
    cloud = reconstruct_view_face(edges, K, CFG)
    z = cloud.points[..., 2][cloud.valid]
    assert np.allclose(z, 75.0, atol=1e-9)


def test_width_conservation():
    rows = np.arange(50, 450)
    edges = synthetic_edges(lambda v: 70.0 + 0.03 * (v - 50), rows)
    cloud = reconstruct_view_face(edges, K, CFG)
    for i in range(0, cloud.shape[0], 37):
        row_valid = cloud.valid[i]
        pts = cloud.points[i][row_valid]
        w = np.linalg.norm(pts[-1] - pts[0])
        # end cells sit on the pixel lattice, not exactly on the edge; check
        # the analytic edge pair instead
        z = pts[0, 2]
        gap = edges.right_u[i] - edges.left_u[i]
        assert gap * z / K.fx == pytest.approx(CFG.width_mm, abs=1e-6)


def test_row_points_collinear():
    rows = np.arange(100, 300)
    edges = synthetic_edges(lambda v: 80.0 - 0.02 * v, rows)
    cloud = reconstruct_view_face(edges, K, CFG)
    i = 50
    pts = cloud.points[i][cloud.valid[i]]
    d = pts[-1] - pts[0]
    d = d / np.linalg.norm(d)
    rel = pts - pts[0]
    cross = np.linalg.norm(np.cross(rel, d), axis=-1)
    assert np.max(cross) < 1e-9


def test_reconstruction_scales_with_width():
    rows = np.arange(100, 300)
    edges = synthetic_edges(lambda v: 75.0, rows)
    a = reconstruct_view_face(edges, K, FingerConfig(width_mm=25.0))
    b = reconstruct_view_face(edges, K, FingerConfig(width_mm=50.0))
    za = a.points[..., 2][a.valid]
    zb = b.points[..., 2][b.valid]
    assert np.allclose(zb, 2.0 * za, atol=1e-9)


def test_reconstruction_vs_simulator_rmse(scene, renderer):
    rmse_all = []
    for i, state in enumerate(walk_states(scene, 12, seed=99)):
        frame = renderer.render(state, seed=500 + i)
        edges = refine_edges_subpixel(extract_silhouette_edges(binarize(frame)), frame)
        cloud = reconstruct_view_face(edges, scene.intrinsics, scene.finger)
        gt = renderer.ground_truth(state)
        # align grids via origins
        dv = cloud.origin[1] - gt.view_face.origin[1]
        du = cloud.origin[0] - gt.view_face.origin[0]
        r0 = max(0, -dv)
        c0 = max(0, -du)
        rows = min(cloud.shape[0] - r0, gt.view_face.shape[0] - (r0 + dv))
        cols = min(cloud.shape[1] - c0, gt.view_face.shape[1] - (c0 + du))
        rec = cloud.points[r0 : r0 + rows, c0 : c0 + cols]
        ref = gt.view_face.points[r0 + dv : r0 + dv + rows, c0 + du : c0 + du + cols]
        both = cloud.valid[r0 : r0 + rows, c0 : c0 + cols] & gt.view_face.valid[
            r0 + dv : r0 + dv + rows, c0 + du : c0 + du + cols
        ]
        err = np.linalg.norm((rec - ref)[both], axis=-1)
        rmse_all.append(np.sqrt(np.mean(err**2)))
    assert float(np.mean(rmse_all)) < 0.5


# --- incline profile -----------------------------------------------------------


def test_straight_finger_zero_incline():
    rows = np.arange(100, 400)
    edges = synthetic_edges(lambda v: 75.0, rows)
    prof = fit_incline_profile(edges, K, CFG)
    assert np.max(np.abs(prof.theta)) < 1e-3


def test_incline_matches_analytic_derivative(scene, renderer):
    state = FingerState(bend=(75.0, 0.0, 0.002))
    frame = renderer.render(state, seed=11)
    edges = refine_edges_subpixel(extract_silhouette_edges(binarize(frame)), frame)
    prof = fit_incline_profile(edges, scene.intrinsics, scene.finger)
    # compare against the analytic slope at each row's arc position
    z, s, rows_on, _, _ = renderer._face_geometry(state)
    theta_true = np.arctan(state.slope_at(s[edges.rows]))
    assert np.max(np.abs(prof.theta - theta_true)) < 0.02


def test_incline_fit_residual():
    rows = np.arange(60, 480)
    edges = synthetic_edges(lambda v: 70.0 + 1e-4 * (v - 60) ** 1.5, rows)
    prof = fit_incline_profile(edges, K, CFG)
    z = CFG.width_mm * K.fx / (edges.right_u - edges.left_u)
    s = z * (edges.rows - K.cy) / K.fy
    resid = np.abs(prof.poly(s) - z)
    assert np.max(resid) < 0.2


def test_incline_insufficient_rows():
    edges = synthetic_edges(lambda v: 75.0, np.arange(100, 103))
    with pytest.raises(InsufficientRows):
        fit_incline_profile(edges, K, CFG, degree=4)


# --- locally undeformed face ------------------------------------------------------


def test_luf_flat_offset():
    rows = np.arange(100, 400)
    edges = synthetic_edges(lambda v: 75.0, rows)
    vf = reconstruct_view_face(edges, K, CFG)
    prof = fit_incline_profile(edges, K, CFG)
    luf = to_locally_undeformed_face(vf, prof, CFG)
    dz = (luf.points[..., 2] - vf.points[..., 2])[vf.valid]
    assert np.allclose(dz, CFG.layer_thickness_mm, atol=1e-6)
    assert np.allclose(luf.points[..., :2], vf.points[..., :2])


def test_luf_60_degree_offset():
    # cos(60 deg) = 0.5 doubles the layer offset
    rows = np.arange(100, 300)
    edges = synthetic_edges(lambda v: 75.0, rows)
    vf = reconstruct_view_face(edges, K, CFG)
    prof = fit_incline_profile(edges, K, CFG)
    theta = np.full(vf.shape[0], np.deg2rad(60.0))
    from fintact.global_recon import InclineProfile

    prof60 = InclineProfile(poly=prof.poly, theta=theta, v0=prof.v0)
    luf = to_locally_undeformed_face(vf, prof60, CFG)
    dz = (luf.points[..., 2] - vf.points[..., 2])[vf.valid]
    assert np.allclose(dz, 2.0 * CFG.layer_thickness_mm, atol=1e-9)


def test_luf_extreme_incline_rejected():
    rows = np.arange(100, 300)
    edges = synthetic_edges(lambda v: 75.0, rows)
    vf = reconstruct_view_face(edges, K, CFG)
    prof = fit_incline_profile(edges, K, CFG)
    from fintact.global_recon import InclineProfile

    steep = InclineProfile(poly=prof.poly, theta=np.full(vf.shape[0], 1.38), v0=prof.v0)
    with pytest.raises(ExtremeIncline):
        to_locally_undeformed_face(vf, steep, CFG)
