"""Invariant machinery checks against a hand-solved line-family model.

For S^1 = x1 - x3*y3, S^2 = x2 - x3*y3^2/2 everything is computable by hand:

    S^1_x = (1, 0, -y3)       S^1_{x y3} = (0, 0, -1)
    S^2_x = (0, 1, -y3^2/2)   S^2_{x y3} = (0, 0, -y3)

    Delta_1 = -1   Delta_2 = -y3   Gamma_1 = Gamma_2 = 0
    d_{y3}Delta_1 = 0   d_{y3}Delta_2 = -1   kappa = 1

    Xi      = (y3, -1, -y3^2/2)
    Xi'     = (1, 0, -y3)
    Xi''    = (0, 0, -1)        det(Xi, Xi', Xi'') = -1
"""

import numpy as np

from foldlab.canrel import (
    CheckReport,
    DefiningModel,
    cone_frame,
    det3,
    det_piL,
    fold_data,
    kappa_cross_check,
    model_jets,
    nondegeneracy_scan,
    principal_curvature,
    verify_curvature_identity,
    verify_kernel_field_identity,
)
from foldlab.jets import Box, ScalarField
from foldlab.models import make_xray_model

BOX = Box(lo=(-0.4, -0.4, -0.4, -0.5), hi=(0.4, 0.4, 0.4, 0.5))


def line_model():
    return make_xray_model((0.0, 0.0, 0.5), beta=0.0, domain=BOX)


def sample(n, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-0.3, 0.3, size=(n, 3))
    y3 = rng.uniform(-0.4, 0.4, size=n)
    return x, y3


def test_det3_matches_linalg():
    rng = np.random.default_rng(1)
    m = rng.normal(size=(40, 3, 3))
    got = det3(m[:, :, 0], m[:, :, 1], m[:, :, 2])
    want = np.linalg.det(m)
    assert np.max(np.abs(got - want)) < 1e-12


def test_line_family_invariants():
    model = line_model()
    x, y3 = sample(50)
    fd = fold_data(model, x, y3, mode="closed")
    assert np.max(np.abs(fd.delta1 + 1.0)) < 1e-12
    assert np.max(np.abs(fd.delta2 + y3)) < 1e-12
    assert np.max(np.abs(fd.gamma1)) < 1e-12
    assert np.max(np.abs(fd.gamma2)) < 1e-12
    assert np.max(np.abs(fd.d_delta1)) < 1e-12
    assert np.max(np.abs(fd.d_delta2 + 1.0)) < 1e-12
    assert np.max(np.abs(fd.kappa - 1.0)) < 1e-12


def test_line_family_cone_frame():
    model = line_model()
    x, y3 = sample(50, seed=2)
    frame = cone_frame(model, x, y3, mode="closed")
    want_xi = np.stack([y3, -np.ones_like(y3), -0.5 * y3 ** 2], axis=-1)
    want_d = np.stack([np.ones_like(y3), np.zeros_like(y3), -y3], axis=-1)
    want_dd = np.stack([np.zeros_like(y3), np.zeros_like(y3), -np.ones_like(y3)],
                       axis=-1)
    assert np.max(np.abs(frame.xi - want_xi)) < 1e-12
    assert np.max(np.abs(frame.xi_d - want_d)) < 1e-12
    assert np.max(np.abs(frame.xi_dd - want_dd)) < 1e-12
    d = det3(frame.xi, frame.xi_d, frame.xi_dd)
    assert np.max(np.abs(d + 1.0)) < 1e-12


def test_principal_curvature_value():
    model = line_model()
    x = np.zeros((1, 3))
    y3 = np.zeros(1)
    # at y3=0: Xi=(0,-1,0), Xi'=(1,0,0), |Xi ^ Xi'|=1, kappa=1 -> -rho
    pc = principal_curvature(model, x, y3, rho=1.0, mode="closed")
    assert abs(pc[0] + 1.0) < 1e-12
    pc2 = principal_curvature(model, x, y3, rho=2.5, mode="closed")
    assert abs(pc2[0] + 2.5) < 1e-12


def test_det_piL_values_and_linearity():
    model = line_model()
    x, y3 = sample(30, seed=3)
    tau = np.array([0.7, -0.2])
    got = det_piL(model, x, y3, tau, mode="closed")
    want = -tau[0] - tau[1] * y3
    assert np.max(np.abs(got - want)) < 1e-12
    a = det_piL(model, x, y3, np.array([1.0, 0.0]), mode="closed")
    b = det_piL(model, x, y3, np.array([0.0, 1.0]), mode="closed")
    assert np.max(np.abs(got - (tau[0] * a + tau[1] * b))) < 1e-12


def test_swap_negates_kappa_and_fixes_cone():
    # (S^1, S^2) -> (S^2, S^1) sends Delta_1 -> -Delta_2, Delta_2 -> -Delta_1,
    # kappa -> -kappa, and leaves Xi unchanged
    model = make_xray_model((0.0, 0.1, 0.5, 0.2), beta=0.25, domain=BOX)
    x, y3 = sample(40, seed=4)
    fd = fold_data(model, x, y3, mode="closed")
    fs = fold_data(model.swapped(), x, y3, mode="closed")
    assert np.max(np.abs(fs.delta1 + fd.delta2)) < 1e-12
    assert np.max(np.abs(fs.delta2 + fd.delta1)) < 1e-12
    assert np.max(np.abs(fs.kappa + fd.kappa)) < 1e-12
    fr = cone_frame(model, x, y3, mode="closed")
    frs = cone_frame(model.swapped(), x, y3, mode="closed")
    assert np.max(np.abs(frs.xi - fr.xi)) < 1e-12


def test_fd_mode_matches_closed_mode():
    model = make_xray_model((0.0, 0.0, 0.5), beta=0.3, domain=BOX)
    x, y3 = sample(20, seed=5)
    x *= 0.8  # keep the FD stencil inside the box
    fc = fold_data(model, x, y3, mode="closed")
    ff = fold_data(model, x, y3, mode="fd")
    for name in ("delta1", "delta2", "gamma1", "gamma2", "kappa"):
        assert np.max(np.abs(getattr(fc, name) - getattr(ff, name))) < 1e-3, name
    frc = cone_frame(model, x, y3, mode="closed")
    frf = cone_frame(model, x, y3, mode="fd")
    assert np.max(np.abs(frc.xi - frf.xi)) < 1e-3
    assert np.max(np.abs(frc.xi_d - frf.xi_d)) < 1e-3
    assert np.max(np.abs(frc.xi_dd - frf.xi_dd)) < 5e-3


def test_model_jets_shapes():
    model = line_model()
    x, y3 = sample(7, seed=6)
    j1, j2 = model_jets(model, x, y3, order=2, mode="closed")
    assert j1.grad_x().shape == (7, 3)
    assert j2.grad_x(ny3=1).shape == (7, 3)
    assert j1[(0, 0, 0, 2)].shape == (7,)


def test_verify_reports_closed_and_fd():
    model = make_xray_model((0.0, 0.0, 0.5), beta=0.3, domain=BOX)
    for check in (verify_curvature_identity, verify_kernel_field_identity):
        rep = check(model, n=120, seed=7)
        assert rep.passed, rep.to_json()
        assert rep.max_residual < 1e-6
        assert rep.extra["mode"] == "closed"
        rep_fd = check(model, n=60, seed=7, mode="fd", tol=1e-3)
        assert rep_fd.passed, rep_fd.to_json()
        j = rep_fd.to_json()
        assert set(j) >= {"check", "model", "n_samples", "max_residual", "pass",
                          "tolerance"}
        assert j["pass"] is True


def test_kappa_cross_check():
    model = make_xray_model((0.0, 0.0, 0.5), beta=0.3, domain=BOX)
    rep = kappa_cross_check(model, n=80, seed=8)
    assert rep.passed, rep.to_json()
    assert rep.max_residual < 1e-4


def test_nondegeneracy_scan_pass_and_fail():
    model = line_model()
    rep = nondegeneracy_scan(model, n=400, seed=9)
    assert rep.passed
    assert rep.extra["min_delta_norm"] > 0.9  # |Delta_1| = 1 everywhere

    # a family of parallel coordinate planes: S^i_{x y3} = 0, so Delta_i = 0
    flat = DefiningModel(
        s1=ScalarField(fn=lambda x, y3: x[..., 0] + 0.0 * y3, domain=BOX),
        s2=ScalarField(fn=lambda x, y3: x[..., 1] + 0.0 * y3, domain=BOX),
        domain=BOX,
        name="flat",
    )
    rep = nondegeneracy_scan(flat, n=100, seed=9)
    assert not rep.passed
    assert rep.extra["min_delta_norm"] < 1e-9
    assert rep.failures


def test_principal_curvature_degenerate_returns_zero():
    # Delta_i = 0 identically, so Xi = 0 and kappa = 0: the curvature is
    # reported as 0 rather than 0/0 (a kappa != 0 frame collapse cannot occur
    # for consistent jets since det(Xi, Xi', Xi'') = -kappa^2)
    flat = DefiningModel(
        s1=ScalarField(fn=lambda x, y3: x[..., 0] + 0.0 * y3, domain=BOX),
        s2=ScalarField(fn=lambda x, y3: x[..., 1] + 0.0 * y3, domain=BOX),
        domain=BOX,
        name="flat",
    )
    pc = principal_curvature(flat, np.zeros((2, 3)), np.zeros(2))
    assert np.all(pc == 0.0)


def test_check_report_failure_listing():
    rep = CheckReport(
        check="c", model="m", n_samples=3, max_residual=2.0, passed=False,
        tolerance=1.0, failures=[{"x": [0, 0, 0], "y3": 0.0, "residual": 2.0}],
    )
    j = rep.to_json()
    assert j["pass"] is False
    assert len(j["failures"]) == 1
