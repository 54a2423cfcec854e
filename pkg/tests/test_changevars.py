"""Normal-form coordinate tests.

Hand-worked oracle (straight-line family S^1 = x1 - x3 y3,
S^2 = x2 - x3 y3^2/2, i.e. the bend-free X-ray model with g = y3^2/2):

    Delta_1 = -1, Delta_2 = -y3, Gamma_1 = Gamma_2 = 0, kappa = 1.

At the basepoint (a, b) = (0, 0):

    rho  = (0, 0, Delta_2/Delta_1)|_b = (0, 0, 0)
    w(x) = (S^1(x,0), S^2(x,0), S^1_{y3}(x,0)) = (x1, x2, -x3)
    x(w) = (w1, w2, -w3)
    z(y) = y            (S^i(0, y3) = 0 and rho = 0 kill every correction)
    S'^1(w, z3) = S^1((w1,w2,-w3), z3) = w1 + w3 z3
    S'^2(w, z3) = w2 + w3 z3^2 / 2
    kappa_0 = kappa / Delta_1^2 = 1

At b = 0.2 the only change is rho = (0, 0, 0.2), so B(z3) is lower
triangular with -0.2 in the corner.  Everything else below is checked by
round trips, finite-difference determinant identities, and the independent
invariants from canrel.
"""

import numpy as np
import pytest

from foldlab import changevars as cv
from foldlab import models
from foldlab.canrel import fold_data
from foldlab.errors import DomainError, NewtonError


def straight_model():
    return models.make_xray_model((0.0, 0.0, 0.5), beta=0.0)


def bent_model():
    return models.make_xray_model((0.0, 0.1, 0.5, 0.2), beta=0.3)


def test_rho_straight_lines():
    m = straight_model()
    a = np.array([0.05, -0.02, 0.1])
    for b in (0.0, 0.2, -0.3):
        r = cv.rho(m, a, b)
        assert np.allclose(r, [0.0, 0.0, b], atol=1e-12)


def test_w_map_anchor():
    m = straight_model()
    a = np.zeros(3)
    x = np.array([[0.1, -0.07, 0.2], [0.0, 0.3, -0.1]])
    w = cv.w_map(m, x, a, 0.0)
    assert np.allclose(w, x * [1.0, 1.0, -1.0], atol=1e-14)
    back = cv.x_inverse(m, w, a, 0.0)
    assert np.allclose(back, x, atol=1e-12)


def test_z_map_anchor_identity():
    m = straight_model()
    y = np.array([[0.1, -0.2, 0.3], [0.02, 0.0, -0.4]])
    z = cv.z_map(m, y, np.zeros(3), 0.0)
    assert np.allclose(z, y, atol=1e-14)
    assert np.allclose(cv.y_inverse(m, z, np.zeros(3), 0.0), y, atol=1e-14)


def test_round_trips_all_models():
    rng = np.random.default_rng(7)
    for name, m in models.standard_models().items():
        lo = np.asarray(m.domain.lo)
        hi = np.asarray(m.domain.hi)
        mid = (lo + hi) / 2.0
        a = mid[:3]
        b = float(mid[3])
        x = a + rng.uniform(-0.08, 0.08, size=(20, 3)) * (hi[:3] - lo[:3])
        w = cv.w_map(m, x, a, b)
        x2 = cv.x_inverse(m, w, a, b)
        assert np.max(np.abs(x2 - x)) < 1e-10, name
        s1 = m.s1(a, b)
        s2 = m.s2(a, b)
        y = np.stack([s1 + rng.uniform(-0.02, 0.02, 20),
                      s2 + rng.uniform(-0.02, 0.02, 20),
                      b + rng.uniform(-0.03, 0.03, 20)], axis=-1)
        z = cv.z_map(m, y, a, b)
        y2 = cv.y_inverse(m, z, a, b)
        assert np.max(np.abs(y2 - y)) < 1e-12, name


def test_y_inverse_denominator_guard():
    m = straight_model()
    z = np.array([0.01, 0.0, 0.15])
    with pytest.raises(DomainError):
        cv.y_inverse(m, z, np.zeros(3), 0.0,
                     rho_val=np.array([0.0, 5.0, 0.0]))


def test_x_inverse_unreachable_target():
    m = models.standard_models()["translation"]
    a = np.array([0.0, 0.0, 0.75])
    with pytest.raises(NewtonError):
        cv.x_inverse(m, np.array([5.0, 5.0, 5.0]), a, 0.0)


def test_normalized_anchor_exact():
    norm = cv.normalized_model(straight_model(), np.zeros(3), 0.0)
    assert not norm.swapped
    assert abs(norm.kappa0 - 1.0) < 1e-12
    assert abs(norm.delta1_base + 1.0) < 1e-12
    rng = np.random.default_rng(3)
    w = rng.uniform(-0.05, 0.05, size=(15, 3))
    z3 = rng.uniform(-0.1, 0.1, size=15)
    s1, s2 = norm.s_eval(w, z3)
    assert np.max(np.abs(s1 - (w[:, 0] + w[:, 2] * z3))) < 1e-12
    assert np.max(np.abs(s2 - (w[:, 1] + w[:, 2] * z3 ** 2 / 2))) < 1e-12
    assert np.allclose(norm.b_matrix(z3[0]), np.eye(2), atol=1e-14)


def test_b_matrix_triangular():
    norm = cv.normalized_model(straight_model(), np.zeros(3), 0.2)
    B = norm.b_matrix(np.array([0.0, 0.1]))
    assert B.shape == (2, 2, 2)
    assert np.allclose(B[0], [[1.0, 0.0], [-0.2, 1.0]], atol=1e-12)
    assert np.allclose(B[1], [[1.0, 0.0], [-0.2, 1.0]], atol=1e-12)


def test_radii_and_meta():
    norm = cv.normalized_model(bent_model(), np.array([0.05, -0.04, 0.08]),
                               0.05)
    r0, r1, r2, r3 = norm.radii
    assert 0 < r2 <= r1 / 2 and 0 < r3 <= r1 and r1 < r0 * 2
    assert norm.meta["r2_symbolic"] < r2
    assert norm.meta["rho_bound_6M4"] >= np.max(np.abs(norm.rho))
    assert 2.5 < norm.m0 < 50.0


def test_base_identities_and_jacobians():
    for name, m in models.standard_models().items():
        for a, b in cv.basepoint_grid(m, 2, 2, frac=0.3):
            norm = cv.normalized_model(m, a, b)
            rep = cv.verify_base_identities(norm)
            assert rep.passed, (name, rep.to_json())
            rep = cv.verify_jacobians(norm)
            assert rep.passed, (name, rep.to_json())


def test_normalizations_exact_at_z0():
    for m in (bent_model(), models.standard_models()["heisenberg_moment"]):
        norm = cv.normalized_model(m, np.array([0.02, 0.01, -0.03]), 0.04)
        rep = cv.verify_normalizations(norm)
        assert rep.passed, rep.to_json()
        # the z3 = 0 flattening is exact up to Newton roundoff, far
        # below the FD-limited 1e-6 tolerance
        assert rep.extra["s1_at_0"] < 1e-11
        assert rep.extra["s2_at_0"] < 1e-11


def test_delta_relation_all_models():
    for name, m in models.standard_models().items():
        norm = cv.normalized_model(m, *cv.basepoint_grid(m, 1, 1)[0])
        rep = cv.verify_delta_relation(norm)
        assert rep.passed, (name, rep.to_json())


def test_curvature_transport():
    for name, m in models.standard_models().items():
        norm = cv.normalized_model(m, *cv.basepoint_grid(m, 1, 1)[0])
        rep = cv.verify_curvature_transport(norm)
        assert rep.passed, (name, rep.to_json())
    norm = cv.normalized_model(straight_model(), np.zeros(3), 0.0)
    rep = cv.verify_curvature_transport(norm)
    assert abs(rep.extra["measured"] - 1.0) < 1e-6


def test_swap_policy():
    # slope-2 profile: |Delta_2/Delta_1| = g'(b)/(1+beta x3)^2 > 1 at b=0.3
    m = models.make_xray_model((0.0, 2.0, 0.5), beta=0.3)
    a = np.array([0.05, 0.0, 0.1])
    b = 0.3
    fd = fold_data(m, a[None, :], np.array([b]))
    assert abs(fd.delta2[0]) > abs(fd.delta1[0])
    norm = cv.normalized_model(m, a, b)
    assert norm.swapped
    assert norm.base_model.name.endswith("/swapped")
    assert abs(norm.delta1_base - (-fd.delta2[0])) < 1e-12
    for check in (cv.verify_base_identities, cv.verify_jacobians,
                  cv.verify_normalizations, cv.verify_delta_relation,
                  cv.verify_curvature_transport):
        rep = check(norm)
        assert rep.passed, rep.to_json()


def test_alpha_factor_at_origin():
    norm = cv.normalized_model(bent_model(), np.array([0.05, -0.04, 0.08]),
                               0.05)
    val = norm.alpha_factor(np.zeros((1, 3)), np.zeros(1))
    assert abs(val[0] - norm.delta1_base) < 1e-12


def test_taylor_structure_and_negative_control():
    norm = cv.normalized_model(bent_model(), np.array([0.05, -0.04, 0.08]),
                               0.05)
    rep = cv.verify_taylor_structure(norm, level=6, delta0=2.0 ** -4)
    assert rep.passed, rep.to_json()
    assert rep.max_residual < 0.5

    # skipping the normalization must break the gradient expansion
    mp = models.standard_models()["heisenberg_plane"]
    fd = fold_data(mp, np.zeros((1, 3)), np.array([0.0]))
    k0 = float(fd.kappa[0] / fd.delta1[0] ** 2)
    bad = cv.verify_taylor_structure(norm, level=6, delta0=2.0 ** -4,
                                     model=mp, m0=mp.M, kappa0=k0)
    assert not bad.passed
    assert bad.max_residual > 5.0


def test_basepoint_grid_inside_box():
    m = bent_model()
    grid = cv.basepoint_grid(m, 5, 5)
    assert len(grid) == 25
    lo = np.asarray(m.domain.lo)
    hi = np.asarray(m.domain.hi)
    for a, b in grid:
        assert np.all(a > lo[:3]) and np.all(a < hi[:3])
        assert lo[3] < b < hi[3]


def test_lemma_suite_reports():
    reps = cv.lemma_suite(straight_model(), n_a=2, n_b=2)
    assert len(reps) == 20
    for rep in reps:
        assert rep.passed
        j = rep.to_json()
        assert set(j) >= {"lemma_item", "basepoint", "max_residual", "pass"}
