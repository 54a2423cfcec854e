"""Plate frame geometry and the localization sampler.

Hand oracle used throughout: for the straight-line x-ray model (beta=0,
g=t^2/2) normalized at the origin, the pair is polynomial, finite
differences are exact, and the near-fold generator combination
Delta_1 S^2_w - Delta_2 S^1_w evaluated at (w,z3)=(0,b) equals T1(b) to
machine precision.  Frame identities checked against their closed forms:

    <N(b),  T1(z)> = k0 (z-b)^2 / 2
    <T2(b), T1(z)> = -k0 (z-b) (1 + b(z+b)/2 + k0^2 b^3 z / 4)
"""

import numpy as np
import pytest

from foldlab.canrel import det3, model_jets
from foldlab.changevars import _norm_step, normalized_model
from foldlab.errors import SamplerError
from foldlab.models import make_xray_model, standard_models
from foldlab.plates import (
    Plate,
    admissible_scales,
    default_aperture,
    desk_scales,
    plate_contains,
    plate_frame,
    plate_localization_check,
    plate_margins,
)


def test_frame_at_zero():
    fr = plate_frame(0.0, 1.7)
    assert np.array_equal(fr.t1, [0.0, 1.0, 0.0])
    assert np.array_equal(fr.t2, [1.0, 0.0, 0.0])
    assert np.array_equal(fr.n, [0.0, 0.0, -1.0])


def test_frame_orthogonality_and_cross():
    bs = np.linspace(-0.25, 0.25, 11)
    for k0 in (-4.0, -1.0, -0.3, 0.5, 1.0, 4.0):
        fr = plate_frame(bs, k0)
        dots = np.sum(fr.t1 * fr.t2, axis=-1)
        assert np.max(np.abs(dots)) < 1e-14
        # N = T1 ^ (e1 + b e3)
        t2t = np.zeros_like(fr.t1)
        t2t[:, 0] = 1.0
        t2t[:, 2] = bs
        assert np.max(np.abs(np.cross(fr.t1, t2t) - fr.n)) < 1e-14


def test_frame_small_b_expansion():
    # T2(b) = e1 + k0 b e2 + b e3 + O(b^3) at b=0.1, k0=1
    fr = plate_frame(0.1, 1.0)
    assert np.linalg.norm(fr.t2 - np.array([1.0, 0.1, 0.1])) < 1e-3


def test_frame_exact_identities():
    rng = np.random.default_rng(3)
    b = rng.uniform(-0.25, 0.25, size=40)
    z = rng.uniform(-0.25, 0.25, size=40)
    for k0 in (-2.0, 0.5, 1.0, 3.0):
        frb = plate_frame(b, k0)
        t1z = plate_frame(z, k0).t1
        lhs_n = np.sum(frb.n * t1z, axis=-1)
        assert np.max(np.abs(lhs_n - 0.5 * k0 * (z - b) ** 2)) < 1e-13
        lhs_t = np.sum(frb.t2 * t1z, axis=-1)
        rhs_t = -k0 * (z - b) * (1.0 + 0.5 * b * (z + b)
                                 + 0.25 * k0 ** 2 * b ** 3 * z)
        assert np.max(np.abs(lhs_t - rhs_t)) < 1e-13


def test_contains_examples():
    fr = plate_frame(0.15, 1.0)
    plate = Plate(frame=fr, A=2.0, delta=0.1)
    assert plate_contains(plate, fr.t1)
    nh = fr.n / np.linalg.norm(fr.n)
    assert not plate_contains(plate, 2 * plate.A * nh)
    t1h, t2h, nh = fr.units()
    xi = t1h + 0.5 * plate.A * plate.delta * t2h \
        + 0.5 * plate.A * plate.delta ** 2 * nh
    assert plate_contains(plate, xi)
    m = plate_margins(plate, xi)
    assert m.shape == (3,) and np.all(m >= 0.0)


def test_contains_monotone_in_aperture():
    rng = np.random.default_rng(8)
    fr = plate_frame(np.full(200, 0.1), 0.8)
    t1h, t2h, nh = fr.units()
    A, d = 2.0, 0.1
    xi = (rng.uniform(0.3, 2.8, size=(200, 1)) * t1h
          + rng.uniform(-1.5, 1.5, size=(200, 1)) * A * d * t2h
          + rng.uniform(-1.5, 1.5, size=(200, 1)) * A * d ** 2 * nh)
    small = plate_contains(Plate(frame=fr, A=A, delta=d), xi)
    big = plate_contains(Plate(frame=fr, A=3.5, delta=d), xi)
    assert np.any(small) and np.any(~small)
    assert np.all(big[small])


def test_admissible_scales_strict_is_empty():
    sw = admissible_scales(30, 0.1, 4.0, mode="strict")
    assert sw.empty
    assert sw.ladder() == []


def test_admissible_scales_relaxed_rejects_bad_pair():
    # at level 12 the relaxed shape floor 16*max{2^-8, 2^-6} = 2^-2
    # exceeds delta0 = 2^-4, so no delta1 works at all
    sw = admissible_scales(12, 0.1, 4.0, mode="relaxed")
    assert not sw.admissible(2.0 ** -4, 2.0 ** -7)
    assert sw.shape_floor(2.0 ** -4) == pytest.approx(0.25)
    assert sw.empty


def test_admissible_scales_relaxed_ladder():
    sw = admissible_scales(20, 0.1, 4.0, mode="relaxed")
    pairs = sw.ladder()
    assert pairs
    for d0, d1 in pairs:
        assert sw.admissible(d0, d1)
        assert d1 < d0
    lo, hi = sw.window()
    assert lo < pairs[0][0] < hi
    j = sw.to_json()
    assert j["mode"] == "relaxed" and j["empty"] is False


def test_admissible_rejects_reversed_pair():
    sw = admissible_scales(20, 0.1, 4.0, mode="relaxed")
    d0, d1 = sw.ladder()[0]
    assert not sw.admissible(d0, d0)
    assert not sw.admissible(d1, d0)


def test_desk_scales_shape():
    for level, m0, r3 in [(8, 3.0, 0.14), (10, 12.0, 0.07), (12, 8.0, 0.03)]:
        d0, d1 = desk_scales(level, m0, r3)
        assert d0 <= 2.0 ** -4 + 1e-15
        assert d0 <= 0.7 * r3 + 1e-15
        assert d0 / 4.0 - 1e-15 <= d1 <= d0 / 2.0 + 1e-15


def _pure_xray_norm():
    m = make_xray_model((0.0, 0.0, 0.5), beta=0.0)
    return normalized_model(m, a=(0.0, 0.0, 0.0), b=0.0)


def test_generator_hits_frame_on_pure_xray():
    # Delta_1 S^2_w - Delta_2 S^1_w at (0, b) is exactly T1(b) here
    norm = _pure_xray_norm()
    b = 2.0 ** -5
    h = _norm_step(norm)
    w = np.zeros((1, 3))
    j1, j2 = model_jets(norm.model, w, np.array([b]), order=2, mode="fd",
                        step=h)
    g1, g2 = j1.grad_x(), j2.grad_x()
    d1v = det3(g1, g2, j1.grad_x(ny3=1))[0]
    d2v = det3(g1, g2, j2.grad_x(ny3=1))[0]
    assert abs(d1v - 1.0) < 1e-12
    assert abs(d2v - norm.kappa0 * b) < 1e-12
    gen = d1v * g2[0] - d2v * g1[0]
    fr = plate_frame(b, norm.kappa0)
    assert np.linalg.norm(gen - fr.t1) < 1e-12
    t1h, t2h, nh = fr.units()
    assert abs(t2h @ gen) < 1e-12
    assert abs(nh @ gen) < 1e-12


def test_on_lattice_sample_is_deep_interior():
    # z3 = b on the delta1-lattice, w = 0, mu = (0,1): the normal
    # component vanishes identically and the sample sits inside
    norm = _pure_xray_norm()
    d1 = 2.0 ** -6
    b = 2 * d1
    h = _norm_step(norm)
    _, j2 = model_jets(norm.model, np.zeros((1, 3)), np.array([b]),
                       order=2, mode="fd", step=h)
    xi = j2.grad_x()[0]
    fr = plate_frame(b, norm.kappa0)
    _, _, nh = fr.units()
    assert abs(nh @ xi) < 1e-12
    plate = Plate(frame=fr, A=default_aperture(norm.kappa0), delta=d1)
    assert plate_contains(plate, xi)


def test_localization_pure_xray():
    norm = _pure_xray_norm()
    rep = plate_localization_check(norm, level=10, n_samples=4000, seed=11)
    assert rep.contained_fraction == 1.0
    assert all(m > 0.0 for m in rep.worst_margins)
    assert rep.mode == "desk"
    j = rep.to_json()
    for key in ("model", "level", "delta0", "delta1", "mode", "n",
                "contained_fraction", "worst_margins"):
        assert key in j
    assert j["n"] == 4000
    assert 0.0 < j["acceptance_rate"] <= 1.0
    assert j["aperture"] == pytest.approx(2.0 * (1.0 + abs(norm.kappa0)))


def test_localization_all_models_small():
    for name, m in standard_models().items():
        lo = np.asarray(m.domain.lo)
        hi = np.asarray(m.domain.hi)
        a = 0.5 * (lo[:3] + hi[:3])
        b = 0.5 * (lo[3] + hi[3])
        norm = normalized_model(m, a=a, b=b)
        rep = plate_localization_check(norm, level=10, n_samples=1500,
                                       seed=5)
        assert rep.contained_fraction == 1.0, (name, rep.worst_margins)
        assert 0.0 < rep.to_json()["detcond_band_fraction"] <= 1.0


def test_localization_negative_control():
    norm = _pure_xray_norm()
    rep = plate_localization_check(norm, level=10, n_samples=3000, seed=11,
                                   violation_factor=2.0 ** 5)
    assert rep.contained_fraction < 0.9
    assert min(rep.worst_margins) < 0.0


def test_localization_starved_window():
    # a band wider than the tangential budget leaves no usable
    # coefficient window
    norm = _pure_xray_norm()
    with pytest.raises(SamplerError):
        plate_localization_check(norm, level=10, n_samples=100, seed=0,
                                 detcond_band=1.0)


def test_localization_determinism():
    norm = _pure_xray_norm()
    r1 = plate_localization_check(norm, level=10, n_samples=500, seed=3)
    r2 = plate_localization_check(norm, level=10, n_samples=500, seed=3)
    assert r1.to_json() == r2.to_json()
