"""Constructors for the four concrete curve-family models.

Each constructor returns a DefiningModel whose fields carry closed-form
derivative tables (generated symbolically at construction for the polynomial
and rational families, and by power-series inversion of the implicit curve
parameter for the translation-invariant family).  Downstream code always
sees the normal form y_i = S^i(x, y3) with y3 the free parameter; the
constructors perform any variable relabeling internally.

  xray              S^1 = x1 - x3 y3,  S^2 = (x2 - x3 g(y3)) / (1 + x3 beta)
  heisenberg_plane  S^1 = x2 - g(x1 - t),
                    S^2 = x3 - (x1/2) g(x1 - t) + (x2/2)(x1 - t)
  heisenberg_moment S^1 = x2 - (x1 - t)^2,
                    S^2 = x3 - a (x1-t)^3 - (x1/2)(x1-t)^2 + (x2/2)(x1-t)
  translation       y = x - gamma(s) with gamma_3 inverted for s = s(x3 - y3)

Polynomial data is limited to degree 8.
"""

from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
import math

import numpy as np
import sympy as sp

from .canrel import DefiningModel, cone_frame, det_piL, fold_data
from .errors import FoldlabError, NewtonError
from .jets import Box, ScalarField, multi_indices

MAX_POLY_DEGREE = 8
NEWTON_TOL = 1e-12
NEWTON_MAXITER = 50

_SYMS = sp.symbols("x1 x2 x3 t")


def _check_coeffs(coeffs, label):
    coeffs = tuple(float(c) if not isinstance(c, (Fraction, sp.Basic)) else c
                   for c in coeffs)
    if len(coeffs) - 1 > MAX_POLY_DEGREE:
        raise ValueError(f"{label}: degree {len(coeffs) - 1} exceeds {MAX_POLY_DEGREE}")
    return coeffs


def _poly_expr(coeffs, var):
    return sum(sp.sympify(c) * var ** i for i, c in enumerate(coeffs))


def _field_from_expr(expr, domain, name):
    """ScalarField with a symbolically generated derivative table (order <= 4)."""
    exprs = {(0, 0, 0, 0): sp.expand(expr)}
    for alpha in multi_indices(4):
        if alpha == (0, 0, 0, 0):
            continue
        i = next(j for j, a in enumerate(alpha) if a > 0)
        lower = tuple(a - (1 if j == i else 0) for j, a in enumerate(alpha))
        exprs[alpha] = sp.diff(exprs[lower], _SYMS[i])
    fns = {a: sp.lambdify(_SYMS, e, modules="numpy") for a, e in exprs.items()}

    def make(fn):
        def h(x, y3):
            x = np.asarray(x, dtype=float)
            y3 = np.asarray(y3, dtype=float)
            out = fn(x[..., 0], x[..., 1], x[..., 2], y3)
            shape = np.broadcast_shapes(x.shape[:-1], y3.shape)
            return np.broadcast_to(np.asarray(out, dtype=float), shape)
        return h

    table = {a: make(fn) for a, fn in fns.items()}
    return ScalarField(fn=table[(0, 0, 0, 0)], domain=domain, derivs=table, name=name)


def _estimate_M(model, n_per_axis=5):
    """Crude norm bound: 2 + max sampled |D^alpha S^i|, |alpha| <= 4, x1.5 margin."""
    lo = np.asarray(model.domain.lo)
    hi = np.asarray(model.domain.hi)
    pad = 0.05 * (hi - lo)
    axes = [np.linspace(lo[i] + pad[i], hi[i] - pad[i], n_per_axis) for i in range(4)]
    g = np.meshgrid(*axes, indexing="ij")
    x = np.stack([g[0], g[1], g[2]], axis=-1)
    y3 = g[3]
    top = 0.0
    for fld in (model.s1, model.s2):
        for alpha in multi_indices(4):
            d = fld.deriv_fn(alpha)
            if d is None:
                continue
            top = max(top, float(np.max(np.abs(d(x, y3)))))
    return 2.0 + 1.5 * top


def _grid_min_abs(fn, lo, hi, n=512):
    t = np.linspace(lo, hi, n)
    return float(np.min(np.abs(fn(t)))), t


def _poly_min_abs(coeffs, lo, hi):
    """min |p| on [lo, hi] for a polynomial: exact zero detection via roots."""
    c = np.trim_zeros(np.asarray(coeffs, dtype=float), "b")
    if c.size == 0:
        return 0.0
    if c.size > 1:
        r = np.polynomial.polynomial.polyroots(c)
        real = r[np.abs(r.imag) < 1e-9].real
        if np.any((real >= lo - 1e-12) & (real <= hi + 1e-12)):
            return 0.0
    t = np.linspace(lo, hi, 512)
    return float(np.min(np.abs(np.polynomial.polynomial.polyval(t, c))))


@dataclass(frozen=True)
class ModelSpec:
    """Declarative model description, round-trippable through JSON."""

    kind: str
    params: tuple
    domain_lo: tuple
    domain_hi: tuple

    def to_json(self):
        return {
            "kind": self.kind,
            "params": {k: list(v) if isinstance(v, tuple) else v
                       for k, v in self.params},
            "domain": {"lo": list(self.domain_lo), "hi": list(self.domain_hi)},
        }

    @staticmethod
    def from_json(obj):
        params = tuple(sorted(
            (k, tuple(v) if isinstance(v, list) else v)
            for k, v in obj.get("params", {}).items()
        ))
        dom = obj["domain"]
        return ModelSpec(
            kind=obj["kind"],
            params=params,
            domain_lo=tuple(dom["lo"]),
            domain_hi=tuple(dom["hi"]),
        )

    def build(self):
        p = dict(self.params)
        box = Box(lo=self.domain_lo, hi=self.domain_hi)
        if self.kind == "xray":
            return make_xray_model(p["g"], beta=p.get("beta", 0.0), domain=box)
        if self.kind == "heisenberg_plane":
            return make_heisenberg_plane_model(p["g"], domain=box)
        if self.kind == "heisenberg_moment":
            a = p["alpha"]
            if isinstance(a, str):
                a = Fraction(a)
            return make_moment_curve_model(a, domain=box)
        if self.kind == "translation":
            return make_translation_model(
                p["gamma1"], p["gamma2"], p["gamma3"],
                s_interval=tuple(p["s_interval"]), domain=box,
            )
        raise ValueError(f"unknown model kind {self.kind!r}")


MODEL_KINDS = ("xray", "heisenberg_plane", "heisenberg_moment", "translation")

_DEFAULT_DOMAINS = {
    "xray": Box(lo=(-0.4, -0.4, -0.4, -0.5), hi=(0.4, 0.4, 0.4, 0.5)),
    "heisenberg_plane": Box(lo=(-0.4, -0.4, -0.4, -0.4), hi=(0.4, 0.4, 0.4, 0.4)),
    "heisenberg_moment": Box(lo=(-0.4, -0.4, -0.4, -0.4), hi=(0.4, 0.4, 0.4, 0.4)),
    "translation": Box(lo=(-0.5, -0.5, 0.3, -0.1), hi=(0.5, 0.5, 1.2, 0.1)),
}


def default_domain(kind):
    return _DEFAULT_DOMAINS[kind]


@lru_cache(maxsize=64)
def _make_xray_cached(g_coeffs, beta, lo, hi):
    box = Box(lo=lo, hi=hi)
    x1, x2, x3, t = _SYMS
    if not -1.0 < beta < 1.0:
        raise ValueError(f"beta must lie in (-1, 1), got {beta}")
    g = _poly_expr(g_coeffs, t)
    gpp_coeffs = np.polynomial.polynomial.polyder(np.asarray(g_coeffs, float), 2)
    m = _poly_min_abs(gpp_coeffs, box.lo[3], box.hi[3])
    if m < 1e-8:
        raise FoldlabError(
            f"xray: g'' vanishes on the y3 range (min |g''| = {m:.2e})"
        )
    if beta != 0.0:
        denom_min = min(1.0 + beta * box.lo[2], 1.0 + beta * box.hi[2])
        if denom_min < 0.1:
            raise FoldlabError(
                f"xray: 1 + beta*x3 reaches {denom_min:.3f} on the box; need >= 0.1"
            )
    s1 = _field_from_expr(x1 - x3 * t, box, "xray.S1")
    s2 = _field_from_expr((x2 - x3 * g) / (1 + x3 * sp.Float(beta)), box, "xray.S2")
    model = DefiningModel(
        s1=s1, s2=s2, domain=box, name="xray",
        meta={"kind": "xray", "g": list(g_coeffs), "beta": beta},
    )
    model.M = _estimate_M(model)
    return model


def make_xray_model(g_coeffs, beta=0.0, domain=None):
    """Line family x' = (y3, g(y3)) direction field over the x3-axis screen.

    g_coeffs are ascending polynomial coefficients of the profile g; beta
    bends the family off translation invariance.  Preconditions: g'' != 0 on
    the y3-range and 1 + beta*x3 bounded away from 0 on the box.
    """
    g_coeffs = _check_coeffs(g_coeffs, "g")
    box = domain or default_domain("xray")
    return _make_xray_cached(tuple(float(c) for c in g_coeffs), float(beta),
                             box.lo, box.hi)


@lru_cache(maxsize=64)
def _make_heis_plane_cached(g_coeffs, lo, hi):
    box = Box(lo=lo, hi=hi)
    x1, x2, x3, t = _SYMS
    u = sp.Symbol("u")
    g_of_u = _poly_expr(g_coeffs, u)
    ulo = box.lo[0] - box.hi[3]
    uhi = box.hi[0] - box.lo[3]
    m = _poly_min_abs(np.polynomial.polynomial.polyder(np.asarray(g_coeffs, float), 2),
                      ulo, uhi)
    if m < 1e-8:
        raise FoldlabError(
            f"heisenberg_plane: g'' vanishes on u in [{ulo:.3f}, {uhi:.3f}]"
        )
    g = g_of_u.subs(u, x1 - t)
    s1 = _field_from_expr(x2 - g, box, "heis_plane.S1")
    s2 = _field_from_expr(x3 - x1 / 2 * g + x2 / 2 * (x1 - t), box, "heis_plane.S2")
    model = DefiningModel(
        s1=s1, s2=s2, domain=box, name="heisenberg_plane",
        meta={"kind": "heisenberg_plane", "g": list(g_coeffs)},
    )
    model.M = _estimate_M(model)
    return model


def make_heisenberg_plane_model(g_coeffs, domain=None):
    """Left translates of a vertically lifted plane curve (s, g(s)).

    The incidence relation is solved for (y2, y3) with y1 free; the free
    variable is relabeled to y3, so S^i(x, t) with t standing for old y1.
    Precondition: g'' != 0 on the reachable u = x1 - t interval.
    """
    g_coeffs = _check_coeffs(g_coeffs, "g")
    box = domain or default_domain("heisenberg_plane")
    return _make_heis_plane_cached(tuple(float(c) for c in g_coeffs), box.lo, box.hi)


@lru_cache(maxsize=64)
def _make_moment_cached(alpha_key, lo, hi):
    box = Box(lo=lo, hi=hi)
    x1, x2, x3, t = _SYMS
    alpha = sp.Rational(alpha_key) if isinstance(alpha_key, (str, Fraction)) \
        else sp.Float(alpha_key)
    s = x1 - t
    s1 = _field_from_expr(x2 - s ** 2, box, "moment.S1")
    s2 = _field_from_expr(
        x3 - alpha * s ** 3 - x1 / 2 * s ** 2 + x2 / 2 * s, box, "moment.S2"
    )
    model = DefiningModel(
        s1=s1, s2=s2, domain=box, name="heisenberg_moment",
        meta={"kind": "heisenberg_moment", "alpha": alpha_key},
    )
    model.M = _estimate_M(model)
    return model


def make_moment_curve_model(alpha, domain=None):
    """Convolution along the twisted cubic (s, s^2, alpha s^3) on the
    Heisenberg group; the group law composed with the curve is solved for
    (y2, y3) in terms of the free y1, then relabeled.

    Pass alpha as a Fraction for exact arithmetic (the parabola coefficient
    cancellation at alpha = 1/6 is then exact).
    """
    box = domain or default_domain("heisenberg_moment")
    key = alpha if isinstance(alpha, Fraction) else float(alpha)
    if isinstance(key, Fraction):
        key = str(key)
    return _make_moment_cached(key, box.lo, box.hi)


def _polyval_all(coeffs, s, orders=5):
    """Values of gamma and derivatives 0..orders-1 at s (ascending coeffs)."""
    c = np.asarray(coeffs, dtype=float)
    out = []
    for m in range(orders):
        out.append(np.polynomial.polynomial.polyval(s, np.polynomial.polynomial.polyder(c, m) if m else c))
    return out


class _CurveInverse:
    """s(c) with gamma_3(s) = c on a monotone interval, plus series jets."""

    def __init__(self, g3_coeffs, s_interval):
        self.c3 = np.asarray(g3_coeffs, dtype=float)
        self.s_lo, self.s_hi = map(float, s_interval)
        self.v_lo = float(np.polynomial.polynomial.polyval(self.s_lo, self.c3))
        self.v_hi = float(np.polynomial.polynomial.polyval(self.s_hi, self.c3))

    def solve(self, c):
        c = np.asarray(c, dtype=float)
        lo, hi = sorted((self.v_lo, self.v_hi))
        if np.any(c < lo - 1e-12) or np.any(c > hi + 1e-12):
            raise NewtonError(
                f"translation: x3 - y3 leaves gamma_3 range [{lo:.4g}, {hi:.4g}]"
            )
        span = self.v_hi - self.v_lo
        s = self.s_lo + (c - self.v_lo) * (self.s_hi - self.s_lo) / span
        p = np.polynomial.polynomial
        dc3 = p.polyder(self.c3)
        scale = max(abs(self.v_lo), abs(self.v_hi), 1.0)
        for _ in range(NEWTON_MAXITER):
            r = p.polyval(s, self.c3) - c
            if np.max(np.abs(r)) <= NEWTON_TOL * scale:
                break
            s = s - r / p.polyval(s, dc3)
            s = np.clip(s, self.s_lo, self.s_hi)
        r = p.polyval(s, self.c3) - c
        bad = np.abs(r) > 1e-10 * scale
        if np.any(bad):
            # bisection fallback on the stubborn lanes
            sl = np.full(np.shape(c), self.s_lo)
            sh = np.full(np.shape(c), self.s_hi)
            up = self.v_hi > self.v_lo
            for _ in range(80):
                mid = 0.5 * (sl + sh)
                vm = p.polyval(mid, self.c3)
                left = (vm < c) if up else (vm > c)
                sl = np.where(left, mid, sl)
                sh = np.where(left, sh, mid)
            s = np.where(bad, 0.5 * (sl + sh), s)
            r = p.polyval(s, self.c3) - c
            if np.max(np.abs(r)) > 1e-9 * scale:
                raise NewtonError("translation: curve-parameter solve did not converge")
        return s

    def s_series(self, s):
        """Taylor coefficients b1..b4 of s(c) about each solved point."""
        g3 = _polyval_all(self.c3, s, orders=5)
        a1 = g3[1]
        a2 = g3[2] / 2.0
        a3 = g3[3] / 6.0
        a4 = g3[4] / 24.0
        b1 = 1.0 / a1
        b2 = -a2 / a1 ** 3
        b3 = (2.0 * a2 ** 2 - a1 * a3) / a1 ** 5
        b4 = (5.0 * a1 * a2 * a3 - a1 ** 2 * a4 - 5.0 * a2 ** 3) / a1 ** 7
        return b1, b2, b3, b4


def _compose_curve_derivs(coeffs, s, b):
    """d^m/dc^m gamma_i(s(c)) for m = 0..4 via series composition."""
    A = _polyval_all(coeffs, s, orders=5)
    A0, A1 = A[0], A[1]
    A2 = A[2] / 2.0
    A3 = A[3] / 6.0
    A4 = A[4] / 24.0
    b1, b2, b3, b4 = b
    c1 = A1 * b1
    c2 = A1 * b2 + A2 * b1 ** 2
    c3 = A1 * b3 + A2 * 2.0 * b1 * b2 + A3 * b1 ** 3
    c4 = (A1 * b4 + A2 * (b2 ** 2 + 2.0 * b1 * b3)
          + A3 * 3.0 * b1 ** 2 * b2 + A4 * b1 ** 4)
    return [A0, c1, 2.0 * c2, 6.0 * c3, 24.0 * c4]


def _translation_field(idx, coeffs, inv, box, name):
    """S^idx = x_idx - gamma_idx(s(x3 - y3)) as a ScalarField with jets."""

    def value(x, y3):
        x = np.asarray(x, dtype=float)
        y3 = np.asarray(y3, dtype=float)
        c = x[..., 2] - y3
        s = inv.solve(c)
        g = np.polynomial.polynomial.polyval(s, np.asarray(coeffs, dtype=float))
        return x[..., idx] - g

    def deriv(alpha):
        a1, a2, a3, a4 = alpha
        lin = (1, 0, 0, 0) if idx == 0 else (0, 1, 0, 0)
        if alpha == (0, 0, 0, 0):
            return value
        if alpha == lin:
            def one(x, y3):
                shape = np.broadcast_shapes(np.shape(x)[:-1], np.shape(y3))
                return np.ones(shape)
            return one
        if a1 == 0 and a2 == 0:
            m = a3 + a4
            sign = -((-1.0) ** a4)

            def dmc(x, y3):
                x = np.asarray(x, dtype=float)
                y3 = np.asarray(y3, dtype=float)
                c = x[..., 2] - y3
                s = inv.solve(c)
                b = inv.s_series(s)
                derivs = _compose_curve_derivs(coeffs, s, b)
                shape = np.broadcast_shapes(x.shape[:-1], y3.shape)
                return np.broadcast_to(sign * derivs[m], shape)
            return dmc

        def zero(x, y3):
            shape = np.broadcast_shapes(np.shape(x)[:-1], np.shape(y3))
            return np.zeros(shape)
        return zero

    return ScalarField(fn=value, domain=box, derivs=deriv, name=name)


@lru_cache(maxsize=64)
def _make_translation_cached(g1, g2, g3, s_interval, lo, hi):
    box = Box(lo=lo, hi=hi)
    p = np.polynomial.polynomial
    s_lo, s_hi = s_interval
    sg = np.linspace(s_lo, s_hi, 512)
    d1 = np.stack([p.polyval(sg, p.polyder(np.asarray(c, float))) for c in (g1, g2, g3)], axis=-1)
    d2 = np.stack([p.polyval(sg, p.polyder(np.asarray(c, float), 2)) for c in (g1, g2, g3)], axis=-1)
    d3 = np.stack([p.polyval(sg, p.polyder(np.asarray(c, float), 3)) for c in (g1, g2, g3)], axis=-1)
    if float(np.min(np.abs(d1[:, 2]))) < 1e-8:
        raise FoldlabError("translation: gamma_3' vanishes on the s-interval")
    curv = np.linalg.norm(np.cross(d1, d2), axis=-1)
    tors = np.abs(np.einsum("ij,ij->i", np.cross(d1, d2), d3))
    if float(np.min(curv)) < 1e-8:
        raise FoldlabError("translation: curvature |gamma' ^ gamma''| vanishes")
    if float(np.min(tors)) < 1e-8:
        raise FoldlabError("translation: torsion det(gamma', gamma'', gamma''') vanishes")

    inv = _CurveInverse(g3, s_interval)
    c_lo = box.lo[2] - box.hi[3]
    c_hi = box.hi[2] - box.lo[3]
    vlo, vhi = sorted((inv.v_lo, inv.v_hi))
    if not (vlo <= c_lo and c_hi <= vhi):
        raise FoldlabError(
            f"translation: x3 - y3 range [{c_lo:.4g}, {c_hi:.4g}] not inside "
            f"gamma_3 range [{vlo:.4g}, {vhi:.4g}]"
        )
    s1 = _translation_field(0, g1, inv, box, "translation.S1")
    s2 = _translation_field(1, g2, inv, box, "translation.S2")
    model = DefiningModel(
        s1=s1, s2=s2, domain=box, name="translation",
        meta={"kind": "translation", "gamma": [list(g1), list(g2), list(g3)],
              "s_interval": list(s_interval)},
    )
    model.M = _estimate_M(model)
    return model


def make_translation_model(g1_coeffs, g2_coeffs, g3_coeffs,
                           s_interval=(0.5, 2.0), domain=None):
    """Translation-invariant averaging along a polynomial curve gamma.

    The incidence y = x - gamma(s) is reduced to the normal form by solving
    gamma_3(s) = x3 - y3 (monotone on s_interval) with Newton + bisection
    fallback; closed-form jets come from order-4 inversion of the gamma_3
    power series.  Preconditions: nonvanishing gamma_3', curvature, torsion
    on the interval, and the box's x3 - y3 range inside gamma_3's range.
    """
    g1 = _check_coeffs(g1_coeffs, "gamma1")
    g2 = _check_coeffs(g2_coeffs, "gamma2")
    g3 = _check_coeffs(g3_coeffs, "gamma3")
    box = domain or default_domain("translation")
    return _make_translation_cached(
        tuple(float(c) for c in g1), tuple(float(c) for c in g2),
        tuple(float(c) for c in g3), (float(s_interval[0]), float(s_interval[1])),
        box.lo, box.hi,
    )


def standard_models():
    """The four reference instances used throughout the experiments."""
    return {
        "xray": make_xray_model((0.0, 0.0, 0.5)),
        "heisenberg_plane": make_heisenberg_plane_model((0.0, 0.0, 0.5)),
        "heisenberg_moment": make_moment_curve_model(Fraction(1, 3)),
        "translation": make_translation_model(
            (0.0, 1.0), (0.0, 0.0, 0.5), (0.0, 0.0, 0.0, 1.0 / 6.0)
        ),
    }


def xray_plane_curve(g_coeffs):
    """The dual plane curve t -> (-g'(t), t g'(t) - g(t)) of the line family."""
    p = np.polynomial.polynomial
    g = np.asarray(g_coeffs, dtype=float)
    dg = p.polyder(g)

    def curve(t):
        t = np.asarray(t, dtype=float)
        return np.stack([-p.polyval(t, dg), t * p.polyval(t, dg) - p.polyval(t, g)],
                        axis=-1)
    return curve


def xray_curve_wronskian(g_coeffs, t):
    """Gamma_1' Gamma_2'' - Gamma_1'' Gamma_2' for the dual curve: -(g''(t))^2."""
    p = np.polynomial.polynomial
    g = np.asarray(g_coeffs, dtype=float)
    t = np.asarray(t, dtype=float)
    d1 = np.stack([-p.polyval(t, p.polyder(g, 2)),
                   t * p.polyval(t, p.polyder(g, 2))], axis=-1)
    d2 = np.stack([-p.polyval(t, p.polyder(g, 3)),
                   p.polyval(t, p.polyder(g, 2)) + t * p.polyval(t, p.polyder(g, 3))],
                  axis=-1)
    return d1[..., 0] * d2[..., 1] - d2[..., 0] * d1[..., 1]


def vr_fold_derivative(model, x, y3, tau, step=1e-5):
    """Directional derivative of tau.Delta along V_R = y3 d_{x1} + d_{x3}.

    For the xray family neither Delta depends on x1, and on the fold ray
    tau = (-Delta_2, Delta_1) the value is 2 beta tau_2 g'(y3)/(1+beta x3)^4;
    in particular it vanishes identically at beta = 0 (two-sided fold).
    """
    x = np.asarray(x, dtype=float)
    y3 = np.asarray(y3, dtype=float)
    v = np.stack([y3, np.zeros_like(y3), np.ones_like(y3)], axis=-1)
    h = step
    plus = det_piL(model, x + h * v, y3, tau)
    minus = det_piL(model, x - h * v, y3, tau)
    return (plus - minus) / (2 * h)


def moment_cone_coefficients(model, x, n_t=9):
    """Parabola coefficients of the moment-curve cone section at x.

    Samples the cone generator Xi over the curve parameter, normalizes by the
    third component, reparametrizes by tp = (x1 - t)/2, and least-squares
    fits xi_1/xi_3 by a quadratic and xi_2/xi_3 by a line.  Returns
    (quadratic coefficient of xi_1, linear coefficient of xi_2); for the
    alpha-family these are (2(6a - 1), -(6a - 1)).
    """
    lo3, hi3 = model.domain.lo[3], model.domain.hi[3]
    t = np.linspace(lo3 + 0.05 * (hi3 - lo3), hi3 - 0.05 * (hi3 - lo3), n_t)
    xb = np.broadcast_to(np.asarray(x, dtype=float), (n_t, 3))
    frame = cone_frame(model, xb, t)
    xi = frame.xi
    tp = (xb[:, 0] - t) / 2.0
    z1 = xi[:, 0] / xi[:, 2]
    z2 = xi[:, 1] / xi[:, 2]
    q = np.polynomial.polynomial.polyfit(tp, z1, 2)
    l = np.polynomial.polynomial.polyfit(tp, z2, 1)
    return float(q[2]), float(l[1])


def moment_curvature_wronskian(alpha):
    """The planar curvature numerator of the cone parabola: 4(6 alpha - 1)^2."""
    a = float(alpha)
    return 4.0 * (6.0 * a - 1.0) ** 2
