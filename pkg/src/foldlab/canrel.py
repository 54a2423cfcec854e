"""Canonical-relation invariants for a pair of defining functions.

A model is the pair y_i = S^i(x, y3), i = 1, 2, cutting out a two-parameter
family of curves in R^3.  The fold structure of the associated double
fibration is governed by four scalar invariants built from 3x3 determinants
of x-gradients:

    Delta_i = det(S^1_x, S^2_x, S^i_{x y3})
    Gamma_1 = det(S^1_x, S^2_{x y3}, S^1_{x y3})
    Gamma_2 = det(S^1_{x y3}, S^2_x, S^2_{x y3})
    kappa   = Gamma_2 Delta_1 - Gamma_1 Delta_2
              + Delta_1 d_{y3}Delta_2 - Delta_2 d_{y3}Delta_1

together with the cone generator Xi = -Delta_2 S^1_x + Delta_1 S^2_x and its
first two y3-derivatives.  All determinants are hand-written cofactor
expansions over the last axis; every operation accepts either closed-form or
finite-difference jets.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from .errors import DegenerateFrameError
from .jets import Box, ScalarField, eval_jet

DEGENERACY_FLOOR = 1e-10

# orders >= 3 need a larger FD step: truncation O(h^2) vs roundoff eps/h^order
FD_STEP_DEEP = 5e-3


@dataclass
class DefiningModel:
    """A curve family given by two defining functions on a shared box."""

    s1: ScalarField
    s2: ScalarField
    domain: Box
    name: str = "model"
    M: float = 10.0
    meta: dict = field(default_factory=dict)

    def swapped(self):
        """The same family with the roles of S^1 and S^2 exchanged."""
        return DefiningModel(
            s1=self.s2,
            s2=self.s1,
            domain=self.domain,
            name=self.name + "/swapped",
            M=self.M,
            meta=dict(self.meta, swapped=True),
        )


@dataclass
class FoldData:
    delta1: np.ndarray
    delta2: np.ndarray
    gamma1: np.ndarray
    gamma2: np.ndarray
    kappa: np.ndarray
    d_delta1: np.ndarray
    d_delta2: np.ndarray


@dataclass
class ConeFrame:
    xi: np.ndarray
    xi_d: np.ndarray
    xi_dd: np.ndarray


def det3(a, b, c):
    """Determinant of the 3x3 matrix with columns a, b, c (vectors on last axis)."""
    return (
        a[..., 0] * (b[..., 1] * c[..., 2] - b[..., 2] * c[..., 1])
        - a[..., 1] * (b[..., 0] * c[..., 2] - b[..., 2] * c[..., 0])
        + a[..., 2] * (b[..., 0] * c[..., 1] - b[..., 1] * c[..., 0])
    )


def _fd_step_for(model, order, step):
    if step is not None:
        return step
    if order >= 3:
        return FD_STEP_DEEP * model.domain.diameter / 4.0
    return None


def model_jets(model, x, y3, order, mode="auto", step=None):
    """Jets of both defining functions at (x, y3)."""
    step = _fd_step_for(model, order, step)
    j1 = eval_jet(model.s1, x, y3, order, step=step, mode=mode)
    j2 = eval_jet(model.s2, x, y3, order, step=step, mode=mode)
    return j1, j2


def _delta_columns(j1, j2, order_d):
    """Columns c(y3) of the Delta determinants and their y3-derivatives.

    Returns per-field lists [S_x, S_{x y3}, ..., S_{x y3^order_d}].
    """
    cols1 = [j1.grad_x(ny3=n) for n in range(order_d + 1)]
    cols2 = [j2.grad_x(ny3=n) for n in range(order_d + 1)]
    return cols1, cols2


def fold_data(model, x, y3, mode="auto", step=None):
    """The invariants (Delta_i, Gamma_i, kappa) at a batch of points."""
    j1, j2 = model_jets(model, x, y3, order=3, mode=mode, step=step)
    c1, c2 = _delta_columns(j1, j2, order_d=2)

    delta1 = det3(c1[0], c2[0], c1[1])
    delta2 = det3(c1[0], c2[0], c2[1])
    gamma1 = det3(c1[0], c2[1], c1[1])
    gamma2 = det3(c1[1], c2[0], c2[1])
    # product rule on det(S^1_x, S^2_x, S^i_{x y3}); the repeated-column term drops
    d_delta1 = gamma1 + det3(c1[0], c2[0], c1[2])
    d_delta2 = gamma2 + det3(c1[0], c2[0], c2[2])
    kappa = gamma2 * delta1 - gamma1 * delta2 + delta1 * d_delta2 - delta2 * d_delta1
    return FoldData(
        delta1=delta1,
        delta2=delta2,
        gamma1=gamma1,
        gamma2=gamma2,
        kappa=kappa,
        d_delta1=d_delta1,
        d_delta2=d_delta2,
    )


def det_piL(model, x, y3, tau, mode="auto", step=None):
    """tau_1 Delta_1 + tau_2 Delta_2, the fold-degenerate Jacobian factor."""
    fd = fold_data(model, x, y3, mode=mode, step=step)
    tau = np.asarray(tau, dtype=float)
    return tau[..., 0] * fd.delta1 + tau[..., 1] * fd.delta2


def cone_frame(model, x, y3, mode="auto", step=None):
    """Xi and its first two y3-derivatives (full product rule over the jets)."""
    j1, j2 = model_jets(model, x, y3, order=4, mode=mode, step=step)
    c1, c2 = _delta_columns(j1, j2, order_d=3)

    def d3(u, v, w):
        return det3(u, v, w)[..., None]

    delta = [None, None]
    ddelta = [None, None]
    d2delta = [None, None]
    for i, ci in enumerate((c1, c2)):
        # Delta_i(y3) = det(a, b, c) with a=S^1_x, b=S^2_x, c=S^i_{x y3}
        a, b = c1, c2
        delta[i] = det3(a[0], b[0], ci[1])
        ddelta[i] = (
            det3(a[1], b[0], ci[1]) + det3(a[0], b[1], ci[1]) + det3(a[0], b[0], ci[2])
        )
        d2delta[i] = (
            det3(a[2], b[0], ci[1])
            + det3(a[0], b[2], ci[1])
            + det3(a[0], b[0], ci[3])
            + 2.0 * det3(a[1], b[1], ci[1])
            + 2.0 * det3(a[1], b[0], ci[2])
            + 2.0 * det3(a[0], b[1], ci[2])
        )

    s1x, s2x = c1[0], c2[0]
    s1xd, s2xd = c1[1], c2[1]
    s1xdd, s2xdd = c1[2], c2[2]
    D1, D2 = delta[0][..., None], delta[1][..., None]
    dD1, dD2 = ddelta[0][..., None], ddelta[1][..., None]
    d2D1, d2D2 = d2delta[0][..., None], d2delta[1][..., None]

    xi = -D2 * s1x + D1 * s2x
    xi_d = -dD2 * s1x - D2 * s1xd + dD1 * s2x + D1 * s2xd
    xi_dd = (
        -d2D2 * s1x
        - 2.0 * dD2 * s1xd
        - D2 * s1xdd
        + d2D1 * s2x
        + 2.0 * dD1 * s2xd
        + D1 * s2xdd
    )
    return ConeFrame(xi=xi, xi_d=xi_d, xi_dd=xi_dd)


def principal_curvature(model, x, y3, rho=1.0, mode="auto", step=None,
                        floor=DEGENERACY_FLOOR):
    """The one nonvanishing principal curvature -rho kappa^2 / |Xi ^ Xi_{y3}|.

    Returns 0 where kappa vanishes; raises DegenerateFrameError if the frame
    |Xi ^ Xi_{y3}| collapses while kappa does not.
    """
    frame = cone_frame(model, x, y3, mode=mode, step=step)
    fd = fold_data(model, x, y3, mode=mode, step=step)
    wedge = np.cross(frame.xi, frame.xi_d)
    wnorm = np.linalg.norm(wedge, axis=-1)
    k2 = fd.kappa ** 2
    degen = wnorm < floor
    small_k = k2 < np.sqrt(floor)
    if np.any(degen & ~small_k):
        raise DegenerateFrameError(
            f"{model.name}: |Xi ^ Xi_y3| < {floor:g} with kappa bounded away from 0"
        )
    good = ~degen
    out = np.where(good, -rho * k2 / np.where(good, wnorm, 1.0), 0.0)
    return out if out.shape else float(out)


@dataclass
class CheckReport:
    """Result of a sampled identity verification."""

    check: str
    model: str
    n_samples: int
    max_residual: float
    passed: bool
    tolerance: float
    failures: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def to_json(self):
        out = {
            "check": self.check,
            "model": self.model,
            "n_samples": self.n_samples,
            "max_residual": self.max_residual,
            "pass": self.passed,
            "tolerance": self.tolerance,
        }
        if self.failures:
            out["failures"] = self.failures
        if self.extra:
            out["extra"] = self.extra
        return out


def _sample_points(model, n, seed, margin_frac=0.08):
    """Deterministic quasi-random interior points (Halton) with an FD margin."""
    lo = np.asarray(model.domain.lo)
    hi = np.asarray(model.domain.hi)
    pad = margin_frac * (hi - lo)
    sampler = qmc.Halton(d=4, seed=seed)
    u = sampler.random(n)
    pts = lo + pad + u * (hi - lo - 2 * pad)
    return pts[:, :3], pts[:, 3]


def _failures(x, y3, res, tol, limit=10):
    idx = np.argwhere(np.atleast_1d(res) > tol).ravel()
    out = []
    for i in idx[:limit]:
        out.append(
            {
                "x": [float(v) for v in np.atleast_2d(x)[i]],
                "y3": float(np.atleast_1d(y3)[i]),
                "residual": float(np.atleast_1d(res)[i]),
            }
        )
    return out


def default_tolerance(mode_used, closed_tol=1e-6, fd_tol=1e-3):
    return closed_tol if mode_used == "closed" else fd_tol


def _resolve_mode(model, mode):
    if mode == "auto":
        return "closed" if model.s1.has_closed_forms else "fd"
    return mode


def verify_curvature_identity(model, n=300, seed=0, mode="auto", step=None, tol=None):
    """det(Xi, Xi_y3, Xi_y3y3) = -kappa^2, normalized by 1 + kappa^2."""
    mode = _resolve_mode(model, mode)
    tol = tol if tol is not None else default_tolerance(mode)
    x, y3 = _sample_points(model, n, seed)
    frame = cone_frame(model, x, y3, mode=mode, step=step)
    fd = fold_data(model, x, y3, mode=mode, step=step)
    lhs = det3(frame.xi, frame.xi_d, frame.xi_dd)
    res = np.abs(lhs + fd.kappa ** 2) / (1.0 + fd.kappa ** 2)
    return CheckReport(
        check="curvature_identity",
        model=model.name,
        n_samples=n,
        max_residual=float(np.max(res)),
        passed=bool(np.max(res) < tol),
        tolerance=tol,
        failures=_failures(x, y3, res, tol),
        extra={"mode": mode},
    )


def verify_kernel_field_identity(model, n=300, seed=0, mode="auto", step=None, tol=None):
    """Gamma_2 S^1_x - Gamma_1 S^2_x - Delta_2 S^1_{xy3} + Delta_1 S^2_{xy3} = 0."""
    mode = _resolve_mode(model, mode)
    tol = tol if tol is not None else default_tolerance(mode)
    x, y3 = _sample_points(model, n, seed)
    j1, j2 = model_jets(model, x, y3, order=2, mode=mode, step=step)
    fd = fold_data(model, x, y3, mode=mode, step=step)
    w = (
        fd.gamma2[..., None] * j1.grad_x()
        - fd.gamma1[..., None] * j2.grad_x()
        - fd.delta2[..., None] * j1.grad_x(ny3=1)
        + fd.delta1[..., None] * j2.grad_x(ny3=1)
    )
    res = np.linalg.norm(w, axis=-1)
    return CheckReport(
        check="kernel_field_identity",
        model=model.name,
        n_samples=n,
        max_residual=float(np.max(res)),
        passed=bool(np.max(res) < tol),
        tolerance=tol,
        failures=_failures(x, y3, res, tol),
        extra={"mode": mode},
    )


def kappa_cross_check(model, n=100, seed=0, mode="auto", fd_step=1e-5, tol=1e-4):
    """kappa vs the kernel-field directional derivative of tau.Delta.

    Along the fold, at tau = rho*(-Delta_2, Delta_1), the kernel vector field
    (the tau-rotation by (Gamma_2, -Gamma_1) scaled by |tau|/|Delta|, plus
    d_{y3}) applied to tau_1 Delta_1 + tau_2 Delta_2 equals rho*kappa.  The
    d_{y3} part is measured here by a centered difference in y3 with tau
    frozen, which is an independent route to kappa's derivative terms.
    """
    mode = _resolve_mode(model, mode)
    x, y3 = _sample_points(model, n, seed)
    fd = fold_data(model, x, y3, mode=mode)
    dnorm = np.hypot(fd.delta1, fd.delta2)
    rho = 1.0
    tau = np.stack([-fd.delta2, fd.delta1], axis=-1) * rho

    def tau_dot_delta(y3v):
        f = fold_data(model, x, y3v, mode=mode)
        return tau[..., 0] * f.delta1 + tau[..., 1] * f.delta2

    h = fd_step * model.domain.diameter
    dy = (tau_dot_delta(y3 + h) - tau_dot_delta(y3 - h)) / (2 * h)
    tau_norm = np.linalg.norm(tau, axis=-1)
    # |tau| = rho |Delta| on the fold ray, so |tau|/|Delta| = rho exactly
    tau_part = tau_norm / dnorm * (fd.gamma2 * fd.delta1 - fd.gamma1 * fd.delta2)
    value = tau_part + dy
    res = np.abs(value - rho * fd.kappa) / (1.0 + np.abs(fd.kappa))
    return CheckReport(
        check="kappa_directional",
        model=model.name,
        n_samples=n,
        max_residual=float(np.max(res)),
        passed=bool(np.max(res) < tol),
        tolerance=tol,
        failures=_failures(x, y3, res, tol),
        extra={"mode": mode},
    )


def nondegeneracy_scan(model, n=1000, seed=0, mode="auto", floor=DEGENERACY_FLOOR):
    """min |Delta_1| + |Delta_2| over a quasi-random sweep, versus the floor."""
    mode = _resolve_mode(model, mode)
    x, y3 = _sample_points(model, n, seed)
    fd = fold_data(model, x, y3, mode=mode)
    size = np.abs(fd.delta1) + np.abs(fd.delta2)
    min_size = float(np.min(size))
    bad = size < floor
    return CheckReport(
        check="nondegeneracy_scan",
        model=model.name,
        n_samples=n,
        max_residual=min_size,  # here: the minimum gradient size, not an error
        passed=bool(min_size >= floor),
        tolerance=floor,
        failures=_failures(x, y3, np.where(bad, floor - size, 0.0), 0.0)
        if np.any(bad)
        else [],
        extra={"mode": mode, "min_delta_norm": min_size},
    )
