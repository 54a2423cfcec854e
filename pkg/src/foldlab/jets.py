"""Jets of defining functions on a box domain.

A defining function is a scalar field S(x, y3) of three spatial variables
x = (x1, x2, x3) and one free curve parameter y3.  Everything downstream
consumes partial derivatives of such fields up to total order 4, packaged
as a `Jet`.  Two evaluation routes are supported and kept deliberately
independent: closed-form derivative tables attached to the field, and
central finite differences of the plain evaluator.

Evaluators are numpy-vectorized: x has shape (..., 3), y3 shape (...),
and every jet entry comes back with the broadcast batch shape.
"""

from dataclasses import dataclass, field
import itertools

import numpy as np

from .errors import DomainError, NonFiniteError

JET_ORDER_MAX = 4

# Central differences on the offset axis [-2, -1, 0, 1, 2], all O(h^2).
_STENCIL5 = {
    0: np.array([0.0, 0.0, 1.0, 0.0, 0.0]),
    1: np.array([0.0, -0.5, 0.0, 0.5, 0.0]),
    2: np.array([0.0, 1.0, -2.0, 1.0, 0.0]),
    3: np.array([-0.5, 1.0, 0.0, -1.0, 0.5]),
    4: np.array([1.0, -4.0, 6.0, -4.0, 1.0]),
}
_OFFSETS5 = np.array([-2.0, -1.0, 0.0, 1.0, 2.0])
_STENCIL3 = {
    0: np.array([0.0, 1.0, 0.0]),
    1: np.array([-0.5, 0.0, 0.5]),
    2: np.array([1.0, -2.0, 1.0]),
}
_OFFSETS3 = np.array([-1.0, 0.0, 1.0])


def multi_indices(order):
    """All derivative multi-indices (a1, a2, a3, a4) with total order <= order.

    The tuple entry a_i counts derivatives in variable i (variable 4 is y3),
    so mixed-partial symmetry is built into the representation: there is one
    canonical entry per unordered derivative combination.
    """
    out = []
    for total in range(order + 1):
        for a1 in range(total + 1):
            for a2 in range(total - a1 + 1):
                for a3 in range(total - a1 - a2 + 1):
                    a4 = total - a1 - a2 - a3
                    out.append((a1, a2, a3, a4))
    return out


@dataclass(frozen=True)
class Box:
    """Axis-aligned domain [lo_i, hi_i] for the variables (x1, x2, x3, y3)."""

    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        if len(lo) != 4 or len(hi) != 4:
            raise ValueError("Box bounds must have length 4 (x1, x2, x3, y3)")
        if any(h <= l for l, h in zip(lo, hi)):
            raise ValueError(f"empty box: lo={lo} hi={hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def diameter(self):
        return float(np.linalg.norm(np.subtract(self.hi, self.lo)))

    def contains(self, x, y3, margin=0.0):
        """Boolean mask: are the points inside the box with the given margin?"""
        x = np.asarray(x, dtype=float)
        y3 = np.asarray(y3, dtype=float)
        lo = np.asarray(self.lo)
        hi = np.asarray(self.hi)
        ok = np.ones(np.broadcast_shapes(x.shape[:-1], y3.shape), dtype=bool)
        for i in range(3):
            ok &= (x[..., i] >= lo[i] + margin) & (x[..., i] <= hi[i] - margin)
        ok &= (y3 >= lo[3] + margin) & (y3 <= hi[3] - margin)
        return ok

    def sample(self, n, rng, margin=0.0):
        """n uniform interior points; returns (x (n,3), y3 (n,))."""
        lo = np.asarray(self.lo) + margin
        hi = np.asarray(self.hi) - margin
        pts = rng.uniform(lo, hi, size=(n, 4))
        return pts[:, :3], pts[:, 3]

    def center(self):
        c = 0.5 * (np.asarray(self.lo) + np.asarray(self.hi))
        return c[:3], float(c[3])


@dataclass
class ScalarField:
    """A scalar field S(x, y3) with an optional closed-form derivative table.

    fn           vectorized evaluator, fn(x, y3) with x of shape (..., 3)
    domain       Box the field is defined on
    derivs       optional: dict mapping multi-index -> evaluator, or a
                 callable alpha -> evaluator (same signature as fn)
    name         label used in reports
    """

    fn: object
    domain: Box
    derivs: object = None
    name: str = "field"

    @property
    def has_closed_forms(self):
        return self.derivs is not None

    def __call__(self, x, y3):
        return self.fn(np.asarray(x, dtype=float), np.asarray(y3, dtype=float))

    def deriv_fn(self, alpha):
        """Closed-form evaluator for multi-index alpha, or None."""
        if self.derivs is None:
            return None
        if callable(self.derivs):
            return self.derivs(alpha)
        return self.derivs.get(tuple(alpha))


def field_sum(f, g, name=None):
    """Pointwise sum of two fields; closed forms combine when both have them."""
    derivs = None
    if f.has_closed_forms and g.has_closed_forms:
        def derivs(alpha):
            df, dg = f.deriv_fn(alpha), g.deriv_fn(alpha)
            if df is None or dg is None:
                return None
            return lambda x, y3: df(x, y3) + dg(x, y3)
    return ScalarField(
        fn=lambda x, y3: f.fn(x, y3) + g.fn(x, y3),
        domain=f.domain,
        derivs=derivs,
        name=name or f"{f.name}+{g.name}",
    )


def field_scale(f, c, name=None):
    """Pointwise scalar multiple of a field."""
    derivs = None
    if f.has_closed_forms:
        def derivs(alpha):
            df = f.deriv_fn(alpha)
            if df is None:
                return None
            return lambda x, y3: c * df(x, y3)
    return ScalarField(
        fn=lambda x, y3: c * f.fn(x, y3),
        domain=f.domain,
        derivs=derivs,
        name=name or f"{c}*{f.name}",
    )


@dataclass
class Jet:
    """Partial derivatives of a field at a batch of points, keyed by multi-index."""

    x: np.ndarray
    y3: np.ndarray
    order: int
    values: dict
    mode: str
    step: float = 0.0

    def __getitem__(self, alpha):
        return self.values[tuple(alpha)]

    def grad_x(self, ny3=0):
        """The vector (D_{x1}, D_{x2}, D_{x3}) S_{y3^ny3}, shape (..., 3)."""
        cols = [self.values[tuple(e + (ny3,))] for e in ((1, 0, 0), (0, 1, 0), (0, 0, 1))]
        return np.stack(np.broadcast_arrays(*cols), axis=-1)

    def dy3(self, n):
        return self.values[(0, 0, 0, n)]


def _fd_tensor(fld, x, y3, order, h):
    """Field values on the per-axis central stencil grid around each point."""
    if order <= 2:
        offsets, npts = _OFFSETS3, 3
    else:
        offsets, npts = _OFFSETS5, 5
    x = np.asarray(x, dtype=float)
    y3 = np.asarray(y3, dtype=float)
    batch = np.broadcast_shapes(x.shape[:-1], y3.shape)
    xb = np.broadcast_to(x, batch + (3,))
    yb = np.broadcast_to(y3, batch)

    grid_shape = batch + (npts,) * 4
    big_x = np.empty(grid_shape + (3,))
    big_y = np.empty(grid_shape)
    off = offsets * h
    sl = (slice(None),) * len(batch)
    o1 = off.reshape((1,) * len(batch) + (npts, 1, 1, 1))
    o2 = off.reshape((1,) * len(batch) + (1, npts, 1, 1))
    o3 = off.reshape((1,) * len(batch) + (1, 1, npts, 1))
    o4 = off.reshape((1,) * len(batch) + (1, 1, 1, npts))
    big_x[..., 0] = xb[sl + (0,)][sl + (None, None, None, None)] + o1
    big_x[..., 1] = xb[sl + (1,)][sl + (None, None, None, None)] + o2
    big_x[..., 2] = xb[sl + (2,)][sl + (None, None, None, None)] + o3
    big_y[...] = yb[sl + (None, None, None, None)] + o4
    vals = np.asarray(fld.fn(big_x, big_y), dtype=float)
    if vals.shape != grid_shape:
        vals = np.broadcast_to(vals, grid_shape)
    return vals


def eval_jet(fld, x, y3, order, step=None, mode="auto"):
    """Evaluate the jet of `fld` at (x, y3) up to total `order`.

    mode: "closed" forces the field's derivative table, "fd" forces central
    differences of the plain evaluator, "auto" prefers closed forms when the
    field carries them.  The FD step defaults to 1e-4 times the domain
    diameter; the point must sit inside the domain with margin order*step.
    """
    if not 0 <= order <= JET_ORDER_MAX:
        raise ValueError(f"jet order must be in [0, {JET_ORDER_MAX}], got {order}")
    if mode not in ("auto", "closed", "fd"):
        raise ValueError(f"unknown jet mode {mode!r}")
    if mode == "auto":
        mode = "closed" if fld.has_closed_forms else "fd"
    if mode == "closed" and not fld.has_closed_forms:
        raise ValueError(f"field {fld.name!r} has no closed-form derivative table")

    x = np.asarray(x, dtype=float)
    y3 = np.asarray(y3, dtype=float)
    alphas = multi_indices(order)

    if mode == "closed":
        values = {}
        for alpha in alphas:
            dfn = fld.deriv_fn(alpha)
            if dfn is None:
                raise ValueError(f"field {fld.name!r} lacks closed form for {alpha}")
            values[alpha] = np.asarray(dfn(x, y3), dtype=float)
        jet = Jet(x=x, y3=y3, order=order, values=values, mode="closed")
    else:
        h = float(step) if step is not None else 1e-4 * fld.domain.diameter
        if h <= 0:
            raise ValueError(f"step must be positive, got {h}")
        inside = fld.domain.contains(x, y3, margin=order * h)
        if not np.all(inside):
            bad = np.argwhere(~np.atleast_1d(inside))
            raise DomainError(
                f"{fld.name}: stencil leaves domain at {bad.shape[0]} point(s), "
                f"first batch index {tuple(bad[0])}, margin {order * h:g}"
            )
        tensor = _fd_tensor(fld, x, y3, order, h)
        if not np.all(np.isfinite(tensor)):
            raise NonFiniteError(f"{fld.name}: non-finite value in FD stencil")
        stencils = _STENCIL3 if order <= 2 else _STENCIL5
        values = {}
        for alpha in alphas:
            coeffs = [stencils[a] for a in alpha]
            scale = h ** (-sum(alpha)) if sum(alpha) else 1.0
            values[alpha] = scale * np.einsum(
                "...ijkl,i,j,k,l->...", tensor, *coeffs, optimize=True
            )
        jet = Jet(x=x, y3=y3, order=order, values=values, mode="fd", step=h)

    for alpha, v in jet.values.items():
        if not np.all(np.isfinite(v)):
            raise NonFiniteError(f"{fld.name}: non-finite jet entry at alpha={alpha}")
    return jet
