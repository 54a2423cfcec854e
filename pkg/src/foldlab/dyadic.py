"""Dyadic frequency pieces of the averaging operator and their numerical
application to grid functions.

The operator is cut in frequency magnitude |xi| ~ 2^k and in distance
~ 2^-l from the fold surface (measured by tau_1 Delta_1 + tau_2 Delta_2 on
the unit-scaled frequency tau = xi 2^-k).  The piece kernel is

    K(x,y) = 2^{2k} int e^{i 2^k <tau, y' - S(x,y3)>}
             eta1(2|tau|) slab_l(tau . Delta(x,y3)) dtau

where slab_l = eta1(2^l u) below the top scale and the closing cap is
eta0(2^{l-1} u), so that sum_l slab_l == eta0(u/2) identically and the
pieces telescope to the plain 2^k-shell operator.

Application to a grid function is factored through a partial FFT per
y3-slice.  The x-independent part of the cutoff (the |tau| annulus) is a
lattice multiplier; the inverse transform of the masked data is a
band-limited field G interpolated at S(x,y3) (cubic, periodic).  The slab
factor depends on x through Delta(x,y3), which breaks plain masking; it is
synthesized from its Fourier transform,

    slab(u) = (2 pi)^-1 int slabhat(omega) e^{i omega u} d omega,

turning the x-dependence into omega-weighted samples of the same field G
at shifted points S - omega 2^{l-k} Delta.  When Delta is constant across
the probe set for a slice (the straight-line x-ray family) the slab factor
joins the lattice mask instead and the shift quadrature drops out.
"""

import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as _fft
from numpy.polynomial.legendre import leggauss

from .canrel import det3, model_jets
from .errors import DomainError, QuadratureError

FFT_BUDGET = 4096  # largest per-axis transform size
PHASE_PER_NODE = 0.7  # target radians per quadrature node / grid step
TAU_RES = 16.0  # frequency-lattice cells per unit slab-profile scale
_OM_BLOCK = 64  # quadrature nodes gathered per batch


# ---------------------------------------------------------------------------
# cutoffs

def _smooth_step(t):
    # 0 for t <= 0, 1 for t >= 1, C^inf in between (e^{-1/t} glue)
    t = np.asarray(t, dtype=float)
    out = np.zeros(t.shape)
    hi = t >= 1.0
    mid = (t > 0.0) & ~hi
    tm = t[mid]
    a = np.exp(-1.0 / tm)
    b = np.exp(-1.0 / (1.0 - tm))
    out[mid] = a / (a + b)
    out[hi] = 1.0
    return out


def eta0(s):
    """Even bump: 1 on |s| <= 1/2, support (-1, 1)."""
    return _smooth_step(2.0 * (1.0 - np.abs(np.asarray(s, dtype=float))))


def eta1(s):
    """Shell profile eta0(s/2) - eta0(s); support 1/2 < |s| < 2."""
    s = np.asarray(s, dtype=float)
    return eta0(s / 2.0) - eta0(s)


def partition_residual(s, n_shells):
    """|eta0 + sum_{k<=n} eta1(2^{1-k} s) - 1| for s in [0, 2^{n-1}]."""
    s = np.asarray(s, dtype=float)
    acc = eta0(s)
    for k in range(1, n_shells + 1):
        acc = acc + eta1(2.0 ** (1 - k) * s)
    return np.abs(acc - 1.0)


def slab_profile(k, l):
    """The tau.Delta cutoff of piece (k, l) as a function of u.

    eta1(2^l u) below the top scale; the closing piece uses the bump
    eta0(2^(l-1) u) so that the sum over l equals eta0(u/2) exactly.
    """
    top = k // 3
    if l < top:
        return lambda u: eta1(np.ldexp(np.asarray(u, dtype=float), l))
    return lambda u: eta0(np.ldexp(np.asarray(u, dtype=float), l - 1))


_GL400 = leggauss(400)


def _eta_hat_factory(support_lo, support_hi, profile):
    xg, wg = _GL400
    half = 0.5 * (support_hi - support_lo)
    s_n = support_lo + (xg + 1.0) * half
    w_n = wg * half * profile(s_n)

    def hat(om):
        om = np.atleast_1d(np.asarray(om, dtype=float))
        return 2.0 * np.sum(w_n[None, :] * np.cos(np.outer(om, s_n)), axis=1)

    return hat


eta1_hat = _eta_hat_factory(0.5, 2.0, eta1)
eta0_hat = _eta_hat_factory(0.0, 1.0, eta0)

_OMEGA_CUT = {"fast": 60.0, "fine": 100.0}


def omega_plan(v_max, hat, target="fast"):
    """Trapezoid synthesis nodes for profile(v) = sum c_j e^{i om_j v}.

    Valid for |v| <= v_max; the node spacing sets the reconstruction
    period (aliasing) and the cutoff at |omega| <= Omega sets the bias
    (~2e-4 at 60, ~1e-5 at 100).
    """
    Om = _OMEGA_CUT[target]
    period = 2.0 * v_max + 9.0
    dw = 2.0 * np.pi / period
    n_half = int(math.floor(Om / dw))
    oms = dw * np.arange(-n_half, n_half + 1)
    coeffs = hat(np.abs(oms)) * dw / (2.0 * np.pi)
    return oms, coeffs


# ---------------------------------------------------------------------------
# grid functions

_MAGIC = b"FLB1"


@dataclass
class GridFunction:
    """Complex samples on a regular (y1, y2, y3) grid.

    samples[i1, i2, i3] sits at origin + (i1 h1, i2 h2, i3 h3).
    """

    samples: np.ndarray
    origin: np.ndarray
    spacing: np.ndarray

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.complex64)
        self.origin = np.asarray(self.origin, dtype=float)
        self.spacing = np.asarray(self.spacing, dtype=float)
        if self.samples.ndim != 3:
            raise DomainError("grid samples must be 3-d")
        if not np.all(self.spacing > 0):
            raise DomainError("grid spacing must be positive")

    @property
    def shape(self):
        return self.samples.shape

    def axis(self, i):
        return self.origin[i] + self.spacing[i] * np.arange(self.shape[i])

    def cell_volume(self):
        return float(np.prod(self.spacing))

    def norm_lp(self, p):
        a = np.abs(self.samples.astype(np.complex128))
        if math.isinf(p):
            return float(a.max(initial=0.0))
        return float((np.sum(a ** p) * self.cell_volume()) ** (1.0 / p))

    def save(self, path):
        path = str(path)
        header = _MAGIC + struct.pack(
            "<3Q6d", *self.shape, *self.origin, *self.spacing
        )
        payload = np.ascontiguousarray(
            self.samples.transpose(2, 1, 0)
        ).astype("<c8").tobytes()
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(payload)
        sidecar = {
            "shape": [int(n) for n in self.shape],
            "origin": [float(v) for v in self.origin],
            "spacing": [float(v) for v in self.spacing],
            "axis_order": "y1-fastest",
            "dtype": "complex64-le",
        }
        with open(path + ".json", "w") as fh:
            json.dump(sidecar, fh, indent=1)

    @classmethod
    def load(cls, path):
        with open(str(path), "rb") as fh:
            magic = fh.read(4)
            if magic != _MAGIC:
                raise DomainError(f"bad grid file magic {magic!r}")
            n1, n2, n3, *geom = struct.unpack("<3Q6d", fh.read(72))
            flat = np.frombuffer(fh.read(), dtype="<c8")
        if flat.size != n1 * n2 * n3:
            raise DomainError("grid payload size does not match header")
        samples = flat.reshape(n3, n2, n1).transpose(2, 1, 0)
        return cls(samples=samples.copy(), origin=np.array(geom[:3]),
                   spacing=np.array(geom[3:]))


def grid_from_callable(fn, origin, spacing, shape):
    axes = [origin[i] + spacing[i] * np.arange(shape[i]) for i in range(3)]
    y1, y2, y3 = np.meshgrid(*axes, indexing="ij")
    return GridFunction(samples=fn(y1, y2, y3), origin=origin,
                        spacing=spacing)


# ---------------------------------------------------------------------------
# pieces

@dataclass(frozen=True)
class DyadicPiece:
    """Frequency piece at magnitude 2^k, fold distance 2^-l.

    alpha, if set, is a bounded scalar localizer multiplying the kernel;
    it is threaded through for change-of-variables normalized models.
    """

    model: object
    k: int
    l: int
    alpha: object = None

    def __post_init__(self):
        if not (isinstance(self.k, (int, np.integer)) and self.k >= 1):
            raise DomainError(f"piece needs integer k >= 1, got {self.k}")
        if not (0 <= self.l <= self.k // 3):
            raise DomainError(
                f"piece needs 0 <= l <= floor(k/3) = {self.k // 3}, "
                f"got l = {self.l}"
            )

    def slab(self):
        return slab_profile(self.k, self.l)


def deltas_at(model, x, y3, mode="auto", step=None):
    """(Delta_1, Delta_2) at a batch of points, order-2 jets only."""
    j1, j2 = model_jets(model, x, y3, order=2, mode=mode, step=step)
    g1 = j1.grad_x()
    g2 = j2.grad_x()
    d1 = det3(g1, g2, j1.grad_x(ny3=1))
    d2 = det3(g1, g2, j2.grad_x(ny3=1))
    return d1, d2


def s_at(model, x, y3):
    y3 = np.asarray(y3, dtype=float)
    return np.stack([model.s1.fn(x, y3), model.s2.fn(x, y3)], axis=-1)


# ---------------------------------------------------------------------------
# pointwise kernel (rotated Gauss-Legendre on the cutoff support)

def _gl_nodes(n):
    return leggauss(int(n))


def _u_intervals(piece, dnorm):
    # support of slab(u |Delta|) in the unit codirection coordinate
    l, top = piece.l, piece.k // 3
    if l < top:
        lo, hi = 2.0 ** (-l - 1) / dnorm, 2.0 ** (-l + 1) / dnorm
        return [(-hi, -lo), (lo, hi)]
    hi = 2.0 ** (1 - l) / dnorm
    return [(-hi, hi)]


def kernel_Rkl(piece, x, y, n_floor=(16, 32), node_cap=200_000):
    """K(x, y) for one x and a batch of y sharing arbitrary y3 values.

    Adaptive rotated Gauss-Legendre: the u axis follows the codirection
    Delta-hat (slab width ~ 2^-l), v the perpendicular; node counts track
    the phase range 2^k <tau, y'-S> across the box plus the n_floor
    minimum that resolves the cutoff profiles.
    """
    x = np.asarray(x, dtype=float)
    y = np.atleast_2d(np.asarray(y, dtype=float))
    out = np.empty(y.shape[0], dtype=np.complex128)
    k2 = float(2.0 ** piece.k)
    slab = piece.slab()
    for y3 in np.unique(y[:, 2]):
        sel = np.where(y[:, 2] == y3)[0]
        d1, d2 = deltas_at(piece.model, x[None, :], np.array([y3]))
        dvec = np.array([float(d1[0]), float(d2[0])])
        dnorm = float(np.hypot(*dvec))
        if dnorm < 1e-12:
            raise DomainError("degenerate (Delta_1, Delta_2) in kernel")
        uhat = dvec / dnorm
        vhat = np.array([-uhat[1], uhat[0]])
        sval = s_at(piece.model, x[None, :], np.array([y3]))[0]
        disp = y[sel, :2] - sval[None, :]
        du = disp @ uhat
        dv = disp @ vhat
        rate_u = k2 * max(float(np.max(np.abs(du))), 1e-12)
        rate_v = k2 * max(float(np.max(np.abs(dv))), 1e-12)
        vals = np.zeros(sel.size, dtype=np.complex128)
        for (ulo, uhi) in _u_intervals(piece, dnorm):
            ulo, uhi = max(ulo, -1.0), min(uhi, 1.0)
            if uhi <= ulo:
                continue
            n_u = int(min(4096, max(n_floor[0], math.ceil(
                rate_u * (uhi - ulo) / PHASE_PER_NODE))))
            xu, wu = _gl_nodes(n_u)
            un = ulo + (xu + 1.0) * 0.5 * (uhi - ulo)
            wun = wu * 0.5 * (uhi - ulo)
            vtop = np.sqrt(np.maximum(1.0 - un ** 2, 0.0))
            vbot = np.sqrt(np.maximum(0.0625 - un ** 2, 0.0))
            n_v = int(min(4096, max(n_floor[1], math.ceil(
                rate_v * 2.0 * float(vtop.max()) / PHASE_PER_NODE))))
            if n_u * n_v > node_cap:
                raise QuadratureError(
                    f"kernel quadrature needs {n_u}x{n_v} nodes "
                    f"(cap {node_cap})"
                )
            xv, wv = _gl_nodes(n_v)
            for sign in (1.0, -1.0):
                vlo, vhi = sign * vbot, sign * vtop
                vn = vlo[:, None] + (xv[None, :] + 1.0) * 0.5 \
                    * (vhi - vlo)[:, None]
                wvn = wv[None, :] * 0.5 * np.abs(vhi - vlo)[:, None]
                r = np.hypot(un[:, None], vn)
                cut = eta1(2.0 * r) * slab(dnorm * un[:, None])
                wtot = (wun[:, None] * wvn * cut).ravel()
                keep = wtot != 0.0
                if not np.any(keep):
                    continue
                tau_u = np.broadcast_to(un[:, None], vn.shape).ravel()[keep]
                tau_v = vn.ravel()[keep]
                phase = np.outer(du, tau_u) + np.outer(dv, tau_v)
                vals += np.exp(1j * k2 * phase) @ wtot[keep]
        if piece.alpha is not None:
            vals = vals * piece.alpha(x[None, :], y3)
        out[sel] = k2 ** 2 * vals
    return out if out.shape[0] > 1 else out[0]


def apply_direct(piece, gridfn, x_pts, n_floor=(32, 64), node_cap=10 ** 7):
    """Reference application: pointwise kernel quadrature summed against
    the grid samples (slow; the oracle for the FFT pipeline)."""
    x_pts = np.atleast_2d(np.asarray(x_pts, dtype=float))
    y3s = gridfn.axis(2)
    w3 = _trap_weights(y3s, gridfn.spacing[2])
    y1, y2 = np.meshgrid(gridfn.axis(0), gridfn.axis(1), indexing="ij")
    cell = gridfn.spacing[0] * gridfn.spacing[1]
    out = np.zeros(x_pts.shape[0], dtype=np.complex128)
    for i, y3 in enumerate(y3s):
        pts = np.column_stack([y1.ravel(), y2.ravel(),
                               np.full(y1.size, y3)])
        fvals = gridfn.samples[:, :, i].astype(np.complex128).ravel()
        for j, x in enumerate(x_pts):
            kv = kernel_Rkl(piece, x, pts, n_floor=n_floor,
                            node_cap=node_cap)
            out[j] += w3[i] * cell * np.sum(kv * fvals)
    return out


def kernel_envelope(piece, x, y, n_decay=4, c_n=1.0):
    """c_n * U1 * U2 decay envelope at displacement y' - S(x, y3)."""
    x = np.asarray(x, dtype=float)
    y = np.atleast_2d(np.asarray(y, dtype=float))
    out = np.empty(y.shape[0])
    for y3 in np.unique(y[:, 2]):
        sel = np.where(y[:, 2] == y3)[0]
        d1, d2 = deltas_at(piece.model, x[None, :], np.array([y3]))
        sval = s_at(piece.model, x[None, :], np.array([y3]))[0]
        e1 = y[sel, 0] - sval[0]
        e2 = y[sel, 1] - sval[1]
        a1 = 2.0 ** (piece.k - piece.l)
        a2 = 2.0 ** piece.k
        u1 = a1 / (1.0 + a1 * np.abs(d1[0] * e1 + d2[0] * e2)) ** n_decay
        u2 = a2 / (1.0 + a2 * np.abs(-d2[0] * e1 + d1[0] * e2)) ** n_decay
        out[sel] = c_n * u1 * u2
    return out if out.shape[0] > 1 else out[0]


def calibrate_envelope(piece, x, probes, n_decay=4):
    """Smallest c_n dominating |kernel| on the probe set."""
    kv = np.abs(np.atleast_1d(kernel_Rkl(piece, x, probes)))
    env = np.atleast_1d(kernel_envelope(piece, x, probes, n_decay, 1.0))
    return float(np.max(kv / env))


# ---------------------------------------------------------------------------
# grid application

@dataclass
class ApplyPlan:
    """Frozen geometry for repeated applications of one piece to grid
    functions sharing a layout, at a fixed probe set."""

    piece: DyadicPiece
    x_pts: np.ndarray
    shape: tuple
    origin: np.ndarray
    spacing: np.ndarray
    nfft: tuple
    y3s: np.ndarray
    w3: np.ndarray
    s_tab: np.ndarray       # (n3, m, 2)
    route: str              # "mask" | "omega"
    d_tab: np.ndarray       # (n3, m, 2) for omega, (n3, 2) for mask
    ann: np.ndarray         # annulus lattice weights (N1, N2) float32
    xi1: np.ndarray
    xi2: np.ndarray
    omegas: np.ndarray = None
    om_coeffs: np.ndarray = None
    alpha_tab: np.ndarray = None
    interp: str = "cubic"
    meta: dict = field(default_factory=dict)

    @property
    def n_slices(self):
        return self.y3s.size


def _resolution_check(piece, spacing, s_rate):
    # hard bound: keep the top shell frequency 2^k under the grid Nyquist
    # with margin (phase step <= 2 rad per sample); reference-accuracy runs
    # want 2^-k-2 or finer so cubic interpolation reaches oracle grade
    k = piece.k
    hmax = 2.0 * 2.0 ** (-k)
    if spacing[0] > hmax * (1 + 1e-9) or spacing[1] > hmax * (1 + 1e-9):
        raise QuadratureError(
            f"grid spacing {spacing[:2]} aliases the 2^{k} shell "
            f"(need <= {hmax:.2e} in y1, y2)"
        )
    # y3 steps must keep the kernel phase rotation per step bounded
    if spacing[2] * 2.0 ** k * s_rate > 0.75:
        raise QuadratureError(
            f"y3 spacing {spacing[2]:.2e} too coarse for k={k} "
            f"(S moves at rate {s_rate:.2f})"
        )


def make_plan(piece, grid, x_pts, om_target=None, delta_fn=None,
              precision="single", interp="cubic"):
    """Precompute geometry tables, FFT sizes and the cutoff synthesis for
    applying a piece to functions on this grid at these probe points.

    precision "single" runs the per-slice transforms in complex64 (half
    the time and memory); "double" keeps complex128 so forward/adjoint
    pairs agree to full precision.

    interp "cubic" evaluates the band-limited field by periodic cubic
    interpolation of its FFT samples (the production path); "exact" sums
    the frequency lattice directly per probe point, removing the
    interpolation and cutoff-synthesis errors at O(N^2) cost per probe
    (small grids only).
    """
    if precision not in ("single", "double"):
        raise DomainError(f"unknown precision {precision!r}")
    if interp not in ("cubic", "exact"):
        raise DomainError(f"unknown interp {interp!r}")
    model = piece.model
    x_pts = np.atleast_2d(np.asarray(x_pts, dtype=float))
    m = x_pts.shape[0]
    y3s = grid.axis(2)
    n3 = y3s.size

    # S and Delta tables over probe x times slice
    s_tab = np.empty((n3, m, 2))
    d_tab = np.empty((n3, m, 2))
    for i, y3 in enumerate(y3s):
        s_tab[i] = s_at(model, x_pts, np.full(m, y3))
        if delta_fn is not None:
            d1, d2 = delta_fn(x_pts, np.full(m, y3))
        else:
            d1, d2 = deltas_at(model, x_pts, np.full(m, y3))
        d_tab[i, :, 0] = d1
        d_tab[i, :, 1] = d2

    # y3 movement rate of S for the resolution check
    if n3 >= 2:
        s_rate = float(np.max(np.abs(np.diff(s_tab, axis=0)))
                       / grid.spacing[2])
    else:
        s_rate = 0.0
    _resolution_check(piece, grid.spacing, s_rate)

    # period covering displacements plus the kernel spread; the second
    # floor keeps the frequency lattice fine enough to resolve the slab
    # cutoff (spacing <= 2^-l / TAU_RES in unit-shell coordinates)
    margin = max(0.35, 40.0 * 2.0 ** (piece.l - piece.k))
    res_need = 2.0 * np.pi * TAU_RES * 2.0 ** (piece.l - piece.k)
    nfft = []
    for axis in range(2):
        f_lo = grid.origin[axis]
        f_hi = grid.origin[axis] + grid.spacing[axis] * (grid.shape[axis] - 1)
        d_max = max(abs(f_hi - float(s_tab[..., axis].min())),
                    abs(float(s_tab[..., axis].max()) - f_lo))
        need = max(d_max + margin, res_need) / grid.spacing[axis]
        n = _fft.next_fast_len(max(int(math.ceil(need)), grid.shape[axis]))
        if n > FFT_BUDGET:
            raise QuadratureError(
                f"axis {axis} needs FFT size {n} > budget {FFT_BUDGET}"
            )
        nfft.append(n)

    # lattice frequencies and the annulus weight
    k2 = 2.0 ** piece.k
    xi1 = 2.0 * np.pi * _fft.fftfreq(nfft[0], d=grid.spacing[0])
    xi2 = 2.0 * np.pi * _fft.fftfreq(nfft[1], d=grid.spacing[1])
    rr = np.hypot(xi1[:, None], xi2[None, :])
    ann = eta1(2.0 * rr / k2).astype(np.float32)
    # the annulus kills the corners of the lattice; slab factors only ever
    # need evaluating where it survives
    sup = np.flatnonzero(ann.ravel() > 0.0)
    xi_sup = (np.repeat(xi1, nfft[1])[sup], np.tile(xi2, nfft[0])[sup])

    dspread = float(np.max(np.abs(d_tab - d_tab[:, :1, :])))
    route = "mask" if dspread < 1e-12 else "omega"
    plan = ApplyPlan(
        piece=piece, x_pts=x_pts, shape=tuple(grid.shape),
        origin=grid.origin.copy(), spacing=grid.spacing.copy(),
        nfft=tuple(nfft), y3s=y3s, w3=_trap_weights(y3s, grid.spacing[2]),
        s_tab=s_tab, route=route,
        d_tab=d_tab[:, 0, :].copy() if route == "mask" else d_tab,
        ann=ann, xi1=xi1, xi2=xi2, interp=interp,
        meta={"s_rate": s_rate, "delta_spread": dspread, "margin": margin,
              "sup": sup, "ann_sup": ann.ravel()[sup], "xi_sup": xi_sup,
              "cdtype": np.complex64 if precision == "single"
              else np.complex128},
    )
    if interp == "exact":
        if nfft[0] * nfft[1] * m > 2e8:
            raise QuadratureError(
                "exact lattice summation too large "
                f"({nfft[0]}x{nfft[1]} lattice, {m} probes); use cubic"
            )
        return plan
    if route == "omega":
        dnorm_max = float(np.max(np.hypot(d_tab[..., 0], d_tab[..., 1])))
        v_max = 2.0 ** piece.l * 1.05 * dnorm_max
        if piece.l == piece.k // 3:
            # cap profile in the common variable v = 2^l u is eta0(v/2),
            # whose transform is 2 eta0_hat(2 omega)
            def hat(om):
                return 2.0 * eta0_hat(2.0 * np.asarray(om, dtype=float))
        else:
            hat = eta1_hat
        if om_target is None:
            om_target = "fine" if piece.k <= 7 else "fast"
        plan.omegas, plan.om_coeffs = omega_plan(v_max, hat, om_target)
        plan.meta["v_max"] = v_max
        plan.meta["om_target"] = om_target
    if piece.alpha is not None:
        plan.alpha_tab = np.stack(
            [piece.alpha(x_pts, y3) * np.ones(m) for y3 in y3s]
        )
    return plan


def _trap_weights(y3s, h3):
    w = np.full(y3s.size, h3)
    if y3s.size >= 2:
        w[0] = w[-1] = h3 / 2.0
    return w


def _cubic_weights(f):
    f2 = f * f
    f3 = f2 * f
    return (
        -0.5 * f3 + f2 - 0.5 * f,
        1.5 * f3 - 2.5 * f2 + 1.0,
        -1.5 * f3 + 2.0 * f2 + 0.5 * f,
        0.5 * f3 - 0.5 * f2,
    )


def _interp_weights(plan, q):
    """Periodic Catmull-Rom: flat lattice indices (n, 16) and weights."""
    n1, n2 = plan.nfft
    t1 = (q[:, 0] - plan.origin[0]) / plan.spacing[0]
    t2 = (q[:, 1] - plan.origin[1]) / plan.spacing[1]
    i1 = np.floor(t1).astype(np.int64)
    i2 = np.floor(t2).astype(np.int64)
    w1 = np.stack(_cubic_weights(t1 - i1), axis=1)
    w2 = np.stack(_cubic_weights(t2 - i2), axis=1)
    j1 = (i1[:, None] + np.arange(-1, 3)[None, :]) % n1
    j2 = (i2[:, None] + np.arange(-1, 3)[None, :]) % n2
    idx = (j1[:, :, None] * n2 + j2[:, None, :]).reshape(-1, 16)
    wgt = (w1[:, :, None] * w2[:, None, :]).reshape(-1, 16)
    return idx, wgt


def _gather(gflat, idx, wgt):
    return np.sum(gflat[idx] * wgt, axis=1)


def _slice_spectrum(plan, samples, i):
    """Scaled, annulus-masked frequency lattice samples of slice i; the
    mask route folds in its (probe-independent) slab factor."""
    n1, n2 = plan.nfft
    pad = np.zeros((n1, n2), dtype=plan.meta["cdtype"])
    pad[: plan.shape[0], : plan.shape[1]] = samples[:, :, i]
    spec = _fft.ifft2(pad, workers=-1)
    scale = (plan.xi1[1] - plan.xi1[0]) * (plan.xi2[1] - plan.xi2[0]) \
        * plan.spacing[0] * plan.spacing[1] * n1 * n2
    spec *= scale
    if plan.route == "mask":
        return (_mask_mult(plan, i, spec.ravel())).reshape(n1, n2)
    return spec * plan.ann


def _mask_mult(plan, i, sflat):
    """ann * slab multiplier of slice i applied on the annulus support."""
    slab = plan.piece.slab()
    x1s, x2s = plan.meta["xi_sup"]
    sup = plan.meta["sup"]
    u = (plan.d_tab[i, 0] * x1s + plan.d_tab[i, 1] * x2s) \
        / 2.0 ** plan.piece.k
    out = np.zeros(sflat.size, dtype=sflat.dtype)
    out[sup] = sflat[sup] * (plan.meta["ann_sup"]
                             * slab(u).astype(np.float32))
    return out


def _slice_fields(plan, samples, i):
    return _fft.fft2(_slice_spectrum(plan, samples, i), workers=-1)


def _exact_eval(plan, spec, i):
    """Direct frequency-lattice summation at the probe points."""
    s1 = plan.s_tab[i, :, 0] - plan.origin[0]
    s2 = plan.s_tab[i, :, 1] - plan.origin[1]
    e1 = np.exp(-1j * np.outer(plan.xi1, s1))
    e2 = np.exp(-1j * np.outer(plan.xi2, s2))
    if plan.route == "mask":
        return np.einsum("am,am->m", e1, spec @ e2)
    slab = plan.piece.slab()
    k2 = 2.0 ** plan.piece.k
    out = np.empty(s1.size, dtype=np.complex128)
    for j in range(s1.size):
        u = (plan.d_tab[i, j, 0] * plan.xi1[:, None]
             + plan.d_tab[i, j, 1] * plan.xi2[None, :]) / k2
        out[j] = e1[:, j] @ (spec * slab(u)) @ e2[:, j]
    return out


def apply_planned(plan, gridfn, slab_len=None):
    """Apply the piece; returns values at plan.x_pts.

    With slab_len set, also returns the per-slab partial outputs keyed by
    the integer slab index floor(y3 / slab_len) (the slab partition of the
    grid's y3 axis), sharing the single pipeline pass.
    """
    if tuple(gridfn.shape) != plan.shape or \
            not np.allclose(gridfn.origin, plan.origin) or \
            not np.allclose(gridfn.spacing, plan.spacing):
        raise DomainError("grid layout does not match plan")
    m = plan.x_pts.shape[0]
    total = np.zeros(m, dtype=np.complex128)
    parts = {}
    lk = 2.0 ** (plan.piece.l - plan.piece.k)
    for i in range(plan.n_slices):
        if plan.interp == "exact":
            ci = _exact_eval(plan, _slice_spectrum(plan, gridfn.samples, i),
                             i)
        elif plan.route == "mask":
            g = _slice_fields(plan, gridfn.samples, i).ravel()
            idx, wgt = _interp_weights(plan, plan.s_tab[i])
            ci = _gather(g, idx, wgt)
        else:
            g = _slice_fields(plan, gridfn.samples, i).ravel()
            ci = np.zeros(m, dtype=np.complex128)
            for b in range(0, plan.omegas.size, _OM_BLOCK):
                om = plan.omegas[b:b + _OM_BLOCK]
                q = (plan.s_tab[i][None, :, :]
                     - (om * lk)[:, None, None] * plan.d_tab[i][None])
                idx, wgt = _interp_weights(plan, q.reshape(-1, 2))
                vals = _gather(g, idx, wgt).reshape(om.size, m)
                ci += plan.om_coeffs[b:b + _OM_BLOCK] @ vals
        if plan.alpha_tab is not None:
            ci = ci * plan.alpha_tab[i]
        contrib = plan.w3[i] * ci
        total += contrib
        if slab_len is not None:
            key = int(math.floor(plan.y3s[i] / slab_len + 1e-12))
            if key not in parts:
                parts[key] = np.zeros(m, dtype=np.complex128)
            parts[key] += contrib
    if slab_len is not None:
        return total, parts
    return total


def adjoint_planned(plan, gvals):
    """Exact discrete adjoint of apply_planned (plain inner products)."""
    if plan.interp != "cubic":
        raise DomainError("adjoint needs an interp='cubic' plan")
    n1, n2 = plan.nfft
    cdtype = plan.meta["cdtype"]
    out = np.zeros(plan.shape, dtype=np.complex128)
    lk = 2.0 ** (plan.piece.l - plan.piece.k)
    scale = (plan.xi1[1] - plan.xi1[0]) * (plan.xi2[1] - plan.xi2[0]) \
        * plan.spacing[0] * plan.spacing[1] * n1 * n2
    for i in range(plan.n_slices):
        gv = plan.w3[i] * gvals
        if plan.alpha_tab is not None:
            gv = gv * np.conj(plan.alpha_tab[i])
        acc = np.zeros(n1 * n2, dtype=np.complex128)
        if plan.route == "mask":
            idx, wgt = _interp_weights(plan, plan.s_tab[i])
            np.add.at(acc, idx.ravel(), (gv[:, None] * wgt).ravel())
        else:
            m = plan.x_pts.shape[0]
            for b in range(0, plan.omegas.size, _OM_BLOCK):
                om = plan.omegas[b:b + _OM_BLOCK]
                q = (plan.s_tab[i][None, :, :]
                     - (om * lk)[:, None, None] * plan.d_tab[i][None])
                idx, wgt = _interp_weights(plan, q.reshape(-1, 2))
                vals = (np.conj(plan.om_coeffs[b:b + _OM_BLOCK])[:, None]
                        * gv[None, :]).reshape(-1, 1)
                np.add.at(acc, idx.ravel(), (vals * wgt).ravel())
        acc = acc.reshape(n1, n2).astype(cdtype)
        spec = _fft.ifft2(acc, workers=-1) * (n1 * n2)
        if plan.route == "mask":
            spec = _mask_mult(plan, i, spec.ravel()).reshape(n1, n2)
        else:
            spec = spec * plan.ann
        back = _fft.fft2(spec, workers=-1) * (scale / (n1 * n2))
        out[:, :, i] += back[: plan.shape[0], : plan.shape[1]]
    return out


def apply_Rkl(piece, gridfn, x_pts, om_target=None, delta_fn=None,
              slab_len=None, precision="single"):
    plan = make_plan(piece, gridfn, x_pts, om_target=om_target,
                     delta_fn=delta_fn, precision=precision)
    return apply_planned(plan, gridfn, slab_len=slab_len)


def apply_Rk(model, k, gridfn, x_pts, precision="single"):
    """The full 2^k-shell operator (no fold-distance cutoff)."""
    if not (isinstance(k, (int, np.integer)) and k >= 1):
        raise DomainError(f"need integer k >= 1, got {k}")
    piece = DyadicPiece(model=model, k=int(k), l=0)
    plan = make_plan(piece, gridfn, x_pts, precision=precision)
    plan.route = "rk"
    m = plan.x_pts.shape[0]
    total = np.zeros(m, dtype=np.complex128)
    for i in range(plan.n_slices):
        g = _slice_fields_rk(plan, gridfn.samples, i).ravel()
        idx, wgt = _interp_weights(plan, plan.s_tab[i])
        total += plan.w3[i] * _gather(g, idx, wgt)
    return total


def _slice_fields_rk(plan, samples, i):
    n1, n2 = plan.nfft
    pad = np.zeros((n1, n2), dtype=plan.meta["cdtype"])
    pad[: plan.shape[0], : plan.shape[1]] = samples[:, :, i]
    spec = _fft.ifft2(pad, workers=-1)
    scale = (plan.xi1[1] - plan.xi1[0]) * (plan.xi2[1] - plan.xi2[0]) \
        * plan.spacing[0] * plan.spacing[1] * n1 * n2
    return _fft.fft2(spec * (scale * plan.ann), workers=-1)
