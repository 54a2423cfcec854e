"""Anisotropic frequency plates along a fold cone.

The cone of a normalized pair with curvature kappa0 is swept by the
generator direction

    T1(b) = -kappa0 b e1 + e2 - (kappa0 b^2/2) e3.

T2(b) is the along-cone tangent chosen perpendicular to T1(b), and
N(b) = T1(b) ^ (e1 + b e3) the normal.  A plate with aperture A and width
delta is the anisotropic box

    1/A <= |<T1_hat, xi>| <= A,   |<T2_hat, xi>| <= A delta,
    |<N_hat, xi>| <= A delta^2.

Two exact polynomial frame identities drive the localization geometry:

    <N(b),  T1(z3)> = kappa0 (z3 - b)^2 / 2
    <T2(b), T1(z3)> = -kappa0 (z3 - b) (1 + b(z3+b)/2 + kappa0^2 b^3 z3/4)

so a vector proportional to the generator at z3 sits in the plate based at
b with tangential offset ~ |kappa0| |z3-b| and normal offset
~ |kappa0| (z3-b)^2 / 2.  The statistical check samples frequency vectors
mu1 S'^1_w + mu2 S'^2_w of a normalized pair under the near-fold condition
|mu . Delta| <= M0 2^-l and tests containment in the plate based at the
left endpoint of the delta1-interval containing z3.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .canrel import det3, model_jets
from .changevars import _norm_step
from .errors import DegenerateFrameError, SamplerError

# fraction of the aperture budget reserved for Taylor-remainder terms when
# choosing the coefficient window of the localization sampler
DEFAULT_HEADROOM = 0.15


def default_aperture(kappa0):
    return 2.0 * (1.0 + abs(kappa0))


@dataclass(frozen=True)
class PlateFrame:
    """Cone-aligned frame at parameter b (batch over b supported)."""

    b: np.ndarray
    kappa0: float
    t1: np.ndarray
    t2: np.ndarray
    n: np.ndarray

    def units(self):
        def hat(v):
            return v / np.linalg.norm(v, axis=-1, keepdims=True)

        return hat(self.t1), hat(self.t2), hat(self.n)


def plate_frame(b, kappa0):
    """Exact closed-form frame vectors at parameter b; |b| <= 1 intended."""
    b = np.asarray(b, dtype=float)
    k = float(kappa0)
    one = np.ones_like(b)
    t1 = np.stack([-k * b, one, -0.5 * k * b ** 2], axis=-1)
    t2 = np.stack([1.0 - 0.25 * k ** 2 * b ** 4,
                   k * b * (1.0 + 0.5 * b ** 2),
                   b + 0.5 * k ** 2 * b ** 3], axis=-1)
    n = np.stack([b, 0.5 * k * b ** 2, -one], axis=-1)
    return PlateFrame(b=b, kappa0=k, t1=t1, t2=t2, n=n)


@dataclass(frozen=True)
class Plate:
    frame: PlateFrame
    A: float
    delta: float


def plate_margins(plate, xi):
    """Relative margins of the three plate inequalities (>= 0 iff inside).

    First margin is the two-sided generator window min(p1 - 1/A, A - p1)
    scaled by 1/A; the tangential and normal margins are 1 - p/(bound).
    """
    t1h, t2h, nh = plate.frame.units()
    xi = np.asarray(xi, dtype=float)
    p1 = np.abs(np.sum(t1h * xi, axis=-1))
    p2 = np.abs(np.sum(t2h * xi, axis=-1))
    p3 = np.abs(np.sum(nh * xi, axis=-1))
    A, d = plate.A, plate.delta
    m1 = np.minimum(p1 - 1.0 / A, A - p1) / A
    m2 = 1.0 - p2 / (A * d)
    m3 = 1.0 - p3 / (A * d ** 2)
    return np.stack([m1, m2, m3], axis=-1)


def plate_contains(plate, xi):
    return np.all(plate_margins(plate, xi) >= 0.0, axis=-1)


@dataclass(frozen=True)
class ScaleWindow:
    """Admissibility predicate for the pair (delta0, delta1) at level l.

    Strict mode keeps the proof constants (2^20 window guard, 2^100 shape
    guard); relaxed mode replaces them by c1, c2.  Both modes share the
    structure: delta0, delta1 inside the window, delta1 below delta0 and
    above the decoupling shape floor.
    """

    level: int
    eps: float
    m0: float
    mode: str
    c1: float
    c2: float
    m1: float

    def window(self):
        l, e2 = self.level, self.eps ** 2
        if self.mode == "strict":
            lo = self.m0 ** 2 * 2.0 ** (20.0 - l * (1.0 - e2))
            hi = 2.0 ** (-l * e2 - 20.0) / self.m0 ** 2
        else:
            lo = self.m0 ** 2 * self.c1 * 2.0 ** (-l * (1.0 - e2))
            hi = 2.0 ** (-l * e2) / (self.c1 * self.m0 ** 2)
        return lo, hi

    def shape_floor(self, delta0):
        base = max(math.sqrt(2.0 ** (-self.level) * delta0), delta0 ** 1.5)
        if self.mode == "strict":
            return 2.0 ** 100 * self.m1 * base
        return self.c2 * base

    def admissible(self, delta0, delta1):
        lo, hi = self.window()
        return (lo < delta0 < hi and lo < delta1 < hi
                and self.shape_floor(delta0) < delta1 < delta0)

    def ladder(self, max_pairs=32):
        """Quarter-octave (delta0, delta1) pairs, widest delta0 first."""
        lo, hi = self.window()
        if not (0.0 < lo < hi):
            return []
        pairs = []
        j_lo = int(math.ceil(4.0 * math.log2(1.0 / hi)))
        j_hi = int(math.floor(4.0 * math.log2(1.0 / lo)))
        for j0 in range(max(j_lo, 1), j_hi + 1):
            d0 = 2.0 ** (-j0 / 4.0)
            for j1 in range(j0 + 1, j_hi + 1):
                d1 = 2.0 ** (-j1 / 4.0)
                if self.admissible(d0, d1):
                    pairs.append((d0, d1))
                    if len(pairs) >= max_pairs:
                        return pairs
        return pairs

    @property
    def empty(self):
        return len(self.ladder(max_pairs=1)) == 0

    def to_json(self):
        lo, hi = self.window()
        return {
            "level": self.level, "eps": self.eps, "m0": self.m0,
            "mode": self.mode, "window": [lo, hi], "empty": self.empty,
        }


def admissible_scales(level, eps, m0, mode="strict", c1=4.0, c2=16.0,
                      m1=None):
    if not (level >= 1 and 0.0 < eps < 0.5):
        raise ValueError(f"need level >= 1 and eps in (0, 1/2), got "
                         f"{level}, {eps}")
    return ScaleWindow(level=level, eps=eps, m0=float(m0), mode=mode,
                       c1=float(c1), c2=float(c2),
                       m1=float(m0 if m1 is None else m1))


def desk_scales(level, m0, r3):
    """Fallback (delta0, delta1) when the admissibility ladder is empty.

    delta0 caps at 2^-4 and inside the z3-radius; delta1 sits a factor 2-4
    below, pushed up toward the floor 4 M0 2^-l (near-fold band well below
    the tangential width) when the box allows it, but never above delta0/2.
    """
    d0 = min(2.0 ** -4, 0.7 * r3)
    d1 = min(max(d0 / 4.0, 4.0 * m0 * 2.0 ** (-level)), d0 / 2.0)
    return d0, d1


def _alpha_window(aperture, kappa0, phi, headroom):
    """Coefficient window on which all three plate inequalities can hold.

    phi is the near-fold slack fraction M0 2^-l / delta1; the tangential
    budget loses 1.2*phi to it.  The window converges to (1/4, 4] as the
    slack and headroom vanish (kappa0 <= 1)."""
    lo = max(0.26, (1.0 + headroom) / aperture)
    hi = min(3.9,
             aperture * (1.0 - headroom),
             (aperture * (1.0 - headroom) - 1.2 * phi)
             / max(abs(kappa0), 0.2))
    if not hi > lo * 1.05:
        raise SamplerError(
            f"plate coefficient window empty: [{lo:.3f}, {hi:.3f}] at "
            f"aperture {aperture:.3f}, slack {phi:.3f}"
        )
    return lo, hi


@dataclass
class PlateReport:
    model: str
    level: int
    delta0: float
    delta1: float
    mode: str
    n: int
    contained_fraction: float
    worst_margins: list
    extra: dict = field(default_factory=dict)

    def to_json(self):
        out = {
            "model": self.model,
            "level": self.level,
            "delta0": self.delta0,
            "delta1": self.delta1,
            "mode": self.mode,
            "n": self.n,
            "contained_fraction": self.contained_fraction,
            "worst_margins": self.worst_margins,
        }
        out.update(self.extra)
        return out


def _sample_deltas(norm, w, z3, h):
    """Delta_1, Delta_2 and the two w-gradients of the normalized pair."""
    j1, j2 = model_jets(norm.model, w, z3, order=2, mode="fd", step=h)
    g1 = j1.grad_x()
    g2 = j2.grad_x()
    d1 = det3(g1, g2, j1.grad_x(ny3=1))
    d2 = det3(g1, g2, j2.grad_x(ny3=1))
    return d1, d2, g1, g2


def plate_localization_check(norm, level, delta0=None, delta1=None,
                             n_samples=2000, seed=0, aperture=None,
                             headroom=DEFAULT_HEADROOM, violation_factor=None,
                             scale_mode=None, detcond_band=None, batch=2500):
    """Sample near-fold frequency vectors of a normalized pair and test
    plate containment at aperture A = 2(1+|kappa0|).

    Samples (w, z3, mu) with |w|_inf <= 2^-level, |z3| <= delta0 and
    |mu1 Delta_1 + mu2 Delta_2| <= band (mu built as alpha times the unit
    codirection (-Delta_2, Delta_1)/|Delta| plus a jitter spanning the
    allowed near-fold band; alpha is drawn log-uniformly from the window on
    which the plate inequalities are satisfiable, recorded in the report).
    The band defaults to M0 2^-level clamped to delta1/4: the containment
    statement presupposes the band sits well below the tangential width
    delta1, and at coarse levels where the measured M0 and box radii cannot
    realize that ordering the clamp restores it; the report records the
    fraction of the nominal band actually exercised.  The plate parameter
    is the left endpoint of the delta1-interval containing z3.  With
    violation_factor set, the jitter violates the band by that factor
    instead (negative control).
    """
    k0 = norm.kappa0
    if abs(k0) < 1e-8:
        raise DegenerateFrameError("plate localization needs kappa0 != 0")
    m0 = norm.m0
    if delta0 is None or delta1 is None:
        delta0, delta1 = desk_scales(level, m0, norm.radii[3])
        scale_mode = scale_mode or "desk"
    scale_mode = scale_mode or "given"
    A = default_aperture(k0) if aperture is None else float(aperture)
    h = _norm_step(norm)
    rw = min(2.0 ** (-level), norm.radii[1] / 2.0 - 2.5 * h)
    rz = min(delta0, norm.radii[3] - 2.5 * h)
    nominal_band = m0 * 2.0 ** (-level)
    detband = (min(nominal_band, delta1 / 4.0) if detcond_band is None
               else float(detcond_band))
    phi = detband / delta1
    a_lo, a_hi = _alpha_window(A, k0, phi, headroom)

    rng = np.random.default_rng(np.random.SeedSequence(seed))
    accepted = 0
    drawn = 0
    contained = 0
    worst = np.full(3, np.inf)
    while accepted < n_samples:
        if drawn > 200 * n_samples + 10 * batch:
            raise SamplerError(
                f"sampler starvation: {accepted}/{drawn} accepted"
            )
        m = min(batch, 4 * (n_samples - accepted) + 64)
        drawn += m
        w = rng.uniform(-rw, rw, size=(m, 3))
        z3 = rng.uniform(-rz, rz, size=m)
        d1, d2, g1, g2 = _sample_deltas(norm, w, z3, h)
        dn = np.hypot(d1, d2)
        ok = dn > 1e-10
        alpha = (rng.choice([-1.0, 1.0], size=m)
                 * np.exp(rng.uniform(np.log(a_lo), np.log(a_hi), size=m)))
        if violation_factor is None:
            eta = rng.uniform(-1.0, 1.0, size=m)
        else:
            eta = (rng.choice([-1.0, 1.0], size=m)
                   * rng.uniform(0.5, 1.0, size=m) * violation_factor)
        with np.errstate(divide="ignore", invalid="ignore"):
            mu1 = (alpha * (-d2) + eta * detband * d1 / dn) / dn
            mu2 = (alpha * d1 + eta * detband * d2 / dn) / dn
        mu_norm = np.hypot(mu1, mu2)
        ok &= (mu_norm > 0.25) & (mu_norm <= 4.0)
        det_val = np.abs(mu1 * d1 + mu2 * d2)
        if violation_factor is None:
            ok &= det_val <= detband * (1.0 + 1e-9)
        else:
            ok &= det_val > detband
        if not np.any(ok):
            continue
        xi = mu1[ok, None] * g1[ok] + mu2[ok, None] * g2[ok]
        b = delta1 * np.floor(z3[ok] / delta1)
        plate = Plate(frame=plate_frame(b, k0), A=A, delta=delta1)
        marg = plate_margins(plate, xi)
        take = min(int(np.sum(ok)), n_samples - accepted)
        marg = marg[:take]
        accepted += take
        contained += int(np.sum(np.all(marg >= 0.0, axis=-1)))
        worst = np.minimum(worst, marg.min(axis=0))
    rate = accepted / drawn
    if rate < 1e-4:
        raise SamplerError(f"sampler starvation: rate {rate:.2e}")
    return PlateReport(
        model=norm.model.name,
        level=level,
        delta0=float(delta0),
        delta1=float(delta1),
        mode=scale_mode,
        n=accepted,
        contained_fraction=contained / accepted,
        worst_margins=[float(v) for v in worst],
        extra={
            "aperture": A,
            "kappa0": float(k0),
            "m0": float(m0),
            "alpha_window": [a_lo, a_hi],
            "acceptance_rate": rate,
            "violation_factor": violation_factor,
            "headroom": headroom,
            "detcond_band": float(detband),
            "detcond_band_fraction": float(detband / nominal_band),
            "sample_radii": [float(rw), float(rz)],
        },
    )
