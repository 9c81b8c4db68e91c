"""Double-null Schwarzschild background.

The gauge ties the two null coordinates to the area radius through

    (r - r0) * exp(r / r0) = s * exp((s + us + r0) / r0),

with r0 the horizon radius (twice the mass).  Every structure
coefficient of the double-null frame then has a closed form in (s, us, r):

    Omega^2    = (s + r0) * E / r,   E = exp((s + us + r0 - r) / r0),
    tr chi     = 2 (r - r0) / r^2,
    tr chibar  = 2 Omega^2 / r,
    omega      = r0 / (2 r^2),
    omegabar   = (1/2) [ 1/(s+r0) + (1 - Omega^2)/r0 - Omega^2/r ],
    tr chi'    = 2 s / (r (s + r0)),

the primed expansion being the Omega^-2 rescaling of tr chi.  The factor
E equals (r - r0)/s wherever s is nonzero and regularizes that ratio
through the horizon, where s = 0, r = r0 exactly and tr chi vanishes.
The shift and the torsions vanish identically in this background, and
nothing here depends on the angle.
"""

from dataclasses import dataclass

import numpy as np

__all__ = ["SchwarzschildGauge", "BackgroundPoint", "parse_grid", "table_rows", "TABLE_COLUMNS"]


@dataclass
class BackgroundPoint:
    """Scalar background data at one (s, us) pair (or arrays of them)."""

    s: object
    us: object
    r: object
    omega2: object
    trchi: object
    trchibar: object
    omega: object
    omegabar: object
    trchiprime: object
    ds_trchiprime: object
    dus_trchiprime: object
    ds_r: object
    dus_r: object
    ds_omega2: object
    dus_omega2: object
    ds_trchi: object
    dus_trchi: object
    ds_trchibar: object
    dus_trchibar: object
    ds_omega: object
    dus_omega: object
    ds_omegabar: object
    dus_omegabar: object


class SchwarzschildGauge:
    """Background slab |s| <= kappa r0, |us| <= tau r0 around the horizon sphere.

    Parameters
    ----------
    m : float
        Mass; the horizon radius is r0 = 2 m.
    kappa : float
        Half-width of the ingoing coordinate slab in units of r0, in (0, 1).
    tau : float
        Half-width of the outgoing slab in units of r0, positive.
    """

    def __init__(self, m, kappa=0.3, tau=0.3):
        if m <= 0.0:
            raise ValueError("mass must be positive")
        if not 0.0 < kappa < 1.0:
            raise ValueError("kappa must lie in (0, 1)")
        if tau <= 0.0:
            raise ValueError("tau must be positive")
        # the gauge relation must stay solvable for r in (0, r0] at the
        # trapped corner s = -kappa r0, us = +tau r0
        if kappa * np.exp(1.0 - kappa + tau) >= 1.0:
            raise ValueError("slab too wide: need kappa * exp(1 - kappa + tau) < 1")
        self.m = float(m)
        self.r0 = 2.0 * float(m)
        self.kappa = float(kappa)
        self.tau = float(tau)

    def _check_domain(self, s, us):
        slack = 1e-9 * self.r0
        if np.any(np.abs(s) > self.kappa * self.r0 + slack):
            raise ValueError("s outside the gauge slab |s| <= kappa r0")
        if np.any(np.abs(us) > self.tau * self.r0 + slack):
            raise ValueError("us outside the gauge slab |us| <= tau r0")

    def area_radius(self, s, us):
        """Solve the gauge relation for r.

        Bisection on the monotone form (r - r0) exp(r/r0) brings the
        bracket down far enough for Newton on the regularized residual
        (r - r0) - s E(r) to finish at machine precision; the residual
        |(r - r0) - s E| stays below 1e-12 r0 on the whole slab.
        """
        s = np.asarray(s, dtype=float)
        us = np.asarray(us, dtype=float)
        self._check_domain(s, us)
        s, us = np.broadcast_arrays(s, us)
        r0 = self.r0
        rhs = s * np.exp((s + us + r0) / r0)
        grow = s * np.exp((s + us) / r0)
        lo = np.where(s >= 0.0, r0, np.maximum(1e-6 * r0, r0 + 2.0 * grow))
        hi = np.where(s >= 0.0, r0 + 2.0 * np.maximum(grow, 1e-3 * r0), r0)
        # widen the s < 0 lower edge until it brackets
        for _ in range(60):
            bad = ((lo - r0) * np.exp(lo / r0) > rhs) & (s < 0.0)
            if not np.any(bad):
                break
            lo = np.where(bad, 0.5 * lo, lo)
        else:
            raise RuntimeError("failed to bracket the area radius")
        for _ in range(30):
            mid = 0.5 * (lo + hi)
            f = (mid - r0) * np.exp(mid / r0) - rhs
            lo = np.where(f <= 0.0, mid, lo)
            hi = np.where(f <= 0.0, hi, mid)
        r = 0.5 * (lo + hi)
        for _ in range(6):
            e = np.exp((s + us + r0 - r) / r0)
            g = (r - r0) - s * e
            dg = 1.0 + s * e / r0
            r = r - g / dg
        r = np.where(s == 0.0, r0, r)
        return r if r.ndim else float(r)

    def coefficients(self, s, us):
        """All scalar structure coefficients and their (s, us) derivatives."""
        s = np.asarray(s, dtype=float)
        us = np.asarray(us, dtype=float)
        s, us = np.broadcast_arrays(s, us)
        r0 = self.r0
        r = np.asarray(self.area_radius(s, us))
        e = np.exp((s + us + r0 - r) / r0)
        omega2 = (s + r0) * e / r
        ds_r = omega2
        dus_r = (r - r0) / r
        trchi = 2.0 * (r - r0) / r ** 2
        trchibar = 2.0 * omega2 / r
        omega = r0 / (2.0 * r ** 2)
        omegabar = 0.5 * (1.0 / (s + r0) + (1.0 - omega2) / r0 - omega2 / r)
        trchiprime = 2.0 * s / (r * (s + r0))
        ds_trchiprime = 2.0 * (r * r0 - s * (s + r0) * omega2) / (r * (s + r0)) ** 2
        dus_trchiprime = -2.0 * s * s * e / (r ** 3 * (s + r0))
        ds_omega2 = 2.0 * omegabar * omega2
        dus_omega2 = 2.0 * omega * omega2
        ds_trchi = 2.0 * omega2 * (2.0 * r0 - r) / r ** 3
        dus_trchi = 2.0 * (r - r0) * (2.0 * r0 - r) / r ** 4
        ds_trchibar = 2.0 * ds_omega2 / r - 2.0 * omega2 * ds_r / r ** 2
        dus_trchibar = 2.0 * dus_omega2 / r - 2.0 * omega2 * dus_r / r ** 2
        ds_omega = -r0 * ds_r / r ** 3
        dus_omega = -r0 * dus_r / r ** 3
        inv = 1.0 / r0 + 1.0 / r
        ds_omegabar = 0.5 * (-1.0 / (s + r0) ** 2 - ds_omega2 * inv + omega2 * ds_r / r ** 2)
        dus_omegabar = 0.5 * (-dus_omega2 * inv + omega2 * dus_r / r ** 2)
        point = BackgroundPoint(
            s=s, us=us, r=r, omega2=omega2, trchi=trchi, trchibar=trchibar,
            omega=omega, omegabar=omegabar, trchiprime=trchiprime,
            ds_trchiprime=ds_trchiprime, dus_trchiprime=dus_trchiprime,
            ds_r=ds_r, dus_r=dus_r, ds_omega2=ds_omega2, dus_omega2=dus_omega2,
            ds_trchi=ds_trchi, dus_trchi=dus_trchi,
            ds_trchibar=ds_trchibar, dus_trchibar=dus_trchibar,
            ds_omega=ds_omega, dus_omega=dus_omega,
            ds_omegabar=ds_omegabar, dus_omegabar=dus_omegabar,
        )
        return point

    def trchi_prime_partials(self, s, us):
        """(d_s, d_us) of the rescaled expansion tr chi'."""
        c = self.coefficients(s, us)
        return c.ds_trchiprime, c.dus_trchiprime

    def gauge_residual(self, s, us, r):
        """Regularized defect |(r - r0) - s E(r)| of the gauge relation."""
        s = np.asarray(s, dtype=float)
        us = np.asarray(us, dtype=float)
        e = np.exp((s + us + self.r0 - np.asarray(r)) / self.r0)
        return np.abs((np.asarray(r) - self.r0) - s * e)


def parse_grid(text):
    """Parse an a:b:n range string into a float array (CLI helper)."""
    parts = text.split(":")
    if len(parts) != 3:
        raise ValueError("grid must be start:stop:count")
    a, b, n = float(parts[0]), float(parts[1]), int(parts[2])
    if n < 1:
        raise ValueError("grid count must be positive")
    return np.linspace(a, b, n)


def table_rows(gauge, s_grid, us_grid):
    """Rows (s, us, coefficient columns) over the tensor grid of inputs."""
    rows = []
    for s in s_grid:
        for us in us_grid:
            c = gauge.coefficients(s, us)
            rows.append([float(s), float(us), float(c.r), float(c.omega2),
                         float(c.trchi), float(c.trchibar), float(c.omega),
                         float(c.omegabar), float(c.trchiprime),
                         float(c.ds_trchiprime), float(c.dus_trchiprime)])
    return rows


TABLE_COLUMNS = ["s", "us", "r", "omega2", "trchi", "trchibar", "omega",
                 "omegabar", "trchiprime", "ds_trchiprime", "dus_trchiprime"]
