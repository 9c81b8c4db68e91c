"""Spectral calculus on the round unit sphere.

Collocation grid: Gauss-Legendre nodes in cos(theta) crossed with an
equispaced longitude circle, so quadrature is exact for integrands of
harmonic degree <= 2*band_limit and the poles are never sampled.  Scalars
are carried in a real orthonormal spherical harmonic basis, indexed
l-major as l*l + l + m with m = -l..l; the m > 0 entries multiply
sqrt(2)*Pbar_l^m(cos theta)*cos(m phi), the m < 0 entries the matching
sine harmonics, and Pbar is the Condon-Shortley-free fully normalized
associated Legendre function.

Angular derivatives of any order are synthesized directly from the
coefficients (theta derivatives of the Legendre tables come from their
defining second order ODE, phi derivatives are diagonal per Fourier
mode), so repeated differentiation never re-analyzes a non-scalar grid
function.  Covariant derivative stacks for the Sobolev norms are built in
the orthonormal dyad (d_theta, csc(theta) d_phi), whose connection
coefficient is cot(theta); the combination weights live in the polynomial
ring generated by cot(theta) and csc(theta), which is closed under
differentiation.
"""

import json
import math
import os

import numpy as np

__all__ = [
    "SphereGrid",
    "SphereField",
    "NormSpec",
    "lm_index",
    "index_lm",
    "num_coeffs",
    "pad_coeffs",
    "truncate_coeffs",
    "default_pad_limit",
    "rotation_apply",
    "sobolev_norm",
    "gradient_squared",
    "covariant_derivatives",
    "laplacian",
    "solve_poisson",
    "covariant_hessian",
    "resample",
    "save_field",
    "load_field",
]


def lm_index(l, m):
    """Flat index of the real harmonic (l, m) in l-major order."""
    return l * l + l + m


def index_lm(idx):
    """Inverse of :func:`lm_index`."""
    l = int(math.isqrt(idx))
    return l, idx - l * l - l


def num_coeffs(band_limit):
    return (band_limit + 1) ** 2


def default_pad_limit(band_limit):
    """Band limit used for dealiased pointwise products."""
    return int(math.ceil(3 * band_limit / 2))


def pad_coeffs(coeffs, band_in, band_out):
    """Embed a coefficient vector into a larger band limit (zero fill)."""
    if band_out < band_in:
        raise ValueError("band_out must be >= band_in")
    out = np.zeros(num_coeffs(band_out))
    for l in range(band_in + 1):
        out[lm_index(l, -l):lm_index(l, l) + 1] = coeffs[lm_index(l, -l):lm_index(l, l) + 1]
    return out


def truncate_coeffs(coeffs, band_in, band_out):
    """Drop the l > band_out part of a coefficient vector."""
    if band_out > band_in:
        raise ValueError("band_out must be <= band_in")
    out = np.zeros(num_coeffs(band_out))
    for l in range(band_out + 1):
        out[lm_index(l, -l):lm_index(l, l) + 1] = coeffs[lm_index(l, -l):lm_index(l, l) + 1]
    return out


# ----------------------------------------------------------------------
# polynomials in u = cot(theta), v = csc(theta)
#
# d/dtheta u = -v**2 and d/dtheta v = -u*v, so the ring is closed under
# differentiation; this is what lets the derivative tables and the
# covariant stacks stay exact at any order.

class _UV:
    """Sparse polynomial in (cot theta, csc theta)."""

    __slots__ = ("terms",)

    def __init__(self, terms=None):
        self.terms = dict(terms) if terms else {}

    @classmethod
    def const(cls, c):
        return cls({(0, 0): float(c)}) if c else cls()

    def copy(self):
        return _UV(self.terms)

    def add(self, other, scale=1.0):
        out = dict(self.terms)
        for key, c in other.terms.items():
            out[key] = out.get(key, 0.0) + scale * c
            if out[key] == 0.0:
                del out[key]
        return _UV(out)

    def scaled(self, s):
        return _UV({k: s * c for k, c in self.terms.items()}) if s else _UV()

    def mul_uv(self, du, dv):
        return _UV({(a + du, b + dv): c for (a, b), c in self.terms.items()})

    def deriv(self):
        out = {}
        for (a, b), c in self.terms.items():
            if a:
                key = (a - 1, b + 2)
                out[key] = out.get(key, 0.0) - a * c
            if b:
                key = (a + 1, b)
                out[key] = out.get(key, 0.0) - b * c
        return _UV({k: c for k, c in out.items() if c != 0.0})

    def __call__(self, u, v):
        acc = np.zeros_like(u)
        for (a, b), c in self.terms.items():
            acc = acc + c * (u ** a) * (v ** b)
        return acc


_UV_U = _UV({(1, 0): 1.0})
_UV_V = _UV({(0, 1): 1.0})


# ----------------------------------------------------------------------
# normalized associated Legendre tables

def _legendre_tables(band_limit, x):
    """Pbar_l^m(x) without the Condon-Shortley sign.

    Returns a list indexed by m; entry m is an array of shape
    (len(x), band_limit - m + 1) holding l = m .. band_limit.  The
    normalization is int_{S^2} (Pbar_l^0)^2 = 1 for m = 0 and
    int (sqrt(2) Pbar_l^m cos(m phi))^2 = 1 for m > 0, i.e.
    int_0^pi (Pbar_l^m)^2 sin(theta) dtheta = 1/(2 pi) for every m.
    """
    x = np.asarray(x, dtype=float)
    s = np.sqrt(np.maximum(1.0 - x * x, 0.0))
    tables = []
    pmm = np.full_like(x, 1.0 / math.sqrt(4.0 * math.pi))
    for m in range(band_limit + 1):
        cols = band_limit - m + 1
        tab = np.empty((x.size, cols))
        tab[:, 0] = pmm
        if cols > 1:
            tab[:, 1] = math.sqrt(2.0 * m + 3.0) * x * pmm
        for l in range(m + 2, band_limit + 1):
            a = math.sqrt((4.0 * l * l - 1.0) / (l * l - m * m))
            b = math.sqrt(((l - 1.0) ** 2 - m * m) / (4.0 * (l - 1.0) ** 2 - 1.0))
            tab[:, l - m] = a * (x * tab[:, l - m - 1] - b * tab[:, l - m - 2])
        tables.append(tab)
        if m < band_limit:
            pmm = math.sqrt((2.0 * m + 3.0) / (2.0 * m + 2.0)) * s * pmm
    return tables


def _legendre_theta_derivatives(band_limit, x, order, tables):
    """Tables of d^j/dtheta^j Pbar_l^m for j = 0 .. order.

    j = 1 uses the first order relation
        sin(theta) dP/dtheta = l x P_l - sqrt((l^2-m^2)(2l+1)/(2l-1)) P_{l-1},
    higher j iterate the Leibniz form of the defining ODE
        P'' = -cot(theta) P' - (l(l+1) - m^2 csc^2 theta) P.
    """
    x = np.asarray(x, dtype=float)
    s = np.sqrt(np.maximum(1.0 - x * x, 0.0))
    u = x / s
    v = 1.0 / s
    derivs = [tables]
    if order == 0:
        return derivs
    d1 = []
    for m in range(band_limit + 1):
        tab = tables[m]
        out = np.empty_like(tab)
        ls = np.arange(m, band_limit + 1, dtype=float)
        out[:] = ls[None, :] * x[:, None] * tab
        if tab.shape[1] > 1:
            lhi = ls[1:]
            d = np.sqrt((lhi * lhi - m * m) * (2.0 * lhi + 1.0) / (2.0 * lhi - 1.0))
            out[:, 1:] -= d[None, :] * tab[:, :-1]
        out /= s[:, None]
        d1.append(out)
    derivs.append(d1)
    if order == 1:
        return derivs
    # derivative arrays of the ODE coefficients
    a_poly = [_UV_U.scaled(-1.0)]
    v2_poly = [_UV_V.mul_uv(0, 1)]
    for _ in range(order - 2):
        a_poly.append(a_poly[-1].deriv())
        v2_poly.append(v2_poly[-1].deriv())
    a_ev = [p(u, v) for p in a_poly]
    v2_ev = [p(u, v) for p in v2_poly]
    for j in range(order - 1):
        nxt = []
        for m in range(band_limit + 1):
            ls = np.arange(m, band_limit + 1, dtype=float)
            lam = ls * (ls + 1.0)
            acc = np.zeros_like(tables[m])
            for i in range(j + 1):
                cji = math.comb(j, i)
                acc += cji * a_ev[i][:, None] * derivs[j + 1 - i][m]
                acc += cji * (m * m) * v2_ev[i][:, None] * derivs[j - i][m]
            acc -= lam[None, :] * derivs[j][m]
            nxt.append(acc)
        derivs.append(nxt)
    return derivs


# ----------------------------------------------------------------------

class SphereGrid:
    """Gauss-Legendre x equispaced collocation grid at a fixed band limit.

    Parameters
    ----------
    band_limit : int
        Highest resolved harmonic degree L.  The grid uses L+1 latitude
        nodes and 2(L+1) longitudes, enough for exact analysis of
        band-limited scalars and exact quadrature through degree 2L.
    """

    def __init__(self, band_limit):
        if band_limit < 1:
            raise ValueError("band_limit must be >= 1")
        self.band_limit = int(band_limit)
        self.nlat = self.band_limit + 1
        self.nlon = 2 * (self.band_limit + 1)
        xs, ws = np.polynomial.legendre.leggauss(self.nlat)
        order = np.argsort(-xs)          # theta increasing from the north pole
        self.x = xs[order]
        self.wtheta = ws[order]
        self.theta = np.arccos(self.x)
        self.sin_theta = np.sqrt(1.0 - self.x ** 2)
        self.phi = 2.0 * math.pi * np.arange(self.nlon) / self.nlon
        self.weights = self.wtheta[:, None] * (2.0 * math.pi / self.nlon) * np.ones((1, self.nlon))
        self.cot = self.x / self.sin_theta
        self.csc = 1.0 / self.sin_theta
        self._ptab = _legendre_tables(self.band_limit, self.x)
        self._dtab = {0: self._ptab}
        self._dtab_order = 0

    def __repr__(self):
        return "SphereGrid(band_limit=%d)" % self.band_limit

    @property
    def shape(self):
        return (self.nlat, self.nlon)

    def quad(self, values):
        """Surface integral of a grid function."""
        return float(np.sum(self.weights * values))

    def _theta_tables(self, order):
        if order > self._dtab_order:
            derivs = _legendre_theta_derivatives(self.band_limit, self.x, order, self._ptab)
            for j, tab in enumerate(derivs):
                self._dtab[j] = tab
            self._dtab_order = order
        return self._dtab

    def analyze(self, values):
        """Real harmonic coefficients of grid samples of a band-limited scalar."""
        values = np.asarray(values, dtype=float)
        if values.shape != self.shape:
            raise ValueError("values shape %r does not match grid %r" % (values.shape, self.shape))
        L = self.band_limit
        F = np.fft.rfft(values, axis=1) / self.nlon
        coeffs = np.zeros(num_coeffs(L))
        wre = self.wtheta[:, None] * F.real
        wim = self.wtheta[:, None] * F.imag
        two_pi = 2.0 * math.pi
        coeffs_l0 = two_pi * self._ptab[0].T @ wre[:, 0]
        for l in range(L + 1):
            coeffs[lm_index(l, 0)] = coeffs_l0[l]
        rt2 = math.sqrt(2.0)
        for m in range(1, L + 1):
            tab = self._ptab[m]
            ccos = rt2 * two_pi * tab.T @ wre[:, m]
            csin = -rt2 * two_pi * tab.T @ wim[:, m]
            for l in range(m, L + 1):
                coeffs[lm_index(l, m)] = ccos[l - m]
                coeffs[lm_index(l, -m)] = csin[l - m]
        return coeffs

    def synthesize(self, coeffs, dtheta=0, dphi=0):
        """Grid values of d_theta^a d_phi^b of the represented scalar."""
        coeffs = np.asarray(coeffs, dtype=float)
        L = self.band_limit
        if coeffs.size != num_coeffs(L):
            raise ValueError("coefficient vector has wrong length for band limit %d" % L)
        tabs = self._theta_tables(dtheta)[dtheta]
        F = np.zeros((self.nlat, self.nlon // 2 + 1), dtype=complex)
        c_l0 = np.array([coeffs[lm_index(l, 0)] for l in range(L + 1)])
        F[:, 0] = tabs[0] @ c_l0
        inv_rt2 = 1.0 / math.sqrt(2.0)
        for m in range(1, L + 1):
            ccos = np.array([coeffs[lm_index(l, m)] for l in range(m, L + 1)])
            csin = np.array([coeffs[lm_index(l, -m)] for l in range(m, L + 1)])
            F[:, m] = tabs[m] @ (inv_rt2 * (ccos - 1j * csin))
        if dphi:
            ms = np.arange(self.nlon // 2 + 1)
            F *= (1j * ms[None, :]) ** dphi
        return np.fft.irfft(F * self.nlon, n=self.nlon, axis=1)

    def synth_at(self, coeffs, theta, phi):
        """Evaluate the scalar at arbitrary points (used by per-node oracles)."""
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        phi = np.atleast_1d(np.asarray(phi, dtype=float))
        L = self.band_limit
        tabs = _legendre_tables(L, np.cos(theta))
        out = tabs[0] @ np.array([coeffs[lm_index(l, 0)] for l in range(L + 1)])
        rt2 = math.sqrt(2.0)
        for m in range(1, L + 1):
            ccos = np.array([coeffs[lm_index(l, m)] for l in range(m, L + 1)])
            csin = np.array([coeffs[lm_index(l, -m)] for l in range(m, L + 1)])
            radial = tabs[m]
            out = out + rt2 * (radial @ ccos) * np.cos(m * phi) + rt2 * (radial @ csin) * np.sin(m * phi)
        return out


class SphereField:
    """A band-limited scalar: grid handle, grid values, and coefficients."""

    def __init__(self, grid, values=None, coeffs=None):
        if values is None and coeffs is None:
            raise ValueError("need values or coeffs")
        self.grid = grid
        if values is None:
            self.coeffs = np.asarray(coeffs, dtype=float)
            self.values = grid.synthesize(self.coeffs)
        elif coeffs is None:
            self.values = np.asarray(values, dtype=float)
            self.coeffs = grid.analyze(self.values)
        else:
            self.values = np.asarray(values, dtype=float)
            self.coeffs = np.asarray(coeffs, dtype=float)

    @classmethod
    def from_values(cls, grid, values):
        return cls(grid, values=values)

    @classmethod
    def from_coeffs(cls, grid, coeffs):
        return cls(grid, coeffs=coeffs)

    @classmethod
    def harmonic(cls, grid, l, m, amplitude=1.0):
        """The single real harmonic amplitude * Y_lm."""
        c = np.zeros(num_coeffs(grid.band_limit))
        c[lm_index(l, m)] = amplitude
        return cls(grid, coeffs=c)

    @classmethod
    def constant(cls, grid, value):
        c = np.zeros(num_coeffs(grid.band_limit))
        c[0] = value * math.sqrt(4.0 * math.pi)
        return cls(grid, coeffs=c)

    def mean(self):
        """Average over the round sphere, coeffs[0] / sqrt(4 pi)."""
        return float(self.coeffs[0] / math.sqrt(4.0 * math.pi))

    def partial(self, dtheta=0, dphi=0):
        """Grid values of a mixed coordinate partial derivative."""
        return self.grid.synthesize(self.coeffs, dtheta=dtheta, dphi=dphi)


class NormSpec:
    """Sobolev order and integrability exponent for the surface norms."""

    def __init__(self, n, p):
        if int(n) != n or n < 0:
            raise ValueError("n must be a nonnegative integer")
        if not (p == math.inf or p > 1):
            raise ValueError("p must exceed 1 (or be inf)")
        self.n = int(n)
        self.p = float(p)

    def __repr__(self):
        return "NormSpec(n=%d, p=%s)" % (self.n, "inf" if self.p == math.inf else repr(self.p))


# ----------------------------------------------------------------------
# covariant derivative stacks in the orthonormal dyad

_STACK_CACHE = {}


def _frame_stack(order):
    """Symbolic round-sphere derivative stacks up to the given order.

    Entry k maps a frame index tuple J (0 = d_theta direction, 1 = the
    normalized d_phi direction) to a dict {(a, b): weight} so that the
    frame component is sum_ab weight(theta) * d_theta^a d_phi^b f.  Built
    once per order; the connection coefficient of the dyad is cot(theta).
    """
    if order in _STACK_CACHE:
        return _STACK_CACHE[order]
    stacks = [{(): {(0, 0): _UV.const(1.0)}}]
    for _ in range(order):
        prev = stacks[-1]
        nxt = {}
        for J, comp in prev.items():
            # e_1 row: plain theta derivative of each weight * partial
            row = {}
            for (a, b), w in comp.items():
                _accum(row, (a + 1, b), w)
                _accum(row, (a, b), w.deriv())
            nxt[(0,) + J] = row
            # e_2 row: csc * phi derivative plus connection terms
            row = {}
            for (a, b), w in comp.items():
                _accum(row, (a, b + 1), w.mul_uv(0, 1))
            for s in range(len(J)):
                swapped = J[:s] + (1 - J[s],) + J[s + 1:]
                sign = -1.0 if J[s] == 0 else 1.0
                for (a, b), w in prev[swapped].items():
                    _accum(row, (a, b), w.mul_uv(1, 0).scaled(sign))
            nxt[(1,) + J] = row
        stacks.append(nxt)
    _STACK_CACHE[order] = stacks
    return stacks


def _accum(row, key, poly):
    if key in row:
        row[key] = row[key].add(poly)
    else:
        row[key] = poly.copy()
    if not row[key].terms:
        del row[key]


def _stack_norms_squared(field, order):
    """Pointwise |ring-nabla^k f|^2 grids for k = 0 .. order."""
    grid = field.grid
    parts = {}
    for a in range(order + 1):
        for b in range(order + 1 - a):
            parts[(a, b)] = grid.synthesize(field.coeffs, dtheta=a, dphi=b)
    u = grid.cot[:, None]
    v = grid.csc[:, None]
    out = []
    for k, stack in enumerate(_frame_stack(order)):
        acc = np.zeros(grid.shape)
        for comp in stack.values():
            term = np.zeros(grid.shape)
            for (a, b), w in comp.items():
                term += w(u, v) * parts[(a, b)]
            acc += term * term
        out.append(acc)
    return out


def sobolev_norm(field, spec):
    """Sobolev norm of a scalar on the round sphere.

    For finite p this is (sum_{k<=n} int |nabla^k f|^p dmu)^(1/p) with
    round covariant derivatives and the round measure; for p = inf it is
    the largest grid sup of |nabla^k f| over k <= n.

    Parameters
    ----------
    field : SphereField
    spec : NormSpec

    Returns
    -------
    float
    """
    sq = _stack_norms_squared(field, spec.n)
    if spec.p == math.inf:
        return max(float(np.sqrt(np.max(s))) for s in sq)
    total = 0.0
    for s in sq:
        total += field.grid.quad(np.maximum(s, 0.0) ** (spec.p / 2.0))
    return total ** (1.0 / spec.p)


def gradient_squared(field):
    """Grid values of |nabla f|^2 on the round sphere."""
    return _stack_norms_squared(field, 1)[1]


def covariant_derivatives(field, order):
    """Coordinate components of ring-nabla^k f for k = 0 .. order.

    Returns a list whose k-th entry has shape (2,)*k + grid.shape, all
    indices covariant and ordered outermost derivative first.  Built by
    evaluating the exact symbolic frame stacks and rescaling each phi
    index by sin(theta).
    """
    grid = field.grid
    parts = {}
    for a in range(order + 1):
        for b in range(order + 1 - a):
            parts[(a, b)] = grid.synthesize(field.coeffs, dtheta=a, dphi=b)
    u = grid.cot[:, None]
    v = grid.csc[:, None]
    sin = grid.sin_theta[:, None]
    out = []
    for k, stack in enumerate(_frame_stack(order)):
        arr = np.zeros((2,) * k + grid.shape)
        for J, comp in stack.items():
            term = np.zeros(grid.shape)
            for (a, b), w in comp.items():
                term += w(u, v) * parts[(a, b)]
            scale = sin ** sum(J)
            arr[J] = term * scale
        out.append(arr)
    return out


def rotation_apply(field, a):
    """Apply a rotation generator to a scalar.

    a = 1, 2, 3 select the generators about the x, y, z axes; in
    coordinates they read
        R_1 = -sin(phi) d_theta - cot(theta) cos(phi) d_phi,
        R_2 =  cos(phi) d_theta - cot(theta) sin(phi) d_phi,
        R_3 =  d_phi.
    The result of applying any of these to a band-limited scalar is again
    band-limited at the same degree, so pointwise evaluation plus
    re-analysis is exact.
    """
    grid = field.grid
    if a == 3:
        return SphereField(grid, values=grid.synthesize(field.coeffs, dphi=1))
    ft = grid.synthesize(field.coeffs, dtheta=1)
    fp = grid.synthesize(field.coeffs, dphi=1)
    cphi = np.cos(grid.phi)[None, :]
    sphi = np.sin(grid.phi)[None, :]
    cot = grid.cot[:, None]
    if a == 1:
        vals = -sphi * ft - cot * cphi * fp
    elif a == 2:
        vals = cphi * ft - cot * sphi * fp
    else:
        raise ValueError("rotation index must be 1, 2, or 3")
    return SphereField(grid, values=vals)


def laplacian(field):
    """Round-sphere Laplacian, diagonal -l(l+1) on harmonics."""
    L = field.grid.band_limit
    out = field.coeffs.copy()
    for l in range(L + 1):
        out[lm_index(l, -l):lm_index(l, l) + 1] *= -l * (l + 1.0)
    return SphereField(field.grid, coeffs=out)


def solve_poisson(rhs):
    """Invert the round Laplacian on the orthogonal complement of constants.

    The right side must have (near) zero mean: |mean| <= 1e-10 * ||rhs||_2
    is enforced before solving.  The returned field has exactly zero mean.
    """
    grid = rhs.grid
    l2 = math.sqrt(float(np.dot(rhs.coeffs, rhs.coeffs)))
    mean = rhs.mean()
    if abs(mean) > 1e-10 * l2:
        raise ValueError("solve_poisson needs a zero-mean right side (mean %.3e, norm %.3e)" % (mean, l2))
    out = rhs.coeffs.copy()
    out[0] = 0.0
    for l in range(1, grid.band_limit + 1):
        out[lm_index(l, -l):lm_index(l, l) + 1] /= -l * (l + 1.0)
    return SphereField(grid, coeffs=out)


def covariant_hessian(field, gslash, dgslash=None):
    """Hessian of a scalar with respect to a sampled induced metric.

    Parameters
    ----------
    field : SphereField
    gslash : ndarray, shape (2, 2, nlat, nlon)
        Coordinate components of the metric at the grid nodes.
    dgslash : ndarray, shape (2, 2, 2, nlat, nlon), optional
        Round covariant derivative (first index) of the metric.  When
        omitted it is computed by differentiating the orthonormal frame
        components spectrally, which is exact only if those components
        are band-limited; closed-form samples should be passed whenever
        the caller has them.

    Returns
    -------
    ndarray, shape (2, 2, nlat, nlon)
        nabla^2 f relative to gslash: the round Hessian minus the
        Christoffel deformation (1/2) gslash^{kl} (ring-nabla_i g_jl +
        ring-nabla_j g_il - ring-nabla_l g_ij) contracted with df.
    """
    grid = field.grid
    hess = round_hessian(field)
    df = coordinate_gradient(field)
    if dgslash is None:
        dgslash = round_metric_derivative(grid, gslash)
    ginv = invert_metric(gslash)
    # Delta^k_ij = (1/2) g^{kl} (D_i g_jl + D_j g_il - D_l g_ij)
    delta = 0.5 * (np.einsum("klab,ijlab->kijab", ginv, dgslash)
                   + np.einsum("klab,jilab->kijab", ginv, dgslash)
                   - np.einsum("klab,lijab->kijab", ginv, dgslash))
    return hess - np.einsum("kijab,kab->ijab", delta, df)


def coordinate_gradient(field):
    """Coordinate components (f_theta, f_phi) as shape (2, nlat, nlon)."""
    grid = field.grid
    return np.stack([grid.synthesize(field.coeffs, dtheta=1),
                     grid.synthesize(field.coeffs, dphi=1)])


def round_hessian(field):
    """Round-sphere covariant Hessian in coordinate components."""
    grid = field.grid
    ft = grid.synthesize(field.coeffs, dtheta=1)
    fp = grid.synthesize(field.coeffs, dphi=1)
    ftt = grid.synthesize(field.coeffs, dtheta=2)
    ftp = grid.synthesize(field.coeffs, dtheta=1, dphi=1)
    fpp = grid.synthesize(field.coeffs, dphi=2)
    cot = grid.cot[:, None]
    sc = (grid.sin_theta * grid.x)[:, None]
    out = np.empty((2, 2) + grid.shape)
    out[0, 0] = ftt
    out[0, 1] = out[1, 0] = ftp - cot * fp
    out[1, 1] = fpp + sc * ft
    return out


def invert_metric(gslash):
    """Pointwise inverse of a sampled 2x2 metric."""
    det = gslash[0, 0] * gslash[1, 1] - gslash[0, 1] * gslash[1, 0]
    if np.any(det <= 0.0):
        raise ValueError("metric samples are not positive definite")
    out = np.empty_like(gslash)
    out[0, 0] = gslash[1, 1] / det
    out[1, 1] = gslash[0, 0] / det
    out[0, 1] = -gslash[0, 1] / det
    out[1, 0] = -gslash[1, 0] / det
    return out


def round_metric_derivative(grid, gslash):
    """Round covariant derivative of sampled metric components.

    Differentiates the orthonormal frame components as scalars; exact
    when those are band-limited (conformally round metrics with a
    band-limited factor, for instance) and spectrally accurate otherwise.
    """
    s = grid.sin_theta[:, None]
    cos = grid.x[:, None]
    cot = grid.cot[:, None]
    sc = s * cos
    scale = np.empty(gslash.shape)
    scale[0, 0] = 1.0
    scale[0, 1] = scale[1, 0] = s
    scale[1, 1] = s * s
    frame = gslash / scale
    dg = np.empty((2,) + gslash.shape)
    for i in range(2):
        for j in range(i, 2):
            comp = SphereField(grid, values=frame[i, j])
            dg[0, i, j] = grid.synthesize(comp.coeffs, dtheta=1) * scale[i, j]
            dg[1, i, j] = grid.synthesize(comp.coeffs, dphi=1) * scale[i, j]
            dg[:, j, i] = dg[:, i, j]
    # d_theta of the sin(theta) scale factors
    dg[0, 0, 1] += frame[0, 1] * cos
    dg[0, 1, 0] += frame[1, 0] * cos
    dg[0, 1, 1] += frame[1, 1] * 2.0 * sc
    # D_k g_ij = d_k g_ij - Gamma^m_{ki} g_mj - Gamma^m_{kj} g_im with the
    # round Christoffels Gamma^phi_{theta phi} = cot, Gamma^theta_{phi phi} = -sc
    gtt, gtp, gpp = gslash[0, 0], gslash[0, 1], gslash[1, 1]
    out = dg.copy()
    out[0, 0, 1] -= cot * gtp
    out[0, 1, 0] = out[0, 0, 1]
    out[0, 1, 1] -= 2.0 * cot * gpp
    out[1, 0, 0] -= 2.0 * cot * gtp
    out[1, 0, 1] += sc * gtt - cot * gpp
    out[1, 1, 0] = out[1, 0, 1]
    out[1, 1, 1] += 2.0 * sc * gtp
    return out


def resample(field, new_grid):
    """Represent a field on a different grid (pad or truncate in l)."""
    L1 = field.grid.band_limit
    L2 = new_grid.band_limit
    if L2 >= L1:
        return SphereField(new_grid, coeffs=pad_coeffs(field.coeffs, L1, L2))
    return SphereField(new_grid, coeffs=truncate_coeffs(field.coeffs, L1, L2))


def save_field(field, path):
    """Write a field snapshot as JSON."""
    payload = {
        "band_limit": field.grid.band_limit,
        "basis": "real-lm-lmajor",
        "coeffs": [float(c) for c in field.coeffs],
    }
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")
    os.replace(tmp, path)


def load_field(path, grid=None):
    """Read a field snapshot written by :func:`save_field`."""
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("basis") != "real-lm-lmajor":
        raise ValueError("unsupported basis %r" % payload.get("basis"))
    L = int(payload["band_limit"])
    coeffs = np.asarray(payload["coeffs"], dtype=float)
    if coeffs.size != num_coeffs(L):
        raise ValueError("coefficient count does not match band limit")
    if grid is None:
        grid = SphereGrid(L)
    field = SphereField(grid, coeffs=pad_coeffs(coeffs, L, grid.band_limit)
                        if grid.band_limit >= L else truncate_coeffs(coeffs, L, grid.band_limit))
    return field
