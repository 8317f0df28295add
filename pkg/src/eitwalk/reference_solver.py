"""Semi-analytic solver for concentric scenes.

Separation of variables gives, for every angular mode k, a radial profile that
already satisfies the core condition and the transmission conditions at the
interface. Only the boundary trace is unknown. The idealized Robin problem is
then diagonal in k; the CEM problem couples modes through the electrode
indicator and is solved by a Galerkin method whose arc integrals are exact.

Conventions: the outer circle has radius 1; the boundary trace is
``u(1, t) = a[0] + sum_k a[k] cos(k t) + b[k] sin(k t)``; ``lam[k]`` is the
log-derivative of the mode-k profile at r = 1.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Union

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.linalg import lapack, lu_factor, lu_solve

from .geometry import Point
from .medium import CEM, ConductivityField, Dirichlet, ForwardModel, IdealizedRobin, MediumRealization, ModelError, UniformInterval

# core handling for the k = 0 mode
FLOATING = "floating"  # perfectly conducting: constant potential, zero net flux


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class Radial:
    """Radial data of a concentric scene for one medium realization."""

    rho: float = 0.0  # core radius, 0 if none
    R: float = 1.0  # interface radius, 1 if none
    kappa_outer: float = 1.0
    kappa_inner: float = 1.0

    @property
    def s(self) -> float:
        return self.kappa_inner / self.kappa_outer

    @classmethod
    def of(cls, model: ForwardModel, realization: Optional[MediumRealization] = None) -> "Radial":
        g = model.geometry
        if g.outer.radius != 1.0 or g.center.x != 0.0 or g.center.y != 0.0:
            raise ModelError("the reference solver needs the unit disk centered at the origin")
        m = realization or model.conductivity.mean_realization()
        rho = g.inclusion.radius if g.inclusion is not None else 0.0
        if g.interface is None:
            return cls(rho=rho, R=1.0, kappa_outer=m.kappa_outer, kappa_inner=m.kappa_outer)
        return cls(rho=rho, R=m.interface_radius, kappa_outer=m.kappa_outer, kappa_inner=m.kappa_inner)


def _mode_AB(k: np.ndarray, rd: Radial):
    """Outer-layer profile ``A (r/R)^k + b (R/r)^k`` for inner profile ``(r/R)^k - q (R/r)^k``."""
    q = (rd.rho / rd.R) ** (2 * k) if rd.rho > 0 else np.zeros_like(k, dtype=float)
    s = rd.s
    A = 0.5 * ((1.0 - q) + s * (1.0 + q))
    b = 0.5 * ((1.0 - q) - s * (1.0 + q))
    return A, b


def _log_profile(rd: Radial):
    """k = 0 profile l(r) with l(rho) = 0: returns (l(1), l'(1))."""
    L = math.log(rd.R / rd.rho) - rd.s * math.log(rd.R)
    return L, rd.s


def mode_dtn(k: Union[int, np.ndarray], rd: Radial, core=FLOATING) -> np.ndarray:
    """Log-derivative at r = 1 of the mode-k radial profile.

    For k = 0 the value is 0 unless there is a core held at a prescribed
    potential (``core`` a number), where the ln r branch enters.
    """
    k = np.atleast_1d(np.asarray(k))
    out = np.zeros(k.shape, dtype=float)
    pos = k > 0
    if pos.any():
        kk = k[pos].astype(float)
        A, b = _mode_AB(kk, rd)
        t = b * rd.R ** (2 * kk)
        out[pos] = kk * (A - t) / (A + t)
    if rd.rho > 0 and core != FLOATING:
        L, dL = _log_profile(rd)
        out[~pos] = dL / L
    return out


def _profile_ratio(k: np.ndarray, r: float, rd: Radial) -> np.ndarray:
    """Mode-k profile at radius ``r`` divided by its value at r = 1 (k >= 1)."""
    kk = k.astype(float)
    A, b = _mode_AB(kk, rd)
    den = A + b * rd.R ** (2 * kk)
    if r >= rd.R:
        num = A * r ** kk + b * rd.R ** kk * (rd.R / r) ** kk
    else:
        num = r ** kk
        if rd.rho > 0:
            num = num - rd.rho ** kk * (rd.rho / r) ** kk
    return num / den


@dataclass(frozen=True)
class FourierSolution:
    """Boundary trace coefficients plus everything needed to evaluate inside."""

    a: np.ndarray  # cos coefficients, a[0] the mean
    b: np.ndarray  # sin coefficients, b[0] unused
    radial: Radial
    z: float
    core: Union[str, float, None]  # FLOATING, a prescribed value, or None without core
    c: Optional[float]  # core potential
    lam: np.ndarray = field(repr=False)

    @property
    def K(self) -> int:
        return len(self.a) - 1

    def trace(self, theta) -> np.ndarray:
        th = np.atleast_1d(np.asarray(theta, dtype=float))
        k = np.arange(self.K + 1)
        ang = np.outer(th, k)
        return np.cos(ang) @ self.a + np.sin(ang) @ self.b

    def flux(self, theta) -> np.ndarray:
        """Outward conductive flux kappa_outer * du/dr at r = 1."""
        th = np.atleast_1d(np.asarray(theta, dtype=float))
        k = np.arange(self.K + 1)
        ang = np.outer(th, k)
        a = self.a * self.lam
        if self.radial.rho > 0 and self.core != FLOATING:
            a = a.copy()
            a[0] = self.lam[0] * (self.a[0] - self.c)
        return self.radial.kappa_outer * (np.cos(ang) @ a + np.sin(ang) @ (self.b * self.lam))

    def value(self, r: float, theta: float) -> float:
        rd = self.radial
        if rd.rho > 0 and r <= rd.rho:
            return float(self.c)
        k = np.arange(1, self.K + 1)
        g = _profile_ratio(k, r, rd)
        s = float(np.dot(g * self.a[1:], np.cos(k * theta)) + np.dot(g * self.b[1:], np.sin(k * theta)))
        return s + self._mean_profile(r)

    def _mean_profile(self, r: float) -> float:
        rd = self.radial
        if rd.rho == 0 or self.core == FLOATING:
            return float(self.a[0])
        L, _ = _log_profile(rd)
        ell = math.log(r / rd.rho) if r < rd.R else math.log(rd.R / rd.rho) + rd.s * math.log(r / rd.R)
        return self.c + (self.a[0] - self.c) * ell / L

    def values_on_circle(self, r: float, theta: np.ndarray) -> np.ndarray:
        """Vectorized evaluation at many angles on one circle."""
        th = np.asarray(theta, dtype=float)
        rd = self.radial
        if rd.rho > 0 and r <= rd.rho:
            return np.full(th.shape, float(self.c))
        k = np.arange(1, self.K + 1)
        g = _profile_ratio(k, r, rd)
        out = np.full(th.shape, self._mean_profile(r))
        # chunked to bound memory for large batches
        step = 1 << 15
        for i in range(0, th.size, step):
            ang = np.outer(th.ravel()[i:i + step], k)
            out.ravel()[i:i + step] += np.cos(ang) @ (g * self.a[1:]) + np.sin(ang) @ (g * self.b[1:])
        return out

    def arc_mean(self, center: float, half_width: float) -> float:
        """Mean of the boundary trace over the arc ``center +/- half_width``."""
        C, S = _arc_cs(np.arange(self.K + 1), center, half_width)
        return float(C @ self.a + S @ self.b) / (2.0 * half_width)


def evaluate(sol: FourierSolution, p: Point) -> float:
    return sol.value(p.r, p.angle)


def _arc_cs(n: np.ndarray, c: float, w: float):
    """Integrals of cos(n t) and sin(n t) over [c - w, c + w]."""
    n = np.asarray(n, dtype=float)
    sw = 2.0 * w * np.sinc(n * w / math.pi)
    return np.cos(n * c) * sw, np.sin(n * c) * sw


@lru_cache(maxsize=8)
def _electrode_gram(K: int, centers: tuple, w: float):
    """Gram matrix of the trig basis restricted to the electrodes and the basis moments.

    Basis order: 1, cos t, sin t, cos 2t, sin 2t, ...
    """
    k = np.arange(K + 1)
    kc = np.repeat(k, 2)[1:]  # frequency of each basis function
    is_sin = np.zeros(2 * K + 1, dtype=bool)
    is_sin[2::2] = True
    n = kc.size
    G = np.zeros((n, n))
    mom = np.zeros((len(centers), n))
    dm = kc[:, None] - kc[None, :]
    dp = kc[:, None] + kc[None, :]
    si, sj = is_sin[:, None], is_sin[None, :]
    for l, c in enumerate(centers):
        Cm, Sm = _arc_cs(dm, c, w)
        Cp, Sp = _arc_cs(dp, c, w)
        # cos*cos = (cos(m-n) + cos(m+n))/2 ; sin*sin = (cos(m-n) - cos(m+n))/2
        # sin_i*cos_j = (sin(i+j) + sin(i-j))/2
        cc = 0.5 * (Cm + Cp)
        ss = 0.5 * (Cm - Cp)
        sc = 0.5 * (Sp + Sm)
        cs = 0.5 * (Sp - Sm)
        G += np.where(si & sj, ss, np.where(si, sc, np.where(sj, cs, cc)))
        C1, S1 = _arc_cs(kc, c, w)
        mom[l] = np.where(is_sin, S1, C1)
    return G, mom, kc, is_sin


def _split(x: np.ndarray, K: int):
    a = np.zeros(K + 1)
    b = np.zeros(K + 1)
    a[0] = x[0]
    a[1:] = x[1::2]
    b[1:] = x[2::2]
    return a, b


def _core_mode(rd: Radial, core):
    if rd.rho == 0:
        return None, None
    if core == FLOATING:
        return FLOATING, None
    return float(core), float(core)


def solve_idealized(model: ForwardModel, K: int = 64, core_value: float = 0.0,
                    realization: Optional[MediumRealization] = None) -> FourierSolution:
    """Mode-by-mode solve of ``z kappa du/dr + u = phi`` (core held at ``core_value``)."""
    bc = model.bc
    if not isinstance(bc, (IdealizedRobin, Dirichlet)):
        raise ModelError("solve_idealized needs Fourier boundary data")
    rd = Radial.of(model, realization)
    core, c = _core_mode(rd, core_value)
    lam = mode_dtn(np.arange(K + 1), rd, core if core is not None else FLOATING)
    a = np.zeros(K + 1)
    b = np.zeros(K + 1)
    na = min(len(bc.a), K + 1)
    nb = min(len(bc.b), K + 1)
    a[:na] = bc.a[:na]
    b[1:nb] = bc.b[1:nb]
    if isinstance(bc, Dirichlet):
        zk = 0.0
    else:
        zk = bc.z * rd.kappa_outer
    den = 1.0 + zk * lam
    a0_extra = zk * lam[0] * c if c is not None else 0.0
    a = a / den
    b = b / den
    a[0] += a0_extra / den[0]
    if c is None and core == FLOATING:
        c = float(a[0])
    return FourierSolution(a, b, rd, getattr(bc, "z", 0.0), core, c, lam)


@dataclass(frozen=True)
class ReferenceCurrents:
    J_ref: np.ndarray
    c_ref: Optional[float]
    bc_residual: float
    electrode_integrals: np.ndarray  # integral of u / z over each electrode


def solve_cem(model: ForwardModel, K: int = 256, Q: Optional[int] = None, core=FLOATING,
              data_scale: float = 1.0, realization: Optional[MediumRealization] = None,
              residual: bool = True):
    """Galerkin solve of the CEM boundary problem in the trig basis of size 2K + 1.

    ``core`` is ``FLOATING`` (perfect conductor, the physical model) or a fixed
    core potential, which gives the pieces of the u0 + c u1 split.
    ``data_scale`` multiplies the electrode voltages (0 for the u1 problem).
    ``Q`` is the angular grid size for the residual (default 16 K); with
    ``residual=False`` the residual is skipped and reported as NaN.
    """
    bc = model.bc
    if not isinstance(bc, CEM):
        raise ModelError("solve_cem needs a CEM boundary condition")
    rd = Radial.of(model, realization)
    core_kind, c = _core_mode(rd, core)
    lam = mode_dtn(np.arange(K + 1), rd, core_kind if core_kind is not None else FLOATING)
    lay = bc.layout
    w = lay.half_width
    G, mom, kc, is_sin = _electrode_gram(K, tuple(lay.centers), w)
    zk = bc.z * rd.kappa_outer
    norms = np.where(kc == 0, 2.0 * math.pi, math.pi)
    M = G + np.diag(zk * lam[kc] * norms)
    U = np.asarray(bc.pattern.U, dtype=float) * data_scale
    rhs = U @ mom
    if c is not None:
        rhs[0] += zk * lam[0] * c * 2.0 * math.pi
    lu, piv = lu_factor(M)
    rcond, _ = lapack.dgecon(lu, np.linalg.norm(M, 1), norm="1")
    if not rcond > 1e-13:
        raise SolverError(f"Galerkin matrix ill-conditioned (rcond={rcond:.3g}); lower K")
    x = lu_solve((lu, piv), rhs)
    a, b = _split(x, K)
    if core_kind == FLOATING:
        c = float(a[0])
    sol = FourierSolution(a, b, rd, bc.z, core_kind, c, lam)
    ints = mom @ x  # integral of u over each electrode
    E = 2.0 * w
    J = (U * E - ints) / (bc.z * E)
    res = bc_residual(sol, model, Q or 16 * K, data_scale=data_scale) if residual else float("nan")
    return sol, ReferenceCurrents(J, c, res, ints / bc.z)


def bc_residual(sol: FourierSolution, model: ForwardModel, Q: int, data_scale: float = 1.0,
                edge_exclusion: Optional[float] = None) -> float:
    """Sup-norm of ``z kappa du/dr + f u - g`` on Q angles, skipping arcs around electrode edges."""
    bc = model.bc
    lay = bc.layout
    th = np.linspace(-math.pi, math.pi, Q, endpoint=False)
    ex = edge_exclusion if edge_exclusion is not None else 10.0 / sol.K
    f = np.zeros(Q)
    g = np.zeros(Q)
    keep = np.ones(Q, dtype=bool)
    for l, c in enumerate(lay.centers):
        d = np.abs(np.remainder(th - c + math.pi, 2 * math.pi) - math.pi)
        on = d <= lay.half_width
        f[on] = 1.0
        g[on] = bc.pattern.U[l] * data_scale
        keep &= np.abs(d - lay.half_width) > 0.5 * ex
    if not keep.any():
        raise ValueError("edge exclusion covers the whole boundary")
    r = bc.z * sol.flux(th) + f * sol.trace(th) - g
    return float(np.max(np.abs(r[keep])))


def reference_currents(model: ForwardModel, K: int = 256, realization=None) -> ReferenceCurrents:
    return solve_cem(model, K, realization=realization)[1]


def medium_nodes(fld: ConductivityField, nodes: int = 4):
    """Tensor Gauss-Legendre nodes over the uniformly distributed medium parameters.

    Yields (realization, weight); the weights sum to one. Constant parameters
    get a single node.
    """
    axes = []
    for v in (fld.outer_kappa, fld.inner_kappa, fld.interface_radius):
        if isinstance(v, UniformInterval) and v.width > 0:
            x, wt = leggauss(nodes)
            axes.append((v.lo + 0.5 * (x + 1.0) * v.width, 0.5 * wt))
        else:
            c = v.mean if isinstance(v, UniformInterval) else (v if v is not None else 0.0)
            axes.append((np.array([float(c)]), np.array([1.0])))
    for ko, wo in zip(*axes[0]):
        for ki, wi in zip(*axes[1]):
            for R, wr in zip(*axes[2]):
                yield MediumRealization(float(ko), float(ki), float(R)), float(wo * wi * wr)


def expected_reference_currents(model: ForwardModel, K: int = 256, nodes: int = 4) -> np.ndarray:
    """Medium average of the reference currents (plain reference currents for a fixed medium)."""
    out = np.zeros(model.bc.layout.count)
    for m, w in medium_nodes(model.conductivity, nodes):
        out += w * solve_cem(model, K, realization=m, residual=False)[1].J_ref
    return out


def without_inclusion_solution(model: ForwardModel, K: int = 64, realization=None) -> FourierSolution:
    """The solution v of the same problem with the inclusion removed."""
    m = model.without_inclusion()
    if isinstance(m.bc, CEM):
        return solve_cem(m, K, realization=realization)[0]
    return solve_idealized(m, K, realization=realization)


def coefficients_csv(sol: FourierSolution) -> str:
    """Per-mode coefficients: boundary trace and the interior layer multipliers."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["k", "layer", "cos_coef", "sin_coef", "lambda"])
    rd = sol.radial
    layers = ["outer"] + (["inner"] if rd.R < 1.0 else [])
    for k in range(sol.K + 1):
        for lay in layers:
            w.writerow([k, lay, repr(float(sol.a[k])), repr(float(sol.b[k])), repr(float(sol.lam[k]))])
    return buf.getvalue()


def polar_field(sol: FourierSolution, n_r: int = 40, n_theta: int = 256):
    """Potential on a polar grid; rows (r, theta, u)."""
    rd = sol.radial
    r0 = rd.rho if rd.rho > 0 else 0.0
    rs = np.linspace(r0, 1.0, n_r + 1)[1:] if r0 > 0 else np.linspace(0.0, 1.0, n_r)
    th = np.linspace(-math.pi, math.pi, n_theta, endpoint=False)
    rows = []
    for r in rs:
        u = sol.values_on_circle(float(r), th) if r > 0 else np.full(th.shape, sol.value(0.0, 0.0))
        rows.extend(zip(np.full(th.shape, r), th, u))
    return np.array(rows)
