"""Path averages and Galerkin assembly of the wave-operator blocks.

Two evaluators realize the averages that enter every operator:

* ``SmoothingEvaluator`` (growth parameter lam > 0): exponentially weighted
  average of a function along the backward trajectory, computed by composite
  Gauss-Legendre quadrature on [-S, 0] with S = -ln(tol_tail_s)/lam.
* ``ProjectionEvaluator`` (lam = 0 limit): average over one exact orbit
  period, the orthogonal projection onto flow-invariant functions.

Matrix assembly reduces everything to three per-node moment families along
trajectories: avg(exp(i k w X)), avg(V2hat exp(i k w X)) and avg(V1hat).
For homogeneous states these have closed forms; for magnetized states each
orbit is periodic, so the weighted average equals the orbit's Fourier
series filtered by lam/(lam + i m Omega), evaluated from one period of
trajectory samples.  That route stays accurate uniformly in lam, which a
fixed-node rule on [-S, 0] cannot do once lam*S oscillations pile up.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss

from .characteristics import (StepOptions, default_dt, normalize_species,
                              orbit_info, rk4_step_arrays)
from .errors import AssemblyError, OrbitError, VmspecError


@dataclass(frozen=True)
class EvalOptions:
    """Knobs shared by the evaluators and the assembly backends."""

    tol_tail_s: float = 1e-10      # truncation weight for the backward horizon
    n_s_min: int = 128
    nodes_per_wave: float = 8.0
    k_osc: int = 16                # assumed highest spatial harmonic of integrands
    n_per_period: int = 128        # orbit samples per period (>= 64)
    max_period: float = 1e4
    horizon_periods: float = 25.0  # fallback horizon for unresolved orbits
    dt: float = None
    force_generic: bool = False    # disable the homogeneous closed forms (testing)
    species_symmetry: bool = True  # derive + species moments from - by reflection
    tol_sym: float = 1e-8
    tol_zero: float = 1e-6
    chunk: int = 1024

    def step_options(self):
        return StepOptions(dt=self.dt)


# ---------------------------------------------------------------------------
# pointwise smoothing average
# ---------------------------------------------------------------------------

class SmoothingEvaluator:
    """Exponentially weighted backward-path average at fixed lam > 0."""

    def __init__(self, state, lam, opts=None):
        if lam <= 0:
            raise VmspecError("smoothing average needs lam > 0")
        self.state = state
        self.lam = float(lam)
        self.opts = opts or EvalOptions()
        self.horizon = -math.log(self.opts.tol_tail_s) / self.lam
        self._cache = {}
        # composite rule: enough panels for both the exponential scale and
        # the fastest expected oscillation along the path
        waves = self.opts.k_osc * self.horizon / state.period
        n_nodes = max(self.opts.n_s_min, int(self.opts.nodes_per_wave * waves))
        per_panel = 16
        self.n_panels = max(4, int(math.ceil(n_nodes / per_panel)))
        xs, ws = leggauss(per_panel)
        edges = np.linspace(0.0, -self.horizon, self.n_panels + 1)
        nodes, weights = [], []
        for a, b in zip(edges[:-1], edges[1:]):
            half = 0.5 * (b - a)
            nodes.append(half * xs + 0.5 * (a + b))
            weights.append(np.abs(half) * ws)
        s = np.concatenate(nodes)
        w = np.concatenate(weights)
        order = np.argsort(-s)
        self.s_nodes = s[order]
        self.weights = w[order] * self.lam * np.exp(self.lam * self.s_nodes)

    def path(self, species, point):
        key = (normalize_species(species), point.x, point.v1, point.v2)
        if key not in self._cache:
            self._cache[key] = _sample_at_times(self.state, key[0], point,
                                                self.s_nodes, self.opts.step_options())
        return self._cache[key]

    def apply(self, species, k, point):
        xs, v1s, v2s = self.path(species, point)
        vals = np.asarray(k(xs, v1s, v2s), dtype=float)
        return float(np.sum(self.weights * vals))


def _sample_at_times(state, sign, point, s_nodes, step_opts):
    """States at the (descending, <= 0) times, one continuous integration."""
    if state.homogeneous:
        e = point.energy
        xs = (point.x + (point.v1 / e) * s_nodes) % state.period
        return xs, np.full(s_nodes.size, point.v1), np.full(s_nodes.size, point.v2)
    dt = step_opts.dt if step_opts.dt is not None else default_dt(state)
    xs = np.empty(s_nodes.size)
    v1s = np.empty(s_nodes.size)
    v2s = np.empty(s_nodes.size)
    x, v1, v2 = np.float64(point.x), np.float64(point.v1), np.float64(point.v2)
    t = 0.0
    for i, s in enumerate(s_nodes):
        gap = s - t
        n = max(1, int(math.ceil(abs(gap) / dt)))
        h = gap / n
        for _ in range(n):
            x, v1, v2 = rk4_step_arrays(state, sign, x, v1, v2, h)
        t = s
        xs[i], v1s[i], v2s[i] = x, v1, v2
    return xs % state.period, v1s, v2s


def apply_smoothing(evaluator, species, k, point):
    """Weighted average of k(x, v1, v2) along the backward path from point."""
    return evaluator.apply(species, k, point)


# ---------------------------------------------------------------------------
# pointwise orbit-average projection
# ---------------------------------------------------------------------------

class ProjectionEvaluator:
    """Average over one orbit period; stationary points are left in place."""

    def __init__(self, state, opts=None):
        self.state = state
        self.opts = opts or EvalOptions()

    def apply(self, species, k, point):
        sign = normalize_species(species)
        try:
            info = orbit_info(self.state, sign, point, max_period=self.opts.max_period,
                              opts=self.opts.step_options())
        except OrbitError:
            info = None
        if info is not None and info.kind == "stationary":
            return float(k(np.asarray(point.x), np.asarray(point.v1), np.asarray(point.v2)))
        horizon = info.period if info is not None else \
            self.opts.horizon_periods * self.state.period
        n = max(64, self.opts.n_per_period)
        dt = self.opts.dt if self.opts.dt is not None else default_dt(self.state)
        h = horizon / n
        m = max(1, int(math.ceil(h / dt)))
        x, v1, v2 = np.float64(point.x), np.float64(point.v1), np.float64(point.v2)
        acc = 0.0
        for _ in range(n):
            acc += float(k(np.asarray(x % self.state.period), np.asarray(v1), np.asarray(v2)))
            for _ in range(m):
                x, v1, v2 = rk4_step_arrays(self.state, sign, x, v1, v2, h / m)
        return acc / n


def apply_projection(evaluator, species, k, point):
    return evaluator.apply(species, k, point)


# ---------------------------------------------------------------------------
# batched orbit machinery for assembly
# ---------------------------------------------------------------------------

def _hermite_root(F0, F1, D0, D1, h):
    """Crossing time in [0, h] of a function with endpoint values/slopes.

    Newton iterations on the cubic Hermite interpolant, seeded by the
    secant estimate; everything vectorized and clipped to the step.
    """
    denom = np.where(F0 == F1, 1.0, F0 - F1)
    tau = np.clip(F0 / denom, 0.0, 1.0)
    hD0, hD1 = h * D0, h * D1
    for _ in range(3):
        t2, t3 = tau * tau, tau * tau * tau
        H = ((2 * t3 - 3 * t2 + 1) * F0 + (t3 - 2 * t2 + tau) * hD0
             + (-2 * t3 + 3 * t2) * F1 + (t3 - t2) * hD1)
        dH = ((6 * t2 - 6 * tau) * F0 + (3 * t2 - 4 * tau + 1) * hD0
              + (-6 * t2 + 6 * tau) * F1 + (3 * t2 - 2 * tau) * hD1)
        dH = np.where(np.abs(dH) < 1e-300, 1.0, dH)
        tau = np.clip(tau - H / dH, 0.0, 1.0)
    return tau * h


def _orbit_periods_batch(state, sign, x0, v1, v2, dt, horizon, weights=None):
    """Periods for a batch of lanes; unresolved lanes get the horizon.

    Passing lanes close after advancing one spatial period (the unwrapped
    coordinate tracks that exactly), trapped lanes after twice the spacing
    of consecutive turning points; event times are Hermite-refined.
    """
    n = x0.size
    P = state.period
    x = x0.astype(float).copy()    # never wrapped: the field is periodic anyway
    u = v1.astype(float).copy()
    w = v2.astype(float).copy()
    periods = np.full(n, horizon)
    resolved = np.zeros(n, dtype=bool)
    t1 = np.full(n, np.nan)        # first turning time
    t1[u == 0.0] = 0.0
    t = 0.0
    n_steps = int(math.ceil(horizon / dt))
    min_t = 8.0 * state.period     # give trapped lanes time to close
    total_w = float(np.sum(weights)) if weights is not None else float(n)
    active = ~resolved
    for _ in range(n_steps):
        # the stragglers (near-separatrix and grazing lanes) fall back to
        # the horizon treatment anyway; stop once they hold negligible mass
        if t > min_t:
            left = float(np.sum(weights[active])) if weights is not None \
                else float(np.sum(active))
            if left < 5e-4 * total_w:
                break
        e = np.sqrt(1.0 + u * u + w * w)
        vh_old = u / e
        du_old = sign * (w / e) * state.b0(x)
        xn, un, wn = rk4_step_arrays(state, sign, x, u, w, dt)
        en = np.sqrt(1.0 + un * un + wn * wn)
        vh_new = un / en
        du_new = sign * (wn / en) * state.b0(xn)
        # passing closure: |x - x0| reaches one spatial period
        F0 = np.abs(x - x0) - P
        F1 = np.abs(xn - x0) - P
        hit = active & (F1 >= 0.0) & (F0 < 0.0)
        if hit.any():
            s_dir = np.sign(xn - x0)
            tau = _hermite_root(F0[hit], F1[hit], (s_dir * vh_old)[hit],
                                (s_dir * vh_new)[hit], dt)
            periods[hit] = t + tau
            resolved[hit] = True
        # turning points: twice the spacing of consecutive turnings
        flip = active & (np.sign(un) != np.sign(u)) & (u != 0.0) & (un != 0.0)
        if flip.any():
            tau = np.zeros(n)
            tau[flip] = _hermite_root(u[flip], un[flip], du_old[flip], du_new[flip], dt)
            tf = t + tau
            fresh = flip & np.isnan(t1)
            second = flip & ~np.isnan(t1)
            t1[fresh] = tf[fresh]
            if second.any():
                periods[second] = 2.0 * (tf[second] - t1[second])
                resolved[second] = True
        active = ~resolved
        if not active.any():
            break
        x, u, w, t = xn, un, wn, t + dt
    return periods, resolved


def _orbit_samples_batch(state, sign, x0, v1, v2, periods, n_samples, dt):
    """Per-lane uniform-in-own-period samples: arrays (n_samples, lanes)."""
    lanes = x0.size
    h = periods / n_samples
    m = max(1, int(math.ceil(float(np.max(h)) / dt)))
    xs = np.empty((n_samples, lanes))
    v1s = np.empty((n_samples, lanes))
    v2s = np.empty((n_samples, lanes))
    x, u, w = x0.astype(float).copy(), v1.astype(float).copy(), v2.astype(float).copy()
    sub = h / m
    for j in range(n_samples):
        xs[j], v1s[j], v2s[j] = x, u, w
        for _ in range(m):
            x, u, w = rk4_step_arrays(state, sign, x, u, w, sub)
    return xs, v1s, v2s


def _backward_window_moments(state, sign, lam, x0, v1, v2, kmax, omega, horizon, opts):
    """Direct backward quadrature for lanes whose orbit did not close.

    Piecewise-linear-in-kappa weights integrate the exponential factor
    exactly, so coarse steps do not distort the lam e^(lam s) profile.
    """
    S = min(horizon, -math.log(opts.tol_tail_s) / lam)
    n_d = 4 * opts.n_per_period
    h = S / n_d
    u = lam * h
    alpha = (u * math.exp(u) - math.exp(u) + 1.0) / u
    beta = (math.exp(u) - 1.0 - u) / u
    decay = np.exp(-lam * h * np.arange(n_d + 1))
    W = np.empty(n_d + 1)
    W[0] = decay[1] * alpha
    W[1:-1] = decay[2:] * alpha + decay[1:-1] * beta
    W[-1] = decay[-1] * beta
    lanes = x0.size
    m0 = np.zeros((kmax + 1, lanes), dtype=complex)
    m1 = np.zeros((kmax + 1, lanes), dtype=complex)
    mv1 = np.zeros(lanes)
    x, a, b = x0.astype(float).copy(), v1.astype(float).copy(), v2.astype(float).copy()
    for j in range(n_d + 1):
        e = np.sqrt(1.0 + a * a + b * b)
        vh1, vh2 = a / e, b / e
        Z = np.exp(1j * omega * x)
        pw = np.ones_like(Z)
        for k in range(kmax + 1):
            m0[k] += W[j] * pw
            m1[k] += W[j] * vh2 * pw
            if k < kmax:
                pw = pw * Z
        mv1 += W[j] * vh1
        if j < n_d:
            x, a, b = rk4_step_arrays(state, sign, x, a, b, -h)
    return m0, m1, mv1


def _node_moments_generic(state, sign, lam, quad, kmax, x, opts):
    """Moments m0[k], m1[k], mv1 for every velocity node at position x.

    One orbit period is sampled per node; lam = 0 takes the plain average,
    lam > 0 applies the resolvent filter lam/(lam + i m Omega) to the
    orbit's discrete Fourier series.
    """
    dt = opts.dt if opts.dt is not None else default_dt(state)
    horizon = opts.horizon_periods * state.period
    x0 = np.full(quad.n_nodes, float(x))
    periods, resolved = _orbit_periods_batch(state, sign, x0, quad.v1, quad.v2, dt, horizon,
                                             weights=quad.w)
    n = opts.n_per_period
    omega = 2.0 * np.pi / state.period
    m0 = np.empty((kmax + 1, quad.n_nodes), dtype=complex)
    m1 = np.empty((kmax + 1, quad.n_nodes), dtype=complex)
    mv1 = np.empty(quad.n_nodes)
    # chunks of similar period keep the substep count small for the bulk
    order = np.argsort(periods, kind="stable")
    for lo in range(0, quad.n_nodes, opts.chunk):
        sl = order[lo:min(lo + opts.chunk, quad.n_nodes)]
        xs, v1s, v2s = _orbit_samples_batch(state, sign, x0[sl], quad.v1[sl], quad.v2[sl],
                                            periods[sl], n, dt)
        es = np.sqrt(1.0 + v1s ** 2 + v2s ** 2)
        vh1, vh2 = v1s / es, v2s / es
        Z = np.exp(1j * omega * xs)
        if lam == 0.0:
            pw = np.ones_like(Z)
            for k in range(kmax + 1):
                m0[k, sl] = pw.mean(axis=0)
                m1[k, sl] = (vh2 * pw).mean(axis=0)
                if k < kmax:
                    pw = pw * Z
            mv1[sl] = vh1.mean(axis=0)
        else:
            # samples run forward in own-period time; for a periodic signal
            # kappa(s) = sum_m c_m exp(i m Omega s) the backward average is
            # sum_m c_m lam/(lam + i m Omega), with c_m = fft(samples)/n
            freqs = np.fft.fftfreq(n, d=1.0 / n)          # signed integer modes
            Omega = 2.0 * np.pi / periods[sl]
            fil = lam / (lam + 1j * freqs[:, None] * Omega[None, :])
            pw = np.ones_like(Z)
            for k in range(kmax + 1):
                c = np.fft.fft(pw, axis=0) / n
                m0[k, sl] = np.sum(c * fil, axis=0)
                c = np.fft.fft(vh2 * pw, axis=0) / n
                m1[k, sl] = np.sum(c * fil, axis=0)
                if k < kmax:
                    pw = pw * Z
            c = np.fft.fft(vh1 + 0j, axis=0) / n
            mv1[sl] = np.real(np.sum(c * fil, axis=0))
    if lam > 0.0 and not resolved.all():
        # the periodic-filter route is meaningless without a period
        un = ~resolved
        d0, d1, dv = _backward_window_moments(state, sign, lam, x0[un], quad.v1[un],
                                              quad.v2[un], kmax, omega, horizon, opts)
        m0[:, un] = d0
        m1[:, un] = d1
        mv1[un] = dv
    return m0, m1, mv1


def _node_moments_translation(state, sign, lam, quad, kmax, x):
    """Closed forms for straight-line paths: X(s) = x + v1hat * s."""
    del sign                        # both species share the free flow
    vh1 = quad.v1 / quad.e
    vh2 = quad.v2 / quad.e
    omega = 2.0 * np.pi / state.period
    ks = np.arange(kmax + 1)[:, None]
    if lam == 0.0:
        g = (ks == 0).astype(complex) * np.ones_like(vh1)[None, :]
    else:
        g = lam / (lam + 1j * ks * omega * vh1[None, :])
    phase = np.exp(1j * ks * omega * float(x))
    m0 = g * phase
    m1 = vh2[None, :] * m0
    return m0, m1, vh1.copy()


def node_moments(state, species, lam, quad, kmax, x, opts=None):
    """Per-velocity-node path moments at one collocation position."""
    sign = normalize_species(species)
    opts = opts or EvalOptions()
    if state.homogeneous and not opts.force_generic:
        return _node_moments_translation(state, sign, lam, quad, kmax, x)
    return _node_moments_generic(state, sign, lam, quad, kmax, x, opts)


def species_pair_moments(state, lam, quad, kmax, x, opts=None):
    """Moments for both species at one position.

    Under the mirror pairing the + trajectories are the v2-reflection of
    the - trajectories, bit for bit; by default the + moments are obtained
    by relabeling nodes, which halves the trajectory work.
    """
    opts = opts or EvalOptions()
    out = {-1: node_moments(state, -1, lam, quad, kmax, x, opts)}
    if opts.species_symmetry and not (state.homogeneous and not opts.force_generic):
        from .discretization import theta_reflect_permutation
        perm = theta_reflect_permutation(quad)
        m0, m1, mv1 = out[-1]
        out[+1] = (m0[:, perm], -m1[:, perm], mv1[perm])
    else:
        out[+1] = node_moments(state, +1, lam, quad, kmax, x, opts)
    return out


# ---------------------------------------------------------------------------
# velocity-integrated moment profiles and Galerkin assembly
# ---------------------------------------------------------------------------

@dataclass
class MomentProfiles:
    """Velocity integrals of the path moments on the collocation grid.

    T1[k,m] = sum_s int mu_e^s   * avg(exp(ikwX)) dv        at x_m
    T2[k,m] = sum_s int mu_e^s v2hat * avg(V2hat exp(ikwX)) dv
    T3[k,m] = sum_s int mu_e^s   * avg(V2hat exp(ikwX)) dv
    T4[k,m] = sum_s int mu_e^s v2hat * avg(exp(ikwX)) dv
    c, d, lint are the avg(V1hat) integrals against mu_e, v2hat*mu_e and
    v1hat*mu_e; m_e, m_vp, m_p are the local (average-free) moments.
    """

    T1: np.ndarray
    T2: np.ndarray
    T3: np.ndarray
    T4: np.ndarray
    c: np.ndarray
    d: np.ndarray
    lint: np.ndarray
    m_e: np.ndarray
    m_vp: np.ndarray
    m_p: np.ndarray


def _species_fields(state, sign, quad, x):
    p = quad.v2 + sign * float(state.psi0(x))
    mu_e = state.profile.mu_e(sign, quad.e, p)
    mu_p = state.profile.mu_p(sign, quad.e, p)
    return mu_e, mu_p


def moment_profiles(state, lam, quad, kmax, x_grid, opts=None):
    opts = opts or EvalOptions()
    M = x_grid.size
    vh1 = quad.v1 / quad.e
    vh2 = quad.v2 / quad.e
    out = MomentProfiles(
        T1=np.zeros((kmax + 1, M), dtype=complex), T2=np.zeros((kmax + 1, M), dtype=complex),
        T3=np.zeros((kmax + 1, M), dtype=complex), T4=np.zeros((kmax + 1, M), dtype=complex),
        c=np.zeros(M), d=np.zeros(M), lint=np.zeros(M),
        m_e=np.zeros(M), m_vp=np.zeros(M), m_p=np.zeros(M))

    if state.homogeneous and not opts.force_generic:
        # translation invariance: velocity integrals once, phases per x
        omega = 2.0 * np.pi / state.period
        ks = np.arange(kmax + 1)[:, None]
        if lam == 0.0:
            g = (ks == 0).astype(complex) * np.ones_like(vh1)[None, :]
        else:
            g = lam / (lam + 1j * ks * omega * vh1[None, :])
        tau1 = np.zeros(kmax + 1, dtype=complex)
        tau2 = np.zeros(kmax + 1, dtype=complex)
        tau3 = np.zeros(kmax + 1, dtype=complex)
        c0 = d0 = l0 = 0.0
        for sign in (-1, +1):
            mu_e, mu_p = _species_fields(state, sign, quad, 0.0)
            tau1 += g @ (mu_e * quad.w)
            tau2 += g @ (mu_e * vh2 * vh2 * quad.w)
            tau3 += g @ (mu_e * vh2 * quad.w)
            c0 += float(np.sum(mu_e * vh1 * quad.w))
            d0 += float(np.sum(vh2 * mu_e * vh1 * quad.w))
            l0 += float(np.sum(vh1 * mu_e * vh1 * quad.w))
            out.m_e += float(np.sum(mu_e * quad.w))
            out.m_vp += float(np.sum(vh2 * mu_p * quad.w))
            out.m_p += float(np.sum(mu_p * quad.w))
        phases = np.exp(1j * np.arange(kmax + 1)[:, None] * omega * x_grid[None, :])
        out.T1 = tau1[:, None] * phases
        out.T2 = tau2[:, None] * phases
        out.T3 = tau3[:, None] * phases
        out.T4 = tau3[:, None] * phases
        out.c += c0
        out.d += d0
        out.lint += l0
        return out

    for m, x in enumerate(x_grid):
        pair = species_pair_moments(state, lam, quad, kmax, x, opts)
        for sign in (-1, +1):
            mu_e, mu_p = _species_fields(state, sign, quad, x)
            m0, m1, mv1 = pair[sign]
            we = mu_e * quad.w
            out.T1[:, m] += m0 @ we
            out.T2[:, m] += m1 @ (we * vh2)
            out.T3[:, m] += m1 @ we
            out.T4[:, m] += m0 @ (we * vh2)
            out.c[m] += float(np.sum(we * mv1))
            out.d[m] += float(np.sum(we * vh2 * mv1))
            out.lint[m] += float(np.sum(we * vh1 * mv1))
            out.m_e[m] += float(np.sum(we))
            out.m_vp[m] += float(np.sum(vh2 * mu_p * quad.w))
            out.m_p[m] += float(np.sum(mu_p * quad.w))
    return out


@dataclass
class OperatorBlocks:
    """Galerkin matrices of the linearized field system at one lam.

    A1 acts on the zero-mean electric potential, A2 on the full magnetic
    potential, B couples them, C and D couple to the mean-field amplitude
    and l is the current-response scalar.  ``defects`` records the
    pre-symmetrization asymmetry; ``raw`` keeps the one-sided assemblies.
    """

    lam: float
    n_modes: int
    period: float
    A1: np.ndarray
    A2: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    l: float
    defects: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)


def _expand_profile(T, basis, columns):
    """Grid profiles of Q-applied basis functions: column j from harmonic k."""
    M = basis.x_grid.size
    G = np.empty((M, len(columns)))
    P = basis.period
    for jj, j in enumerate(columns):
        k = basis.k_index[j]
        fac = (1.0 / np.sqrt(P)) if k == 0 else np.sqrt(2.0 / P)
        row = T[k, :]
        G[:, jj] = fac * (np.imag(row) if basis.is_sin[j] else np.real(row))
    return G


def _symmetrize(Mx, name, tol_sym, defects):
    defect = float(np.max(np.abs(Mx - Mx.T)))
    scale = max(float(np.max(np.abs(Mx))), 1e-300)
    defects[name] = defect / scale
    if defect > tol_sym * scale:
        raise AssemblyError("assembly inconsistency: %s asymmetry %.3e (relative %.3e)"
                            % (name, defect, defect / scale))
    return 0.5 * (Mx + Mx.T)


def assemble_blocks(state, lam, basis, quad, opts=None):
    """All operator blocks at a single growth parameter lam >= 0."""
    if basis.mean_zero:
        raise VmspecError("assemble_blocks needs the full basis (constant included)")
    if lam < 0:
        raise VmspecError("lam must be nonnegative")
    opts = opts or EvalOptions()
    kmax = basis.n_modes // 2
    x = basis.x_grid
    w = basis.quad_weight
    prof = moment_profiles(state, lam, quad, kmax, x, opts)

    Uf = basis.values                       # (M, N+1)
    mz = [j for j in range(basis.n_functions) if basis.k_index[j] > 0]
    Umz = Uf[:, mz]
    lap_full = basis.laplacian_diagonal()
    lap_mz = lap_full[mz]

    G1 = _expand_profile(prof.T1, basis, mz)
    G2 = _expand_profile(prof.T2, basis, range(basis.n_functions))
    G3 = _expand_profile(prof.T3, basis, range(basis.n_functions))
    G4 = _expand_profile(prof.T4, basis, mz)

    A1 = np.diag(lap_mz) + w * (Umz.T @ (-prof.m_e[:, None] * Umz)) + w * (Umz.T @ G1)
    A2 = (np.diag(lap_full) + lam ** 2 * np.eye(basis.n_functions)
          + w * (Uf.T @ (-prof.m_vp[:, None] * Uf)) - w * (Uf.T @ G2))
    B_raw = w * (Umz.T @ (prof.m_p[:, None] * Uf + G3))
    Bstar_raw = w * (Uf.T @ (prof.m_p[:, None] * Umz + G4))
    C = w * (Umz.T @ prof.c)
    D = w * (Uf.T @ prof.d)
    l = float(w * np.sum(prof.lint) / state.period)

    defects = {}
    A1 = _symmetrize(A1, "A1", opts.tol_sym, defects)
    A2 = _symmetrize(A2, "A2", opts.tol_sym, defects)
    scale = max(float(np.max(np.abs(B_raw))), float(np.max(np.abs(Bstar_raw))), 1.0)
    defects["B_adjoint"] = float(np.max(np.abs(B_raw - Bstar_raw.T))) / scale
    B = 0.5 * (B_raw + Bstar_raw.T)

    return OperatorBlocks(lam=float(lam), n_modes=basis.n_modes, period=state.period,
                          A1=A1, A2=A2, B=B, C=C, D=D, l=l, defects=defects,
                          raw={"B": B_raw, "Bstar": Bstar_raw})


@dataclass(frozen=True)
class ModalBasis:
    """Ascending-ordered eigenpairs of the lam = 0 diagonal blocks.

    Columns of ``a1_vectors`` live in the zero-mean basis, columns of
    ``a2_vectors`` in the full basis; signs follow the first-significant-
    coefficient convention so truncations are reproducible.
    """

    a1_values: np.ndarray
    a1_vectors: np.ndarray
    a2_values: np.ndarray
    a2_vectors: np.ndarray

    @property
    def n_available(self):
        return min(self.a1_values.size, self.a2_values.size)


def assemble_M(blocks, n, modal, tol_zero=None):
    """Truncated symmetric matrix of size 2n+1 in the modal coordinates.

    At lam = 0 the couplings must already be at quadrature-noise level;
    they are checked against tol_zero and frozen out, which realizes the
    exact block-diagonal form the counting argument relies on.
    """
    if n > modal.n_available:
        raise VmspecError("truncation n=%d exceeds available modes %d" % (n, modal.n_available))
    if n < 1:
        raise VmspecError("truncation must keep at least one mode")
    Xi = modal.a1_vectors[:, :n]
    Ze = modal.a2_vectors[:, :n]
    M11 = -(Xi.T @ blocks.A1 @ Xi)
    M22 = Ze.T @ blocks.A2 @ Ze
    M12 = Xi.T @ blocks.B @ Ze
    M13 = Xi.T @ blocks.C
    M23 = -(Ze.T @ blocks.D)
    M33 = -blocks.period * (blocks.lam ** 2 - blocks.l)
    if blocks.lam == 0.0:
        tz = tol_zero if tol_zero is not None else 1e-6
        worst = max(float(np.max(np.abs(M12))) if M12.size else 0.0,
                    float(np.max(np.abs(M13))) if M13.size else 0.0,
                    float(np.max(np.abs(M23))) if M23.size else 0.0)
        if worst > tz:
            raise AssemblyError("couplings fail to vanish at lam=0: %.3e" % worst)
        M12 = np.zeros_like(M12)
        M13 = np.zeros_like(M13)
        M23 = np.zeros_like(M23)
    out = np.zeros((2 * n + 1, 2 * n + 1))
    out[:n, :n] = 0.5 * (M11 + M11.T)
    out[n:2 * n, n:2 * n] = 0.5 * (M22 + M22.T)
    out[:n, n:2 * n] = M12
    out[n:2 * n, :n] = M12.T
    out[:n, 2 * n] = M13
    out[2 * n, :n] = M13
    out[n:2 * n, 2 * n] = M23
    out[2 * n, n:2 * n] = M23
    out[2 * n, 2 * n] = M33
    return out


# ---------------------------------------------------------------------------
# exports
# ---------------------------------------------------------------------------

def write_matrix_csv(path, mat):
    mat = np.atleast_2d(np.asarray(mat))
    with open(path, "w", newline="") as fh:
        wtr = csv.writer(fh)
        wtr.writerow(["row", "col", "value"])
        for i in range(mat.shape[0]):
            for j in range(mat.shape[1]):
                wtr.writerow([i, j, repr(float(mat[i, j]))])


def export_blocks(blocks, outdir, stem="blocks", tolerances=None, extra=None):
    """CSV matrices plus a JSON manifest; returns the manifest path."""
    import os
    os.makedirs(outdir, exist_ok=True)
    names = {"A1": blocks.A1, "A2": blocks.A2, "B": blocks.B,
             "C": blocks.C, "D": blocks.D}
    for name, mat in names.items():
        write_matrix_csv(os.path.join(outdir, "%s_%s.csv" % (stem, name)), mat)
    manifest = {
        "lambda": blocks.lam,
        "n_modes": blocks.n_modes,
        "period": blocks.period,
        "l": blocks.l,
        "defects": blocks.defects,
        "tolerances": tolerances or {},
    }
    manifest.update(extra or {})
    mpath = os.path.join(outdir, "%s_manifest.json" % stem)
    with open(mpath, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return mpath
