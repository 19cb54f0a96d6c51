"""Continuum kinetic equation: collision integral, exponent algebra, scans.

In the inertial zone the isotropic spectrum n(k) evolves by

    dn_k/dtau = -2 gamma(k) n_k + btilde^2(k)
                + eps4 * int dk1 dk2 dk3 delta(momentum) delta(energy)
                  T(k,k1,k2,k3) [n1 n2 n3 + nk n1 n2 - nk n2 n3 - nk n1 n3]

with kernel T = phi_const^-1 / (gamma_k + gamma_k1 + gamma_k2 + gamma_k3),
gamma = damping_eps |k|^m.  In d=2 the resonant manifold is parametrized by
the rectangle construction: for each k3 the admissible k1 sweep the circle
of center c = (k + k3)/2 and radius r = |k3 - k|/2, with k2 = k + k3 - k1;
eliminating the deltas leaves the measure dk3 dtheta / 4 because the energy
gradient 4r cancels the circle arclength factor r.

The Monte Carlo evaluator draws k3 log-radially inside a disc (importance
sampling: heavy power-law tails at small moduli would otherwise ruin the
variance) and integrates theta on a fixed uniform ring, which keeps the
per-sample variance finite; standard errors come from the k3 spread.
Power-law spectra extend analytically beyond the window; grid spectra
reject out-of-domain samples and report the rejected fraction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np


def unit_ball_volume(n: int) -> float:
    """Volume of the unit ball in R^n."""
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1)


def default_phi_const(d: int) -> float:
    """Lower bound of the tangent-cell area factor: V1 in R^(2d-1)."""
    return unit_ball_volume(2 * d - 1)


@dataclass(frozen=True)
class KineticConfig:
    """Continuum evaluator parameters; d = 2 is the supported dimension."""

    k_min: float
    k_max: float
    d: int = 2
    m: float = 0.0
    damping_eps: float = 1.0
    eps4: float = 1.0
    phi_const: float | None = None
    n_k3: int = 4096
    n_theta: int = 64
    seed: int = 0
    k3_radius: float | None = None      # disc radius for k3; default k_max
    r_lo_factor: float = 1e-3           # inner radius = factor * k_min

    def __post_init__(self):
        if not (0 < self.k_min < self.k_max):
            raise ValueError(f"need 0 < k_min < k_max, got [{self.k_min}, {self.k_max}]")
        if self.eps4 < 0:
            # eps4 = 0 is the first-class degenerate path (linear balance)
            raise ValueError("eps4 must be nonnegative")
        if self.phi_const is None:
            object.__setattr__(self, "phi_const", default_phi_const(self.d))
        if self.phi_const <= 0:
            raise ValueError("phi_const must be positive")
        if self.damping_eps <= 0:
            raise ValueError("damping_eps must be positive")

    @property
    def disc_radius(self) -> float:
        return self.k3_radius if self.k3_radius is not None else self.k_max

    def gamma(self, kmod):
        """Homogeneous damping eps * |k|^m used inside the kernel."""
        kmod = np.asarray(kmod, dtype=float)
        with np.errstate(divide="ignore"):
            out = self.damping_eps * np.where(kmod > 0, kmod, 1.0) ** self.m
        if self.m > 0:
            out = np.where(kmod > 0, out, 0.0)
        elif self.m < 0:
            out = np.where(kmod > 0, out, np.inf)
        return out


def kernel_T(k, k1, k2, k3, config: KineticConfig):
    """phi_const^-1 / (gamma_k + gamma_k1 + gamma_k2 + gamma_k3).

    Homogeneity degree is -m: T(lam*k, ...) = lam^-m T(k, ...).  The four
    rates are summed in sorted order so the exchange symmetries k1 <-> k2
    and (k,k3) <-> (k1,k2) hold bit-exactly.
    """
    g = np.stack(np.broadcast_arrays(config.gamma(k), config.gamma(k1),
                                     config.gamma(k2), config.gamma(k3)))
    g = np.sort(g, axis=0)
    tot = ((g[0] + g[1]) + g[2]) + g[3]
    if np.any(tot <= 0):
        raise ZeroDivisionError("kernel denominator vanished: all gammas zero")
    return (1.0 / config.phi_const) / tot


def collision_factor(n_k, n_1, n_2, n_3):
    """n1 n2 n3 + nk n1 n2 - nk n2 n3 - nk n1 n3."""
    return n_1 * n_2 * n_3 + n_k * n_1 * n_2 - n_k * n_2 * n_3 - n_k * n_1 * n_3


def zakharov_bracket(x: float, k: float, k1: float, k2: float, k3: float) -> float:
    """1 + (k3/k)^x - (k1/k)^x - (k2/k)^x."""
    return 1.0 + (k3 / k) ** x - (k1 / k) ** x - (k2 / k) ** x


def x_of_sigma(sigma: float, m: float, d: int) -> float:
    """Zakharov exponent x = 2 - 3 sigma - m - 3 d for the ansatz n ~ k^sigma."""
    return 2.0 - 3.0 * sigma - m - 3.0 * d


@dataclass(frozen=True)
class KzExponents:
    """Stationary power-law exponents: two KZ solutions plus the RJ pair."""

    kz1: Fraction                       # x = 0: -(m + 3d - 2)/3
    kz2: Fraction                       # x = 2: -(m + 3d)/3
    rj: tuple[Fraction, Fraction] = (Fraction(0), Fraction(-2))


def kz_exponents(d: int, m) -> KzExponents:
    m = Fraction(m)
    return KzExponents(kz1=-(m + 3 * d - 2) / 3, kz2=-(m + 3 * d) / 3)


@dataclass(frozen=True)
class SpectrumFn:
    """Isotropic spectrum: power-law ansatz (global) or positive radial grid."""

    kind: str
    amplitude: float = 1.0
    exponent: float = 0.0
    k_nodes: np.ndarray | None = None
    values: np.ndarray | None = None

    @classmethod
    def power_law(cls, amplitude: float, exponent: float) -> "SpectrumFn":
        if amplitude <= 0:
            raise ValueError("power-law amplitude must be positive")
        return cls(kind="power_law", amplitude=amplitude, exponent=exponent)

    @classmethod
    def from_grid(cls, k_nodes: np.ndarray, values: np.ndarray) -> "SpectrumFn":
        k_nodes = np.asarray(k_nodes, dtype=float)
        values = np.asarray(values, dtype=float)
        if k_nodes.ndim != 1 or k_nodes.shape != values.shape:
            raise ValueError("grid spectrum needs matching 1-d nodes and values")
        if np.any(k_nodes <= 0) or np.any(np.diff(k_nodes) <= 0):
            raise ValueError("grid nodes must be positive and increasing")
        if np.any(values <= 0):
            raise ValueError("grid spectrum must be positive (reciprocals appear)")
        return cls(kind="grid", k_nodes=k_nodes, values=values)

    def evaluate(self, kmod: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Values and validity mask; invalid samples follow the rejection rule."""
        kmod = np.asarray(kmod, dtype=float)
        if self.kind == "power_law":
            valid = kmod > 0
            safe = np.where(valid, kmod, 1.0)
            return self.amplitude * safe ** self.exponent, valid
        valid = (kmod >= self.k_nodes[0]) & (kmod <= self.k_nodes[-1])
        safe = np.clip(kmod, self.k_nodes[0], self.k_nodes[-1])
        # log-log interpolation preserves positivity and power laws
        vals = np.exp(np.interp(np.log(safe), np.log(self.k_nodes),
                                np.log(self.values)))
        return vals, valid

    def __call__(self, kmod):
        vals, valid = self.evaluate(kmod)
        if not np.all(valid):
            raise ValueError("spectrum evaluated outside its domain")
        return vals


@dataclass(frozen=True)
class ManifoldSamples:
    """Common-random-number sample set for the d=2 resonant manifold."""

    k: float
    k3: np.ndarray          # (n, 2)
    weights: np.ndarray     # (n,) importance weights, 1/p(k3)
    thetas: np.ndarray      # (n_theta,)
    k1: np.ndarray          # (n, n_theta, 2)
    k2: np.ndarray          # (n, n_theta, 2)


def manifold_samples(k_modulus: float, config: KineticConfig,
                     rng: np.random.Generator | None = None) -> ManifoldSamples:
    if config.d != 2:
        raise NotImplementedError(
            "continuum evaluator supports d=2 only (circle parametrization)")
    if rng is None:
        rng = np.random.default_rng(config.seed)
    n = config.n_k3
    r_lo = config.r_lo_factor * config.k_min
    r_hi = config.disc_radius
    u = rng.uniform(size=n)
    radius = r_lo * (r_hi / r_lo) ** u
    phi = rng.uniform(0.0, 2.0 * math.pi, size=n)
    k3 = np.stack([radius * np.cos(phi), radius * np.sin(phi)], axis=1)
    weights = 2.0 * math.pi * math.log(r_hi / r_lo) * radius ** 2
    thetas = 2.0 * math.pi * (np.arange(config.n_theta) + 0.5) / config.n_theta
    kvec = np.array([k_modulus, 0.0])
    c = 0.5 * (kvec[None, :] + k3)                       # (n, 2)
    r = 0.5 * np.linalg.norm(k3 - kvec[None, :], axis=1)  # (n,)
    ring = np.stack([np.cos(thetas), np.sin(thetas)], axis=1)  # (nt, 2)
    k1 = c[:, None, :] + r[:, None, None] * ring[None, :, :]
    k2 = (kvec[None, None, :] + k3[:, None, :]) - k1
    return ManifoldSamples(k=float(k_modulus), k3=k3, weights=weights,
                           thetas=thetas, k1=k1, k2=k2)


@dataclass(frozen=True)
class CollisionEstimate:
    value: float
    stderr: float
    n_k3: int
    n_theta: int
    rejected_fraction: float


def _collision_rows(samples: ManifoldSamples, n: SpectrumFn,
                    config: KineticConfig) -> tuple[np.ndarray, float]:
    """Per-k3 contributions r_i with estimate = mean(r_i), plus rejected fraction."""
    k1m = np.linalg.norm(samples.k1, axis=2)
    k2m = np.linalg.norm(samples.k2, axis=2)
    k3m = np.linalg.norm(samples.k3, axis=1)
    nk, ok_k = n.evaluate(np.array([samples.k]))
    if not ok_k[0]:
        raise ValueError(f"spectrum not defined at evaluation point k={samples.k}")
    n1, ok1 = n.evaluate(k1m)
    n2, ok2 = n.evaluate(k2m)
    n3, ok3 = n.evaluate(k3m)
    ok = ok1 & ok2 & ok3[:, None]
    T = kernel_T(samples.k, k1m, k2m, k3m[:, None], config)
    comb = collision_factor(nk[0], n1, n2, n3[:, None])
    integrand = np.where(ok, T * comb, 0.0)
    theta_mean = integrand.mean(axis=1) * 2.0 * math.pi     # int dtheta
    rows = config.eps4 * samples.weights * theta_mean / 4.0
    rejected = 1.0 - ok.mean()
    return rows, float(rejected)


def collision_integral(k_modulus: float, n: SpectrumFn, config: KineticConfig,
                       rng: np.random.Generator | None = None,
                       samples: ManifoldSamples | None = None) -> CollisionEstimate:
    """Monte Carlo estimate of the d=2 collision term at one modulus."""
    if config.eps4 == 0.0:
        return CollisionEstimate(value=0.0, stderr=0.0, n_k3=0,
                                 n_theta=config.n_theta, rejected_fraction=0.0)
    if samples is None:
        samples = manifold_samples(k_modulus, config, rng)
    rows, rejected = _collision_rows(samples, n, config)
    value = float(rows.mean())
    stderr = float(rows.std(ddof=1) / math.sqrt(rows.size)) if rows.size > 1 else 0.0
    return CollisionEstimate(value=value, stderr=stderr, n_k3=rows.size,
                             n_theta=config.n_theta, rejected_fraction=rejected)


def kinetic_rhs(k_modulus: float, n: SpectrumFn,
                damping: Callable[[float], float],
                forcing_sq: Callable[[float], float],
                config: KineticConfig,
                rng: np.random.Generator | None = None,
                samples: ManifoldSamples | None = None) -> tuple[float, float]:
    """-2 gamma(k) n(k) + btilde^2(k) + collision integral; returns (rate, stderr)."""
    est = collision_integral(k_modulus, n, config, rng=rng, samples=samples)
    nk = float(n(np.array([k_modulus]))[0])
    rate = -2.0 * damping(k_modulus) * nk + forcing_sq(k_modulus) + est.value
    return rate, est.stderr


@dataclass
class ScanResult:
    """Sigma scan with common random numbers across the grid."""

    sigmas: np.ndarray
    residuals: np.ndarray
    stderrs: np.ndarray
    rows: np.ndarray            # (n_k3, n_sigma) per-sample contributions
    k_eval: float

    @property
    def dip_sigma(self) -> float:
        return float(self.sigmas[int(np.argmin(np.abs(self.residuals)))])

    def separation(self, j: int, ref: int) -> tuple[float, float]:
        """|residual_j| - |residual_ref| with the paired (CRN) standard error."""
        sj = 1.0 if self.residuals[j] >= 0 else -1.0
        sr = 1.0 if self.residuals[ref] >= 0 else -1.0
        diff = sj * self.rows[:, j] - sr * self.rows[:, ref]
        sep = abs(self.residuals[j]) - abs(self.residuals[ref])
        return float(sep), float(diff.std(ddof=1) / math.sqrt(diff.shape[0]))


def stationarity_scan(sigmas: Sequence[float], k_eval: float,
                      config: KineticConfig,
                      amplitude: float = 1.0) -> ScanResult:
    """|collision residual| of n = a k^sigma over a sigma grid, CRN throughout."""
    sigmas = np.asarray(list(sigmas), dtype=float)
    samples = manifold_samples(k_eval, config)
    rows = np.empty((config.n_k3, sigmas.size))
    for j, s in enumerate(sigmas):
        spec = SpectrumFn.power_law(amplitude, float(s))
        rows[:, j], _ = _collision_rows(samples, spec, config)
    residuals = rows.mean(axis=0)
    stderrs = rows.std(axis=0, ddof=1) / math.sqrt(config.n_k3)
    return ScanResult(sigmas=sigmas, residuals=residuals, stderrs=stderrs,
                      rows=rows, k_eval=float(k_eval))


class SpectrumInstabilityError(RuntimeError):
    """Grid spectrum exceeded the growth bound during time stepping."""


@dataclass
class EvolveResult:
    k_nodes: np.ndarray
    history: np.ndarray         # (steps+1, n_nodes)
    clamp_count: int
    rejected_fraction: float


def evolve_spectrum(n0: SpectrumFn, damping: Callable[[float], float],
                    forcing_sq: Callable[[float], float], config: KineticConfig,
                    dt: float, steps: int, floor: float = 1e-12,
                    bound: float = 1e12,
                    rng: np.random.Generator | None = None) -> EvolveResult:
    """Explicit time stepping of the kinetic balance on a radial grid."""
    if n0.kind != "grid":
        raise ValueError("evolve_spectrum needs a grid spectrum")
    if n0.k_nodes.size < 32:
        raise ValueError("need at least 32 radial nodes across the window")
    if rng is None:
        rng = np.random.default_rng(config.seed)
    nodes = n0.k_nodes.copy()
    vals = n0.values.copy()
    gam = np.array([damping(k) for k in nodes])
    bsq = np.array([forcing_sq(k) for k in nodes])
    history = np.empty((steps + 1, nodes.size))
    history[0] = vals
    clamps = 0
    rej_acc = 0.0
    n_coll = 0
    for s in range(1, steps + 1):
        spec = SpectrumFn.from_grid(nodes, vals)
        coll = np.empty(nodes.size)
        for i, k in enumerate(nodes):
            est = collision_integral(float(k), spec, config, rng=rng)
            coll[i] = est.value
            rej_acc += est.rejected_fraction
            n_coll += 1
        vals = vals + dt * (-2.0 * gam * vals + bsq + coll)
        below = vals < floor
        clamps += int(below.sum())
        vals = np.where(below, floor, vals)
        if np.any(vals > bound) or not np.all(np.isfinite(vals)):
            raise SpectrumInstabilityError(
                f"spectrum exceeded bound {bound} at step {s}")
        history[s] = vals
    return EvolveResult(k_nodes=nodes, history=history, clamp_count=clamps,
                        rejected_fraction=rej_acc / max(n_coll, 1))
