"""Slow-time integration of the resonant effective equation and the full system.

The effective dynamics per mode is

    dv_k = (-gamma_k v_k - i rho sum v_k1 v_k2 conj(v_k3)) dtau + b_k dbeta_k,

the sum running over the resonant quadruplet table.  The full fast-rotating
system is integrated in the interaction picture, where the stiff linear
phase is removed exactly and the nonlinear sum runs over all
momentum-conserving triples with oscillatory phase factors
exp(-i (dlam / nu) tau); resonant triples (dlam = 0) carry phase one.

Noise convention: the complex Wiener increments are
b_k (xi_re + i xi_im) sqrt(dt) with independent standard normals, so
E|b_k beta_k(tau)|^2 = 2 b_k^2 tau.  This is pinned by the +2 b_k^2
production term of the second-moment balance; any other normalization would
make the moment-chain tests convention-dependent.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .lattice import Mode, ModeLattice, MomentumTable, QuadrupletTable


class BlowUpError(RuntimeError):
    """A trajectory exceeded the amplitude bound; carries ids and slow time."""

    def __init__(self, trajectory_ids, tau):
        self.trajectory_ids = list(trajectory_ids)
        self.tau = tau
        super().__init__(
            f"|v| exceeded blow-up bound at tau={tau:.6g} "
            f"in trajectories {self.trajectory_ids}")


@dataclass(frozen=True)
class DampingProfile:
    """gamma_k = eps1 + eps2 |k|^beta, required positive on every mode."""

    eps1: float = 1.0
    eps2: float = 0.0
    beta: float = 0.0

    def rates(self, lattice: ModeLattice) -> np.ndarray:
        kabs = lattice.kabs
        # |k|^beta at the zero mode: 1 for beta = 0, 0 for beta > 0, +inf otherwise
        with np.errstate(divide="ignore"):
            pw = np.where(kabs > 0, kabs, 1.0) ** self.beta
        if self.beta > 0:
            pw = np.where(kabs > 0, pw, 0.0)
        elif self.beta < 0:
            pw = np.where(kabs > 0, pw, np.inf)
        gamma = self.eps1 + self.eps2 * pw
        if np.any(gamma <= 0) or not np.all(np.isfinite(gamma)):
            raise ValueError(
                f"damping must be positive and finite on all modes "
                f"(eps1={self.eps1}, eps2={self.eps2}, beta={self.beta})")
        return gamma

    def rate_of(self, lattice: ModeLattice, mode: Mode) -> float:
        return float(self.rates(lattice)[lattice.index(mode)])


@dataclass(frozen=True)
class ForcingProfile:
    """b_k = b0 (1 + |k|^2)^(-p): nonzero everywhere, rapidly decaying."""

    b0: float = 1.0
    p: float = 1.0

    def amplitudes(self, lattice: ModeLattice) -> np.ndarray:
        if self.b0 <= 0:
            raise ValueError("b0 must be positive; all b_k are required nonzero")
        return self.b0 * (1.0 + lattice.lam) ** (-self.p)

    def amplitude_of(self, lattice: ModeLattice, mode: Mode) -> float:
        return float(self.amplitudes(lattice)[lattice.index(mode)])


def zero_forcing(lattice: ModeLattice) -> np.ndarray:
    """Degenerate b = 0 path for the exact conservation tests."""
    return np.zeros(len(lattice))


@dataclass(frozen=True)
class SimConfig:
    rho: float
    dt: float
    T: float
    ensemble_size: int = 1
    seed: int = 0
    stride: int = 1
    nu_fast: float | None = None
    blowup_bound: float = 1e6
    store_states: bool = True

    def __post_init__(self):
        if self.dt <= 0 or self.T < self.dt:
            raise ValueError(f"need dt > 0 and T >= dt, got dt={self.dt}, T={self.T}")
        if self.ensemble_size < 1:
            raise ValueError("ensemble_size must be >= 1")
        if self.rho < 0:
            raise ValueError("rho must be nonnegative")
        if self.nu_fast is not None and self.nu_fast <= 0:
            raise ValueError("nu_fast must be positive when present")


@dataclass(frozen=True)
class FieldState:
    lattice: ModeLattice
    v: np.ndarray
    tau: float = 0.0

    def __post_init__(self):
        if self.v.shape[-1] != len(self.lattice):
            raise ValueError("one amplitude per lattice mode required")
        if not np.all(np.isfinite(self.v.view(float))):
            raise ValueError("field state contains non-finite entries")


def hamiltonian_res(state: FieldState, table: QuadrupletTable) -> float:
    """Resonant quartic Hamiltonian, prefactor 1/4; real by pair-exchange symmetry."""
    if table.lattice is not state.lattice and len(table.lattice) != len(state.lattice):
        raise ValueError("quadruplet table built for a different lattice")
    v = state.v
    terms = v[table.i1] * v[table.i2] * np.conj(v[table.i3]) * np.conj(v[table.ik])
    return float(np.real(terms.sum())) / 4.0


def _scatter_sum(terms: np.ndarray, ik: np.ndarray, scatter: np.ndarray | None,
                 n_modes: int) -> np.ndarray:
    if scatter is not None:
        return terms @ scatter
    out = np.zeros(terms.shape[:-1] + (n_modes,), dtype=complex)
    if terms.ndim == 1:
        np.add.at(out, ik, terms)
    else:
        for t in range(terms.shape[0]):
            np.add.at(out[t], ik, terms[t])
    return out


def nonlinear_drift(v: np.ndarray, table: QuadrupletTable, rho: float) -> np.ndarray:
    """-i rho sum over resonant (k1,k2,k3) of v1 v2 conj(v3), per mode.

    Equals -2 i rho dH_res/dconj(v_k); conserves sum|v|^2 and sum lam |v|^2
    exactly at drift level.  Supports a leading ensemble axis.
    """
    terms = v[..., table.i1] * v[..., table.i2] * np.conj(v[..., table.i3])
    out = _scatter_sum(terms, table.ik, table.scatter, v.shape[-1])
    return -1j * rho * out


def drift(state: FieldState, table: QuadrupletTable, damping: DampingProfile,
          rho: float) -> np.ndarray:
    """Full deterministic drift -gamma_k v_k + nonlinear part."""
    gamma = damping.rates(state.lattice)
    return -gamma * state.v + nonlinear_drift(state.v, table, rho)


def _oscillatory_drift(v: np.ndarray, mt: MomentumTable, rho: float,
                       nu: float, tau: float) -> np.ndarray:
    """Interaction-picture nonlinear drift over all momentum-conserving triples."""
    L2 = mt.lattice.L ** 2
    phases = np.exp(-1j * (tau / nu) * (mt.dlam_int / L2))
    terms = phases * v[..., mt.i1] * v[..., mt.i2] * np.conj(v[..., mt.i3])
    out = _scatter_sum(terms, mt.ik, mt.scatter, v.shape[-1])
    return -1j * rho * out


def _advance(v, tau, dt, nl, decay, b, rngs, bound, xi_buf=None):
    """One step: midpoint for the nonlinear drift, exact damping factor,
    Euler-Maruyama noise.  v has shape (n_traj, n_modes); nl=None means the
    degenerate rho = 0 path (pure OU)."""
    if nl is None:
        v1 = v * decay
    else:
        mid = v + 0.5 * dt * nl(v, tau)
        v1 = v + dt * nl(mid, tau + 0.5 * dt)
        v1 *= decay
    if b is not None:
        if xi_buf is None:
            xi_buf = np.empty((len(rngs), v.shape[1], 2))
        # one (n_modes, 2) block per trajectory per step keeps the
        # per-trajectory streams a pure function of (seed, index)
        for t, rng in enumerate(rngs):
            rng.standard_normal(out=xi_buf[t])
        v1 += b[None, :] * (xi_buf[..., 0] + 1j * xi_buf[..., 1]) * np.sqrt(dt)
    bad = np.abs(v1) > bound
    if bad.any():
        raise BlowUpError(np.nonzero(bad.any(axis=1))[0], tau + dt)
    return v1


def step(state: FieldState, table: QuadrupletTable, damping: DampingProfile,
         forcing: ForcingProfile | None, config: SimConfig,
         rng: np.random.Generator) -> FieldState:
    """Advance the effective equation one dt for a single trajectory."""
    gamma = damping.rates(state.lattice)
    decay = np.exp(-gamma * config.dt)
    b = forcing.amplitudes(state.lattice) if forcing is not None else None
    nl = None if config.rho == 0.0 else \
        (lambda w, tau: nonlinear_drift(w, table, config.rho))
    v1 = _advance(state.v[None, :], state.tau, config.dt, nl, decay, b,
                  [rng], config.blowup_bound)
    return FieldState(state.lattice, v1[0], state.tau + config.dt)


def step_full(state: FieldState, mt: MomentumTable, damping: DampingProfile,
              forcing: ForcingProfile | None, config: SimConfig,
              rng: np.random.Generator) -> FieldState:
    """Advance the full system one dt in the interaction picture.

    The stiff rotation exp(-i lam tau / nu) is absorbed exactly into the
    change of variables; only the bounded oscillatory phases remain in the
    drift, but dt must still resolve them.
    """
    if config.nu_fast is None:
        raise ValueError("step_full requires config.nu_fast > 0")
    _warn_phase_resolution(state.lattice, config)
    gamma = damping.rates(state.lattice)
    decay = np.exp(-gamma * config.dt)
    b = forcing.amplitudes(state.lattice) if forcing is not None else None
    nl = None if config.rho == 0.0 else \
        (lambda w, tau: _oscillatory_drift(w, mt, config.rho, config.nu_fast, tau))
    v1 = _advance(state.v[None, :], state.tau, config.dt, nl, decay, b,
                  [rng], config.blowup_bound)
    return FieldState(state.lattice, v1[0], state.tau + config.dt)


_PHASE_RESOLUTION_LIMIT = 0.5  # radians of fastest oscillatory phase per step


def _warn_phase_resolution(lattice: ModeLattice, config: SimConfig) -> None:
    import warnings
    lam_max = float(lattice.lam.max())
    if lam_max > 0 and config.dt * lam_max / config.nu_fast > _PHASE_RESOLUTION_LIMIT:
        warnings.warn(
            f"dt*lam_max/nu = {config.dt * lam_max / config.nu_fast:.3g} rad "
            f"exceeds the phase-resolution threshold {_PHASE_RESOLUTION_LIMIT}",
            RuntimeWarning, stacklevel=3)


def trajectory_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for one trajectory, a pure function of (seed, index)."""
    return np.random.default_rng(np.random.SeedSequence([seed, index]))


@dataclass
class SimResult:
    """Ensemble snapshots: spectra always, full states when requested."""

    lattice: ModeLattice
    taus: np.ndarray                     # (n_snap,)
    spectra: np.ndarray                  # (n_snap, n_modes) ensemble mean |v|^2
    spectra_stderr: np.ndarray
    states: np.ndarray | None            # (n_snap, n_traj, n_modes) complex
    config: SimConfig

    @property
    def n_traj(self) -> int:
        return self.config.ensemble_size

    def states_at(self, tau: float) -> np.ndarray:
        if self.states is None:
            raise ValueError("run with store_states=True to keep full states")
        i = int(np.argmin(np.abs(self.taus - tau)))
        if abs(self.taus[i] - tau) > 1e-9 + 1e-9 * abs(tau):
            raise KeyError(f"no snapshot at tau={tau}; nearest is {self.taus[i]}")
        return self.states[i]

    def time_averaged_spectra(self, tau_min: float) -> np.ndarray:
        """Per-trajectory time averages of |v|^2 over snapshots with tau >= tau_min."""
        if self.states is None:
            raise ValueError("run with store_states=True to keep full states")
        sel = self.taus >= tau_min - 1e-12
        if not sel.any():
            raise ValueError(f"no snapshots at tau >= {tau_min}")
        return np.mean(np.abs(self.states[sel]) ** 2, axis=0)


def simulate(lattice: ModeLattice, config: SimConfig, damping: DampingProfile,
             forcing: ForcingProfile | None,
             table: QuadrupletTable | None = None,
             mom_table: MomentumTable | None = None,
             initial: np.ndarray | None = None,
             mode: str = "effective",
             trajectory_indices: Sequence[int] | None = None,
             chunk: int = 512) -> SimResult:
    """Run an ensemble of independent trajectories with per-trajectory streams.

    Trajectory i draws from the stream seeded by (config.seed, i), so results
    are bitwise reproducible and independent of chunking or worker count.
    Snapshots are taken at step 0 and every `stride` steps.
    """
    if mode not in ("effective", "full"):
        raise ValueError(f"mode must be 'effective' or 'full', got {mode!r}")
    if mode == "effective":
        if table is None:
            raise ValueError("effective mode needs a quadruplet table")
        nl = None if config.rho == 0.0 else \
            (lambda w, tau: nonlinear_drift(w, table, config.rho))
    else:
        if mom_table is None:
            raise ValueError("full mode needs a momentum table")
        if config.nu_fast is None:
            raise ValueError("full mode requires config.nu_fast")
        _warn_phase_resolution(lattice, config)
        nl = None if config.rho == 0.0 else \
            (lambda w, tau: _oscillatory_drift(w, mom_table, config.rho,
                                               config.nu_fast, tau))

    n_modes = len(lattice)
    gamma = damping.rates(lattice)
    decay = np.exp(-gamma * config.dt)
    b = forcing.amplitudes(lattice) if forcing is not None else None
    if initial is None:
        initial = np.zeros(n_modes, dtype=complex)
    initial = np.asarray(initial, dtype=complex)

    n_steps = int(round(config.T / config.dt))
    snap_steps = list(range(0, n_steps + 1, config.stride))
    taus = np.array([s * config.dt for s in snap_steps])

    indices = list(trajectory_indices) if trajectory_indices is not None \
        else list(range(config.ensemble_size))
    n_traj = len(indices)
    states = np.empty((len(snap_steps), n_traj, n_modes), dtype=complex)

    for lo in range(0, n_traj, chunk):
        hi = min(lo + chunk, n_traj)
        rngs = [trajectory_rng(config.seed, i) for i in indices[lo:hi]]
        v = np.tile(initial, (hi - lo, 1))
        xi_buf = np.empty((hi - lo, n_modes, 2)) if b is not None else None
        snap_i = 0
        if snap_steps and snap_steps[0] == 0:
            states[0, lo:hi] = v
            snap_i = 1
        tau = 0.0
        for s in range(1, n_steps + 1):
            try:
                v = _advance(v, tau, config.dt, nl, decay, b, rngs,
                             config.blowup_bound, xi_buf=xi_buf)
            except BlowUpError as e:
                raise BlowUpError([indices[lo + t] for t in e.trajectory_ids],
                                  e.tau) from None
            tau = s * config.dt
            if snap_i < len(snap_steps) and s == snap_steps[snap_i]:
                states[snap_i, lo:hi] = v
                snap_i += 1

    abs2 = np.abs(states) ** 2
    spectra = abs2.mean(axis=1)
    spectra_stderr = abs2.std(axis=1, ddof=1) / np.sqrt(max(n_traj, 2)) \
        if n_traj >= 2 else np.zeros_like(spectra)
    return SimResult(lattice=lattice, taus=taus, spectra=spectra,
                     spectra_stderr=spectra_stderr,
                     states=states if config.store_states else None,
                     config=config)
