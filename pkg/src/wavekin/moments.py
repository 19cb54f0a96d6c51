"""Ensemble moments, the coupled moment chain, and the quasi-Gaussian closure.

The moment of order n1+n2 is the ensemble expectation at fixed slow time of
prod v_upper * prod conj(v_lower).  The chain couples each order to its
neighbours: the second-moment balance is

    dM^k_k/dtau = -2 gamma_k M^k_k + 2 b_k^2
                  + 2 rho sum_nontrivial Im M^{k1 k2}_{k k3},

and the fourth-moment equation feeds on sixth moments through four resonant
sums.  Replacing the fourth-moment time derivative by its instantaneous
balance (quasistationary step) and factorizing sixth moments as if the
amplitudes were independent complex Gaussians closes the system into a
discrete collision equation in the second moments alone.

Trivial quadruplets ({k1,k2} = {k,k3}) produce real fourth moments and are
skipped in the collision sums.  Nontrivial quadruplets always consist of
four distinct modes (perpendicularity forces it), so the closure's
coincident-index corrections never apply to them; quadruplets are still
screened and the skip count reported.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .effective import DampingProfile, ForcingProfile
from .lattice import Mode, ModeLattice, Quadruplet, enumerate_quadruplets


class MissingMomentError(KeyError):
    """A required quadruplet moment was not supplied."""


@dataclass(frozen=True)
class MomentIndex:
    """Upper/lower mode lists of a moment; order n1+n2 should be even."""

    upper: tuple[Mode, ...]
    lower: tuple[Mode, ...]

    @property
    def order(self) -> int:
        return len(self.upper) + len(self.lower)


@dataclass(frozen=True)
class MomentEstimate:
    value: complex
    stderr: float
    n: int


def moment_samples(states: np.ndarray, lattice: ModeLattice,
                   upper: Sequence[Mode], lower: Sequence[Mode]) -> np.ndarray:
    """Per-trajectory products prod v_upper * prod conj(v_lower).

    Factors are paired positionally (v_upper[i] * conj(v_lower[i])) so that
    swapping upper and lower conjugates every factor with identical grouping;
    conjugation symmetry of the estimates then holds bit-exactly.
    """
    states = np.asarray(states)
    out = np.ones(states.shape[0], dtype=complex)
    for i in range(max(len(upper), len(lower))):
        f = None
        if i < len(upper):
            f = states[:, lattice.index(upper[i])]
        if i < len(lower):
            c = np.conj(states[:, lattice.index(lower[i])])
            f = c if f is None else f * c
        out = out * f
    return out


def estimate_moment(states: np.ndarray, lattice: ModeLattice,
                    upper: Sequence[Mode], lower: Sequence[Mode]) -> MomentEstimate:
    """Sample mean and standard error over trajectories at fixed tau."""
    n = np.asarray(states).shape[0]
    if n < 2:
        raise ValueError("moment estimation needs at least 2 trajectories")
    if (len(upper) + len(lower)) % 2 == 1:
        warnings.warn("odd-order moment requested; expectation decouples to ~0",
                      stacklevel=2)
    samp = moment_samples(states, lattice, upper, lower)
    value = complex(samp.mean())
    var = samp.real.var(ddof=1) + samp.imag.var(ddof=1)
    return MomentEstimate(value=value, stderr=float(np.sqrt(var / n)), n=n)


def _quads_nontrivial(lattice: ModeLattice, k: Mode,
                      quads: Iterable[Quadruplet] | None) -> list[Quadruplet]:
    if quads is None:
        quads = enumerate_quadruplets(lattice, k)
    return [q for q in quads if not q.trivial]


FourthMoments = Mapping[tuple[Mode, Mode, Mode], complex]


def chain_rhs_second(lattice: ModeLattice, k: Mode, m_kk: float,
                     fourth: FourthMoments | Callable[[Mode, Mode, Mode], complex],
                     damping: DampingProfile, forcing: ForcingProfile, rho: float,
                     quads: Sequence[Quadruplet] | None = None) -> float:
    """-2 gamma_k M^k_k + 2 b_k^2 + 2 rho sum_nontrivial Im M^{k1 k2}_{k k3}.

    `fourth` maps the ordered triple (k1, k2, k3) to M^{k1 k2}_{k k3}; a
    missing entry raises MissingMomentError naming the offender.
    """
    gamma_k = damping.rate_of(lattice, k)
    b_k = forcing.amplitude_of(lattice, k)
    linear = -2.0 * gamma_k * m_kk + 2.0 * b_k**2
    if rho == 0.0:
        return linear
    # arithmetic stays generic: per-trajectory sample arrays pass through,
    # which the paired finite-difference chain tests rely on
    coll = 0.0
    for q in _quads_nontrivial(lattice, k, quads):
        key = (q.k1, q.k2, q.k3)
        if callable(fourth):
            m4 = fourth(*key)
        else:
            try:
                m4 = fourth[key]
            except KeyError:
                raise MissingMomentError(
                    f"fourth moment for quadruplet (k1,k2;k,k3)="
                    f"({q.k1},{q.k2};{k},{q.k3}) not supplied") from None
        coll = coll + np.imag(m4)
    return linear + 2.0 * rho * coll


SixthMoments = Callable[[tuple[Mode, Mode, Mode], tuple[Mode, Mode, Mode]], complex]


def chain_rhs_fourth(lattice: ModeLattice, k: Mode, k1: Mode, k2: Mode, k3: Mode,
                     m4: complex, sixth: SixthMoments, damping: DampingProfile,
                     rho: float,
                     quads_of: Callable[[Mode], Sequence[Quadruplet]] | None = None
                     ) -> complex:
    """Fourth-moment rate: damping relaxation plus four resonant sixth-moment sums.

    Requires k not in {k1, k2} and k3 not in {k1, k2}; otherwise the noise
    production term of the chain would not vanish and this equation does not
    apply.
    """
    if k in (k1, k2) or k3 in (k1, k2):
        raise ValueError(
            f"restriction violated: need k,k3 distinct from k1,k2 "
            f"(k={k}, k1={k1}, k2={k2}, k3={k3})")
    if quads_of is None:
        quads_of = lambda m: enumerate_quadruplets(lattice, m)
    gammas = sum(damping.rate_of(lattice, m) for m in (k, k1, k2, k3))
    s = 0j
    for q in quads_of(k):       # k5+k6 = k+k4: (k5,k6)=(a,b), k4=c
        s += sixth((k1, k2, q.k3), (k3, q.k1, q.k2))
    for q in quads_of(k3):
        s += sixth((k1, k2, q.k3), (k, q.k1, q.k2))
    for q in quads_of(k1):
        s -= sixth((k2, q.k1, q.k2), (k, k3, q.k3))
    for q in quads_of(k2):
        s -= sixth((k1, q.k1, q.k2), (k, k3, q.k3))
    return -gammas * m4 + 1j * rho * s


def quasistationary_fourth(lattice: ModeLattice, k: Mode, k1: Mode, k2: Mode,
                           k3: Mode, f: complex, damping: DampingProfile) -> complex:
    """Instantaneous balance f / (gamma_k + gamma_k1 + gamma_k2 + gamma_k3)."""
    gammas = sum(damping.rate_of(lattice, m) for m in (k, k1, k2, k3))
    if gammas <= 0:
        raise ZeroDivisionError("quasistationary step needs positive total damping")
    return f / gammas


SecondMoments = Mapping[Mode, float]


def qg_closure_sixth(upper: Sequence[Mode], lower: Sequence[Mode],
                     m2: SecondMoments | Callable[[Mode], float]) -> float:
    """Sixth moment under the independent-complex-Gaussian factorization.

    Product of the three upper second moments times the triple product of
    Kronecker-delta sums over lower slots.  Corrections for coincident upper
    indices are deliberately neglected (they vanish in the infinite-box
    limit); callers screen the quadruplets where they would matter.
    """
    if len(upper) != 3 or len(lower) != 3:
        raise ValueError("closure applies to sixth moments: 3 upper + 3 lower")
    get = m2 if callable(m2) else m2.__getitem__
    out = 1.0
    for u in upper:
        out *= get(u) * sum(1 for l in lower if l == u)
    return out


@dataclass(frozen=True)
class ClosedRhs:
    """Closed discrete second-moment rate and its pieces."""

    rate: float
    linear: float
    collision: float
    skipped_coincident: int


def collision_combination(m_k: float, m_1: float, m_2: float, m_3: float) -> float:
    """M1 M2 M3 + Mk M1 M2 - Mk M2 M3 - Mk M1 M3 (Wick-reduced collision bracket)."""
    return m_1 * m_2 * m_3 + m_k * m_1 * m_2 - m_k * m_2 * m_3 - m_k * m_1 * m_3


def closed_rhs_discrete(lattice: ModeLattice, k: Mode,
                        m2: SecondMoments | Callable[[Mode], float],
                        damping: DampingProfile, forcing: ForcingProfile,
                        rho: float,
                        quads: Sequence[Quadruplet] | None = None) -> ClosedRhs:
    """Quasi-Gaussian closed balance for M^k_k:

        -2 gamma_k M + 2 b_k^2
        + 2 rho^2 sum_nontrivial [collision combination] / (sum of gammas).

    Quadruplets whose four modes are not pairwise distinct would need the
    neglected closure corrections; they are skipped and counted (the count is
    provably zero for nontrivial quadruplets, kept as a guard).
    """
    get = m2 if callable(m2) else m2.__getitem__
    gamma_k = damping.rate_of(lattice, k)
    b_k = forcing.amplitude_of(lattice, k)
    linear = -2.0 * gamma_k * float(get(k)) + 2.0 * b_k**2
    coll = 0.0
    skipped = 0
    m_k = float(get(k))
    for q in _quads_nontrivial(lattice, k, quads):
        if len({q.k1, q.k2, q.k3, k}) != 4:
            skipped += 1
            continue
        gammas = gamma_k + sum(damping.rate_of(lattice, m)
                               for m in (q.k1, q.k2, q.k3))
        coll += collision_combination(m_k, float(get(q.k1)), float(get(q.k2)),
                                      float(get(q.k3))) / gammas
    coll *= 2.0 * rho**2
    return ClosedRhs(rate=linear + coll, linear=linear, collision=coll,
                     skipped_coincident=skipped)
