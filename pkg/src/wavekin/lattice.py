"""Finite mode lattices and resonant quadruplet enumeration.

Modes are integer vectors l of Z^d with |l/L| <= K; the physical wavevector
is k = l/L and the dispersion value is lam(k) = |k|^2 = |l|^2 / L^2.  Both
resonance conditions

    l1 + l2 = l + l3            (momentum)
    |l1|^2 + |l2|^2 = |l|^2 + |l3|^2   (energy)

are checked in exact integer arithmetic; a floating-point energy comparison
would misclassify resonances.  In any dimension the two conditions combine
into the perpendicularity identity (l1 - l) . (l1 - l3) = 0, so nontrivial
quadruplets in d=2 are exactly the lattice rectangles with (l, l3) at
opposite corners.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

_SCATTER_CAP = 5_000_000  # dense one-hot matrix size guard

Mode = tuple[int, ...]

DEFAULT_MODE_CAP = 500_000


class ResourceLimitError(RuntimeError):
    """Requested lattice exceeds the configured mode-count cap."""


@dataclass(frozen=True)
class ModeLattice:
    """All modes l in Z^d with |l|^2 <= radius_sq, sorted lexicographically.

    radius_sq is the integer floor of (K*L)^2, so membership tests are exact.
    shell_edges gives radial bin boundaries (in |k| units) for isotropic
    averaging; the zero mode sits in its own shell and shell j collects
    edges[j-1] < |k| <= edges[j] (right-closed, integer-exact on |l|^2).
    """

    d: int
    L: float
    K: float
    radius_sq: int
    modes: np.ndarray                  # (N, d) int64, lexicographically sorted
    shell_edges: np.ndarray            # increasing, covers [0, K]
    _index: Mapping[Mode, int] = field(repr=False, default=None)

    def __post_init__(self):
        if self._index is None:
            object.__setattr__(
                self, "_index",
                {tuple(int(c) for c in m): i for i, m in enumerate(self.modes)})

    def __len__(self) -> int:
        return self.modes.shape[0]

    def __contains__(self, mode) -> bool:
        return tuple(int(c) for c in mode) in self._index

    def index(self, mode) -> int:
        key = tuple(int(c) for c in mode)
        try:
            return self._index[key]
        except KeyError:
            raise KeyError(f"mode {key} not in lattice (d={self.d}, L={self.L}, K={self.K})")

    def mode_tuples(self) -> list[Mode]:
        return [tuple(int(c) for c in m) for m in self.modes]

    @property
    def norms_sq(self) -> np.ndarray:
        """Integer |l|^2 per mode."""
        return np.einsum("ij,ij->i", self.modes, self.modes)

    @property
    def lam(self) -> np.ndarray:
        """Dispersion values lam = |k|^2 = |l|^2 / L^2."""
        return self.norms_sq / self.L**2

    @property
    def kabs(self) -> np.ndarray:
        """Physical moduli |k| = |l| / L."""
        return np.sqrt(self.norms_sq) / self.L

    def lam_of(self, mode) -> float:
        l = np.asarray(mode)
        return float(np.dot(l, l)) / self.L**2


def build_lattice(d: int, L: float, K: float, shell_width: float | None = None,
                  max_modes: int = DEFAULT_MODE_CAP) -> ModeLattice:
    """Enumerate { l in Z^d : |l/L| <= K } with default shell binning of 1/L."""
    if d not in (1, 2, 3):
        raise ValueError(f"dimension must be 1, 2 or 3, got {d}")
    if L <= 0 or K <= 0:
        raise ValueError(f"L and K must be positive, got L={L}, K={K}")
    # tiny epsilon so that e.g. (0.3*10)^2 = 8.999999999999998 still counts as 9
    radius_sq = int(math.floor((K * L) ** 2 + 1e-9))
    r = math.isqrt(radius_sq)
    est = (2 * r + 1) ** d
    if est > 8 * max_modes:
        raise ResourceLimitError(
            f"lattice bounding box holds ~{est} points, cap is {max_modes}")
    axes = [np.arange(-r, r + 1, dtype=np.int64)] * d
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    keep = np.einsum("ij,ij->i", grid, grid) <= radius_sq
    modes = grid[keep]
    if modes.shape[0] > max_modes:
        raise ResourceLimitError(
            f"lattice has {modes.shape[0]} modes, cap is {max_modes}")
    order = np.lexsort(tuple(modes[:, i] for i in reversed(range(d))))
    modes = modes[order]
    if shell_width is None:
        shell_width = 1.0 / L
    n_shell = int(math.ceil(K / shell_width - 1e-12))
    edges = np.concatenate(([0.0], shell_width * np.arange(1, n_shell + 1)))
    return ModeLattice(d=d, L=float(L), K=float(K), radius_sq=radius_sq,
                       modes=modes, shell_edges=edges)


@dataclass(frozen=True)
class Quadruplet:
    """Resonant 4-tuple (k1, k2; k, k3): l1+l2 = l+l3 and |l1|^2+|l2|^2 = |l|^2+|l3|^2.

    trivial marks {k1, k2} = {k, k3}; those terms are real frequency shifts
    and drop out of the imaginary collision sums.
    """

    k1: Mode
    k2: Mode
    k3: Mode
    k: Mode
    trivial: bool

    def __post_init__(self):
        a1, a2, a3, a = (np.asarray(x, dtype=np.int64)
                         for x in (self.k1, self.k2, self.k3, self.k))
        if not np.array_equal(a1 + a2, a + a3):
            raise ValueError(f"momentum delta violated: {self}")
        if int(a1 @ a1 + a2 @ a2) != int(a @ a + a3 @ a3):
            raise ValueError(f"energy delta violated: {self}")

    @property
    def modes(self) -> tuple[Mode, Mode, Mode, Mode]:
        return (self.k1, self.k2, self.k3, self.k)


def _is_trivial(l1: Mode, l2: Mode, l: Mode, l3: Mode) -> bool:
    return (l1 == l and l2 == l3) or (l1 == l3 and l2 == l)


def _trivial_triples(lattice: ModeLattice, k: Mode) -> list[tuple[Mode, Mode, Mode]]:
    # {k1,k2} = {k,k3}: (k, t, t) and (t, k, t) for every mode t
    out = []
    for t in lattice.mode_tuples():
        out.append((k, t, t))
        if t != k:
            out.append((t, k, t))
    return out


def _int_interval(b2: int, a: int, c: int) -> tuple[int, int] | None:
    """Integer j-range of b2*j^2 - 2*a*j + c <= 0 (b2 > 0), exact."""
    disc = a * a - b2 * c
    if disc < 0:
        return None
    s = math.isqrt(disc)
    lo = -((s - a) // b2)          # ceil((a - s)/b2)
    hi = (a + s) // b2
    # fix-up against isqrt truncation at perfect-square boundaries
    while b2 * (lo - 1) * (lo - 1) - 2 * a * (lo - 1) + c <= 0:
        lo -= 1
    while b2 * lo * lo - 2 * a * lo + c > 0:
        lo += 1
    while b2 * (hi + 1) * (hi + 1) - 2 * a * (hi + 1) + c <= 0:
        hi += 1
    while b2 * hi * hi - 2 * a * hi + c > 0:
        hi -= 1
    if lo > hi:
        return None
    return lo, hi


def _rectangle_triples(lattice: ModeLattice, k: Mode) -> list[tuple[Mode, Mode, Mode]]:
    """d=2 nontrivial triples via the rectangle characterization.

    For each l1 != l the admissible l3 lie on the integer line through l1
    perpendicular to a = l1 - l; stepping j along the primitive direction p
    gives l3 = l1 - j*p and l2 = l - j*p, with the j-range solved exactly.
    """
    lx, ly = k
    r2 = lattice.radius_sq
    out = []
    for (x1, y1) in lattice.mode_tuples():
        ax, ay = x1 - lx, y1 - ly
        if ax == 0 and ay == 0:
            continue
        g = math.gcd(abs(ax), abs(ay))
        px, py = -ay // g, ax // g
        b2 = px * px + py * py
        i1 = _int_interval(b2, x1 * px + y1 * py, x1 * x1 + y1 * y1 - r2)
        if i1 is None:
            continue
        i2 = _int_interval(b2, lx * px + ly * py, lx * lx + ly * ly - r2)
        if i2 is None:
            continue
        lo, hi = max(i1[0], i2[0]), min(i1[1], i2[1])
        for j in range(lo, hi + 1):
            if j == 0:
                continue
            out.append(((x1, y1), (lx - j * px, ly - j * py), (x1 - j * px, y1 - j * py)))
    return out


def _pair_triples(lattice: ModeLattice, k: Mode) -> list[tuple[Mode, Mode, Mode]]:
    """Generic-dimension nontrivial triples: fix (l1, l3), solve l2 from momentum."""
    modes = lattice.modes
    n2 = lattice.norms_sq
    l = np.asarray(k, dtype=np.int64)
    nl = int(l @ l)
    out = []
    mode_list = lattice.mode_tuples()
    for i1, t1 in enumerate(mode_list):
        l1 = modes[i1]
        # l2 = l + l3 - l1 for all candidate l3, vectorized
        l2 = l[None, :] + modes - l1[None, :]
        n2_l2 = np.einsum("ij,ij->i", l2, l2)
        ok = (n2[i1] + n2_l2) == (nl + n2)
        ok &= n2_l2 <= lattice.radius_sq
        for i3 in np.nonzero(ok)[0]:
            t3 = mode_list[i3]
            t2 = tuple(int(c) for c in l2[i3])
            if t2 not in lattice:
                continue
            if not _is_trivial(t1, t2, k, t3):
                out.append((t1, t2, t3))
    return out


def enumerate_quadruplets(lattice: ModeLattice, k: Mode | Sequence[int],
                          include_trivial: bool = True) -> list[Quadruplet]:
    """All (k1, k2, k3) with l1+l2 = l+l3 and the energy delta, ordered.

    d=2 uses the rectangle fast path; other dimensions iterate (l1, l3)
    pairs.  Output is sorted on (k1, k2, k3), trivial entries flagged.
    """
    k = tuple(int(c) for c in k)
    if k not in lattice:
        raise KeyError(f"mode {k} not in lattice")
    triples = _rectangle_triples(lattice, k) if lattice.d == 2 else _pair_triples(lattice, k)
    quads = [Quadruplet(k1=t1, k2=t2, k3=t3, k=k, trivial=False)
             for (t1, t2, t3) in triples]
    if include_trivial:
        quads += [Quadruplet(k1=t1, k2=t2, k3=t3, k=k, trivial=True)
                  for (t1, t2, t3) in _trivial_triples(lattice, k)]
    quads.sort(key=lambda q: (q.k1, q.k2, q.k3))
    return quads


def brute_force_quadruplets(lattice: ModeLattice, k: Mode | Sequence[int],
                            include_trivial: bool = True) -> list[Quadruplet]:
    """Oracle enumerator: test both deltas over all (k1, k2) with a grid lookup.

    Uses no rectangle geometry; retained as the independent check for the
    structured path.
    """
    k = tuple(int(c) for c in k)
    if k not in lattice:
        raise KeyError(f"mode {k} not in lattice")
    modes = lattice.modes
    n2 = lattice.norms_sq
    l = np.asarray(k, dtype=np.int64)
    nl = int(l @ l)
    r = math.isqrt(lattice.radius_sq)
    # dense membership grid over the bounding box
    shape = (2 * r + 1,) * lattice.d
    member = np.zeros(shape, dtype=bool)
    member[tuple((modes + r).T)] = True
    mode_list = lattice.mode_tuples()
    out = []
    for i1, t1 in enumerate(mode_list):
        l3 = modes[i1][None, :] + modes - l[None, :]     # l3 = l1 + l2 - l
        inside = np.all(np.abs(l3) <= r, axis=1)
        n2_l3 = np.einsum("ij,ij->i", l3, l3)
        energy = (n2[i1] + n2) == (nl + n2_l3)
        hit = inside & energy
        idx = tuple((l3[hit] + r).T)
        hit_idx = np.nonzero(hit)[0][member[idx]] if hit.any() else []
        for i2 in hit_idx:
            t2 = mode_list[i2]
            t3 = tuple(int(c) for c in l3[i2])
            triv = _is_trivial(t1, t2, k, t3)
            if triv and not include_trivial:
                continue
            out.append(Quadruplet(k1=t1, k2=t2, k3=t3, k=k, trivial=triv))
    out.sort(key=lambda q: (q.k1, q.k2, q.k3))
    return out


@dataclass(frozen=True)
class QuadrupletTable:
    """Flat index arrays of all quadruplets of a lattice, for vectorized sums."""

    lattice: ModeLattice
    ik: np.ndarray
    i1: np.ndarray
    i2: np.ndarray
    i3: np.ndarray
    trivial: np.ndarray

    def __len__(self) -> int:
        return self.ik.shape[0]

    def rows_for(self, k: Mode) -> np.ndarray:
        return np.nonzero(self.ik == self.lattice.index(k))[0]

    @cached_property
    def scatter(self) -> np.ndarray | None:
        """One-hot (rows, modes) matrix so sums over rows become a matmul."""
        n = len(self.ik) * len(self.lattice)
        if n == 0 or n > _SCATTER_CAP:
            return None
        s = np.zeros((len(self.ik), len(self.lattice)))
        s[np.arange(len(self.ik)), self.ik] = 1.0
        return s


def quadruplet_table(lattice: ModeLattice) -> QuadrupletTable:
    ik, i1, i2, i3, triv = [], [], [], [], []
    for k in lattice.mode_tuples():
        kk = lattice.index(k)
        for q in enumerate_quadruplets(lattice, k):
            ik.append(kk)
            i1.append(lattice.index(q.k1))
            i2.append(lattice.index(q.k2))
            i3.append(lattice.index(q.k3))
            triv.append(q.trivial)
    return QuadrupletTable(lattice=lattice,
                           ik=np.array(ik, dtype=np.int64),
                           i1=np.array(i1, dtype=np.int64),
                           i2=np.array(i2, dtype=np.int64),
                           i3=np.array(i3, dtype=np.int64),
                           trivial=np.array(triv, dtype=bool))


@dataclass(frozen=True)
class MomentumTable:
    """Momentum-conserving triples (energy delta NOT imposed), for the full system.

    dlam_int holds the integer energy mismatch |l1|^2+|l2|^2-|l3|^2-|l|^2;
    physical mismatch is dlam_int / L^2.  Rows with dlam_int == 0 are exactly
    the resonant quadruplets.
    """

    lattice: ModeLattice
    ik: np.ndarray
    i1: np.ndarray
    i2: np.ndarray
    i3: np.ndarray
    dlam_int: np.ndarray

    @cached_property
    def scatter(self) -> np.ndarray | None:
        n = len(self.ik) * len(self.lattice)
        if n == 0 or n > _SCATTER_CAP:
            return None
        s = np.zeros((len(self.ik), len(self.lattice)))
        s[np.arange(len(self.ik)), self.ik] = 1.0
        return s


def momentum_table(lattice: ModeLattice) -> MomentumTable:
    modes = lattice.modes
    n2 = lattice.norms_sq
    r = math.isqrt(lattice.radius_sq)
    n = len(lattice)
    lookup = {tuple(int(c) for c in m): i for i, m in enumerate(modes)}
    ik, i1, i2, i3, dl = [], [], [], [], []
    for kk in range(n):
        l = modes[kk]
        for a in range(n):
            l3 = modes[a][None, :] + modes - l[None, :]
            inside = np.all(np.abs(l3) <= r, axis=1)
            for b in np.nonzero(inside)[0]:
                t3 = tuple(int(c) for c in l3[b])
                j3 = lookup.get(t3)
                if j3 is None:
                    continue
                ik.append(kk)
                i1.append(a)
                i2.append(b)
                i3.append(j3)
                dl.append(int(n2[a] + n2[b] - n2[j3] - n2[kk]))
    return MomentumTable(lattice=lattice,
                         ik=np.array(ik, dtype=np.int64),
                         i1=np.array(i1, dtype=np.int64),
                         i2=np.array(i2, dtype=np.int64),
                         i3=np.array(i3, dtype=np.int64),
                         dlam_int=np.array(dl, dtype=np.int64))


@dataclass(frozen=True)
class QuadrupletCounts:
    """Nontrivial quadruplet counts per mode plus the lattice total."""

    lattice: ModeLattice
    per_mode: np.ndarray
    total: int

    def at(self, k: Mode) -> int:
        return int(self.per_mode[self.lattice.index(k)])


def quadruplet_count(lattice: ModeLattice) -> QuadrupletCounts:
    counts = np.zeros(len(lattice), dtype=np.int64)
    for i, k in enumerate(lattice.mode_tuples()):
        if lattice.d == 2:
            counts[i] = len(_rectangle_triples(lattice, k))
        else:
            counts[i] = len(_pair_triples(lattice, k))
    return QuadrupletCounts(lattice=lattice, per_mode=counts, total=int(counts.sum()))


def count_scaling_slope(d: int, K: float, Ls: Sequence[float], k_phys: Mode | None = None):
    """Least-squares log-log slope of nontrivial counts at fixed physical k vs L.

    The heuristic sum-to-integral passage predicts L^(2d-1) growth of the
    per-mode count S_k; k_phys must scale to a lattice point for every L
    (default: the unit vector e1, so l = L*e1 with integer L).
    """
    if k_phys is None:
        k_phys = (1,) + (0,) * (d - 1)
    Ls = list(Ls)
    counts = []
    for L in Ls:
        lat = build_lattice(d, L, K)
        l = tuple(int(round(c * L)) for c in k_phys)
        if lat.d == 2:
            counts.append(len(_rectangle_triples(lat, l)))
        else:
            counts.append(len(_pair_triples(lat, l)))
    counts = np.array(counts, dtype=float)
    if np.any(counts <= 0):
        raise ValueError(f"zero nontrivial count in scaling family: {counts}")
    slope = float(np.polyfit(np.log(Ls), np.log(counts), 1)[0])
    return slope, counts


@dataclass(frozen=True)
class ShellProfile:
    """Radial shell means; empty shells are absent rather than zero."""

    lo: np.ndarray
    hi: np.ndarray
    count: np.ndarray
    mean: np.ndarray


def shell_average(values: np.ndarray, lattice: ModeLattice) -> ShellProfile:
    """Mean of one value per mode over the lattice's radial shells.

    Shell 0 is the zero mode alone; shell j >= 1 collects
    edges[j-1] < |k| <= edges[j], decided on integer |l|^2.
    """
    values = np.asarray(values)
    if values.shape[0] != len(lattice):
        raise ValueError(f"need one value per mode: {values.shape[0]} != {len(lattice)}")
    n2 = lattice.norms_sq
    edges = lattice.shell_edges
    # integer-exact shell assignment: |l|^2 <= (edge*L)^2
    edge_sq = np.floor((edges * lattice.L) ** 2 + 1e-9).astype(np.int64)
    bins = np.searchsorted(edge_sq, n2, side="left")  # 0 for the zero mode
    lo, hi, count, mean = [], [], [], []
    for j in range(len(edges)):
        sel = bins == j
        if not sel.any():
            continue
        lo.append(0.0 if j == 0 else edges[j - 1])
        hi.append(edges[j])
        count.append(int(sel.sum()))
        mean.append(float(np.mean(values[sel])))
    return ShellProfile(lo=np.array(lo), hi=np.array(hi),
                        count=np.array(count, dtype=np.int64), mean=np.array(mean))


def quadruplets_to_rows(quads: Iterable[Quadruplet]) -> list[tuple[str, str, str, str, int]]:
    """CSV rows (k1, k2, k3, k, trivial_flag), vector components ';'-joined."""
    def fmt(mode: Mode) -> str:
        return ";".join(str(c) for c in mode)

    return [(fmt(q.k1), fmt(q.k2), fmt(q.k3), fmt(q.k), int(q.trivial)) for q in quads]
