"""Dynamic truncated Hilbert-space state over a changing set of atoms.

The conditional state is expanded in sectors graded by total excitation
number.  For N atoms and a two-quanta truncation the amplitudes are

    g0 |00>,  alpha |10>,  beta_j |0j>,  eta |20>,  zeta_j |1j>,
    theta_{jk} |0jk>  (j < k)

and a three-quanta truncation adds

    eta3 |30>,  zeta2_j |2j>,  theta1_{jk} |1jk>,  iota_{jkl} |0jkl>.

Everything is stored in one flat complex vector; per-sector views are
exposed as numpy slices.  Pair/triple sectors use canonical row-major
(j<k<l) ordering.  Atom slots are compacted on removal (stable order,
slots above the removed one shift down by one).
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

TRUNCATION_LEVELS = {"one-quantum": 1, "two-quanta": 2, "three-quanta": 3}

SQ2 = np.sqrt(2.0)
SQ3 = np.sqrt(3.0)


class StateError(RuntimeError):
    pass


def pair_count(n: int) -> int:
    return n * (n - 1) // 2


def triple_count(n: int) -> int:
    return n * (n - 1) * (n - 2) // 6


@lru_cache(maxsize=64)
def pair_slots(n: int):
    """Canonical (j, k), j<k, row-major; inverse of pair_index."""
    return np.triu_indices(n, 1)


def pair_index(i, j, n: int):
    """Flat canonical index of pair (i, j) with i < j."""
    i = np.asarray(i, dtype=np.int64)
    j = np.asarray(j, dtype=np.int64)
    return i * n - i * (i + 1) // 2 + (j - i - 1)


@lru_cache(maxsize=32)
def triple_slots(n: int):
    """Canonical (i, j, k), i<j<k, row-major."""
    idx = np.array(np.meshgrid(np.arange(n), np.arange(n), np.arange(n),
                               indexing="ij")).reshape(3, -1)
    sel = (idx[0] < idx[1]) & (idx[1] < idx[2])
    i, j, k = idx[0][sel], idx[1][sel], idx[2][sel]
    order = np.lexsort((k, j, i))
    return i[order], j[order], k[order]


def triple_index(i, j, k, n: int):
    """Flat canonical index of triple (i, j, k) with i < j < k."""
    i = np.asarray(i, dtype=np.int64)
    j = np.asarray(j, dtype=np.int64)
    k = np.asarray(k, dtype=np.int64)
    def c3(m):
        return m * (m - 1) * (m - 2) // 6
    head = c3(n) - c3(n - i)          # triples with smallest element < i
    m = n - i - 1                     # remaining slots after i
    jj, kk = j - i - 1, k - i - 1
    return head + jj * m - jj * (jj + 1) // 2 + (kk - jj - 1)


class Layout:
    """Offsets of the sector blocks inside the flat vector."""

    def __init__(self, n: int, level: int):
        self.n = n
        self.level = level
        self.n_pairs = pair_count(n) if level >= 2 else 0
        self.n_triples = triple_count(n) if level >= 3 else 0
        n_scalars = {1: 2, 2: 3, 3: 4}[level]
        n_per_atom = {1: 1, 2: 2, 3: 3}[level]
        ofs = n_scalars
        self.beta = slice(ofs, ofs + n); ofs += n
        if level >= 2:
            self.zeta = slice(ofs, ofs + n); ofs += n
        if level >= 3:
            self.zeta2 = slice(ofs, ofs + n); ofs += n
        if level >= 2:
            self.theta = slice(ofs, ofs + self.n_pairs); ofs += self.n_pairs
        if level >= 3:
            self.theta1 = slice(ofs, ofs + self.n_pairs); ofs += self.n_pairs
            self.iota = slice(ofs, ofs + self.n_triples); ofs += self.n_triples
        self.size = ofs
        assert n_per_atom is not None


class TruncatedState:
    """Conditional state with amplitude bookkeeping for a dynamic atom set."""

    def __init__(self, truncation: str = "two-quanta", max_atoms: int | None = None):
        if truncation not in TRUNCATION_LEVELS:
            raise ValueError(f"unknown truncation {truncation!r}")
        self.level = TRUNCATION_LEVELS[truncation]
        self.truncation = truncation
        self.max_atoms = max_atoms
        self.ids: list[int] = []
        self.id2slot: dict[int, int] = {}
        self.layout = Layout(0, self.level)
        self.vec = np.zeros(self.layout.size, dtype=np.complex128)
        self.vec[0] = 1.0  # vacuum

    # -- views ------------------------------------------------------------
    @property
    def n_atoms(self) -> int:
        return len(self.ids)

    @property
    def g0(self): return self.vec[0]

    @property
    def alpha(self): return self.vec[1]

    @property
    def eta(self): return self.vec[2] if self.level >= 2 else 0.0 + 0.0j

    @property
    def eta3(self): return self.vec[3] if self.level >= 3 else 0.0 + 0.0j

    @property
    def beta(self): return self.vec[self.layout.beta]

    @property
    def zeta(self): return self.vec[self.layout.zeta]

    @property
    def zeta2(self): return self.vec[self.layout.zeta2]

    @property
    def theta(self): return self.vec[self.layout.theta]

    @property
    def theta1(self): return self.vec[self.layout.theta1]

    @property
    def iota(self): return self.vec[self.layout.iota]

    # -- norms and expectations -------------------------------------------
    def norm2(self) -> float:
        return float(np.vdot(self.vec, self.vec).real)

    def renormalize(self) -> None:
        n2 = self.norm2()
        if n2 <= 0.0:
            raise StateError("cannot renormalize a zero-norm state")
        self.vec /= np.sqrt(n2)

    def photon_number(self) -> float:
        n2 = self.norm2()
        if n2 <= 0.0:
            raise StateError("zero-norm state")
        lay = self.layout
        acc = abs(self.vec[1]) ** 2
        if self.level >= 2:
            acc += 2.0 * abs(self.vec[2]) ** 2
            acc += float(np.sum(np.abs(self.vec[lay.zeta]) ** 2))
        if self.level >= 3:
            acc += 3.0 * abs(self.vec[3]) ** 2
            acc += 2.0 * float(np.sum(np.abs(self.vec[lay.zeta2]) ** 2))
            acc += float(np.sum(np.abs(self.vec[lay.theta1]) ** 2))
        return acc / n2

    def atom_excitations(self) -> np.ndarray:
        """<sigma_+ sigma_->_j per atom slot, normalized."""
        n2 = self.norm2()
        if n2 <= 0.0:
            raise StateError("zero-norm state")
        n, lay = self.n_atoms, self.layout
        acc = np.abs(self.beta) ** 2
        if self.level >= 2:
            acc += np.abs(self.zeta) ** 2
            if n >= 2:
                pi, pj = pair_slots(n)
                w = np.abs(self.theta) ** 2
                acc += (np.bincount(pi, weights=w, minlength=n)
                        + np.bincount(pj, weights=w, minlength=n))
        if self.level >= 3:
            acc += np.abs(self.zeta2) ** 2
            if n >= 2:
                pi, pj = pair_slots(n)
                w1 = np.abs(self.theta1) ** 2
                acc += (np.bincount(pi, weights=w1, minlength=n)
                        + np.bincount(pj, weights=w1, minlength=n))
            if n >= 3:
                ti, tj, tk = triple_slots(n)
                wt = np.abs(self.iota) ** 2
                acc += (np.bincount(ti, weights=wt, minlength=n)
                        + np.bincount(tj, weights=wt, minlength=n)
                        + np.bincount(tk, weights=wt, minlength=n))
        return acc / n2

    def expectations(self):
        return self.photon_number(), self.atom_excitations()

    # -- atom add / remove -------------------------------------------------
    def add_atom(self, atom_id: int) -> None:
        """Grow the basis by one ground-state atom; existing amplitudes unchanged."""
        if atom_id in self.id2slot:
            raise StateError(f"duplicate atom id {atom_id}")
        n = self.n_atoms
        if self.max_atoms is not None and n + 1 > self.max_atoms:
            raise StateError(
                f"atom cap exceeded: {n + 1} > max_atoms={self.max_atoms}")
        new_lay = Layout(n + 1, self.level)
        new = np.zeros(new_lay.size, dtype=np.complex128)
        old, lay = self.vec, self.layout
        new[: lay.beta.start] = old[: lay.beta.start]
        new[new_lay.beta][:n] = old[lay.beta]
        if self.level >= 2:
            new[new_lay.zeta][:n] = old[lay.zeta]
            if n >= 1:
                pi, pj = pair_slots(n + 1)
                keep = pj < n           # pairs not involving the new slot
                new[new_lay.theta][keep] = old[lay.theta]
        if self.level >= 3:
            new[new_lay.zeta2][:n] = old[lay.zeta2]
            if n >= 1:
                new[new_lay.theta1][keep] = old[lay.theta1]
            if n >= 2:
                ti, tj, tk = triple_slots(n + 1)
                keep3 = tk < n
                new[new_lay.iota][keep3] = old[lay.iota]
        self.vec, self.layout = new, new_lay
        self.ids.append(atom_id)
        self.id2slot[atom_id] = n

    def excitation_probability(self, atom_id: int) -> float:
        """Probability that the given atom is excited."""
        slot = self._slot(atom_id)
        p = float(self.atom_excitations()[slot])
        if p > 1.0 + 1e-9:
            raise StateError(f"excitation probability {p} > 1: corrupted state")
        return min(p, 1.0)

    def remove_atom(self, atom_id: int, rng_or_u) -> bool:
        """Disentangle and drop an atom that leaves the interaction volume.

        Its excitation probability is compared with a uniform random number;
        the state is projected onto the excited or ground branch of that atom,
        renormalized, and the slot dropped.  Returns True for the excited
        branch (the atom will emit after leaving).
        """
        j = self._slot(atom_id)
        p_exc = self.excitation_probability(atom_id)
        u = rng_or_u.random() if hasattr(rng_or_u, "random") else float(rng_or_u)
        excited = u < p_exc
        n, lay, old = self.n_atoms, self.layout, self.vec
        new_lay = Layout(n - 1, self.level)
        new = np.zeros(new_lay.size, dtype=np.complex128)
        others = np.array([s for s in range(n) if s != j], dtype=np.int64)
        if excited:
            # surviving amplitudes are those with atom j excited, j removed
            new[0] = old[lay.beta][j]
            if self.level >= 2:
                new[1] = old[lay.zeta][j]
                if n >= 2:
                    lo = np.minimum(others, j)
                    hi = np.maximum(others, j)
                    pj = pair_index(lo, hi, n)
                    new[new_lay.beta] = old[lay.theta][pj]
            if self.level >= 3:
                new[2] = old[lay.zeta2][j]
                if n >= 2:
                    new[new_lay.zeta] = old[lay.theta1][pj]
                if n >= 3:
                    qi, qj = pair_slots(n - 1)
                    a, b = others[qi], others[qj]
                    t = np.sort(np.stack([np.full_like(a, j), a, b]), axis=0)
                    new[new_lay.theta] = old[lay.iota][
                        triple_index(t[0], t[1], t[2], n)]
        else:
            # drop every amplitude with atom j excited
            new[: lay.beta.start] = old[: lay.beta.start]
            new[new_lay.beta] = old[lay.beta][others]
            if self.level >= 2:
                new[new_lay.zeta] = old[lay.zeta][others]
                if n >= 2:
                    pi, pj = pair_slots(n)
                    keep = (pi != j) & (pj != j)
                    new[new_lay.theta] = old[lay.theta][keep]
            if self.level >= 3:
                new[new_lay.zeta2] = old[lay.zeta2][others]
                if n >= 2:
                    new[new_lay.theta1] = old[lay.theta1][keep]
                if n >= 3:
                    ti, tj, tk = triple_slots(n)
                    keep3 = (ti != j) & (tj != j) & (tk != j)
                    new[new_lay.iota] = old[lay.iota][keep3]
        self.vec, self.layout = new, new_lay
        self.ids.pop(j)
        self.id2slot = {aid: s for s, aid in enumerate(self.ids)}
        self.renormalize()
        return excited

    # -- quantum jumps -----------------------------------------------------
    def apply_cavity_jump(self) -> None:
        """Photon detection: annihilation operator, then renormalization."""
        if self.photon_number() <= 0.0:
            raise StateError("cavity jump on a state with no photons")
        n, lay, old = self.n_atoms, self.layout, self.vec
        new = np.zeros_like(old)
        new[0] = old[1]
        if self.level >= 2:
            new[1] = SQ2 * old[2]
            new[lay.beta] = old[lay.zeta]
        if self.level >= 3:
            new[2] = SQ3 * old[3]
            new[lay.zeta] = SQ2 * old[lay.zeta2]
            new[lay.theta] = old[lay.theta1]
        self.vec = new
        self.renormalize()

    def apply_atom_jump(self, atom_id: int) -> None:
        """Spontaneous emission of one atom: sigma_- then renormalization."""
        j = self._slot(atom_id)
        if self.atom_excitations()[j] <= 0.0:
            raise StateError(f"atom jump on unexcited atom {atom_id}")
        n, lay, old = self.n_atoms, self.layout, self.vec
        new = np.zeros_like(old)
        new[0] = old[lay.beta][j]
        others = np.array([s for s in range(n) if s != j], dtype=np.int64)
        if self.level >= 2:
            new[1] = old[lay.zeta][j]
            if n >= 2:
                lo, hi = np.minimum(others, j), np.maximum(others, j)
                pj = pair_index(lo, hi, n)
                new[lay.beta][others] = old[lay.theta][pj]
        if self.level >= 3:
            new[2] = old[lay.zeta2][j]
            if n >= 2:
                new[lay.zeta][others] = old[lay.theta1][pj]
            if n >= 3:
                qi, qj = pair_slots(n - 1)
                a, b = others[qi], others[qj]
                t = np.sort(np.stack([np.full_like(a, j), a, b]), axis=0)
                new[lay.theta][pair_index(np.minimum(a, b), np.maximum(a, b), n)] = \
                    old[lay.iota][triple_index(t[0], t[1], t[2], n)]
        self.vec = new
        self.renormalize()

    # -- misc ---------------------------------------------------------------
    def _slot(self, atom_id: int) -> int:
        try:
            return self.id2slot[atom_id]
        except KeyError:
            raise StateError(f"unknown atom id {atom_id}") from None

    def copy(self) -> "TruncatedState":
        out = TruncatedState(self.truncation, self.max_atoms)
        out.ids = list(self.ids)
        out.id2slot = dict(self.id2slot)
        out.layout = Layout(self.n_atoms, self.level)
        out.vec = self.vec.copy()
        return out

    def dump_rows(self):
        """(sector, i, j, k, re, im) rows for the debug state dump."""
        rows = [("g0", -1, -1, -1, self.vec[0].real, self.vec[0].imag),
                ("alpha", -1, -1, -1, self.vec[1].real, self.vec[1].imag)]
        if self.level >= 2:
            rows.append(("eta", -1, -1, -1, self.vec[2].real, self.vec[2].imag))
        if self.level >= 3:
            rows.append(("eta3", -1, -1, -1, self.vec[3].real, self.vec[3].imag))
        n = self.n_atoms
        for name in ("beta", "zeta", "zeta2"):
            if name == "zeta" and self.level < 2 or name == "zeta2" and self.level < 3:
                continue
            arr = getattr(self, name)
            rows += [(name, self.ids[s], -1, -1, arr[s].real, arr[s].imag)
                     for s in range(n)]
        if self.level >= 2 and n >= 2:
            pi, pj = pair_slots(n)
            names = ("theta",) if self.level == 2 else ("theta", "theta1")
            for name in names:
                arr = getattr(self, name)
                rows += [(name, self.ids[pi[p]], self.ids[pj[p]], -1,
                          arr[p].real, arr[p].imag) for p in range(len(arr))]
        if self.level >= 3 and n >= 3:
            ti, tj, tk = triple_slots(n)
            arr = self.iota
            rows += [("iota", self.ids[ti[t]], self.ids[tj[t]], self.ids[tk[t]],
                      arr[t].real, arr[t].imag) for t in range(len(arr))]
        return rows
