"""Dense tensor-product reference for the truncated state and its flow.

Test-only mirror implementation: the full Fock(nf) x qubit^N space with
operators built by np.kron, plus embed/extract maps between the package's
flat truncated vector and the dense vector.  Deliberately naive and slow.
"""

import numpy as np

from beamqed.state import Layout, pair_slots, triple_slots


def fock_annihilation(nf):
    a = np.zeros((nf, nf), dtype=complex)
    for m in range(1, nf):
        a[m - 1, m] = np.sqrt(m)
    return a


class DenseRef:
    """Operators on Fock(nf) x 2^n with atom slot j mapped to bit j."""

    def __init__(self, nf, n):
        self.nf = nf
        self.n = n
        self.dim = nf * 2**n
        ia = np.eye(2**n, dtype=complex)
        self.a = np.kron(fock_annihilation(nf), ia)
        sm = np.array([[0, 1], [0, 0]], dtype=complex)  # lowers bit j
        self.sm = []
        for j in range(n):
            op = np.eye(1, dtype=complex)
            for b in range(n - 1, -1, -1):
                op = np.kron(op, sm if b == j else np.eye(2, dtype=complex))
            self.sm.append(np.kron(np.eye(nf, dtype=complex), op))

    def idx(self, fock, bits):
        return fock * 2**self.n + bits

    def keep_mask(self, level):
        """Dense basis states inside the truncation: fock + #excited <= level."""
        mask = np.zeros(self.dim, dtype=bool)
        for f in range(self.nf):
            for bits in range(2**self.n):
                if f + bin(bits).count("1") <= level:
                    mask[self.idx(f, bits)] = True
        return mask

    def flow_matrix(self, g, e, ck, ca, level=None):
        """Non-Hermitian generator G; optionally projected onto the truncation."""
        ad = self.a.conj().T
        G = e * (ad - self.a) - ck * (ad @ self.a)
        for j in range(self.n):
            sp = self.sm[j].conj().T
            G += g[j] * (ad @ self.sm[j]) - np.conj(g[j]) * (self.a @ sp)
            G -= ca * (sp @ self.sm[j])
        if level is not None:
            keep = self.keep_mask(level)
            G = G * np.outer(keep, keep)
        return G


def embed(vec, level, n, nf=None):
    """Flat truncated vector -> dense vector."""
    if nf is None:
        nf = level + 1
    d = DenseRef(nf, n)
    lay = Layout(n, level)
    psi = np.zeros(d.dim, dtype=complex)
    psi[d.idx(0, 0)] = vec[0]
    psi[d.idx(1, 0)] = vec[1]
    if level >= 2:
        psi[d.idx(2, 0)] = vec[2]
    if level >= 3:
        psi[d.idx(3, 0)] = vec[3]
    for j in range(n):
        psi[d.idx(0, 1 << j)] = vec[lay.beta][j]
        if level >= 2:
            psi[d.idx(1, 1 << j)] = vec[lay.zeta][j]
        if level >= 3:
            psi[d.idx(2, 1 << j)] = vec[lay.zeta2][j]
    if level >= 2 and n >= 2:
        pi, pj = pair_slots(n)
        for p in range(len(pi)):
            bits = (1 << pi[p]) | (1 << pj[p])
            psi[d.idx(0, bits)] = vec[lay.theta][p]
            if level >= 3:
                psi[d.idx(1, bits)] = vec[lay.theta1][p]
    if level >= 3 and n >= 3:
        ti, tj, tk = triple_slots(n)
        for t in range(len(ti)):
            bits = (1 << ti[t]) | (1 << tj[t]) | (1 << tk[t])
            psi[d.idx(0, bits)] = vec[lay.iota][t]
    return psi


def extract(psi, level, n, nf=None):
    """Dense vector -> flat truncated vector (components outside dropped)."""
    if nf is None:
        nf = level + 1
    d = DenseRef(nf, n)
    lay = Layout(n, level)
    vec = np.zeros(lay.size, dtype=complex)
    vec[0] = psi[d.idx(0, 0)]
    vec[1] = psi[d.idx(1, 0)]
    if level >= 2:
        vec[2] = psi[d.idx(2, 0)]
    if level >= 3:
        vec[3] = psi[d.idx(3, 0)]
    for j in range(n):
        vec[lay.beta.start + j] = psi[d.idx(0, 1 << j)]
        if level >= 2:
            vec[lay.zeta.start + j] = psi[d.idx(1, 1 << j)]
        if level >= 3:
            vec[lay.zeta2.start + j] = psi[d.idx(2, 1 << j)]
    if level >= 2 and n >= 2:
        pi, pj = pair_slots(n)
        for p in range(len(pi)):
            bits = (1 << pi[p]) | (1 << pj[p])
            vec[lay.theta.start + p] = psi[d.idx(0, bits)]
            if level >= 3:
                vec[lay.theta1.start + p] = psi[d.idx(1, bits)]
    if level >= 3 and n >= 3:
        ti, tj, tk = triple_slots(n)
        for t in range(len(ti)):
            bits = (1 << ti[t]) | (1 << tj[t]) | (1 << tk[t])
            vec[lay.iota.start + t] = psi[d.idx(0, bits)]
    return vec


def drop_atom(psi, j, excited, n, nf):
    """Project atom j onto excited/ground and remove it from the tensor."""
    d_old = DenseRef(nf, n)
    out = np.zeros(nf * 2 ** (n - 1), dtype=complex)
    for f in range(nf):
        for bits in range(2**n):
            if bool(bits & (1 << j)) != excited:
                continue
            low = bits & ((1 << j) - 1)
            high = (bits >> (j + 1)) << j
            out[f * 2 ** (n - 1) + (low | high)] = psi[d_old.idx(f, bits)]
    return out


def random_truncated(rng, level, n):
    lay = Layout(n, level)
    v = rng.normal(size=lay.size) + 1j * rng.normal(size=lay.size)
    return v / np.linalg.norm(v)
