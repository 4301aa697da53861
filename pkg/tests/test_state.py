import numpy as np
import pytest

from beamqed.state import StateError, TruncatedState, pair_index, pair_slots, \
    triple_index, triple_slots

from dense_ref import DenseRef, drop_atom, embed, extract, random_truncated


def dense_add(psi, n, nf):
    out = np.zeros(nf * 2 ** (n + 1), dtype=complex)
    for f in range(nf):
        out[f * 2 ** (n + 1): f * 2 ** (n + 1) + 2**n] = \
            psi[f * 2**n: (f + 1) * 2**n]
    return out


def test_canonical_index_round_trip():
    for n in (2, 3, 5, 8):
        pi, pj = pair_slots(n)
        assert np.array_equal(pair_index(pi, pj, n), np.arange(len(pi)))
        if n >= 3:
            ti, tj, tk = triple_slots(n)
            assert np.array_equal(triple_index(ti, tj, tk, n),
                                  np.arange(len(ti)))


def test_vacuum_and_add():
    st = TruncatedState("two-quanta")
    assert st.photon_number() == 0.0
    st.add_atom(42)
    st.add_atom(7)
    assert st.n_atoms == 2
    assert st.norm2() == pytest.approx(1.0)
    with pytest.raises(StateError):
        st.add_atom(42)


def test_atom_cap():
    st = TruncatedState("three-quanta", max_atoms=2)
    st.add_atom(0)
    st.add_atom(1)
    with pytest.raises(StateError):
        st.add_atom(2)


def test_cavity_jump_on_single_photon_gives_vacuum():
    st = TruncatedState("two-quanta")
    st.vec[1] = 1.0
    st.vec[0] = 0.0
    st.apply_cavity_jump()
    assert st.vec[0] == pytest.approx(1.0)
    assert abs(st.vec[1]) < 1e-15


def test_double_cavity_jump_from_two_photons():
    st = TruncatedState("two-quanta")
    st.vec[:] = 0.0
    st.vec[2] = 1.0  # |20>
    st.apply_cavity_jump()
    assert abs(st.vec[1]) == pytest.approx(1.0)
    st.apply_cavity_jump()
    assert abs(st.vec[0]) == pytest.approx(1.0)


def test_cavity_jump_preserves_factorized_coherent_state():
    # eta = alpha^2/sqrt(2), zeta_j = alpha*beta_j: photon detection leaves
    # the one-quanta content unchanged (coherent state is an eigenstate of a)
    st = TruncatedState("two-quanta")
    st.add_atom(0)
    st.add_atom(1)
    a = 0.3 + 0.1j
    b = np.array([0.05 - 0.02j, 0.01 + 0.04j])
    st.vec[0] = 1.0
    st.vec[1] = a
    st.vec[2] = a**2 / np.sqrt(2)
    st.vec[st.layout.beta] = b
    st.vec[st.layout.zeta] = a * b
    st.vec[st.layout.theta] = 0.0
    before = st.vec.copy()
    st.apply_cavity_jump()
    ratio = st.vec[0] / before[0]
    np.testing.assert_allclose(st.vec[1] / ratio, before[1], atol=1e-12)
    np.testing.assert_allclose(st.beta / ratio,
                               before[st.layout.beta], atol=1e-12)


def test_jump_errors():
    st = TruncatedState("two-quanta")
    st.add_atom(0)
    with pytest.raises(StateError):
        st.apply_cavity_jump()
    with pytest.raises(StateError):
        st.apply_atom_jump(0)
    with pytest.raises(StateError):
        st.apply_atom_jump(99)


@pytest.mark.parametrize("truncation,level",
                         [("one-quantum", 1), ("two-quanta", 2),
                          ("three-quanta", 3)])
def test_operation_sequences_match_dense_reference(truncation, level):
    """Random add/remove/jump/expectation sequences vs the dense mirror."""
    rng = np.random.default_rng(100 + level)
    nf = level + 1
    for trial in range(8):
        st = TruncatedState(truncation, max_atoms=4)
        n = 0
        psi = embed(st.vec, level, n, nf)
        ids = []
        next_id = 0
        for stepno in range(30):
            if n > 0 and rng.random() < 0.6:
                st.vec = random_truncated(rng, level, n)
                psi = embed(st.vec, level, n, nf)
            ops = ["add"] if n < 4 else []
            if n > 0:
                ops += ["remove", "side"]
            if st.photon_number() > 1e-6:
                ops += ["cavity"]
            op = ops[rng.integers(len(ops))]
            if op == "add":
                st.add_atom(next_id)
                psi = dense_add(psi, n, nf)
                ids.append(next_id)
                next_id += 1
                n += 1
            elif op == "remove":
                j = int(rng.integers(n))
                u = rng.random()
                d = DenseRef(nf, n)
                p_up = np.linalg.norm(d.sm[j].conj().T @ d.sm[j] @ psi) ** 2 \
                    / np.linalg.norm(psi) ** 2
                excited = u < p_up
                got = st.remove_atom(ids[j], u)
                assert got == excited
                psi = drop_atom(psi, j, excited, n, nf)
                psi /= np.linalg.norm(psi)
                ids.pop(j)
                n -= 1
            elif op == "cavity":
                st.apply_cavity_jump()
                psi = DenseRef(nf, n).a @ psi
                psi /= np.linalg.norm(psi)
            else:  # side jump
                j = int(rng.integers(n))
                d = DenseRef(nf, n)
                out = d.sm[j] @ psi
                nr = np.linalg.norm(out)
                if nr < 1e-8:
                    continue
                st.apply_atom_jump(ids[j])
                psi = out / nr
            np.testing.assert_allclose(st.vec, extract(psi, level, n, nf),
                                       atol=1e-10)
            # expectations agree with dense operators
            d = DenseRef(nf, n)
            nrm = np.linalg.norm(psi) ** 2
            nph = np.vdot(psi, d.a.conj().T @ d.a @ psi).real / nrm
            assert st.photon_number() == pytest.approx(nph, abs=1e-10)
            exc = st.atom_excitations()
            for j in range(n):
                sj = np.vdot(psi, d.sm[j].conj().T @ d.sm[j] @ psi).real / nrm
                assert exc[j] == pytest.approx(sj, abs=1e-10)


def test_remove_is_stable_renumbering():
    st = TruncatedState("two-quanta")
    for i in range(4):
        st.add_atom(10 * i)
    st.vec = random_truncated(np.random.default_rng(0), 2, 4)
    st.remove_atom(10, 0.999)  # ground branch almost surely
    assert st.ids == [0, 20, 30]
    assert st.id2slot == {0: 0, 20: 1, 30: 2}


def test_dump_rows_cover_all_amplitudes():
    st = TruncatedState("three-quanta")
    for i in range(3):
        st.add_atom(i)
    st.vec = random_truncated(np.random.default_rng(2), 3, 3)
    rows = st.dump_rows()
    assert len(rows) == st.layout.size
    total = sum(r[4] ** 2 + r[5] ** 2 for r in rows)
    assert total == pytest.approx(st.norm2())
