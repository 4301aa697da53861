"""Brute-force master-equation oracle for a few fixed atoms.

Deliberately naive dense-matrix integration, kept independent of the
trajectory kernels so the two can validate each other: full Fock x qubit^N
density matrix, RK4 in time, no superoperator tricks.  Hard dimension cap.
"""

from __future__ import annotations

import numpy as np

from .params import PhysicalParameters, coupling

MAX_DIM = 64


class OracleError(RuntimeError):
    pass


def _fock_annihilation(nf):
    a = np.zeros((nf, nf), dtype=complex)
    for m in range(1, nf):
        a[m - 1, m] = np.sqrt(m)
    return a


class DenseModel:
    """Operators and Lindblad generator in kappa units for fixed atoms."""

    def __init__(self, positions, fock_cutoff: int, params: PhysicalParameters):
        positions = np.asarray(positions, dtype=float).reshape(-1, 3)
        n = len(positions)
        nf = fock_cutoff + 1
        self.dim = nf * 2**n
        if self.dim > MAX_DIM:
            raise OracleError(f"dense dimension {self.dim} exceeds {MAX_DIM}")
        self.gamma_k = params.gamma / params.kappa
        g = np.atleast_1d(coupling(positions, params.geometry(), params.g_max)
                          ) / params.kappa if n else np.empty(0, dtype=complex)
        e = params.drive / params.kappa
        ck = 1.0 + 1j * params.delta_c / params.kappa
        ca = self.gamma_k / 2 + 1j * params.delta_a / params.kappa
        ia = np.eye(2**n, dtype=complex)
        self.a = np.kron(_fock_annihilation(nf), ia)
        sm1 = np.array([[0, 1], [0, 0]], dtype=complex)
        self.sm = []
        for j in range(n):
            op = np.eye(1, dtype=complex)
            for b in range(n - 1, -1, -1):
                op = np.kron(op, sm1 if b == j else np.eye(2, dtype=complex))
            self.sm.append(np.kron(np.eye(nf, dtype=complex), op))
        ad = self.a.conj().T
        G = e * (ad - self.a) - ck * (ad @ self.a)
        for j in range(n):
            sp = self.sm[j].conj().T
            G += g[j] * (ad @ self.sm[j]) - np.conj(g[j]) * (self.a @ sp)
            G -= ca * (sp @ self.sm[j])
        self.G = G
        self.n_op = ad @ self.a

    def lindblad(self, rho):
        out = self.G @ rho + rho @ self.G.conj().T
        out += 2.0 * (self.a @ rho @ self.a.conj().T)
        for s in self.sm:
            out += self.gamma_k * (s @ rho @ s.conj().T)
        return out

    def rk4(self, rho, dt):
        k1 = self.lindblad(rho)
        k2 = self.lindblad(rho + 0.5 * dt * k1)
        k3 = self.lindblad(rho + 0.5 * dt * k2)
        k4 = self.lindblad(rho + dt * k3)
        return rho + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def dense_steady_state(positions, fock_cutoff: int,
                       params: PhysicalParameters, dt: float = 0.01,
                       tol: float = 1e-12, max_steps: int = 2 * 10**6):
    """Long-time integration to the stationary density matrix."""
    model = DenseModel(positions, fock_cutoff, params)
    rho = np.zeros((model.dim, model.dim), dtype=complex)
    rho[0, 0] = 1.0
    for chunk in range(max_steps // 200):
        for _ in range(200):
            rho = model.rk4(rho, dt)
        if np.linalg.norm(model.lindblad(rho)) < tol:
            break
    else:
        raise OracleError("steady state not converged within step budget")
    rho = 0.5 * (rho + rho.conj().T)
    rho /= np.trace(rho).real
    w = np.linalg.eigvalsh(rho)
    if w.min() < -1e-10:
        raise OracleError(f"steady state not positive: min eigenvalue {w.min()}")
    return model, rho


def photon_expectation(model: DenseModel, rho) -> float:
    return float(np.trace(model.n_op @ rho).real)


def dense_g2(positions, fock_cutoff: int, params: PhysicalParameters,
             tau_k, dt: float = 0.005):
    """g2(tau) from two-time conditioning on the steady state.

    The unnormalized post-detection matrix a rho_ss a^dag is propagated and
    Tr[a^dag a . ] recorded on the requested lag grid, normalized by the
    squared stationary photon number.
    """
    model, rho_ss = dense_steady_state(positions, fock_cutoff, params, dt=dt)
    n_ss = photon_expectation(model, rho_ss)
    if n_ss <= 0:
        raise OracleError("steady state has no photons; is the drive on?")
    tau_k = np.asarray(tau_k, dtype=float)
    steps = np.rint(tau_k / dt).astype(int)
    cond = model.a @ rho_ss @ model.a.conj().T
    out = np.empty(len(tau_k))
    done = 0
    for i, s in enumerate(steps):
        while done < s:
            cond = model.rk4(cond, dt)
            done += 1
        out[i] = np.trace(model.n_op @ cond).real
    return steps * dt, out / n_ss**2
