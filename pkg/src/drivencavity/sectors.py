"""Singlet/triplet decomposition for two-atom steady states.

For N = 2 the generators built here contain the atoms only through the
collective operators S_+/-, which annihilate the singlet (|eg> - |ge>)/sqrt(2).
The singlet weight of the atomic state is therefore conserved, the full
fixed-point manifold is degenerate, and the steady state reached from a given
initial state decomposes as

    rho_ss = w_S |S><S| (x) rho_field^(S)  +  (1 - w_S) rho_triplet_ss

with vanishing singlet-triplet coherences.  Each sector has a unique fixed
point that a plain null-space solve finds in seconds, where brute-force
integration of the full model would take minutes to hours (the relaxation
rate is g^2 N / kappa).  The decay of the coherence block is not assumed
blindly: its spectrum is checked for zero modes whenever that is affordable.
"""

from __future__ import annotations

import numpy as np

from .hilbert import DensityMatrix
from .model import Generator, SystemConfig, atomic_vector, build_generator
from .dynamics import liouvillian_matrix_raw, steady_state_raw

_SQ2 = 1.0 / np.sqrt(2.0)
# atomic basis |ee>, |eg>, |ge>, |gg>
TRIPLET_ISOMETRY = np.array(
    [[1, 0, 0], [0, _SQ2, 0], [0, _SQ2, 0], [0, 0, 1]], dtype=complex
)
SINGLET_VECTOR = np.array([0, _SQ2, -_SQ2, 0], dtype=complex)

COHERENCE_CHECK_MAX_DIM = 1200  # dense spectrum of the singlet-triplet block
_COHERENCE_GAP_MIN = 1e-8


class SectorError(RuntimeError):
    """The singlet/triplet decomposition does not apply to this generator."""


def _isometries(nf: int):
    """Full-space isometries onto field (x) triplet and field (x) singlet."""
    eye = np.eye(max(nf, 1))
    if nf == 0:
        return TRIPLET_ISOMETRY.copy(), SINGLET_VECTOR.reshape(4, 1).copy()
    return np.kron(eye, TRIPLET_ISOMETRY), np.kron(eye, SINGLET_VECTOR.reshape(4, 1))


def _restrict(gen: Generator, V: np.ndarray, tol: float = 1e-12):
    """Compress the generator onto an invariant subspace spanned by V."""
    Hm = gen.hamiltonian.matrix
    P = V @ V.conj().T
    if np.max(np.abs(Hm @ P - P @ Hm)) > tol * max(1.0, np.max(np.abs(Hm))):
        raise SectorError("Hamiltonian does not preserve the sector split")
    H_sub = V.conj().T @ Hm @ V
    diss = []
    for jump, rate in gen.dissipators:
        A = jump.matrix
        if np.max(np.abs(A @ P - P @ A)) > tol * max(1.0, np.max(np.abs(A))):
            raise SectorError("jump operator does not preserve the sector split")
        diss.append((V.conj().T @ A @ V, rate))
    return H_sub, diss


def coherence_block_gap(gen: Generator, check: str = "auto") -> float | None:
    """Smallest |eigenvalue| of the singlet-triplet coherence block.

    Returns None when the block is too large to check densely and check is
    'auto'.  A strictly positive gap certifies that all singlet-triplet
    coherences decay, so they vanish in the steady state.
    """
    layout = gen.layout
    nf = layout.fock_dim if layout.has_field else 0
    VT, VS = _isometries(nf)
    dim_c = VT.shape[1] * VS.shape[1]
    if dim_c > COHERENCE_CHECK_MAX_DIM:
        if check == "auto":
            return None
        raise SectorError(f"coherence block dimension {dim_c} too large for a dense check")
    Hm = gen.hamiltonian.matrix
    HT = VT.conj().T @ Hm @ VT
    HS = VS.conj().T @ Hm @ VS
    dT, dS = HT.shape[0], HS.shape[0]
    # dX/dt = -i(HT X - X HS) + sum r (2 AT X AS^dag - AT^dag AT X - X AS^dag AS)
    L = -1j * (np.kron(HT, np.eye(dS)) - np.kron(np.eye(dT), HS.T))
    for jump, rate in gen.dissipators:
        A = jump.matrix
        AT = VT.conj().T @ A @ VT
        AS = VS.conj().T @ A @ VS
        L = L + rate * (
            2.0 * np.kron(AT, AS.conj())
            - np.kron(AT.conj().T @ AT, np.eye(dS))
            - np.kron(np.eye(dT), (AS.conj().T @ AS).T)
        )
    return float(np.min(np.abs(np.linalg.eigvals(L))))


def singlet_weight(atoms) -> float:
    av = atomic_vector(atoms) if isinstance(atoms, str) else np.asarray(atoms, dtype=complex)
    av = av / np.linalg.norm(av)
    return float(abs(SINGLET_VECTOR.conj() @ av) ** 2)


def two_atom_steady_state(cfg: SystemConfig, atoms_init, residual_tol: float = 1e-9,
                          check_coherence: str = "auto") -> DensityMatrix:
    """Steady state reached from atoms (x) any field state, by sector solve."""
    if cfg.n_atoms != 2:
        raise SectorError("sector decomposition is specific to two atoms")
    gen = build_generator(cfg)
    layout = gen.layout
    nf = layout.fock_dim if layout.has_field else 0
    VT, VS = _isometries(nf)

    if check_coherence != "skip":
        gap = coherence_block_gap(gen, check=check_coherence)
        if gap is not None and gap < _COHERENCE_GAP_MIN:
            raise SectorError(
                f"singlet-triplet coherence block has a near-zero mode (gap {gap:.2e}); "
                "steady state must be obtained by integration"
            )

    w_s = singlet_weight(atoms_init)
    HT, dT = _restrict(gen, VT)
    mT, *_ = steady_state_raw(HT, dT, residual_tol=residual_tol, method="nullspace")
    full = (1.0 - w_s) * (VT @ mT @ VT.conj().T)
    if w_s > 1e-14:
        HS, dS = _restrict(gen, VS)
        if HS.shape[0] == 1:  # atoms-only layout: singlet sector is a fixed scalar
            mS = np.array([[1.0 + 0j]])
        else:
            mS, *_ = steady_state_raw(HS, dS, residual_tol=residual_tol, method="nullspace")
        full = full + w_s * (VS @ mS @ VS.conj().T)
    return DensityMatrix.from_matrix(layout, full, pos_tol=1e-7)
