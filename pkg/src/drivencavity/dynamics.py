"""Time evolution and steady states of Lindblad generators.

Two steady-state routes are provided: long-time adaptive integration and a
null-space solve of the vectorized generator (dense eigendecomposition for
small dimensions, sparse trace-constrained solve above that).  The dense
route detects degenerate steady-state manifolds and refuses to pick a state;
callers then integrate from their initial condition instead.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import solve_ivp

from .hilbert import DensityMatrix, HermiticityError, LayoutError, Operator, TOL_POS
from .model import Generator, apply_generator

DENSE_NULLSPACE_MAX_DIM = 40        # dense eig of the dim^2 x dim^2 superoperator
SPARSE_NULLSPACE_MAX_DIM = 650      # sparse LU of the trace-constrained system
SPECTRAL_MAX_DIM = 64               # dense eig of the full Liouvillian for evolve_spectral
_KERNEL_REL_TOL = 1e-10


class EvolutionError(RuntimeError):
    """Integration failed or state invariants blew up beyond tolerance."""


class ConvergenceError(RuntimeError):
    """Steady-state search did not converge within the time budget."""


class DegenerateSteadyStateError(ConvergenceError):
    """The generator has a multi-dimensional fixed-point manifold."""


@dataclass
class IntegratorStats:
    n_rhs_evals: int = 0
    max_trace_drift: float = 0.0
    max_herm_asym: float = 0.0
    min_eigenvalue: float = 0.0
    n_renormalizations: int = 0
    rtol: float = 0.0
    error_estimate: float = 0.0  # heuristic global-error bound, ~1e3 * tol


@dataclass
class Trajectory:
    times: np.ndarray
    states: list
    stats: IntegratorStats = field(default_factory=IntegratorStats)


@dataclass
class SteadyStateResult:
    rho_ss: DensityMatrix
    residual: float
    elapsed_model_time: float
    method: str


def _rhs_terms(H: np.ndarray, dissipators):
    """Effective non-Hermitian drift K = -iH - sum r A^dag A plus jump terms."""
    K = -1j * np.asarray(H, dtype=complex)
    jumps = []
    for A, rate in dissipators:
        A = np.asarray(A, dtype=complex)
        K = K - rate * (A.conj().T @ A)
        jumps.append((np.sqrt(2.0 * rate) * A, np.sqrt(2.0 * rate) * A.conj().T))
    return K, jumps


def _make_rhs(H, dissipators):
    K, jumps = _rhs_terms(H, dissipators)
    Kd = K.conj().T
    dim = K.shape[0]

    def rhs(t, y):
        rho = y.reshape(dim, dim)
        out = K @ rho + rho @ Kd
        for A, Ad in jumps:
            out += A @ rho @ Ad
        return out.ravel()

    return rhs


def _gen_matrices(gen: Generator):
    return gen.hamiltonian.matrix, [(j.matrix, r) for j, r in gen.dissipators]


def residual_norm(gen: Generator, rho) -> float:
    """Entrywise max of d(rho)/dt."""
    return float(np.max(np.abs(apply_generator(gen, rho).matrix)))


def evolve(gen: Generator, rho0: DensityMatrix, t_grid, tol: float = 1e-9,
           method: str = "DOP853", store_states: bool = True,
           observables=None) -> Trajectory:
    """Integrate rho through the requested times with local error control at tol.

    Stores either the density matrices or, if `observables` (a dict of name ->
    Operator) is given, their real expectation values per time.
    """
    if rho0.layout != gen.layout:
        raise LayoutError("initial state layout does not match generator layout")
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or t_grid.size < 1 or np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must be a strictly increasing 1-D sequence")
    if tol <= 0:
        raise ValueError("tol must be positive")

    rhs = _make_rhs(*_gen_matrices(gen))
    dim = gen.layout.dim
    stats = IntegratorStats(rtol=tol, error_estimate=1e3 * tol)
    pos_floor = max(TOL_POS, 10.0 * tol)

    if t_grid.size == 1:
        sol_states = [rho0.matrix.copy()]
        t_times = t_grid
    else:
        sol = solve_ivp(rhs, (t_grid[0], t_grid[-1]), rho0.matrix.ravel(),
                        method=method, t_eval=t_grid, rtol=tol, atol=tol * 1e-3)
        if not sol.success:
            raise EvolutionError(f"integrator failed: {sol.message}")
        stats.n_rhs_evals = int(sol.nfev)
        sol_states = [sol.y[:, k].reshape(dim, dim) for k in range(sol.t.size)]
        t_times = sol.t

    states = []
    obs_values = {name: [] for name in (observables or {})}
    min_eig = np.inf
    for m in sol_states:
        asym = float(np.max(np.abs(m - m.conj().T)))
        stats.max_herm_asym = max(stats.max_herm_asym, asym)
        m = 0.5 * (m + m.conj().T)
        drift = abs(np.trace(m).real - 1.0)
        stats.max_trace_drift = max(stats.max_trace_drift, drift)
        if asym > 10.0 * tol or drift > 10.0 * tol:
            raise EvolutionError(
                f"state invariants violated beyond 10*tol: asym {asym:.2e}, drift {drift:.2e}; "
                "truncation too small or step failure"
            )
        if drift > 1e-12:
            m = m / np.trace(m).real
            stats.n_renormalizations += 1
        state = DensityMatrix.from_matrix(gen.layout, m, pos_tol=pos_floor)
        min_eig = min(min_eig, float(np.min(np.linalg.eigvalsh(m))))
        if observables:
            for name, op in observables.items():
                obs_values[name].append(np.trace(op.matrix @ m).real)
        if store_states:
            states.append(state)
    stats.min_eigenvalue = float(min_eig)

    traj = Trajectory(times=np.asarray(t_times), states=states, stats=stats)
    if observables:
        traj.observables = {name: np.asarray(v) for name, v in obs_values.items()}
    return traj


def evolve_spectral(gen: Generator, rho0: DensityMatrix, t_grid,
                    pos_tol: float = 1e-7) -> Trajectory:
    """Propagate by eigendecomposition of the Liouvillian.

    One dense eig of the dim^2 x dim^2 superoperator buys the state at any
    later time for the cost of a matrix-vector product, so time grids spanning
    many decades (far beyond what step-by-step integration can afford) come
    essentially for free.  Limited to small Hilbert dimensions.
    """
    if rho0.layout != gen.layout:
        raise LayoutError("initial state layout does not match generator layout")
    dim = gen.layout.dim
    if dim > SPECTRAL_MAX_DIM:
        raise ValueError(
            f"dimension {dim} exceeds SPECTRAL_MAX_DIM = {SPECTRAL_MAX_DIM}; use evolve()"
        )
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or t_grid.size < 1 or np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must be a strictly increasing 1-D sequence")

    L = liouvillian_matrix_raw(*_gen_matrices(gen), sparse=False)
    vals, vecs = np.linalg.eig(L)
    # clip tiny positive real parts (numerical noise) so nothing grows
    vals = np.where(vals.real > 0, 1j * vals.imag, vals)
    coeff = np.linalg.solve(vecs, rho0.matrix.ravel())

    stats = IntegratorStats(rtol=0.0, error_estimate=0.0)
    states = []
    min_eig = np.inf
    for t in t_grid:
        m = (vecs @ (np.exp(vals * t) * coeff)).reshape(dim, dim)
        asym = float(np.max(np.abs(m - m.conj().T)))
        stats.max_herm_asym = max(stats.max_herm_asym, asym)
        m = 0.5 * (m + m.conj().T)
        drift = abs(np.trace(m).real - 1.0)
        stats.max_trace_drift = max(stats.max_trace_drift, drift)
        if asym > 1e-6 or drift > 1e-6:
            raise EvolutionError(
                f"spectral propagation lost state invariants: asym {asym:.2e}, drift {drift:.2e} "
                "(ill-conditioned eigenbasis)"
            )
        m = m / np.trace(m).real
        states.append(DensityMatrix.from_matrix(gen.layout, m, pos_tol=pos_tol))
        min_eig = min(min_eig, float(np.min(np.linalg.eigvalsh(m))))
    stats.min_eigenvalue = float(min_eig)
    return Trajectory(times=t_grid, states=states, stats=stats)


def record(traj: Trajectory, observable: Operator) -> np.ndarray:
    """Tr(rho(t) O) per stored state; O must be Hermitian."""
    if not observable.is_hermitian():
        raise HermiticityError("observable is not Hermitian")
    if not traj.states:
        raise ValueError("trajectory stores no states; evolve with store_states=True")
    scale = max(1.0, float(np.max(np.abs(observable.matrix))))
    values = []
    for state in traj.states:
        v = np.trace(observable.matrix @ state.matrix)
        if abs(v.imag) > 1e-10 * scale:
            raise ValueError(f"expectation has imaginary residue {v.imag:.3e}")
        values.append(v.real)
    return np.asarray(values)


def liouvillian_matrix_raw(H, dissipators, sparse: bool = True):
    """Superoperator acting on row-major vec(rho): vec(A X B) = kron(A, B^T) vec(X)."""
    H = np.asarray(H, dtype=complex)
    dim = H.shape[0]
    kron = sp.kron if sparse else np.kron
    eye = sp.identity(dim, format="csr", dtype=complex) if sparse else np.eye(dim)
    Hs = sp.csr_matrix(H) if sparse else H
    L = -1j * (kron(Hs, eye) - kron(eye, Hs.T))
    for A, rate in dissipators:
        A = np.asarray(A, dtype=complex)
        As = sp.csr_matrix(A) if sparse else A
        AdA = As.conj().T @ As
        L = L + rate * (2.0 * kron(As, As.conj()) - kron(AdA, eye) - kron(eye, AdA.T))
    return L.tocsr() if sparse else L


def liouvillian_matrix(gen: Generator, sparse: bool = True):
    return liouvillian_matrix_raw(*_gen_matrices(gen), sparse=sparse)


def _normalize_kernel_vector(v: np.ndarray, dim: int) -> np.ndarray:
    m = v.reshape(dim, dim)
    m = 0.5 * (m + m.conj().T)
    tr = np.trace(m).real
    if abs(tr) < 1e-10:
        raise DegenerateSteadyStateError("kernel vector is traceless; fixed point not unique")
    return m / tr


def steady_state_raw(H, dissipators, rho0=None, residual_tol: float = 1e-9,
                     t_max: float = 1e6, method: str = "auto", tol: float = 1e-10,
                     chunk0: float = 10.0):
    """Steady state on raw matrices.  Returns (rho_matrix, residual, elapsed, method).

    method 'nullspace' requires a unique fixed point (checked for the dense
    route, asserted by the caller for the sparse route); 'long-time-integration'
    requires rho0.  'auto' tries the null space first and falls back to
    integration from rho0 on degeneracy.
    """
    H = np.asarray(H, dtype=complex)
    dim = H.shape[0]
    rhs = _make_rhs(H, dissipators)

    def _residual(m):
        return float(np.max(np.abs(rhs(0.0, m.ravel()))))

    def _nullspace():
        if dim <= DENSE_NULLSPACE_MAX_DIM:
            L = liouvillian_matrix_raw(H, dissipators, sparse=False)
            vals, vecs = np.linalg.eig(L)
            scale = max(1.0, float(np.max(np.abs(vals))))
            kernel = np.where(np.abs(vals) < _KERNEL_REL_TOL * scale)[0]
            if kernel.size == 0:
                raise ConvergenceError("no null vector found; kernel tolerance too tight?")
            if kernel.size > 1:
                raise DegenerateSteadyStateError(
                    f"{kernel.size}-dimensional fixed-point manifold; integrate from rho0"
                )
            m = _normalize_kernel_vector(vecs[:, kernel[0]], dim)
        elif dim <= SPARSE_NULLSPACE_MAX_DIM:
            L = liouvillian_matrix_raw(H, dissipators, sparse=True).tolil()
            trace_row = np.zeros(dim * dim, dtype=complex)
            trace_row[:: dim + 1] = 1.0
            L[0, :] = trace_row
            b = np.zeros(dim * dim, dtype=complex)
            b[0] = 1.0
            try:
                v = spla.splu(L.tocsc()).solve(b)
            except RuntimeError as exc:  # exactly singular: degenerate kernel
                raise DegenerateSteadyStateError(str(exc)) from exc
            m = _normalize_kernel_vector(v, dim)
        else:
            raise ConvergenceError(f"dimension {dim} too large for the null-space route")
        res = _residual(m)
        if res > residual_tol:
            raise ConvergenceError(
                f"null-space candidate has residual {res:.3e} > {residual_tol:.1e}"
            )
        return m, res

    if method in ("auto", "nullspace"):
        try:
            m, res = _nullspace()
            return m, res, 0.0, "nullspace"
        except (DegenerateSteadyStateError, ConvergenceError):
            if method == "nullspace":
                raise

    if rho0 is None:
        raise ValueError("long-time integration needs an initial state")
    m = np.asarray(rho0, dtype=complex)
    t, chunk = 0.0, chunk0
    res = _residual(m)
    while res > residual_tol:
        if t >= t_max:
            raise ConvergenceError(
                f"residual {res:.3e} > {residual_tol:.1e} after t = {t:.3g}/kappa; raise t_max"
            )
        chunk = min(chunk, t_max - t)
        sol = solve_ivp(rhs, (0.0, chunk), m.ravel(), method="DOP853",
                        rtol=tol, atol=tol * 1e-3)
        if not sol.success:
            raise EvolutionError(f"integrator failed during steady-state search: {sol.message}")
        m = sol.y[:, -1].reshape(dim, dim)
        m = 0.5 * (m + m.conj().T)
        m = m / np.trace(m).real
        t += chunk
        chunk *= 2.0
        res = _residual(m)
    return m, res, t, "long-time-integration"


def steady_state(gen: Generator, rho0: DensityMatrix | None = None,
                 residual_tol: float = 1e-9, t_max: float = 1e6,
                 method: str = "auto", tol: float = 1e-10) -> SteadyStateResult:
    if rho0 is not None and rho0.layout != gen.layout:
        raise LayoutError("initial state layout does not match generator layout")
    m, res, elapsed, used = steady_state_raw(
        *_gen_matrices(gen),
        rho0=None if rho0 is None else rho0.matrix,
        residual_tol=residual_tol, t_max=t_max, method=method, tol=tol,
    )
    rho = DensityMatrix.from_matrix(gen.layout, m, pos_tol=max(TOL_POS, 100.0 * residual_tol))
    return SteadyStateResult(rho_ss=rho, residual=res, elapsed_model_time=elapsed, method=used)
