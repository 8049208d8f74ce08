"""Operators and states on finite tensor-product Hilbert spaces.

Spaces are composed of an optional bosonic (Fock-truncated) factor followed
by a number of two-level atoms.  The factor order is fixed: field first,
then atoms 1..N.  All matrices are dense complex arrays.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

TOL_HERM = 1e-10
TOL_TRACE = 1e-9
TOL_POS = 1e-9


class LayoutError(ValueError):
    """Operator layouts do not compose or do not match."""


class HermiticityError(ValueError):
    """A matrix that must be Hermitian is not."""


class StateError(ValueError):
    """A density matrix violates Hermiticity, normalization or positivity."""


@dataclass(frozen=True)
class HilbertLayout:
    """Tensor-factor structure: field factor first (if any), then atoms 1..N."""

    atom_count: int
    fock_dim: int = 0  # 0 means no field factor

    def __post_init__(self):
        if self.atom_count < 0:
            raise LayoutError(f"atom_count must be >= 0, got {self.atom_count}")
        if self.fock_dim < 0:
            raise LayoutError(f"fock_dim must be >= 0, got {self.fock_dim}")
        if self.atom_count == 0 and self.fock_dim == 0:
            raise LayoutError("layout needs at least one factor")

    @property
    def has_field(self) -> bool:
        return self.fock_dim > 0

    @property
    def factors(self) -> tuple[int, ...]:
        base = (self.fock_dim,) if self.has_field else ()
        return base + (2,) * self.atom_count

    @property
    def n_factors(self) -> int:
        return len(self.factors)

    @property
    def dim(self) -> int:
        d = 1
        for f in self.factors:
            d *= f
        return d

    def field_factor(self) -> int:
        """Index of the field factor."""
        if not self.has_field:
            raise LayoutError("layout has no field factor")
        return 0

    def atom_factor(self, j: int) -> int:
        """Factor index of atom j (atoms are numbered 1..N)."""
        if not 1 <= j <= self.atom_count:
            raise LayoutError(f"atom index {j} out of range 1..{self.atom_count}")
        return j - 1 + (1 if self.has_field else 0)


def _as_matrix(entries, dim: int) -> np.ndarray:
    m = np.asarray(entries, dtype=complex)
    if m.shape != (dim, dim):
        raise LayoutError(f"matrix shape {m.shape} does not match layout dimension {dim}")
    m = m.copy()
    m.flags.writeable = False
    return m


@dataclass(frozen=True)
class Operator:
    """Square complex matrix tagged with its Hilbert-space layout."""

    layout: HilbertLayout
    matrix: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "matrix", _as_matrix(self.matrix, self.layout.dim))

    @property
    def dim(self) -> int:
        return self.layout.dim

    def dag(self) -> "Operator":
        return Operator(self.layout, self.matrix.conj().T)

    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    def is_hermitian(self, tol: float = TOL_HERM) -> bool:
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T))) <= tol

    def _check_same_layout(self, other: "Operator"):
        if self.layout != other.layout:
            raise LayoutError(f"layout mismatch: {self.layout} vs {other.layout}")

    def __add__(self, other: "Operator") -> "Operator":
        self._check_same_layout(other)
        return Operator(self.layout, self.matrix + other.matrix)

    def __sub__(self, other: "Operator") -> "Operator":
        self._check_same_layout(other)
        return Operator(self.layout, self.matrix - other.matrix)

    def __neg__(self) -> "Operator":
        return Operator(self.layout, -self.matrix)

    def __mul__(self, scalar) -> "Operator":
        return Operator(self.layout, self.matrix * complex(scalar))

    __rmul__ = __mul__

    def __matmul__(self, other: "Operator") -> "Operator":
        self._check_same_layout(other)
        return Operator(self.layout, self.matrix @ other.matrix)


def identity(layout: HilbertLayout) -> Operator:
    return Operator(layout, np.eye(layout.dim))


def tensor(a: Operator, b: Operator) -> Operator:
    """Kronecker product; the field factor, if present, must come from `a`."""
    if b.layout.has_field:
        raise LayoutError("field factor must come first; cannot tensor a field factor on the right")
    combined = HilbertLayout(a.layout.atom_count + b.layout.atom_count, a.layout.fock_dim)
    return Operator(combined, np.kron(a.matrix, b.matrix))


def embed(local: Operator, site: int, layout: HilbertLayout) -> Operator:
    """Place a single-factor operator at `site`, identities everywhere else."""
    factors = layout.factors
    if not 0 <= site < len(factors):
        raise LayoutError(f"site {site} out of range for {len(factors)} factors")
    if local.layout.n_factors != 1:
        raise LayoutError("embed expects a single-factor operator")
    if local.dim != factors[site]:
        raise LayoutError(
            f"local dimension {local.dim} does not match factor dimension {factors[site]}"
        )
    m = np.eye(1, dtype=complex)
    for k, d in enumerate(factors):
        m = np.kron(m, local.matrix if k == site else np.eye(d))
    return Operator(layout, m)


def qubit_operator(m) -> Operator:
    """Single-atom operator in the |e>, |g> basis (|e> = index 0)."""
    return Operator(HilbertLayout(atom_count=1), m)


def sigma_x() -> Operator:
    return qubit_operator([[0, 1], [1, 0]])


def sigma_y() -> Operator:
    return qubit_operator([[0, -1j], [1j, 0]])


def sigma_z() -> Operator:
    return qubit_operator([[1, 0], [0, -1]])


def sigma_plus() -> Operator:
    """|e><g|."""
    return qubit_operator([[0, 1], [0, 0]])


def sigma_minus() -> Operator:
    """|g><e|."""
    return qubit_operator([[0, 0], [1, 0]])


def annihilation(n_max: int) -> Operator:
    """Truncated ladder operator: a|n> = sqrt(n)|n-1>, n = 0..n_max."""
    if n_max < 1:
        raise ValueError(f"n_max must be >= 1, got {n_max}")
    dim = n_max + 1
    m = np.zeros((dim, dim), dtype=complex)
    n = np.arange(1, dim)
    m[n - 1, n] = np.sqrt(n)
    return Operator(HilbertLayout(atom_count=0, fock_dim=dim), m)


def number_operator(n_max: int) -> Operator:
    a = annihilation(n_max)
    return a.dag() @ a


def displacement(alpha: complex, n_max: int) -> Operator:
    """exp(alpha a^dag - alpha* a) on the truncated Fock space."""
    if abs(alpha) ** 2 > 0.25 * n_max:
        warnings.warn(
            f"|alpha|^2 = {abs(alpha)**2:.3g} is not small against n_max = {n_max}; "
            "the truncated displacement is no longer close to unitary",
            stacklevel=2,
        )
    a = annihilation(n_max)
    gen = alpha * a.dag().matrix - np.conj(alpha) * a.matrix
    return Operator(a.layout, expm(gen))


def fock_vector(fock_dim: int, n: int) -> np.ndarray:
    if not 0 <= n < fock_dim:
        raise ValueError(f"Fock index {n} out of range for dimension {fock_dim}")
    v = np.zeros(fock_dim, dtype=complex)
    v[n] = 1.0
    return v


def coherent_vector(alpha: complex, fock_dim: int) -> np.ndarray:
    """Truncated coherent state, renormalized on the truncated space."""
    n = np.arange(fock_dim)
    log_fact = np.concatenate(([0.0], np.cumsum(np.log(np.arange(1, fock_dim)))))
    amps = np.exp(-0.5 * abs(alpha) ** 2 - 0.5 * log_fact) * alpha**n
    return amps / np.linalg.norm(amps)


@dataclass(frozen=True)
class DensityMatrix:
    """Hermitian, unit-trace, positive-semidefinite state."""

    op: Operator
    pos_tol: float = field(default=TOL_POS, compare=False)

    def __post_init__(self):
        m = self.op.matrix
        herm = float(np.max(np.abs(m - m.conj().T)))
        if herm > TOL_HERM:
            raise StateError(f"density matrix not Hermitian: max asymmetry {herm:.3e}")
        tr = np.trace(m)
        if abs(tr - 1.0) > TOL_TRACE:
            raise StateError(f"density matrix trace {tr} deviates from 1")
        lo = float(np.min(np.linalg.eigvalsh(m)))
        if lo < -self.pos_tol:
            raise StateError(f"density matrix has eigenvalue {lo:.3e} below -{self.pos_tol:.1e}")

    @property
    def layout(self) -> HilbertLayout:
        return self.op.layout

    @property
    def matrix(self) -> np.ndarray:
        return self.op.matrix

    @classmethod
    def from_matrix(cls, layout: HilbertLayout, m, pos_tol: float = TOL_POS) -> "DensityMatrix":
        return cls(Operator(layout, m), pos_tol=pos_tol)

    @classmethod
    def pure(cls, layout: HilbertLayout, vec) -> "DensityMatrix":
        v = np.asarray(vec, dtype=complex).ravel()
        if v.size != layout.dim:
            raise LayoutError(f"vector length {v.size} does not match layout dimension {layout.dim}")
        v = v / np.linalg.norm(v)
        return cls(Operator(layout, np.outer(v, v.conj())))

    def expect(self, observable: Operator) -> complex:
        if observable.layout != self.layout:
            raise LayoutError("observable layout does not match state layout")
        return complex(np.trace(observable.matrix @ self.matrix))


def _kept_layout(layout: HilbertLayout, keep: tuple[int, ...]) -> HilbertLayout:
    has_field = layout.has_field and 0 in keep
    atoms = sum(1 for k in keep if not (layout.has_field and k == 0))
    return HilbertLayout(atoms, layout.fock_dim if has_field else 0)


def partial_trace_matrix(m: np.ndarray, layout: HilbertLayout, keep) -> np.ndarray:
    factors = layout.factors
    keep = tuple(sorted(set(int(k) for k in keep)))
    if not keep:
        raise LayoutError("keep set must be non-empty")
    if keep[0] < 0 or keep[-1] >= len(factors):
        raise LayoutError(f"keep set {keep} out of range for {len(factors)} factors")
    t = m.reshape(factors + factors)
    # contract each traced factor's row index with its column index, highest first
    for k in reversed([i for i in range(len(factors)) if i not in keep]):
        t = np.trace(t, axis1=k, axis2=t.ndim // 2 + k)
    d = int(np.sqrt(t.size))
    return t.reshape(d, d)


def partial_trace(rho: DensityMatrix, keep) -> DensityMatrix:
    """Reduced state on the kept factors (factor indices, order preserved)."""
    keep_t = tuple(sorted(set(int(k) for k in keep)))
    reduced = partial_trace_matrix(rho.matrix, rho.layout, keep_t)
    return DensityMatrix.from_matrix(_kept_layout(rho.layout, keep_t), reduced,
                                     pos_tol=rho.pos_tol)


def hermitian_spectrum(op: Operator) -> np.ndarray:
    """Real eigenvalues, ascending.  Raises on non-Hermitian input."""
    if not op.is_hermitian():
        raise HermiticityError("operator is not Hermitian within tolerance")
    return np.linalg.eigvalsh(op.matrix)


def trace_distance(rho: DensityMatrix, sigma: DensityMatrix) -> float:
    """(1/2) * trace norm of the difference."""
    diff = rho.matrix - sigma.matrix
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(diff))))
