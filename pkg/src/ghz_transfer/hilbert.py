"""Tensor-product Hilbert space of the two-cavity transfer register.

The register is two microwave cavities joined by one two-level coupler
qubit. Cavity L hosts qudits ``q1 .. qn``, cavity R hosts qudits
``q1p .. qnp``; every qudit keeps three levels (g, e, f) and each cavity
mode is truncated at a configurable Fock cutoff.

Basis ordering contract (version tag ``ghz-layout-v1``): tensor factors are
ordered

    left qudits q1..qn, coupler A, right qudits q1p..qnp, mode a (cavity L),
    mode b (cavity R)

with the first factor the slowest-varying index, so the flat basis index is
the mixed-radix number built from the per-factor levels in that order.
Operators are stored sparse (CSR), pure states as dense vectors.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

__all__ = [
    "LEVELS",
    "BASIS_ORDERING_TAG",
    "SystemLayout",
    "build_layout",
    "QuantumState",
    "OperatorMatrix",
    "DensityMatrix",
    "ReducedDensityMatrix",
    "level_ket",
    "transition_op",
    "embed_site_operator",
    "mode_annihilation",
    "mode_creation",
    "partial_trace",
    "save_state",
    "load_state",
]

#: Qudit level symbols. The coupler uses the first two.
LEVELS = {"g": 0, "e": 1, "f": 2}

BASIS_ORDERING_TAG = "ghz-layout-v1"

QUDIT_DIM = 3
COUPLER_DIM = 2


@dataclass(frozen=True)
class SystemLayout:
    """Shape of the register: qudit counts and Fock truncations.

    Parameters
    ----------
    n_left, n_right : int
        Number of qudits in cavity L and cavity R. At least one each; the
        transfer qubits are ``q1`` and ``q1p``, the rest are spectators.
    fock_cutoff_left, fock_cutoff_right : int
        Highest retained Fock level of each mode (so the factor dimension
        is cutoff + 1). The protocol drives either cavity to two photons,
        so a cutoff below 3 leaves no headroom to detect truncation error.

    Examples
    --------
    >>> layout = build_layout(1, 1, 3, 3)
    >>> layout.dim
    288
    >>> build_layout(3, 3).dim
    36450
    """

    n_left: int
    n_right: int
    fock_cutoff_left: int = 4
    fock_cutoff_right: int = 4

    def __post_init__(self) -> None:
        if self.n_left < 1 or self.n_right < 1:
            raise ValueError("each cavity must hold at least one qudit")
        if self.fock_cutoff_left < 3 or self.fock_cutoff_right < 3:
            raise ValueError(
                "Fock cutoff below 3 cannot represent the two-photon swap "
                "and leaves no top level to monitor truncation leakage"
            )

    @property
    def left_qudits(self) -> tuple[str, ...]:
        return tuple(f"q{i}" for i in range(1, self.n_left + 1))

    @property
    def right_qudits(self) -> tuple[str, ...]:
        return tuple(f"q{i}p" for i in range(1, self.n_right + 1))

    @property
    def left_spectators(self) -> tuple[str, ...]:
        return self.left_qudits[1:]

    @property
    def right_spectators(self) -> tuple[str, ...]:
        return self.right_qudits[1:]

    @property
    def site_names(self) -> tuple[str, ...]:
        """All tensor factors, slowest index first."""
        return self.left_qudits + ("A",) + self.right_qudits + ("cavL", "cavR")

    @property
    def factor_dims(self) -> tuple[int, ...]:
        return (
            (QUDIT_DIM,) * self.n_left
            + (COUPLER_DIM,)
            + (QUDIT_DIM,) * self.n_right
            + (self.fock_cutoff_left + 1, self.fock_cutoff_right + 1)
        )

    @property
    def dim(self) -> int:
        out = 1
        for d in self.factor_dims:
            out *= d
        return out

    def site_dim(self, site: str) -> int:
        return self.factor_dims[self.factor_index(site)]

    def factor_index(self, site: str) -> int:
        try:
            return self.site_names.index(site)
        except ValueError:
            raise KeyError(f"unknown site {site!r}; sites are {self.site_names}") from None

    def basis_index(self, assignments: Mapping[str, int | str]) -> int:
        """Flat index of the product basis state with the given levels.

        Sites not mentioned sit in their ground/vacuum level. Qudit levels
        may be given as ``"g"/"e"/"f"`` or as integers; photon numbers as
        integers.
        """
        levels = [0] * len(self.factor_dims)
        for site, value in assignments.items():
            pos = self.factor_index(site)
            level = LEVELS[value] if isinstance(value, str) else int(value)
            if not 0 <= level < self.factor_dims[pos]:
                raise ValueError(f"level {value!r} out of range for site {site!r}")
            levels[pos] = level
        return int(np.ravel_multi_index(levels, self.factor_dims))

    def basis_labels(self, index: int) -> dict[str, int]:
        """Inverse of :meth:`basis_index`: per-site levels of a basis state."""
        if not 0 <= index < self.dim:
            raise ValueError(f"basis index {index} out of range for dim {self.dim}")
        levels = np.unravel_index(index, self.factor_dims)
        return {site: int(lv) for site, lv in zip(self.site_names, levels)}

    def level_index_array(self, site: str) -> np.ndarray:
        """Level of ``site`` for every flat basis index, shape ``(dim,)``.

        This is the workhorse for diagonal operators and population
        extraction: ``pops[k] = sum(|psi|^2 [levels == k])``.
        """
        pos = self.factor_index(site)
        dims = self.factor_dims
        after = 1
        for d in dims[pos + 1 :]:
            after *= d
        idx = np.arange(self.dim)
        return (idx // after) % dims[pos]

    def to_dict(self) -> dict:
        return {
            "n_left": self.n_left,
            "n_right": self.n_right,
            "fock_cutoff_left": self.fock_cutoff_left,
            "fock_cutoff_right": self.fock_cutoff_right,
        }


def build_layout(
    n_left: int,
    n_right: int,
    fock_cutoff_left: int = 4,
    fock_cutoff_right: int = 4,
) -> SystemLayout:
    """Construct and validate a :class:`SystemLayout`."""
    return SystemLayout(n_left, n_right, fock_cutoff_left, fock_cutoff_right)


def level_ket(dim: int, level: int | str) -> np.ndarray:
    """Unit column vector for one local level."""
    idx = LEVELS[level] if isinstance(level, str) else int(level)
    vec = np.zeros(dim, dtype=complex)
    vec[idx] = 1.0
    return vec


def transition_op(dim: int, to_level: int | str, from_level: int | str) -> np.ndarray:
    """Local operator |to><from| on a ``dim``-level site."""
    return np.outer(level_ket(dim, to_level), level_ket(dim, from_level).conj())


@dataclass
class QuantumState:
    """Dense state vector bound to a layout.

    ``amplitudes`` has shape ``(layout.dim,)`` and complex dtype; the basis
    ordering is the layout's (see module docstring).
    """

    amplitudes: np.ndarray
    layout: SystemLayout

    def __post_init__(self) -> None:
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.shape != (self.layout.dim,):
            raise ValueError(
                f"amplitude vector has shape {amps.shape}, layout dim is {self.layout.dim}"
            )
        self.amplitudes = amps

    @classmethod
    def from_basis(cls, layout: SystemLayout, assignments: Mapping[str, int | str] | None = None) -> "QuantumState":
        vec = np.zeros(layout.dim, dtype=complex)
        vec[layout.basis_index(assignments or {})] = 1.0
        return cls(vec, layout)

    @classmethod
    def from_product(
        cls,
        layout: SystemLayout,
        site_vectors: Mapping[str, Sequence[complex]] | None = None,
        photons: tuple[int, int] = (0, 0),
    ) -> "QuantumState":
        """Product state from per-site local vectors.

        Unlisted qudits and the coupler sit in g; the cavities hold the
        given photon-number states.
        """
        factors = []
        for site, dim in zip(layout.site_names, layout.factor_dims):
            if site == "cavL":
                factors.append(level_ket(dim, photons[0]))
            elif site == "cavR":
                factors.append(level_ket(dim, photons[1]))
            elif site_vectors is not None and site in site_vectors:
                local = np.asarray(site_vectors[site], dtype=complex)
                if local.shape != (dim,):
                    raise ValueError(f"local vector for {site!r} must have dim {dim}")
                factors.append(local)
            else:
                factors.append(level_ket(dim, 0))
        unknown = set(site_vectors or ()) - set(layout.site_names)
        if unknown:
            raise KeyError(f"unknown sites {sorted(unknown)}")
        vec = factors[0]
        for f in factors[1:]:
            vec = np.kron(vec, f)
        return cls(vec, layout)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self) -> "QuantumState":
        return QuantumState(self.amplitudes / self.norm, self.layout)

    def overlap(self, other: "QuantumState") -> complex:
        """Inner product <self|other>."""
        _require_same_layout(self.layout, other.layout)
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def site_populations(self, site: str) -> np.ndarray:
        """Populations of each level of ``site``, summed over the rest."""
        levels = self.layout.level_index_array(site)
        weights = np.abs(self.amplitudes) ** 2
        return np.bincount(levels, weights=weights, minlength=self.layout.site_dim(site))

    def copy(self) -> "QuantumState":
        return QuantumState(self.amplitudes.copy(), self.layout)


@dataclass
class OperatorMatrix:
    """Sparse operator bound to a layout, with a Hermiticity claim.

    The ``hermitian`` flag is asserted at construction time (defect above
    1e-12 raises), so downstream consumers can trust it.
    """

    matrix: sp.csr_matrix
    layout: SystemLayout
    hermitian: bool = False

    _HERMITICITY_TOL = 1e-12

    def __post_init__(self) -> None:
        mat = sp.csr_matrix(self.matrix, dtype=complex)
        if mat.shape != (self.layout.dim, self.layout.dim):
            raise ValueError(
                f"operator shape {mat.shape} does not match layout dim {self.layout.dim}"
            )
        self.matrix = mat
        if self.hermitian and self.hermiticity_defect() > self._HERMITICITY_TOL:
            raise ValueError(
                f"operator flagged hermitian has defect {self.hermiticity_defect():.3e}"
            )

    def hermiticity_defect(self) -> float:
        diff = self.matrix - self.matrix.getH()
        if diff.nnz == 0:
            return 0.0
        return float(np.max(np.abs(diff.data)))

    def dagger(self) -> "OperatorMatrix":
        return OperatorMatrix(self.matrix.getH().tocsr(), self.layout, self.hermitian)

    def apply(self, state: QuantumState) -> QuantumState:
        _require_same_layout(self.layout, state.layout)
        return QuantumState(self.matrix @ state.amplitudes, self.layout)

    def expectation(self, state: QuantumState) -> complex:
        """<state| O |state>; real part only when the operator is hermitian."""
        value = complex(np.vdot(state.amplitudes, self.matrix @ state.amplitudes))
        return value.real if self.hermitian else value

    def to_dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def __add__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        _require_same_layout(self.layout, other.layout)
        return OperatorMatrix(
            (self.matrix + other.matrix).tocsr(),
            self.layout,
            hermitian=self.hermitian and other.hermitian,
        )

    def __sub__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        _require_same_layout(self.layout, other.layout)
        return OperatorMatrix(
            (self.matrix - other.matrix).tocsr(),
            self.layout,
            hermitian=self.hermitian and other.hermitian,
        )

    def __mul__(self, scalar: complex) -> "OperatorMatrix":
        herm = self.hermitian and float(np.imag(scalar)) == 0.0
        return OperatorMatrix(self.matrix * scalar, self.layout, hermitian=herm)

    __rmul__ = __mul__

    def __matmul__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        _require_same_layout(self.layout, other.layout)
        return OperatorMatrix((self.matrix @ other.matrix).tocsr(), self.layout, hermitian=False)


@dataclass
class DensityMatrix:
    """Dense density operator bound to a layout."""

    matrix: np.ndarray
    layout: SystemLayout

    def __post_init__(self) -> None:
        mat = np.asarray(self.matrix, dtype=complex)
        if mat.shape != (self.layout.dim, self.layout.dim):
            raise ValueError(
                f"density matrix shape {mat.shape} does not match layout dim {self.layout.dim}"
            )
        self.matrix = mat

    @classmethod
    def from_state(cls, state: QuantumState) -> "DensityMatrix":
        amps = state.amplitudes
        return cls(np.outer(amps, amps.conj()), state.layout)

    @property
    def trace(self) -> float:
        return float(np.real(np.trace(self.matrix)))

    def hermiticity_defect(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T)))

    def expectation(self, state: QuantumState) -> float:
        """<state| rho |state>, the fidelity of rho against a pure target."""
        _require_same_layout(self.layout, state.layout)
        return float(np.real(np.vdot(state.amplitudes, self.matrix @ state.amplitudes)))

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.matrix)[0])


@dataclass(frozen=True)
class ReducedDensityMatrix:
    """Result of a partial trace: a small dense matrix over kept sites."""

    matrix: np.ndarray
    sites: tuple[str, ...]
    dims: tuple[int, ...]


def embed_site_operator(layout: SystemLayout, site: str, local: np.ndarray) -> OperatorMatrix:
    """Lift a local qudit/coupler operator to the full register.

    Parameters
    ----------
    layout : SystemLayout
    site : str
        A qudit name (``q1``, ``q2p``, ...) or the coupler ``A``. Cavity
        factors are addressed through :func:`mode_annihilation` instead.
    local : ndarray
        Square matrix of the site's local dimension.

    Returns
    -------
    OperatorMatrix
        ``I (x) local (x) I`` in the layout's factor order, sparse.
    """
    if site in ("cavL", "cavR"):
        raise ValueError("cavity factors are embedded via mode_annihilation / mode_creation")
    pos = layout.factor_index(site)
    return _embed_at(layout, pos, np.asarray(local, dtype=complex))


def mode_annihilation(layout: SystemLayout, cavity: str) -> OperatorMatrix:
    """Annihilation operator of mode a (``cavity="L"``) or b (``"R"``)."""
    if cavity not in ("L", "R"):
        raise ValueError(f"cavity must be 'L' or 'R', got {cavity!r}")
    site = "cavL" if cavity == "L" else "cavR"
    pos = layout.factor_index(site)
    nlev = layout.factor_dims[pos]
    local = np.diag(np.sqrt(np.arange(1.0, nlev)), 1).astype(complex)
    return _embed_at(layout, pos, local)


def mode_creation(layout: SystemLayout, cavity: str) -> OperatorMatrix:
    """Exactly the conjugate transpose of :func:`mode_annihilation`."""
    return mode_annihilation(layout, cavity).dagger()


def _embed_at(layout: SystemLayout, pos: int, local: np.ndarray) -> OperatorMatrix:
    dims = layout.factor_dims
    d = dims[pos]
    if local.shape != (d, d):
        raise ValueError(f"local operator must be {d}x{d} for factor {layout.site_names[pos]!r}")
    before = 1
    for k in dims[:pos]:
        before *= k
    after = 1
    for k in dims[pos + 1 :]:
        after *= k
    mat = sp.kron(
        sp.identity(before, format="csr"),
        sp.kron(sp.csr_matrix(local), sp.identity(after, format="csr"), format="csr"),
        format="csr",
    )
    herm = bool(np.max(np.abs(local - local.conj().T)) <= 1e-14) if local.size else True
    return OperatorMatrix(mat, layout, hermitian=herm)


def partial_trace(obj: QuantumState | DensityMatrix, keep_sites: Iterable[str]) -> ReducedDensityMatrix:
    """Trace out everything except ``keep_sites``.

    Parameters
    ----------
    obj : QuantumState or DensityMatrix
    keep_sites : iterable of str
        Factor names to keep, in the order the reduced matrix should use.
        Cavity factors ``cavL``/``cavR`` are allowed.

    Returns
    -------
    ReducedDensityMatrix
        Dense matrix of dimension ``prod(site dims kept)``.
    """
    layout = obj.layout
    keep = tuple(keep_sites)
    if len(set(keep)) != len(keep):
        raise ValueError("keep_sites contains duplicates")
    positions = [layout.factor_index(s) for s in keep]
    dims = layout.factor_dims
    keep_dim = 1
    for p in positions:
        keep_dim *= dims[p]

    if isinstance(obj, QuantumState):
        tensor = obj.amplitudes.reshape(dims)
        rest = [i for i in range(len(dims)) if i not in positions]
        mat = tensor.transpose(positions + rest).reshape(keep_dim, -1)
        reduced = mat @ mat.conj().T
    elif isinstance(obj, DensityMatrix):
        nfac = len(dims)
        tensor = obj.matrix.reshape(dims + dims)
        rest = [i for i in range(nfac) if i not in positions]
        perm = positions + rest + [p + nfac for p in positions] + [r + nfac for r in rest]
        rest_dim = obj.matrix.shape[0] // keep_dim
        moved = tensor.transpose(perm).reshape(keep_dim, rest_dim, keep_dim, rest_dim)
        reduced = np.einsum("arbr->ab", moved)
    else:
        raise TypeError(f"cannot partial-trace a {type(obj).__name__}")

    return ReducedDensityMatrix(
        matrix=reduced,
        sites=keep,
        dims=tuple(dims[p] for p in positions),
    )


SNAPSHOT_FORMAT = "ghz-transfer-state"
SNAPSHOT_VERSION = 1


def save_state(state: QuantumState, path: str | Path) -> None:
    """Write a state snapshot as JSON.

    The container holds the layout descriptor, the basis-ordering version
    tag, and the amplitude list as (real, imag) pairs in flat basis order.
    """
    payload = {
        "format": SNAPSHOT_FORMAT,
        "version": SNAPSHOT_VERSION,
        "basis_ordering": BASIS_ORDERING_TAG,
        "layout": state.layout.to_dict(),
        "amplitudes": [[float(a.real), float(a.imag)] for a in state.amplitudes],
    }
    Path(path).write_text(json.dumps(payload), encoding="utf-8")


def load_state(path: str | Path) -> QuantumState:
    """Read a snapshot written by :func:`save_state`."""
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("format") != SNAPSHOT_FORMAT:
        raise ValueError(f"not a state snapshot: format={payload.get('format')!r}")
    if payload.get("version") != SNAPSHOT_VERSION:
        raise ValueError(f"unsupported snapshot version {payload.get('version')!r}")
    if payload.get("basis_ordering") != BASIS_ORDERING_TAG:
        raise ValueError(
            f"snapshot uses basis ordering {payload.get('basis_ordering')!r}, "
            f"this build expects {BASIS_ORDERING_TAG!r}"
        )
    layout = SystemLayout(**payload["layout"])
    amps = np.array([complex(re, im) for re, im in payload["amplitudes"]])
    return QuantumState(amps, layout)


def _require_same_layout(a: SystemLayout, b: SystemLayout) -> None:
    if a != b:
        raise ValueError(f"layout mismatch: {a} vs {b}")
