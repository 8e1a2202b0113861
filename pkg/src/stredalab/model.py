"""Discretized spinful magnetic Hamiltonians with conserved S^z.

Two backends share one assembler:

* ``continuum`` -- a finite-difference grid with ``points_per_cell`` points per
  unit length.  The kinetic term ``(1/2) P(B)^2`` is discretized as a covariant
  5-point magnetic Laplacian (Peierls phases integrated exactly along each
  link), so that the lattice velocity ``i[H, X_j]`` is the discrete magnetic
  momentum.
* ``tightbinding`` -- square lattice, one orbital per spin per site, hopping -1,
  flux per plaquette ``2*pi*(f + s*delta) + B2``.

Both produce block-diagonal operators: the full Hilbert space is ordered as
``[spin up sites..., spin down sites...]``.  Every vector potential is written
in the symmetric gauge ``A(x) = (b/2) (-x2, x1)`` plus (continuum only) the
periodic spin-orbit part.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
import scipy.sparse as sp

SPINS = (+1, -1)
SPIN_LABELS = ("up", "down")


class ModelError(ValueError):
    """Raised when a Hamiltonian specification or geometry is invalid."""


@dataclass(frozen=True)
class HamiltonianSpec:
    backend: str = "continuum"
    potential_amplitudes: tuple[float, float] = (0.0, 0.0)
    soc_strength: float = 0.0
    zeeman_coupling: float = 0.0
    B1: float = 0.0
    B2: float = 0.0
    half_width_L: int = 2
    points_per_cell: int = 8
    boundary: str = "dirichlet"
    tb_flux_per_plaquette: float = 0.0
    tb_spin_flux_offset: float = 0.0
    # tight-binding only: flux per plaquette contributed by B2 is B2 * coupling
    tb_orbital_coupling: float = 1.0

    def __post_init__(self):
        if self.backend not in ("continuum", "tightbinding"):
            raise ModelError(f"unknown backend {self.backend!r}")
        if self.boundary not in ("dirichlet", "torus"):
            raise ModelError(f"unknown boundary {self.boundary!r}")
        if int(self.half_width_L) != self.half_width_L or self.half_width_L < 1:
            raise ModelError("half_width_L must be an integer >= 1")
        if self.backend == "continuum" and self.points_per_cell < 4:
            raise ModelError("points_per_cell must be >= 4 for the continuum backend")
        amps = tuple(float(a) for a in self.potential_amplitudes)
        if len(amps) != 2 or not all(np.isfinite(amps)):
            raise ModelError("potential_amplitudes must be two finite numbers")
        object.__setattr__(self, "potential_amplitudes", amps)
        for name in ("soc_strength", "zeeman_coupling", "B1", "B2",
                     "tb_flux_per_plaquette", "tb_spin_flux_offset", "tb_orbital_coupling"):
            if not np.isfinite(getattr(self, name)):
                raise ModelError(f"{name} must be finite")

    def with_field(self, B: float) -> "HamiltonianSpec":
        """Copy of the spec with ``B1 = B2 = B``."""
        return replace(self, B1=float(B), B2=float(B))

    @property
    def spacing(self) -> float:
        return 1.0 if self.backend == "tightbinding" else 1.0 / self.points_per_cell

    def field_per_spin(self, s: int) -> float:
        """Uniform field strength b seen by spin ``s`` (flux per unit area)."""
        if self.backend == "continuum":
            return self.B2
        return (2 * np.pi * (self.tb_flux_per_plaquette + s * self.tb_spin_flux_offset)
                + self.tb_orbital_coupling * self.B2)


@dataclass(frozen=True)
class Geometry:
    """Grid of sites shared by both spin sectors."""

    shape: tuple[int, int]
    spacing: float
    origin: float
    boundary: str
    half_width: int
    backend: str = "continuum"
    coords: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        n1, n2 = self.shape
        i1, i2 = np.meshgrid(np.arange(n1), np.arange(n2), indexing="ij")
        xy = np.column_stack([i1.ravel(), i2.ravel()]) * self.spacing + self.origin
        xy.setflags(write=False)
        object.__setattr__(self, "coords", xy)

    @classmethod
    def from_spec(cls, spec: HamiltonianSpec) -> "Geometry":
        L, h = spec.half_width_L, spec.spacing
        per_side = int(round(2 * L / h))
        if spec.boundary == "dirichlet" and spec.backend == "continuum":
            per_side -= 1  # sites on x = +-L carry the Dirichlet condition
        return cls((per_side, per_side), h, -L + h, spec.boundary, L, spec.backend)

    @property
    def n_sites(self) -> int:
        return self.shape[0] * self.shape[1]

    @property
    def period(self) -> float:
        return 2.0 * self.half_width

    @property
    def cell_area(self) -> float:
        return self.spacing ** 2

    @property
    def box_area(self) -> float:
        return (2.0 * self.half_width) ** 2

    def index(self, i1, i2):
        return np.asarray(i1) * self.shape[1] + np.asarray(i2)


class OperatorMatrix:
    """Block-diagonal operator on the spinful grid space.

    ``up`` and ``down`` are the two S^z sectors (sparse or dense).  Operators
    that are not block diagonal are not representable here; spin mixing is
    outside the model class.
    """

    __array_priority__ = 20

    def __init__(self, up, down, geometry: Geometry | None = None):
        if up.shape != down.shape:
            raise ValueError("spin blocks must have equal shapes")
        self.up = up
        self.down = down
        self.geometry = geometry

    @property
    def blocks(self):
        return (self.up, self.down)

    @property
    def dimension(self) -> int:
        return 2 * self.up.shape[0]

    @property
    def kernel_scale(self) -> float:
        return 1.0 if self.geometry is None else self.geometry.cell_area

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.up)

    @property
    def matrix(self):
        if self.is_sparse:
            return sp.block_diag(self.blocks, format="csr")
        z = np.zeros(self.up.shape, dtype=np.result_type(self.up, self.down))
        return np.block([[self.up, z], [z, self.down]])

    def dense(self) -> np.ndarray:
        m = self.matrix
        return m.toarray() if sp.issparse(m) else np.asarray(m)

    def block(self, s: int):
        return self.up if s == +1 else self.down

    def map(self, fn: Callable) -> "OperatorMatrix":
        return OperatorMatrix(fn(self.up), fn(self.down), self.geometry)

    def hermiticity_residual(self) -> float:
        res, scale = 0.0, 0.0
        for b in self.blocks:
            d = b - b.conj().T
            if sp.issparse(d):
                res = max(res, abs(d).max() if d.nnz else 0.0)
                scale = max(scale, abs(b).max() if b.nnz else 0.0)
            else:
                res = max(res, np.abs(d).max(initial=0.0))
                scale = max(scale, np.abs(b).max(initial=0.0))
        return res / scale if scale else res

    def __add__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        return OperatorMatrix(self.up + other.up, self.down + other.down, self.geometry)

    def __sub__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        return OperatorMatrix(self.up - other.up, self.down - other.down, self.geometry)

    def __mul__(self, c) -> "OperatorMatrix":
        return OperatorMatrix(self.up * c, self.down * c, self.geometry)

    __rmul__ = __mul__

    def __matmul__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        return OperatorMatrix(self.up @ other.up, self.down @ other.down, self.geometry)

    def __repr__(self):
        kind = "sparse" if self.is_sparse else "dense"
        return f"OperatorMatrix(dim={self.dimension}, {kind})"


def commutator(a, b):
    return a @ b - b @ a


# ---------------------------------------------------------------- potential

def potential(spec: HamiltonianSpec, xy: np.ndarray):
    """V and its gradient for V = v1 cos(2 pi x1) + v2 cos(2 pi x2)."""
    v1, v2 = spec.potential_amplitudes
    x1, x2 = xy[:, 0], xy[:, 1]
    V = v1 * np.cos(2 * np.pi * x1) + v2 * np.cos(2 * np.pi * x2)
    dV1 = -2 * np.pi * v1 * np.sin(2 * np.pi * x1)
    dV2 = -2 * np.pi * v2 * np.sin(2 * np.pi * x2)
    return V, dV1, dV2


def _soc_vector(spec: HamiltonianSpec, s: int, xy: np.ndarray) -> np.ndarray:
    """Spin-dependent shift of the momentum: soc * (s/2) * (1/2) (-d2 V, d1 V)."""
    if spec.backend != "continuum" or spec.soc_strength == 0.0:
        return np.zeros_like(xy)
    _, dV1, dV2 = potential(spec, xy)
    c = spec.soc_strength * (0.5 * s) * 0.5
    return c * np.column_stack([-dV2, dV1])


# ---------------------------------------------------------------- assembly

def _check_flux(spec: HamiltonianSpec, geom: Geometry):
    if geom.boundary != "torus":
        return
    for s in SPINS:
        total = spec.field_per_spin(s) * geom.period ** 2 / (2 * np.pi)
        if abs(total - round(total)) > 1e-9:
            raise ModelError(
                f"flux through the torus must be a multiple of 2*pi "
                f"(spin {SPIN_LABELS[SPINS.index(s)]}: {total:.6g} flux quanta)")


def _wrap_phase(b: float, T: np.ndarray, xy: np.ndarray) -> np.ndarray:
    """lambda_T(x) with psi(x + T) = exp(i lambda_T(x)) psi(x)."""
    return 0.5 * b * (T[0] * xy[..., 1] - T[1] * xy[..., 0])


def _forward_links(geom: Geometry, b: float, soc: np.ndarray, axis: int):
    """Forward links along ``axis``.

    Returns ``(src, dst, peierls, wrap)``: the hopping r -> r' carries
    ``exp(-i int_r^{r'} A)`` and, on a torus, the boundary factor
    ``exp(i lambda_T(r''))`` for the wrapped endpoint.
    """
    n1, n2 = geom.shape
    h = geom.spacing
    i1, i2 = np.meshgrid(np.arange(n1), np.arange(n2), indexing="ij")
    i1, i2 = i1.ravel(), i2.ravel()
    src = geom.index(i1, i2)
    j1, j2 = (i1 + 1, i2) if axis == 0 else (i1, i2 + 1)
    xy = geom.coords[src]
    # the gauge field component along the link is constant on it
    if axis == 0:
        a = -0.5 * b * xy[:, 1] - soc[src, 0]
    else:
        a = 0.5 * b * xy[:, 0] - soc[src, 1]
    peierls = np.exp(-1j * h * a)
    inside = (j1 if axis == 0 else j2) < geom.shape[axis]
    if geom.boundary == "torus":
        T = np.zeros(2)
        T[axis] = geom.period
        dst = geom.index(j1 % n1, j2 % n2)
        lam = np.where(inside, 0.0, _wrap_phase(b, T, geom.coords[dst]))
        return src, dst, peierls, np.exp(1j * lam)
    return (src[inside], geom.index(j1[inside], j2[inside]), peierls[inside],
            np.ones(int(inside.sum()), dtype=complex))


def _spin_block(spec: HamiltonianSpec, geom: Geometry, s: int) -> sp.csr_matrix:
    n = geom.n_sites
    h = geom.spacing
    b = spec.field_per_spin(s)
    soc = _soc_vector(spec, s, geom.coords)
    if spec.backend == "continuum":
        t = 0.5 / h ** 2
        V, _, _ = potential(spec, geom.coords)
        diag = 4 * t + V
    else:
        t = 1.0
        diag = np.zeros(n)
    diag = diag + 2 * spec.B1 * spec.zeeman_coupling * (0.5 * s)
    rows, cols, vals = [], [], []
    for axis in (0, 1):
        r, c, peierls, wrap = _forward_links(geom, b, soc, axis)
        rows.append(r)
        cols.append(c)
        vals.append(-t * peierls * wrap)
    off = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                        shape=(n, n)).tocsr()
    H = off + off.conj().T + sp.diags(diag.astype(complex))
    return H.tocsr()


def build_continuum_hamiltonian(spec: HamiltonianSpec) -> OperatorMatrix:
    """H = (1/2) P(B2)^2 + V + 2 B1 zeeman S^z on the finite-difference grid."""
    if spec.backend != "continuum":
        raise ModelError("spec.backend must be 'continuum'")
    geom = Geometry.from_spec(spec)
    _check_flux(spec, geom)
    return OperatorMatrix(_spin_block(spec, geom, +1), _spin_block(spec, geom, -1), geom)


def build_tightbinding_hamiltonian(spec: HamiltonianSpec) -> OperatorMatrix:
    """Spinful Hofstadter model with a spin-dependent flux offset."""
    if spec.backend != "tightbinding":
        raise ModelError("spec.backend must be 'tightbinding'")
    geom = Geometry.from_spec(spec)
    if geom.boundary == "torus" and min(geom.shape) < 3:
        raise ModelError("torus needs at least 3 sites per side")
    _check_flux(spec, geom)
    return OperatorMatrix(_spin_block(spec, geom, +1), _spin_block(spec, geom, -1), geom)


def build_hamiltonian(spec: HamiltonianSpec) -> OperatorMatrix:
    if spec.backend == "continuum":
        return build_continuum_hamiltonian(spec)
    return build_tightbinding_hamiltonian(spec)


# ---------------------------------------------------------------- observables

def spin_operator(geometry: Geometry) -> OperatorMatrix:
    """S^z = 1 (x) sigma^z / 2."""
    eye = sp.identity(geometry.n_sites, dtype=complex, format="csr")
    return OperatorMatrix(0.5 * eye, -0.5 * eye, geometry)


def spin_projector(geometry: Geometry, s: int) -> OperatorMatrix:
    eye = sp.identity(geometry.n_sites, dtype=complex, format="csr")
    zero = sp.csr_matrix((geometry.n_sites, geometry.n_sites), dtype=complex)
    return OperatorMatrix(eye, zero, geometry) if s == +1 else OperatorMatrix(zero, eye, geometry)


def position_operators(geometry: Geometry) -> tuple[OperatorMatrix, OperatorMatrix]:
    if geometry.boundary == "torus":
        raise ModelError("position operator undefined on torus")
    out = []
    for j in (0, 1):
        d = sp.diags(geometry.coords[:, j].astype(complex), format="csr")
        out.append(OperatorMatrix(d, d.copy(), geometry))
    return tuple(out)


def momentum_operators(spec: HamiltonianSpec, B: float | None = None,
                       geometry: Geometry | None = None) -> tuple[OperatorMatrix, OperatorMatrix]:
    """Central-difference magnetic momenta P_j(B) including the spin-orbit shift.

    ``B`` overrides ``spec.B2`` (tight-binding: the orbital part of the flux).
    """
    if B is not None:
        spec = replace(spec, B2=float(B))
    geom = Geometry.from_spec(spec)
    if geometry is not None and (geometry.shape != geom.shape or geometry.spacing != geom.spacing
                                 or geometry.boundary != geom.boundary):
        raise ModelError("geometry does not match the spec discretization")
    _check_flux(spec, geom)
    n, h = geom.n_sites, geom.spacing
    out = [[None, None], [None, None]]
    for k, s in enumerate(SPINS):
        b = spec.field_per_spin(s)
        soc = _soc_vector(spec, s, geom.coords)
        A = 0.5 * b * np.column_stack([-geom.coords[:, 1], geom.coords[:, 0]])
        for axis in (0, 1):
            r, c, _, wrap = _forward_links(geom, b, soc, axis)
            F = sp.coo_matrix((wrap, (r, c)), shape=(n, n)).tocsr()
            kin = (-1j / (2 * h)) * (F - F.conj().T)
            diag = -A[:, axis] + soc[:, axis]
            out[axis][k] = (kin + sp.diags(diag.astype(complex))).tocsr()
    return (OperatorMatrix(out[0][0], out[0][1], geom), OperatorMatrix(out[1][0], out[1][1], geom))


def velocity_operators(H: OperatorMatrix) -> tuple[OperatorMatrix, OperatorMatrix]:
    """Lattice velocities i[H, X_j]; the discrete counterpart of P_j(B).

    On the torus X_j is not defined but the velocity is: its kernel is
    i H(x, y) (y_j - x_j) with the link displacement taken as the minimal image.
    """
    geom = H.geometry
    if geom.boundary != "torus":
        X1, X2 = position_operators(geom)
        return tuple(1j * (H @ X - X @ H) for X in (X1, X2))
    out = [[], []]
    for M in H.blocks:
        M = sp.coo_matrix(M)
        for j in (0, 1):
            d = geom.coords[M.col, j] - geom.coords[M.row, j]
            d = d - geom.period * np.round(d / geom.period)
            out[j].append(sp.csr_matrix((1j * M.data * d, (M.row, M.col)), shape=M.shape))
    return tuple(OperatorMatrix(up, down, geom) for up, down in out)


# ---------------------------------------------------------------- covariance

def _translation_data(geometry: Geometry, b: float, n: tuple[int, int]):
    """Permutation and phases realizing K(x - n; y - n) on the torus."""
    h = geometry.spacing
    shift = np.array(n, dtype=float)
    steps = shift / h
    if np.any(np.abs(steps - np.round(steps)) > 1e-9):
        raise ModelError(f"translation {n} is incommensurate with the grid")
    steps = np.round(steps).astype(int)
    # the magnetic translation must commute with the torus boundary condition
    for nj in n:
        q = b * geometry.period * nj / (2 * np.pi)
        if abs(q - round(q)) > 1e-9:
            raise ModelError(f"translation {n} is incommensurate with the torus flux")
    n1, n2 = geometry.shape
    i1, i2 = np.meshgrid(np.arange(n1), np.arange(n2), indexing="ij")
    i1, i2 = i1.ravel(), i2.ravel()
    k1, k2 = i1 - steps[0], i2 - steps[1]
    a, w1 = np.divmod(k1, n1)
    c, w2 = np.divmod(k2, n2)
    perm = geometry.index(w1, w2)
    w = geometry.coords[perm]
    P = geometry.period
    T1 = np.array([P, 0.0])
    T2 = np.array([0.0, P])
    # z = w + a T1 + c T2: psi(z) = exp(i[lambda_{aT1}(w + cT2) + lambda_{cT2}(w)]) psi(w)
    wc = w + c[:, None] * T2
    lam = (_wrap_phase(b, T1, wc) * a + _wrap_phase(b, T2, w) * c)
    return perm, np.exp(1j * lam)


def covariance_check(op: OperatorMatrix, n: tuple[int, int], spec: HamiltonianSpec) -> float:
    """max |e^{i b (x2 n1 - x1 n2)/2} K(x-n; y-n) e^{-i b (y2 n1 - y1 n2)/2} - K(x; y)|.

    Needs a torus geometry; ``b`` is the uniform field of each spin sector.
    """
    geom = op.geometry
    if geom is None or geom.boundary != "torus":
        raise ModelError("covariance check needs a torus geometry")
    res = 0.0
    x = geom.coords
    for s, K in zip(SPINS, op.blocks):
        b = spec.field_per_spin(s)
        perm, ph = _translation_data(geom, b, n)
        K = K.toarray() if sp.issparse(K) else np.asarray(K)
        shifted = ph[:, None] * K[np.ix_(perm, perm)] * ph.conj()[None, :]
        chi = np.exp(0.5j * b * (x[:, 1] * n[0] - x[:, 0] * n[1]))
        lhs = chi[:, None] * shifted * chi.conj()[None, :]
        res = max(res, float(np.abs(lhs - K).max()))
    return res
