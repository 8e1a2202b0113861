"""Trace per unit volume and the real-space markers built on it.

Every marker is a window average of a kernel diagonal.  Projections are
handled through their occupied vectors ``V`` (``Pi = V V^*``) so that the
Chern marker costs two small ``rank x rank`` matrices instead of dense
``N x N`` products:

    Pi X1 Pi X2 Pi - Pi X2 Pi X1 Pi = V (a b - b a) V^*,   a = V^* X1 V,  b = V^* X2 V

which is the same operator as ``Pi [[X1, Pi], [X2, Pi]] Pi``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp

from .model import SPINS, Geometry, ModelError, OperatorMatrix, position_operators
from .spectral import Projection


class MarkerError(ValueError):
    pass


# ---------------------------------------------------------------- windows

@dataclass(frozen=True)
class BulkWindow:
    """A set of grid sites standing in for the unit cell of the infinite sample."""

    sites: np.ndarray
    geometry: Geometry
    min_buffer: float = 1.0

    def __post_init__(self):
        sites = np.unique(np.asarray(self.sites, dtype=int))
        if sites.size == 0:
            raise MarkerError("window is empty")
        if sites.min() < 0 or sites.max() >= self.geometry.n_sites:
            raise MarkerError("window sites outside the grid")
        object.__setattr__(self, "sites", sites)
        if self.buffer_distance < self.min_buffer:
            raise MarkerError(
                f"window overlaps the boundary region (buffer {self.buffer_distance:.3g} "
                f"< {self.min_buffer:.3g})")

    @property
    def area(self) -> float:
        return self.sites.size * self.geometry.cell_area

    @property
    def buffer_distance(self) -> float:
        """Distance from the window to the nearest deleted (Dirichlet) site."""
        g = self.geometry
        if g.boundary == "torus":
            return math.inf
        x = g.coords[self.sites]
        L = g.half_width
        # continuum: deleted sites sit on x = +-L; lattice: on -L and L + 1
        lo, hi = (-L, L) if g.backend == "continuum" else (-L, L + 1)
        return float(min((x - lo).min(), (hi - x).min()))

    @classmethod
    def rectangle(cls, geometry: Geometry, lower, upper, min_buffer: float = 1.0) -> "BulkWindow":
        """Sites with lower_j < x_j <= upper_j."""
        x = geometry.coords
        eps = 1e-9 * geometry.spacing
        mask = np.all((x > np.asarray(lower) + eps) & (x <= np.asarray(upper) + eps), axis=1)
        return cls(np.flatnonzero(mask), geometry, min_buffer)

    @classmethod
    def default(cls, geometry: Geometry, min_buffer: float | None = None) -> "BulkWindow":
        """Unit cell (0, 1]^2 for the continuum, a central (L/2)x(L/2) block on the lattice."""
        L = geometry.half_width
        if geometry.backend == "continuum":
            lo, hi = (0.0, 0.0), (1.0, 1.0)
            buf = 1.0 if min_buffer is None else min_buffer
        else:
            side = max(1, L // 2)
            a = -(side // 2)
            lo, hi = (a - 0.5,) * 2, (a + side - 0.5,) * 2
            buf = max(1.0, L / 4) if min_buffer is None else min_buffer
        return cls.rectangle(geometry, lo, hi, buf)

    def shifted(self, n: tuple[int, int]) -> "BulkWindow":
        g = self.geometry
        steps = np.round(np.asarray(n, dtype=float) / g.spacing).astype(int)
        i1, i2 = np.divmod(self.sites, g.shape[1])
        i1, i2 = i1 + steps[0], i2 + steps[1]
        if g.boundary == "torus":
            i1, i2 = i1 % g.shape[0], i2 % g.shape[1]
        elif i1.min() < 0 or i2.min() < 0 or i1.max() >= g.shape[0] or i2.max() >= g.shape[1]:
            raise MarkerError("shifted window leaves the sample")
        return BulkWindow(g.index(i1, i2), g, self.min_buffer)

    def union(self, other: "BulkWindow") -> "BulkWindow":
        return BulkWindow(np.concatenate([self.sites, other.sites]), self.geometry, self.min_buffer)


# ---------------------------------------------------------------- helpers

def _block_vectors(Pi) -> tuple[np.ndarray, ...]:
    """Occupied vectors per spin block of a projection-like input."""
    if isinstance(Pi, Projection):
        if not Pi.is_blocked:
            raise MarkerError("markers need a spin-blocked projection (see spin_decompose)")
        return Pi.vectors
    if isinstance(Pi, OperatorMatrix):
        out = []
        for P in Pi.blocks:
            P = P.toarray() if sp.issparse(P) else np.asarray(P)
            w, U = np.linalg.eigh(0.5 * (P + P.conj().T))
            out.append(U[:, w > 0.5])
        return tuple(out)
    raise TypeError(f"expected Projection or OperatorMatrix, got {type(Pi).__name__}")


def _window_diag(op, window: BulkWindow) -> np.ndarray:
    """Diagonal entries of an N x N block at the window sites."""
    idx = window.sites
    if sp.issparse(op):
        return np.asarray(op.diagonal())[idx]
    return np.asarray(op)[idx, idx]


def trace_per_unit_volume(A, window: BulkWindow) -> float:
    """(1/|W|) sum over window sites and both spins of the diagonal of A.

    Matrix entries carry the grid-cell measure (A_xx = K(x, x) h^2), so the
    result is a density per unit area.  The imaginary part is returned too
    when A is not Hermitian.
    """
    if isinstance(A, OperatorMatrix):
        if A.geometry is not None and A.geometry.shape != window.geometry.shape:
            raise MarkerError("operator and window live on different grids")
        total = sum(_window_diag(b, window).sum() for b in A.blocks)
    else:
        n = window.geometry.n_sites
        M = A
        if M.shape[0] != 2 * n:
            raise MarkerError("operator dimension does not match the window geometry")
        d = M.diagonal() if sp.issparse(M) else np.diag(M)
        total = d[window.sites].sum() + d[window.sites + n].sum()
    val = total / window.area
    return float(val.real) if abs(val.imag) <= 1e-12 * max(1.0, abs(val)) else complex(val)


def _density(V: np.ndarray, window: BulkWindow) -> float:
    rows = V[window.sites]
    return float(np.sum(np.abs(rows) ** 2))


def isdos(Pi, window: BulkWindow) -> float:
    """tau(S^z Pi) = (tau(Pi_up) - tau(Pi_down)) / 2."""
    Vu, Vd = _block_vectors(Pi)
    return 0.5 * (_density(Vu, window) - _density(Vd, window)) / window.area


def _positions(window: BulkWindow, X1=None, X2=None):
    g = window.geometry
    if g.boundary == "torus":
        raise MarkerError("position operator undefined on torus: Chern marker needs an open sample")
    if X1 is None or X2 is None:
        X1, X2 = position_operators(g)
    return X1, X2


def _chern_block(V: np.ndarray, x1, x2, window: BulkWindow, imag_tol: float = 1e-8) -> float:
    if V.shape[1] == 0:
        return 0.0
    a = V.conj().T @ (x1 @ V)
    b = V.conj().T @ (x2 @ V)
    K = a @ b - b @ a
    rows = V[window.sites]
    diag = np.einsum("ij,jk,ik->i", rows, K, rows.conj())
    val = 2j * np.pi * diag.sum() / window.area
    if abs(val.imag) > imag_tol * max(1.0, abs(val.real)):
        raise MarkerError(f"Chern marker has imaginary part {val.imag:.3g}")
    return float(val.real)


def chern_pair(Pi, window: BulkWindow, X1=None, X2=None) -> tuple[float, float]:
    """(Ch(Pi_up), Ch(Pi_down)) with Ch(P) = 2 pi i tau(P [[X1, P], [X2, P]] P)."""
    X1, X2 = _positions(window, X1, X2)
    Vs = _block_vectors(Pi)
    return tuple(_chern_block(V, X1.block(s), X2.block(s), window) for s, V in zip(SPINS, Vs))


def chern_marker(Pi, X1=None, X2=None, window: BulkWindow | None = None) -> float:
    """Chern marker of the full (both spin) projection."""
    if window is None:
        raise MarkerError("chern_marker needs a window")
    up, down = chern_pair(Pi, window, X1, X2)
    return up + down


def _check_commutes(Pi, Sz):
    if Sz is None:
        return
    if isinstance(Pi, (Projection, OperatorMatrix)) and isinstance(Sz, OperatorMatrix):
        return  # both block diagonal in the same S^z basis
    P = Pi.dense() if hasattr(Pi, "dense") else np.asarray(Pi)
    S = Sz.dense() if hasattr(Sz, "dense") else np.asarray(Sz)
    if np.abs(P @ S - S @ P).max() > 1e-10:
        raise MarkerError("projection does not commute with S^z")


def spin_chern_marker(Pi, Sz=None, X1=None, X2=None, window: BulkWindow | None = None) -> float:
    """SCh = 2 pi i tau(S^z Pi [[X1, Pi], [X2, Pi]] Pi) = (Ch_up - Ch_down) / 2."""
    if window is None:
        raise MarkerError("spin_chern_marker needs a window")
    _check_commutes(Pi, Sz)
    up, down = chern_pair(Pi, window, X1, X2)
    return 0.5 * (up - down)


def spin_decompose(Pi, tol: float = 1e-10) -> tuple[Projection, Projection]:
    """Pi = Pi_up (+) Pi_down with Pi_s = P_s Pi P_s.

    Accepts a spin-blocked Projection or a single dense projection on the
    full space ordered [up sites, down sites].
    """
    if isinstance(Pi, Projection) and Pi.is_blocked:
        Vu, Vd = Pi.vectors
        n = Vu.shape[0]
        empty = np.zeros((n, 0), dtype=complex)
        return (Projection([Vu, empty], Pi.geometry, Pi.labels),
                Projection([empty, Vd], Pi.geometry, Pi.labels))
    P = Pi.dense() if hasattr(Pi, "dense") else np.asarray(Pi)
    n = P.shape[0] // 2
    off = max(np.abs(P[:n, n:]).max(initial=0.0), np.abs(P[n:, :n]).max(initial=0.0))
    if off > tol:
        raise MarkerError(f"[Pi, S^z] != 0 (off-diagonal spin block {off:.3g})")
    parts = []
    for blk in (P[:n, :n], P[n:, n:]):
        w, U = np.linalg.eigh(0.5 * (blk + blk.conj().T))
        parts.append(U[:, w > 0.5])
    geom = getattr(Pi, "geometry", None)
    empty = np.zeros((n, 0), dtype=complex)
    return Projection([parts[0], empty], geom), Projection([empty, parts[1]], geom)


def time_reversal_check(Pi, field: float = 0.0, window: BulkWindow | None = None) -> float:
    """max(||Theta Pi Theta^-1 - Pi||, |Ch_up + Ch_down|) with Theta = i sigma^y K.

    Theta maps diag(P_up, P_down) to diag(conj P_down, conj P_up).  The
    operator distance is bounded through the occupied vectors,
    ||P - Q|| <= max(||(1 - P) V_Q||_F, ||(1 - Q) V_P||_F) for equal ranks,
    and is reported as 1 when the ranks differ.  The Chern part is skipped
    when no window is given or the geometry is a torus.
    """
    if field != 0.0:
        raise MarkerError("time reversal is a symmetry only at B = 0")
    Vu, Vd = _block_vectors(Pi)
    if Vu.shape[1] != Vd.shape[1]:
        op_res = 1.0
    else:
        Wd = Vd.conj()
        Wu = Vu.conj()
        r1 = np.linalg.norm(Wd - Vu @ (Vu.conj().T @ Wd))
        r2 = np.linalg.norm(Wu - Vd @ (Vd.conj().T @ Wu))
        op_res = float(max(r1, r2))
    if window is None or window.geometry.boundary == "torus":
        return op_res
    up, down = chern_pair(Pi, window)
    return max(op_res, abs(up + down))


# ---------------------------------------------------------------- kernel decay

def kernel_decay_profile(Pi, geometry: Geometry | None = None, sources: np.ndarray | None = None,
                         r_min: float = 2.0, r_max: float | None = None,
                         bin_width: float | None = None) -> tuple[float, float, float]:
    """Fit max |Pi(x; y)| over |x - y| bins to C exp(-alpha |x - y|).

    ``sources`` are the rows x (default: the central default window).  The
    kernel norm takes the larger spin block.  Returns (alpha, C, r2); a
    kernel with no weight off the diagonal gives alpha = inf.
    """
    Vs = _block_vectors(Pi)
    if geometry is None:
        geometry = getattr(Pi, "geometry", None)
    if geometry is None:
        raise MarkerError("kernel_decay_profile needs the grid geometry")
    if sources is None:
        g = geometry
        if g.boundary == "torus":
            sources = np.array([g.index(g.shape[0] // 2, g.shape[1] // 2)])
        else:
            sources = BulkWindow.default(g, min_buffer=0.0).sites
    h = geometry.spacing
    r_max = geometry.half_width if r_max is None else r_max
    bin_width = max(h, 0.5) if bin_width is None else bin_width
    x = geometry.coords
    dist = np.linalg.norm(x[sources][:, None, :] - x[None, :, :], axis=-1)
    if geometry.boundary == "torus":
        d = np.abs(x[sources][:, None, :] - x[None, :, :])
        d = np.minimum(d, geometry.period - d)
        dist = np.linalg.norm(d, axis=-1)
    kern = np.zeros_like(dist)
    for V in Vs:
        if V.shape[1]:
            kern = np.maximum(kern, np.abs(V[sources] @ V.conj().T))
    # kernel density: entries carry the cell measure
    kern = kern / geometry.cell_area
    sel = (dist >= r_min) & (dist <= r_max)
    if not np.any(kern[dist > 0.5 * h] > 1e-300):
        return math.inf, float(kern.max(initial=0.0)), 1.0
    bins = np.floor((dist[sel] - r_min) / bin_width).astype(int)
    vals = kern[sel]
    nb = bins.max() + 1
    peak = np.zeros(nb)
    np.maximum.at(peak, bins, vals)
    centers = r_min + (np.arange(nb) + 0.5) * bin_width
    ok = peak > 1e-300
    if ok.sum() < 3:
        raise MarkerError("too few distance bins for a decay fit")
    r, y = centers[ok], np.log(peak[ok])
    slope, icpt = np.polyfit(r, y, 1)
    fit = slope * r + icpt
    ss_res = float(np.sum((y - fit) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
    return float(-slope), float(np.exp(icpt)), float(r2)


# ---------------------------------------------------------------- report

MARKER_FIELDS = ("isdos", "ch_up", "ch_down", "sch", "nearest_int_up", "nearest_int_down",
                 "quantization_residual", "decay_rate_alpha", "decay_fit_r2")


def _json_float(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


@dataclass
class MarkerReport:
    isdos: float
    ch_up: float
    ch_down: float
    sch: float
    nearest_int_up: int
    nearest_int_down: int
    quantization_residual: float
    decay_rate_alpha: float
    decay_fit_r2: float
    flags: list = field(default_factory=list)

    def __post_init__(self):
        if abs(self.sch - 0.5 * (self.ch_up - self.ch_down)) > 1e-12 * max(1.0, abs(self.sch)):
            raise MarkerError("sch must equal (ch_up - ch_down) / 2")

    @property
    def gapless(self) -> bool:
        return "gapless" in self.flags

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: _json_float(d[k]) for k in MARKER_FIELDS}

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def quantization_residual(ch_up: float, ch_down: float) -> float:
    sch = 0.5 * (ch_up - ch_down)
    return float(max(abs(ch_up - round(ch_up)), abs(ch_down - round(ch_down)),
                     abs(sch - round(2 * sch) / 2)))


def marker_report(Pi, window: BulkWindow, decay: bool = True, decay_min_r2: float = 0.5) -> MarkerReport:
    """All markers of a spin-blocked projection on one window."""
    up, down = chern_pair(Pi, window)
    flags = []
    alpha, r2 = math.nan, math.nan
    if decay:
        alpha, _, r2 = kernel_decay_profile(Pi, window.geometry)
        if not (r2 >= decay_min_r2 and alpha > 0):
            flags.append("gapless")
    return MarkerReport(isdos=isdos(Pi, window), ch_up=up, ch_down=down, sch=0.5 * (up - down),
                        nearest_int_up=int(round(up)), nearest_int_down=int(round(down)),
                        quantization_residual=quantization_residual(up, down),
                        decay_rate_alpha=alpha, decay_fit_r2=r2, flags=flags)
