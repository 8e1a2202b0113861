"""Eigensolvers, gaps, contours, Riesz projections and resolvent calculus.

All routines accept either an :class:`~stredalab.model.OperatorMatrix`
(handled block by block, one block per S^z sector) or a plain dense/sparse
matrix (a single block).  Outputs mirror the input kind.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla
import scipy.special as special
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .model import SPIN_LABELS, Geometry, OperatorMatrix

log = logging.getLogger(__name__)

DENSE_CUTOFF = 4000
HERMITICITY_TOL = 1e-12
COLLISION_TOL = 1e-10


class SpectralError(RuntimeError):
    """Numerical failure in the spectral pipeline (gap closed, singular solve...)."""


class GapError(SpectralError):
    pass


def _blocks(H):
    if isinstance(H, OperatorMatrix):
        return list(H.blocks), list(SPIN_LABELS), H.geometry
    return [H], ["all"], None


def _as_dense(A):
    return A.toarray() if sp.issparse(A) else np.asarray(A)


# ---------------------------------------------------------------- spectrum

@dataclass
class SpectralBlock:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    label: str
    complete: bool = True


@dataclass
class Spectrum:
    blocks: list[SpectralBlock]
    geometry: Geometry | None = None

    @property
    def eigenvalues(self) -> np.ndarray:
        return self._merged()[0]

    @property
    def labels(self) -> np.ndarray:
        return self._merged()[1]

    def _merged(self):
        vals = np.concatenate([b.eigenvalues for b in self.blocks])
        labs = np.concatenate([[k] * len(b.eigenvalues) for k, b in enumerate(self.blocks)])
        order = np.lexsort((labs, vals))
        names = np.array([b.label for b in self.blocks])
        return vals[order], names[labs[order]]

    @property
    def is_blocked(self) -> bool:
        return len(self.blocks) == 2

    def residuals(self, H) -> float:
        """max ||H v - lambda v|| over all stored eigenpairs."""
        res = 0.0
        for blk, M in zip(self.blocks, _blocks(H)[0]):
            V = blk.eigenvectors
            if V.shape[1]:
                res = max(res, float(np.abs(M @ V - V * blk.eigenvalues).max()))
        return res


def _fix_phases(V: np.ndarray) -> np.ndarray:
    """Make the largest-magnitude component of every column real positive."""
    if V.shape[1] == 0:
        return V
    idx = np.argmax(np.abs(V) > (1 - 1e-8) * np.abs(V).max(axis=0), axis=0)
    lead = V[idx, np.arange(V.shape[1])]
    return V * (np.abs(lead) / lead)


def _lower_bound(M) -> float:
    """Gershgorin lower bound on the spectrum of a Hermitian matrix."""
    if sp.issparse(M):
        d = M.diagonal().real
        off = np.asarray(abs(M).sum(axis=1)).ravel() - np.abs(M.diagonal())
    else:
        d = np.diag(M).real
        off = np.abs(M).sum(axis=1) - np.abs(np.diag(M))
    return float(np.min(d - off))


def _partial_eigh(M, upper: float, k0: int = 64, above: int = 4):
    """All eigenpairs below ``upper`` plus ``above`` more, by shift-invert."""
    n = M.shape[0]
    sigma = _lower_bound(M) - 1.0
    k = min(k0, n - 2)
    while True:
        vals, vecs = spla.eigsh(M.tocsc() if sp.issparse(M) else M, k=k, sigma=sigma,
                                which="LM", tol=1e-13)
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
        if np.sum(vals > upper) >= above or k >= n - 2:
            return vals, vecs
        k = min(2 * k, n - 2)


def eigensolve(H, mode: str = "auto", upper: float | None = None,
               dense_cutoff: int = DENSE_CUTOFF, cache: "EigenCache | None" = None,
               cache_key: str | None = None) -> Spectrum:
    """Diagonalize ``H`` block by block.

    ``mode='dense'`` computes the full spectrum; ``mode='partial'`` computes
    every eigenpair below ``upper`` (plus a few above) by sparse shift-invert
    and marks the blocks incomplete.  ``auto`` picks partial above
    ``dense_cutoff`` per block when ``upper`` is given.
    """
    if cache is not None and cache_key is not None:
        hit = cache.load(cache_key)
        if hit is not None:
            log.info("eigen cache hit %s", cache_key[:12])
            hit.geometry = _blocks(H)[2]
            return hit
    mats, labels, geom = _blocks(H)
    out = []
    for M, label in zip(mats, labels):
        scale = abs(M).max() if sp.issparse(M) else np.abs(M).max(initial=0.0)
        herm = abs(M - M.conj().T).max() if sp.issparse(M) else np.abs(M - M.conj().T).max(initial=0.0)
        if scale and herm > HERMITICITY_TOL * scale:
            raise SpectralError(f"non-Hermitian input (residual {herm:.3g})")
        n = M.shape[0]
        use = mode
        if mode == "auto":
            use = "partial" if (n > dense_cutoff and upper is not None) else "dense"
        if use == "dense":
            if n > dense_cutoff:
                raise SpectralError(
                    f"block dimension {n} above dense cutoff {dense_cutoff}; use mode='partial'")
            vals, vecs = sla.eigh(_as_dense(M), driver="evr")
            out.append(SpectralBlock(vals, _fix_phases(vecs), label, True))
        elif use == "partial":
            if upper is None:
                raise SpectralError("partial mode needs an upper energy")
            vals, vecs = _partial_eigh(M, upper)
            out.append(SpectralBlock(vals, _fix_phases(vecs), label, vals.size >= n))
        else:
            raise ValueError(f"unknown mode {mode!r}")
    spec = Spectrum(out, geom)
    if cache is not None and cache_key is not None:
        cache.store(cache_key, spec)
    return spec


# ---------------------------------------------------------------- gaps

@dataclass(frozen=True)
class GapInfo:
    E_F: float
    gap_lower: float
    gap_upper: float
    rank_below: int
    rank_per_block: tuple[int, ...] = ()

    @property
    def width(self) -> float:
        return self.gap_upper - self.gap_lower

    @property
    def distance(self) -> float:
        """Distance from E_F to the nearest eigenvalue."""
        return min(self.E_F - self.gap_lower, self.gap_upper - self.E_F)


def detect_gap(spectrum: Spectrum, E_F: float) -> GapInfo:
    lo, hi = -np.inf, np.inf
    ranks = []
    for blk in spectrum.blocks:
        ev = blk.eigenvalues
        if ev.size and np.min(np.abs(ev - E_F)) <= COLLISION_TOL:
            raise GapError(f"detect_gap: E_F = {E_F:.12g} inside spectrum")
        if not blk.complete and (ev.size == 0 or ev.max() < E_F):
            raise GapError("detect_gap: partial spectrum does not reach E_F")
        below = ev[ev < E_F]
        above = ev[ev > E_F]
        ranks.append(int(below.size))
        if below.size:
            lo = max(lo, float(below.max()))
        if above.size:
            hi = min(hi, float(above.min()))
    return GapInfo(float(E_F), lo, hi, int(sum(ranks)), tuple(ranks))


# ---------------------------------------------------------------- projections

class Projection:
    """Spectral projection stored through its range (orthonormal columns).

    Dense matrices are materialized on demand only.
    """

    def __init__(self, vectors, geometry: Geometry | None = None, labels=None):
        self.vectors = tuple(vectors)
        self.geometry = geometry
        self.labels = tuple(labels) if labels is not None else tuple(f"b{k}" for k in range(len(vectors)))
        self._dense = {}

    @property
    def rank(self) -> int:
        return sum(V.shape[1] for V in self.vectors)

    @property
    def is_blocked(self) -> bool:
        return len(self.vectors) == 2

    def block(self, k: int) -> np.ndarray:
        if k not in self._dense:
            V = self.vectors[k]
            self._dense[k] = V @ V.conj().T
        return self._dense[k]

    @property
    def up(self):
        return self.block(0)

    @property
    def down(self):
        return self.block(1)

    @property
    def blocks(self):
        return tuple(self.block(k) for k in range(len(self.vectors)))

    def as_operator(self):
        if self.is_blocked:
            return OperatorMatrix(self.block(0), self.block(1), self.geometry)
        return self.block(0)

    def dense(self) -> np.ndarray:
        return sla.block_diag(*self.blocks)

    def idempotency_residual(self) -> float:
        return max(float(np.abs(P @ P - P).max(initial=0.0)) for P in self.blocks)


def fermi_projection(spectrum: Spectrum, gap: GapInfo) -> Projection:
    vecs = []
    for blk in spectrum.blocks:
        vecs.append(blk.eigenvectors[:, blk.eigenvalues < gap.E_F])
    labels = [b.label for b in spectrum.blocks]
    return Projection(vecs, spectrum.geometry, labels)


# ---------------------------------------------------------------- contour

@dataclass
class Contour:
    nodes: np.ndarray
    weights: np.ndarray
    enclosed_interval: tuple[float, float]
    imag_half_height: float = 0.0
    panels: int = 0
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.nodes)

    def integrate(self, f) -> complex:
        return sum(w * f(z) for z, w in zip(self.nodes, self.weights))


def _graded(length: float, d: float) -> np.ndarray:
    """Breakpoints on [0, length] with panels doubling away from 0, the first about d."""
    k = max(1, int(np.ceil(np.log2(length / max(d, 1e-300) + 1.0))))
    k = min(k, 40)
    return length * (2.0 ** np.arange(k + 1) - 1) / (2.0 ** k - 1)


def _panel_rule(a: complex, b: complex, t: np.ndarray, wt: np.ndarray):
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    return mid + half * t, half * wt


def _rectangle_contour(gap: GapInfo, lam_min: float, d_left: float, nodes: int,
                       order: int | None) -> Contour:
    """Positively oriented rectangle with Gauss-Legendre panels.

    Vertical sides cross the real axis at E_F and at lambda_min - 1, the
    horizontal sides sit at +-(gap_width/2 + 1).  The vertical sides are
    graded geometrically towards the real axis so the nearest eigenvalue
    is resolved.
    """
    E_F = gap.E_F
    width = gap.width
    if not np.isfinite(width):
        finite = [abs(v - E_F) for v in (gap.gap_lower, gap.gap_upper) if np.isfinite(v)]
        width = 2 * min(finite) if finite else 2.0
    x_left, x_right = lam_min - 1.0, E_F
    Y = width / 2 + 1.0
    d_right = gap.distance if np.isfinite(gap.distance) else width / 2
    right = _graded(Y, d_right)
    left = _graded(Y, d_left)
    length = x_right - x_left
    n_h = max(1, int(np.ceil(length / Y)))
    horiz = np.linspace(0.0, length, n_h + 1)
    n_panels = 2 * (len(right) - 1) + 2 * (len(left) - 1) + 2 * n_h
    p = order or max(8, int(np.ceil(nodes / n_panels)))
    t, wt = np.polynomial.legendre.leggauss(p)

    segs = []
    # right side, from the axis up, then top, left side down, bottom, right side up to the axis
    segs += [(x_right + 1j * right[k], x_right + 1j * right[k + 1]) for k in range(len(right) - 1)]
    segs += [(x_right - horiz[k] + 1j * Y, x_right - horiz[k + 1] + 1j * Y) for k in range(n_h)]
    segs += [(x_left + 1j * left[k + 1], x_left + 1j * left[k]) for k in reversed(range(len(left) - 1))]
    segs += [(x_left - 1j * left[k], x_left - 1j * left[k + 1]) for k in range(len(left) - 1)]
    segs += [(x_left + horiz[k] - 1j * Y, x_left + horiz[k + 1] - 1j * Y) for k in range(n_h)]
    segs += [(x_right - 1j * right[k + 1], x_right - 1j * right[k]) for k in reversed(range(len(right) - 1))]
    zs, ws = zip(*(_panel_rule(a, b, t, wt) for a, b in segs))
    return Contour(np.concatenate(zs), np.concatenate(ws), (x_left, x_right), Y, len(segs),
                   {"method": "rectangle", "order": p, "d_right": d_right})


def _mobius(src, dst) -> np.ndarray:
    """2x2 matrix of the Moebius map sending the three points ``src`` to ``dst``."""
    def to_std(z1, z2, z3):
        # (z1, z2, z3) -> (0, 1, inf)
        return np.array([[z2 - z3, -z1 * (z2 - z3)], [z2 - z1, -z3 * (z2 - z1)]], dtype=complex)
    return np.linalg.inv(to_std(*dst)) @ to_std(*src)


def _conformal_contour(a: float, b: float, c: float, nodes: int) -> Contour:
    """Trapezoid rule on the conformal image of a circle separating [a, b] from [c, inf).

    A Moebius map T sends (a, b, c, inf) to (-1/k, -1, 1, 1/k); u -> sn(u, k)
    maps the cylinder |Re u| < K, Im u mod 2K', onto the plane slit along
    both intervals.  Equispaced nodes on Re u = 0 converge geometrically,
    like exp(-pi K N / K'), which depends on the gap only through log K'.
    """
    chi = (c - b) / (c - a)                     # cross ratio of (a, b, c, inf)
    k = chi / (2 - chi + 2 * np.sqrt(1 - chi))  # 4k / (1 + k)^2 = chi
    m = k * k
    Kp = special.ellipk(1 - m)
    K = special.ellipk(m)
    Tinv = _mobius((-1 / k, -1.0, 1.0), (a, b, c))
    y = (np.arange(nodes) + 0.5) * 2 * Kp / nodes
    # imaginary-argument transformation: sn(iy, k) = i sc(y, k'), d sn / du = cn dn
    sn_, cn_, dn_, _ = special.ellipj(y, 1 - m)
    s = 1j * sn_ / cn_
    dsdy = 1j * (1.0 / cn_) * (dn_ / cn_)
    (A, B), (C, D) = Tinv
    w = (A * s + B) / (C * s + D)
    dw = (A * D - B * C) / (C * s + D) ** 2 * dsdy * (2 * Kp / nodes)
    # orient counter-clockwise around [a, b]
    probe = 0.5 * (a + b)
    if np.real(np.sum(dw / (w - probe)) / (2j * np.pi)) < 0:
        dw = -dw
    return Contour(w, dw, (a, b), float(np.abs(w.imag).max()), 1,
                   {"method": "conformal", "k": k, "K": K, "Kp": Kp,
                    "rate": float(np.exp(-np.pi * K / Kp))})


def build_contour(gap: GapInfo, spectrum: Spectrum | None = None, nodes: int = 128,
                  order: int | None = None, method: str = "conformal",
                  lower: float | None = None) -> Contour:
    """Positively oriented contour around the spectrum below E_F.

    ``method='conformal'`` (default) is the elliptic-function trapezoid rule
    of :func:`_conformal_contour`, which crosses the gap at its conformal
    centre; ``'rectangle'`` uses graded Gauss-Legendre panels on a
    rectangle through E_F.  ``lower`` (or the spectrum) bounds the
    spectrum from below.
    """
    if nodes < 16:
        raise ValueError("contour needs at least 16 nodes")
    E_F = gap.E_F
    evs = spectrum.eigenvalues if spectrum is not None else np.empty(0)
    if lower is None:
        if evs.size:
            lower = float(evs.min())
        elif np.isfinite(gap.gap_lower):
            lower = gap.gap_lower
        else:
            lower = E_F - 1.0
    lower = min(lower, E_F)
    if method == "rectangle":
        d_left = float(np.min(np.abs(evs - (lower - 1.0)))) if evs.size else 1.0
        return _rectangle_contour(gap, lower, d_left, nodes, order)
    if method != "conformal":
        raise ValueError(f"unknown contour method {method!r}")
    b = gap.gap_lower if np.isfinite(gap.gap_lower) else E_F - 0.5
    c = gap.gap_upper if np.isfinite(gap.gap_upper) else E_F + 0.5
    if not b < E_F < c:
        raise SpectralError("degenerate gap")
    # keep [a, b] non-degenerate; the padding keeps every node >= gap_width / 4 from the spectrum
    a = min(lower, b) - 0.25 * (c - min(lower, b)) - 1e-3
    return _conformal_contour(a, b, c, nodes)


# ---------------------------------------------------------------- resolvents

class Resolvent:
    """Applies R_w = (H - w)^{-1} block by block.

    Uses the eigenbasis when a complete spectrum is supplied, sparse LU
    factorizations otherwise (one factorization per node, reused across
    right-hand sides).
    """

    def __init__(self, H, spectrum: Spectrum | None = None):
        self.mats, self.labels, self.geometry = _blocks(H)
        self.spectrum = spectrum
        self.use_eigen = spectrum is not None and all(b.complete for b in spectrum.blocks)
        self._lu = {}

    def _factor(self, k: int, w: complex):
        key = (k, complex(w))
        if key not in self._lu:
            if len(self._lu) > 4 * len(self.mats):
                self._lu.clear()
            M = self.mats[k]
            n = M.shape[0]
            try:
                if sp.issparse(M):
                    lu = spla.splu((M - w * sp.identity(n, format="csc")).tocsc().astype(complex))
                    self._lu[key] = lu.solve
                else:
                    f = sla.lu_factor(np.asarray(M, dtype=complex) - w * np.eye(n))
                    self._lu[key] = lambda b, f=f: sla.lu_solve(f, b)
            except (RuntimeError, ValueError, sla.LinAlgError) as exc:
                raise SpectralError(f"singular resolvent solve at w={w}") from exc
        return self._lu[key]

    def apply(self, k: int, w: complex, B):
        """(H_k - w)^{-1} B for block ``k``."""
        B = _as_dense(B)
        if self.use_eigen:
            blk = self.spectrum.blocks[k]
            V = blk.eigenvectors
            return V @ ((V.conj().T @ B) / (blk.eigenvalues - w)[:, None])
        out = self._factor(k, w)(B.astype(complex))
        if not np.all(np.isfinite(out)):
            raise SpectralError(f"singular resolvent solve at w={w}")
        return out


def _distance_to_spectrum(spectrum: Spectrum, w: complex) -> float:
    ev = spectrum.eigenvalues
    return float(np.min(np.abs(ev - w))) if ev.size else np.inf


def resolvent_apply(H, w: complex, A, spectrum: Spectrum | None = None):
    """(H - w)^{-1} A by linear solves (no explicit inverse)."""
    if spectrum is not None and _distance_to_spectrum(spectrum, w) <= 1e-8:
        raise SpectralError(f"w = {w} lies on the spectrum")
    R = Resolvent(H, None)
    if isinstance(H, OperatorMatrix):
        As = A.blocks if isinstance(A, (OperatorMatrix, Projection)) else (A, A)
        up, down = (R.apply(k, w, As[k]) for k in range(2))
        return OperatorMatrix(up, down, H.geometry)
    return R.apply(0, w, A)


def riesz_projection(H, contour: Contour, spectrum: Spectrum | None = None):
    """(i / 2 pi) sum_k weight_k (H - w_k)^{-1}.  Returns a dense matrix or block operator."""
    R = Resolvent(H, spectrum)
    out = []
    for k, M in enumerate(R.mats):
        if R.use_eigen:
            # the same quadrature sum, accumulated on the eigenvalues
            blk = R.spectrum.blocks[k]
            V = blk.eigenvectors
            g = (contour.weights[None, :] / (blk.eigenvalues[:, None] - contour.nodes[None, :])).sum(1)
            out.append((V * (1j / (2 * np.pi) * g)) @ V.conj().T)
            continue
        eye = np.eye(M.shape[0], dtype=complex)
        acc = np.zeros_like(eye)
        for z, wt in zip(contour.nodes, contour.weights):
            acc += wt * R.apply(k, z, eye)
        out.append(1j / (2 * np.pi) * acc)
    if isinstance(H, OperatorMatrix):
        return OperatorMatrix(out[0], out[1], H.geometry)
    return out[0]


# ---------------------------------------------------------------- Liouvillian

def _dense_pair(A, Pi):
    A = A.dense() if isinstance(A, (OperatorMatrix, Projection)) else _as_dense(A)
    P = Pi.dense() if isinstance(Pi, (OperatorMatrix, Projection)) else _as_dense(Pi)
    return A, P


def offdiagonal_part(A, Pi):
    """Pi A Pi_perp + Pi_perp A Pi."""
    A, P = _dense_pair(A, Pi)
    Q = np.eye(P.shape[0]) - P
    return P @ A @ Q + Q @ A @ P


def diagonal_part(A, Pi):
    A, P = _dense_pair(A, Pi)
    Q = np.eye(P.shape[0]) - P
    return P @ A @ P + Q @ A @ Q


def _single(H):
    if isinstance(H, OperatorMatrix):
        return H.dense()
    return _as_dense(H)


def liouvillian_solve(H, contour: Contour, A, Pi=None) -> np.ndarray:
    """C = (i / 2 pi) oint R_w A^OD R_w dw, the off-diagonal solution of [H, C] = [A, Pi].

    ``Pi`` defaults to the Riesz projection on the same contour.
    """
    Hd = _single(H)
    n = Hd.shape[0]
    R = Resolvent(Hd)
    if Pi is None:
        Pi = riesz_projection(Hd, contour)
    Aod = offdiagonal_part(A, Pi)
    C = np.zeros((n, n), dtype=complex)
    for z, wt in zip(contour.nodes, contour.weights):
        RA = R.apply(0, z, Aod)
        # (H - z)^{-1} applied from the right: X R = (R^H X^H)^H with R^H = R_{conj z}
        C += wt * R.apply(0, np.conj(z), RA.conj().T).conj().T
    return 1j / (2 * np.pi) * C


def liouvillian_spectral(spectrum: Spectrum, A, E_F: float) -> np.ndarray:
    """Spectral-basis solution C_nm = [A, Pi]_nm / (lambda_n - lambda_m) on the off-diagonal blocks."""
    if len(spectrum.blocks) != 1:
        raise ValueError("expects a single-block spectrum")
    blk = spectrum.blocks[0]
    V, lam = blk.eigenvectors, blk.eigenvalues
    occ = (lam < E_F).astype(float)
    At = V.conj().T @ _as_dense(A) @ V
    # [A, Pi]_nm = A_nm (occ_m - occ_n)
    comm = At * (occ[None, :] - occ[:, None])
    denom = lam[:, None] - lam[None, :]
    mask = occ[:, None] != occ[None, :]
    Ct = np.zeros_like(At)
    Ct[mask] = comm[mask] / denom[mask]
    return V @ Ct @ V.conj().T


def double_commutator_T(H, contour: Contour, A1, A2) -> np.ndarray:
    """oint dw {R (i[H,A1]) R (i[H,A2]) R - (1 <-> 2)} by quadrature (no prefactor)."""
    Hd = _single(H)
    A1, A2 = _as_dense(A1), _as_dense(A2)
    B1 = 1j * (Hd @ A1 - A1 @ Hd)
    B2 = 1j * (Hd @ A2 - A2 @ Hd)
    R = Resolvent(Hd)
    n = Hd.shape[0]
    T = np.zeros((n, n), dtype=complex)
    eye = np.eye(n)
    for z, wt in zip(contour.nodes, contour.weights):
        Rz = R.apply(0, z, eye)
        T += wt * (Rz @ B1 @ Rz @ B2 @ Rz - Rz @ B2 @ Rz @ B1 @ Rz)
    return T


# ---------------------------------------------------------------- cache

CODE_VERSION = "stredalab-eigen-1"


def spec_hash(spec, extra: dict | None = None) -> str:
    payload = {"spec": asdict(spec), "version": CODE_VERSION, **(extra or {})}
    return hashlib.sha256(json.dumps(payload, sort_keys=True, default=str).encode()).hexdigest()


class EigenCache:
    """On-disk cache of spectra keyed by a spec hash (``.npz`` containers)."""

    def __init__(self, directory):
        self.directory = Path(directory)

    def _path(self, key: str) -> Path:
        return self.directory / f"eig-{key}.npz"

    def load(self, key: str) -> Spectrum | None:
        path = self._path(key)
        if not path.exists():
            return None
        with np.load(path, allow_pickle=False) as data:
            labels = [str(s) for s in data["labels"]]
            blocks = [SpectralBlock(data[f"val{k}"], data[f"vec{k}"], lab, bool(data["complete"][k]))
                      for k, lab in enumerate(labels)]
        return Spectrum(blocks)

    def store(self, key: str, spectrum: Spectrum):
        self.directory.mkdir(parents=True, exist_ok=True)
        arrays = {"labels": np.array([b.label for b in spectrum.blocks]),
                  "complete": np.array([b.complete for b in spectrum.blocks])}
        for k, b in enumerate(spectrum.blocks):
            arrays[f"val{k}"] = b.eigenvalues
            arrays[f"vec{k}"] = b.eigenvectors
        tmp = self._path(key).with_suffix(".tmp.npz")
        np.savez(tmp, **arrays)
        tmp.replace(self._path(key))

    def clear(self) -> int:
        n = 0
        for p in self.directory.glob("eig-*.npz"):
            p.unlink()
            n += 1
        return n
