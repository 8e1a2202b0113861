"""Spin Hall response: Kubo sum, its zero-temperature contour limit, and the Streda derivative.

Kubo sum.  With eigenpairs (lambda_n, psi_n) of one spin block, velocities
P_j = i[H, X_j] and Fermi weights f_n, the time integral

    int_{-inf}^0 ds exp(i s (lambda_n - lambda_m + omega)) = -i / (lambda_n - lambda_m + omega)

(convergent for Im omega < 0) turns the trace of
S^z int ds e^{is(H+omega)} P_2 e^{-isH} [P_1, f(H)] into

    K = sum_s (s/2) sum_{n,m} (P_2)_{nm} (P_1)_{mn} (f_n - f_m) (-i) / (lambda_n - lambda_m + omega).

The prefactor -1/(omega |Lambda|) of the textbook expression makes the
omega, T -> 0 limit equal to *minus* the contour formula and minus
d IsDOS/dB (checked numerically on flux-quantized tori, where the box trace
is the trace per unit volume).  We report the Streda-consistent sign,
sigma = +K / (omega |Lambda|); ``convention='literal'`` gives the other one.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.special import expit

from .markers import BulkWindow, MarkerReport, isdos, marker_report
from .model import SPINS, HamiltonianSpec, ModelError, OperatorMatrix, build_hamiltonian, \
    position_operators, spin_operator, velocity_operators
from .spectral import (Contour, EigenCache, GapError, GapInfo, Projection, Resolvent, SpectralError,
                       Spectrum, build_contour, detect_gap, eigensolve, fermi_projection, spec_hash)

log = logging.getLogger(__name__)


class PipelineError(RuntimeError):
    """A sub-pipeline failed; ``stage`` names it."""

    def __init__(self, stage: str, exc: Exception):
        super().__init__(f"{stage}: {exc}")
        self.stage = stage
        self.cause = exc


# ---------------------------------------------------------------- spectra

def _diagonalize(spec: HamiltonianSpec, E_F: float, cache: EigenCache | None = None):
    H = build_hamiltonian(spec)
    key = spec_hash(spec, {"E_F": E_F}) if cache is not None else None
    return H, eigensolve(H, upper=E_F, cache=cache, cache_key=key)


def solve(spec: HamiltonianSpec, E_F: float, cache: EigenCache | None = None):
    """Build H, diagonalize (partially above the dense cutoff) and locate the gap."""
    H, S = _diagonalize(spec, E_F, cache)
    return H, S, detect_gap(S, E_F)


# ---------------------------------------------------------------- Kubo

@dataclass(frozen=True)
class KuboParams:
    T: float
    mu: float
    omega: complex
    E: float = 1.0

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("temperature must be positive")
        if not complex(self.omega).imag < 0:
            raise ValueError("Im(omega) must be negative (adiabatic switching)")

    @property
    def beta(self) -> float:
        return 1.0 / self.T

    def fermi(self, x):
        return expit(-(np.asarray(x) - self.mu) / self.T)


@dataclass
class KuboResult:
    box: complex
    window: complex | None
    per_block: tuple
    box_area: float

    @property
    def normalization_gap(self) -> float:
        return math.nan if self.window is None else abs(self.box - self.window)


def _dense(M):
    return M.toarray() if sp.issparse(M) else np.asarray(M)


def kubo_evaluate(H: OperatorMatrix, spectrum: Spectrum, params: KuboParams,
                  window: BulkWindow | None = None, convention: str = "streda") -> KuboResult:
    """Kubo spin conductivity with both normalizations (box |Lambda_L| and window tau)."""
    if convention not in ("streda", "literal"):
        raise ValueError("convention must be 'streda' or 'literal'")
    if not all(b.complete for b in spectrum.blocks):
        raise SpectralError("the Kubo sum needs the complete spectrum")
    detect_gap(spectrum, params.mu)
    om = complex(params.omega)
    sign = 1.0 if convention == "streda" else -1.0
    P1, P2 = velocity_operators(H)
    geom = H.geometry
    box, win, blocks = 0.0, 0.0, []
    for k, s in enumerate(SPINS):
        blk = spectrum.blocks[k]
        V, lam = blk.eigenvectors, blk.eigenvalues
        f = params.fermi(lam)
        p1 = V.conj().T @ (P1.blocks[k] @ V)
        p2 = V.conj().T @ (P2.blocks[k] @ V)
        G = -1j / (lam[:, None] - lam[None, :] + om)          # n, m
        Fd = f[:, None] - f[None, :]                           # f_n - f_m
        total = np.sum(p2 * p1.T * Fd * G)
        blocks.append(sign * total / (om * geom.box_area))
        box += 0.5 * s * total
        if window is not None:
            # window diagonal of sum_m (P2 G)_{nm} (P1)_{mk} (f_k - f_m)
            O = (p2 * G) @ (p1 * (f[None, :] - f[:, None]))
            rows = V[window.sites]
            win += 0.5 * s * np.einsum("in,nk,ik->", rows, O, rows.conj())
    box = sign * box / (om * geom.box_area)
    win = sign * win / (om * window.area) if window is not None else None
    return KuboResult(complex(box), None if win is None else complex(win), tuple(blocks),
                      geom.box_area)


def kubo_sigma(spec: HamiltonianSpec, params: KuboParams, normalization: str = "box",
               window: BulkWindow | None = None, convention: str = "streda") -> complex:
    """Kubo spin conductivity per unit field of the finite sample ``spec``.

    ``normalization='box'`` divides the full trace by |Lambda_L| = (2L)^2;
    ``'window'`` uses the bulk-window trace per unit volume.  On a
    flux-quantized torus the two coincide.
    """
    H = build_hamiltonian(spec)
    S = eigensolve(H, mode="dense")
    if normalization == "window" and window is None:
        window = BulkWindow.default(H.geometry)
    res = kubo_evaluate(H, S, params, window if normalization == "window" else None, convention)
    return res.window if normalization == "window" else res.box


# ---------------------------------------------------------------- contour limit

@dataclass
class SigmaZero:
    value: float
    sandwiched: float
    imag: float
    imag_sandwiched: float

    def __float__(self):
        return self.value

    @property
    def variant_gap(self) -> float:
        return abs(self.value - self.sandwiched)


def _spin_weights(Sz) -> tuple[float, float]:
    if Sz is None:
        return 0.5, -0.5
    out = []
    for b in Sz.blocks:
        d = np.asarray(b.diagonal()).ravel()
        if np.ptp(d) > 1e-14 or (sp.issparse(b) and b.nnz > d.size):
            raise ValueError("S^z must be a multiple of the identity on each spin block")
        out.append(float(d[0].real))
    return tuple(out)


def _vectors(Pi) -> tuple:
    if isinstance(Pi, Projection):
        return Pi.vectors
    raise TypeError("sigma_zero_limit expects a Projection")


def _sigma_block_eigen(blk, occ, p1, p2, W, contour: Contour):
    """Quadrature sums of one spin block with the resolvent applied in its eigenbasis.

    Plain form: the window trace of sum_z w_z (P1 R P2 R^2 - P1 R^2 P2 R)
    is sum_{n,l,m} p1_nl p2_lm G_lm Q_mn with G_lm = sum_z w_z d_l d_m (d_m - d_l),
    d = 1 / (lambda - z) and Q = V_W^* V_W.  Sandwiched form: occupied rows
    and columns only, accumulated node by node.
    """
    V, lam = blk.eigenvectors, blk.eigenvalues
    e1 = V.conj().T @ _dense(p1 @ V)
    e2 = V.conj().T @ _dense(p2 @ V)
    VW = V[W]
    Q = VW.conj().T @ VW
    D = 1.0 / (lam[None, :] - contour.nodes[:, None])          # node, level
    Dw = D * contour.weights[:, None]
    G = Dw.T @ (D * D) - (Dw * D).T @ D
    plain = np.sum((e1 @ (e2 * G)) * Q.T)
    o = np.flatnonzero(occ)
    Qo = Q[np.ix_(o, o)]
    acc = np.zeros((o.size, o.size), dtype=complex)
    for d, wt in zip(D, contour.weights):
        Y = ((e1[o] * d[None, :]) @ e2[:, o]) - ((e2[o] * d[None, :]) @ e1[:, o])
        acc += wt * (d[o][:, None] * Y * d[o][None, :])
    sand = np.sum(acc * Qo.T)
    return plain, sand


def _sigma_block_solve(M, V, lam, p1, p2, W, contour: Contour):
    """Same sums by sparse solves, one factorization per node.

    Left products u R_z use the conjugate-transposed factors (M is
    Hermitian).  In the sandwiched form Pi R_z = V diag(1 / (lambda - z)) V^*,
    so only R_z P2 V and R_z P1 V need solving.
    """
    n = M.shape[0]
    E = np.zeros((n, len(W)), dtype=complex)
    E[W, np.arange(len(W))] = 1.0
    P1E = _dense(p1[:, W]).astype(complex)
    P1V, P2V = _dense(p1 @ V), _dense(p2 @ V)
    VW = V[W]
    Qo = VW.conj().T @ VW
    Ms = sp.csc_matrix(M, dtype=complex)
    eye = sp.identity(n, format="csc")
    plain, sand = 0.0, 0.0
    for z, wt in zip(contour.nodes, contour.weights):
        try:
            lu = spla.splu((Ms - z * eye).tocsc())
        except RuntimeError as exc:
            raise SpectralError(f"singular resolvent solve at w={z}") from exc
        Rc1 = lu.solve(E)
        Rc2 = lu.solve(Rc1)
        L1 = lu.solve(P1E, trans="H")        # columns of (E^* P1 R)^*
        L2 = lu.solve(L1, trans="H")
        plain += wt * (np.sum(L1.conj() * (p2 @ Rc2)) - np.sum(L2.conj() * (p2 @ Rc1)))
        d = 1.0 / (lam - z)
        A = P1V.conj().T @ lu.solve(P2V) - P2V.conj().T @ lu.solve(P1V)
        sand += wt * np.sum((d[:, None] * A * d[None, :]) * Qo.T)
    return plain, sand


def sigma_zero_limit(H: OperatorMatrix, Pi: Projection, Sz, P1: OperatorMatrix, P2: OperatorMatrix,
                     contour: Contour, window: BulkWindow, spectrum: Spectrum | None = None,
                     imag_tol: float = 1e-6, route: str = "auto") -> SigmaZero:
    """-(1/4 pi) tau(oint S^z P1 R P2 R^2 - S^z P1 R^2 P2 R) on the bulk window.

    The projector-sandwiched form -(1/2 pi) tau(oint S^z Pi R P1 R P2 R Pi - (1 <-> 2))
    is evaluated alongside.  ``route='eigen'`` applies the resolvents in the
    eigenbasis (needs the complete spectrum), ``'solve'`` by linear solves;
    ``'auto'`` picks the eigenbasis when it is available.  Spin blocks with
    nothing inside the contour contribute 0 (the integrand is holomorphic).
    The imaginary part is checked against ``imag_tol * max(1, |value|)``.
    """
    if contour is None or len(contour) == 0:
        raise SpectralError("invalid contour")
    weights = _spin_weights(Sz)
    complete = spectrum is not None and all(b.complete for b in spectrum.blocks)
    if route == "auto":
        route = "eigen" if complete else "solve"
    if route == "eigen" and not complete:
        raise SpectralError("eigen route needs the complete spectrum")
    R = Resolvent(H, spectrum if route == "eigen" else None)
    Vs = _vectors(Pi)
    W = window.sites
    plain, sand = 0.0, 0.0
    for k in range(2):
        V = Vs[k]
        if V.shape[1] == 0:
            continue
        p1, p2 = P1.blocks[k], P2.blocks[k]
        if route == "eigen":
            blk = spectrum.blocks[k]
            occ = np.zeros(blk.eigenvalues.size, bool)
            occ[:V.shape[1]] = True  # Pi holds the lowest eigenvectors of the block
            if not np.allclose(np.abs(V.conj().T @ blk.eigenvectors[:, occ]), np.eye(V.shape[1]),
                               atol=1e-8):
                raise SpectralError("projection is not spanned by the lowest eigenvectors")
            a, b = _sigma_block_eigen(blk, occ, p1, p2, W, contour)
        else:
            lam = np.real(np.einsum("ij,ij->j", V.conj(), _dense(R.mats[k] @ V)))
            a, b = _sigma_block_solve(R.mats[k], V, lam, p1, p2, W, contour)
        plain += weights[k] * a
        sand += weights[k] * b
    plain = -plain / (4 * np.pi * window.area)
    sand = -sand / (2 * np.pi * window.area)
    scale = max(1.0, abs(plain))
    # the window trace is not cyclic, so a small imaginary part survives at finite size
    if abs(np.imag(plain)) > 1e-8 * scale:
        log.info("sigma_zero_limit: imaginary part %.3g kept out of the value", np.imag(plain))
    if abs(np.imag(plain)) > imag_tol * scale:
        raise SpectralError(f"sigma_zero_limit: imaginary part {np.imag(plain):.3g}")
    return SigmaZero(float(np.real(plain)), float(np.real(sand)), float(np.imag(plain)),
                     float(np.imag(sand)))


def sigma_contour(spec: HamiltonianSpec, E_F: float, window: BulkWindow | None = None,
                  nodes: int = 128, cache: EigenCache | None = None,
                  imag_tol: float = 1e-6) -> SigmaZero:
    H, S, gap = solve(spec, E_F, cache)
    window = window or BulkWindow.default(H.geometry)
    Pi = fermi_projection(S, gap)
    P1, P2 = velocity_operators(H)
    C = build_contour(gap, S, nodes=nodes)
    return sigma_zero_limit(H, Pi, spin_operator(H.geometry), P1, P2, C, window, S, imag_tol)


def equilibrium_current_trace(H: OperatorMatrix, spectrum: Spectrum, T: float, mu: float) -> float:
    """|Tr f(H) (-i)[H, X_1 S^z]|, zero as the trace of a commutator."""
    X1, _ = position_operators(H.geometry)
    total = 0.0
    for k, s in enumerate(SPINS):
        blk = spectrum.blocks[k]
        V = blk.eigenvectors
        f = expit(-(blk.eigenvalues - mu) / T)
        F = (V * f) @ V.conj().T
        Hk = H.blocks[k]
        XS = 0.5 * s * X1.blocks[k]
        J = -1j * (_dense(Hk @ XS) - _dense(XS @ Hk))
        total += np.sum(F * J.T)
    return float(abs(total))


# ---------------------------------------------------------------- Streda derivative

def _window_for(H, window):
    if window is None:
        return BulkWindow.default(H.geometry)
    if window.geometry.shape != H.geometry.shape:
        raise ModelError("window does not match the sample grid")
    return BulkWindow(window.sites, H.geometry, window.min_buffer)


def isdos_at(spec: HamiltonianSpec, B: float, E_F: float, window: BulkWindow | None = None,
             cache: EigenCache | None = None) -> tuple[float, GapInfo]:
    H, S, gap = solve(spec.with_field(B), E_F, cache)
    return isdos(fermi_projection(S, gap), _window_for(H, window)), gap


def streda_derivative(spec: HamiltonianSpec, B: float, delta_B: float = 1e-3, E_F: float = 0.0,
                      window: BulkWindow | None = None, cache: EigenCache | None = None,
                      endpoints: bool = False):
    """(IsDOS(B + dB) - IsDOS(B - dB)) / 2 dB with B1 = B2 = B +- dB and E_F held fixed."""
    if not delta_B > 0:
        raise ValueError("delta_B must be positive")
    vals = []
    for Bx in (B - delta_B, B + delta_B):
        try:
            vals.append(isdos_at(spec, Bx, E_F, window, cache)[0])
        except GapError as exc:
            raise GapError(f"gap closes at endpoint B = {Bx:.12g}: {exc}") from exc
    d = (vals[1] - vals[0]) / (2 * delta_B)
    return (d, vals[0], vals[1]) if endpoints else d


def richardson_check(spec: HamiltonianSpec, B: float, delta_B: float, E_F: float,
                     window: BulkWindow | None = None, floor: float = 1e-9):
    """Derivatives at dB, dB/2, dB/4 and whether the second change is <= first / 3.

    Changes below ``floor`` are rounding noise and pass.
    """
    ds = [streda_derivative(spec, B, delta_B / 2 ** j, E_F, window) for j in range(3)]
    c1, c2 = abs(ds[1] - ds[0]), abs(ds[2] - ds[1])
    return ds, (c2 <= c1 / 3) or max(c1, c2) < floor


# ---------------------------------------------------------------- report

STREDA_FIELDS = ("B", "delta_B", "isdos_minus", "isdos_plus", "fd_derivative", "sch_over_2pi",
                 "sigma_contour", "residual_streda_fd", "residual_streda_kubo")


@dataclass
class StredaReport:
    B: float
    delta_B: float
    isdos_minus: float
    isdos_plus: float
    fd_derivative: float
    sch_over_2pi: float
    sigma_contour: float
    residual_streda_fd: float = field(default=math.nan)
    residual_streda_kubo: float = field(default=math.nan)

    def __post_init__(self):
        self._recompute()

    def _recompute(self):
        self.residual_streda_fd = abs(self.fd_derivative - self.sch_over_2pi)
        self.residual_streda_kubo = abs(self.sigma_contour - self.sch_over_2pi)

    @property
    def max_pairwise(self) -> float:
        v = (self.fd_derivative, self.sch_over_2pi, self.sigma_contour)
        return max(abs(a - b) for a in v for b in v)

    def to_dict(self) -> dict:
        self._recompute()
        d = asdict(self)
        return {k: d[k] for k in STREDA_FIELDS}

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


@dataclass
class Analysis:
    gap: GapInfo
    markers: MarkerReport
    streda: StredaReport
    sigma: SigmaZero
    timings: dict


def analyze(spec: HamiltonianSpec, B: float, E_F: float, delta_B: float = 1e-3,
            window: BulkWindow | None = None, nodes: int = 128, cache: EigenCache | None = None,
            decay: bool = True, imag_tol: float = 1e-3) -> Analysis:
    """Markers, Streda derivative and contour conductivity of one instance at field B.

    The looser default ``imag_tol`` tolerates the O(1e-6) imaginary part that the
    non-cyclic window trace leaves on open samples away from B = 0.
    """
    import time

    timings = {}

    def stage(name, fn):
        t0 = time.perf_counter()
        try:
            out = fn()
        except (SpectralError, ModelError, ValueError, np.linalg.LinAlgError) as exc:
            raise PipelineError(name, exc) from exc
        timings[name] = time.perf_counter() - t0
        log.info("stage %s: %.2fs", name, timings[name])
        return out

    spec = spec.with_field(B)
    H, S = stage("eigensolve", lambda: _diagonalize(spec, E_F, cache))
    gap = stage("detect_gap", lambda: detect_gap(S, E_F))
    win = stage("window", lambda: _window_for(H, window))
    Pi = fermi_projection(S, gap)
    markers = stage("markers", lambda: marker_report(Pi, win, decay=decay))
    fd, lo, hi = stage("streda_derivative",
                       lambda: streda_derivative(spec, B, delta_B, E_F, win, cache, endpoints=True))

    def contour_stage():
        P1, P2 = velocity_operators(H)
        C = build_contour(gap, S, nodes=nodes)
        return sigma_zero_limit(H, Pi, spin_operator(H.geometry), P1, P2, C, win, S, imag_tol)

    sig = stage("sigma_zero_limit", contour_stage)
    rep = StredaReport(B=float(B), delta_B=float(delta_B), isdos_minus=lo, isdos_plus=hi,
                       fd_derivative=fd, sch_over_2pi=markers.sch / (2 * np.pi),
                       sigma_contour=sig.value)
    return Analysis(gap, markers, rep, sig, timings)


def verify_spin_streda(spec: HamiltonianSpec, B: float, delta_B: float = 1e-3, E_F: float = 0.0,
                       window: BulkWindow | None = None, nodes: int = 128,
                       cache: EigenCache | None = None) -> StredaReport:
    """Three-way check fd_derivative ~ SCh / 2 pi ~ sigma_contour."""
    return analyze(spec, B, E_F, delta_B, window, nodes, cache, decay=False).streda
