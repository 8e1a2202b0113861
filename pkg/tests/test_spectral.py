import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from stredalab.model import build_hamiltonian, position_operators, spin_operator
from stredalab.oracle import random_gapped
from stredalab.spectral import (Contour, EigenCache, GapError, SpectralError, build_contour,
                                detect_gap, diagonal_part, double_commutator_T, eigensolve,
                                fermi_projection, liouvillian_solve, liouvillian_spectral,
                                offdiagonal_part, resolvent_apply, riesz_projection, spec_hash)

from conftest import Instance, tb


def circle(center, radius, n=64):
    t = 2 * np.pi * (np.arange(n) + 0.5) / n
    z = center + radius * np.exp(1j * t)
    return Contour(z, 1j * radius * np.exp(1j * t) * 2 * np.pi / n, (center - radius, center + radius))


def gapped(dim, seed):
    return random_gapped(dim, np.random.default_rng(seed))[0]


# ---------------------------------------------------------------- eigensolve

def test_eigensolve_sorts():
    S = eigensolve(np.diag([3.0, 1.0, 2.0]))
    assert np.allclose(S.eigenvalues, [1, 2, 3])


def test_spectrum_residual_and_orthonormality(small_tb):
    S, H = small_tb.S, small_tb.H
    norm = max(abs(b).max() for b in H.blocks) * 5
    assert S.residuals(H) <= 1e-10 * norm
    for blk in S.blocks:
        V = blk.eigenvectors
        assert np.abs(V.conj().T @ V - np.eye(V.shape[1])).max() <= 1e-10


def test_ties_are_ordered_up_before_down():
    H = build_hamiltonian(tb(2))
    S = eigensolve(H)
    ev, lab = S.eigenvalues, S.labels
    assert np.all(np.diff(ev) >= 0)
    assert list(lab[:2]) == ["up", "down"]


def test_phases_fixed_real_positive():
    S = eigensolve(gapped(10, 1))
    V = S.blocks[0].eigenvectors
    lead = V[np.argmax(np.abs(V), axis=0), np.arange(10)]
    assert np.allclose(lead.imag, 0) and np.all(lead.real > 0)


def test_non_hermitian_refused():
    with pytest.raises(SpectralError, match="non-Hermitian"):
        eigensolve(np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_dense_cutoff_enforced():
    with pytest.raises(SpectralError, match="cutoff"):
        eigensolve(np.eye(10), mode="dense", dense_cutoff=5)


def test_partial_mode_matches_dense():
    H = build_hamiltonian(tb(6, offset=1 / 3))
    dense = eigensolve(H)
    part = eigensolve(H, mode="partial", upper=-1.5)
    for bd, bp in zip(dense.blocks, part.blocks):
        assert not bp.complete
        k = np.sum(bd.eigenvalues < -1.5)
        assert np.abs(bp.eigenvalues[:k] - bd.eigenvalues[:k]).max() < 1e-10
    gd, gp = detect_gap(dense, -1.5), detect_gap(part, -1.5)
    assert gd.rank_per_block == gp.rank_per_block
    assert gd.gap_lower == pytest.approx(gp.gap_lower, abs=1e-10)
    assert gd.gap_upper == pytest.approx(gp.gap_upper, abs=1e-10)
    Pd, Pp = fermi_projection(dense, gd), fermi_projection(part, gp)
    assert max(np.abs(a - b).max() for a, b in zip(Pd.blocks, Pp.blocks)) < 1e-9


# ---------------------------------------------------------------- gaps and projections

def test_detect_gap_two_levels():
    g = detect_gap(eigensolve(np.diag([0.0, 1.0])), 0.5)
    assert (g.gap_lower, g.gap_upper, g.rank_below) == (0.0, 1.0, 1)


def test_detect_gap_below_spectrum():
    g = detect_gap(eigensolve(np.diag([0.0, 1.0])), -1.0)
    assert g.rank_below == 0 and g.gap_lower == -np.inf and g.gap_upper == 0.0


def test_detect_gap_collision():
    with pytest.raises(GapError, match="E_F .* inside spectrum"):
        detect_gap(eigensolve(np.diag([0.0, 1.0])), 1.0 + 1e-12)


def test_hofstadter_first_gap_rank():
    H = build_hamiltonian(tb(3, flux=1 / 3, boundary="torus"))
    g = detect_gap(eigensolve(H), -1.5)
    assert g.rank_per_block == (12, 12)


def test_projection_extremes_and_rank():
    S = eigensolve(np.diag([0.0, 1.0, 2.0]))
    assert np.abs(fermi_projection(S, detect_gap(S, -1)).dense()).max() == 0.0
    assert np.allclose(fermi_projection(S, detect_gap(S, 3)).dense(), np.eye(3))
    g = detect_gap(S, 1.5)
    P = fermi_projection(S, g)
    assert P.rank == g.rank_below == 2


def test_projection_idempotent_and_spin_blocked(small_tb):
    Pi = small_tb.Pi
    assert Pi.idempotency_residual() <= 1e-10
    assert Pi.is_blocked
    P = Pi.as_operator().dense()
    Sz = spin_operator(small_tb.geometry).dense()
    assert np.abs(P @ Sz - Sz @ P).max() == 0.0


# ---------------------------------------------------------------- contours

def test_rectangle_rule_geometry():
    S = eigensolve(np.diag([0.0, 1.0]))
    C = build_contour(detect_gap(S, 0.5), S, nodes=64, method="rectangle")
    assert C.enclosed_interval == (-1.0, 0.5)
    assert C.imag_half_height == 1.5
    assert C.nodes.real.min() == pytest.approx(-1.0) and C.nodes.real.max() == pytest.approx(0.5)
    assert np.abs(C.nodes.imag).max() == pytest.approx(1.5)


@pytest.mark.parametrize("method", ["conformal", "rectangle"])
def test_cauchy_integral(method):
    S = eigensolve(np.diag([0.0, 1.0]))
    C = build_contour(detect_gap(S, 0.5), S, nodes=64, method=method)
    assert abs(C.integrate(lambda w: 1 / (w - 0.0)) - 2j * np.pi) <= 1e-8
    assert abs(C.integrate(lambda w: 1 / (w - 1.0))) <= 1e-8
    assert abs(C.integrate(lambda w: 1.0)) <= 1e-12


@pytest.mark.parametrize("ev,E_F", [([0.0, 1.0], 0.5), ([0.0, 1.0], 0.95),
                                    (list(np.linspace(-3, 0, 50)) + [0.1], 0.05),
                                    ([-2.0, -1.0, 1.0, 2.0], 0.0)])
def test_contour_keeps_distance_from_spectrum(ev, E_F):
    S = eigensolve(np.diag(ev))
    g = detect_gap(S, E_F)
    C = build_contour(g, S, nodes=128)
    assert np.abs(C.nodes[:, None] - np.array(ev)[None, :]).min() >= g.width / 4
    # positively oriented around the occupied part
    assert C.integrate(lambda w: 1 / (w - g.gap_lower)) == pytest.approx(2j * np.pi, abs=1e-10)


def test_contour_needs_nodes():
    S = eigensolve(np.diag([0.0, 1.0]))
    with pytest.raises(ValueError):
        build_contour(detect_gap(S, 0.5), S, nodes=8)


def test_contour_enclosing_nothing_gives_zero_projection():
    S = eigensolve(np.diag([0.0, 1.0]))
    g = detect_gap(S, -0.5)
    C = build_contour(g, S, nodes=64, lower=-2.0)
    assert np.abs(riesz_projection(np.diag([0.0, 1.0]), C)).max() <= 1e-8


# ---------------------------------------------------------------- Riesz and resolvents

def test_riesz_two_level_circle():
    P = riesz_projection(np.diag([0.0, 1.0]), circle(0.0, 0.5))
    assert np.abs(P - np.diag([1.0, 0.0])).max() <= 1e-10


def test_riesz_empty_contour():
    C = Contour(np.empty(0, complex), np.empty(0, complex), (0.0, 0.0))
    assert np.abs(riesz_projection(np.diag([0.0, 1.0]), C)).max() <= 1e-8


def test_riesz_matches_spectral_on_hofstadter(small_tb):
    C = build_contour(small_tb.gap, small_tb.S, nodes=64)
    ref = small_tb.Pi.as_operator()
    for P in (riesz_projection(small_tb.H, C), riesz_projection(small_tb.H, C, small_tb.S)):
        assert max(np.abs(a - b).max() for a, b in zip(P.blocks, ref.blocks)) <= 1e-8


def test_resolvent_two_level():
    R = resolvent_apply(np.diag([0.0, 1.0]), 2.0, np.eye(2))
    assert np.allclose(R, np.diag([-0.5, -1.0]))


def test_resolvent_defining_equation_and_norm(rng):
    H = gapped(30, 2)
    ev = np.linalg.eigvalsh(H)
    A = rng.normal(size=(30, 30)) + 1j * rng.normal(size=(30, 30))
    w = 0.3 + 0.2j
    X = resolvent_apply(sp.csr_matrix(H), w, A)
    assert np.abs((H - w * np.eye(30)) @ X - A).max() <= 1e-10
    Rn = np.linalg.norm(resolvent_apply(H, w, np.eye(30)), 2)
    assert Rn == pytest.approx(1 / np.min(np.abs(ev - w)), rel=1e-8)


def test_resolvent_on_spectrum_refused():
    S = eigensolve(np.diag([0.0, 1.0]))
    with pytest.raises(SpectralError):
        resolvent_apply(np.diag([0.0, 1.0]), 1.0 + 1e-9, np.eye(2), spectrum=S)


# ---------------------------------------------------------------- off-diagonal calculus

def _proj(H, E_F=0.0):
    w, V = np.linalg.eigh(H)
    return V[:, w < E_F] @ V[:, w < E_F].conj().T


def test_offdiagonal_part_properties(rng):
    H = gapped(20, 3)
    P = _proj(H)
    A = rng.normal(size=(20, 20))
    Aod, Ad = offdiagonal_part(A, P), diagonal_part(A, P)
    assert np.abs(Ad + Aod - A).max() <= 1e-12
    assert np.abs(Ad @ P - P @ Ad).max() <= 1e-12
    comm = A @ P - P @ A
    assert np.abs(offdiagonal_part(comm, P) - comm).max() <= 1e-12
    assert np.abs(offdiagonal_part(P @ A @ P, P)).max() <= 1e-12


def test_liouvillian_two_level():
    H = np.diag([0.0, 1.0])
    S = eigensolve(H)
    C = liouvillian_solve(H, build_contour(detect_gap(S, 0.5), S, nodes=64),
                          np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert np.abs(C - np.array([[0, 1], [1, 0]])).max() <= 1e-10


def test_liouvillian_of_diagonal_operator_vanishes(rng):
    H = gapped(12, 4)
    P = _proj(H)
    S = eigensolve(H)
    A = diagonal_part(rng.normal(size=(12, 12)), P)
    C = liouvillian_solve(H, build_contour(detect_gap(S, 0.0), S, nodes=64), A)
    assert np.abs(C).max() <= 1e-10


@settings(max_examples=10, deadline=None)
@given(st.integers(2, 60), st.integers(0, 10 ** 6))
def test_liouvillian_identity_and_uniqueness(dim, seed):
    rng = np.random.default_rng(seed)
    H = random_gapped(dim, rng)[0]
    A = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    S = eigensolve(H)
    g = detect_gap(S, 0.0)
    P = _proj(H)
    C = liouvillian_solve(H, build_contour(g, S, nodes=64), A)
    assert np.abs(H @ C - C @ H - (A @ P - P @ A)).max() <= 1e-8
    assert np.abs(C - liouvillian_spectral(S, A, 0.0)).max() <= 1e-8
    assert np.abs(diagonal_part(C, P)).max() <= 1e-8


def test_double_commutator_with_positions():
    inst = Instance(tb(3, offset=1 / 3), -1.5)
    H = inst.H.up.toarray()
    P = inst.Pi.up
    Q = np.eye(len(P)) - P
    X1, X2 = (X.up.toarray() for X in position_operators(inst.geometry))
    A1, A2 = X1 @ P - P @ X1, X2 @ P - P @ X2
    K1, K2 = P @ A1 - A1 @ P, P @ A2 - A2 @ P
    lhs = -1j * (K1 @ K2 - K2 @ K1)
    S = eigensolve(H)
    T = double_commutator_T(H, build_contour(detect_gap(S, -1.5), S, nodes=128), A1, A2)
    assert np.abs(lhs - (P @ T @ P - Q @ T @ Q) / (2 * np.pi)).max() <= 1e-6
    # trace of a commutator
    B1, B2 = X1 @ P - P @ X1, X2 @ P - P @ X2
    tr = np.trace(P @ (B1 @ B2 - B2 @ B1) @ P)
    assert abs(tr) <= 1e-8 * len(P)


# ---------------------------------------------------------------- cache

def test_cache_roundtrip(tmp_path):
    H = build_hamiltonian(tb(3, offset=0.1))
    S = eigensolve(H)
    cache = EigenCache(tmp_path)
    key = spec_hash(tb(3, offset=0.1))
    assert eigensolve(H, cache=cache, cache_key=key).eigenvalues.tolist() == S.eigenvalues.tolist()
    hit = cache.load(key)
    for a, b in zip(hit.blocks, S.blocks):
        assert np.array_equal(a.eigenvalues, b.eigenvalues)
        assert np.array_equal(a.eigenvectors, b.eigenvectors)
    assert cache.clear() == 1 and cache.load(key) is None


def test_spec_hash_sensitive_to_fields():
    assert spec_hash(tb(3)) == spec_hash(tb(3))
    assert spec_hash(tb(3)) != spec_hash(tb(3, offset=0.1))
    assert spec_hash(tb(3), {"E_F": 0.0}) != spec_hash(tb(3), {"E_F": 0.1})
