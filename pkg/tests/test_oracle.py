from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stredalab.oracle import (BlochGrid, OracleError, brute_force_identities, diophantine_t,
                              fukui_hatsugai, fukui_hatsugai_chern, hofstadter_band_edges,
                              landau_reference, random_gapped)


def test_zero_flux_single_band_is_trivial():
    assert fukui_hatsugai_chern(BlochGrid.hofstadter(0, (8, 8)), 1) == 0


@pytest.mark.parametrize("flux", ["1/3", "1/4", "1/5", "2/5", "2/7", "-1/3"])
def test_gap_labels_match_diophantine(flux):
    f = Fraction(flux)
    p, q = f.numerator, f.denominator
    g = BlochGrid.hofstadter(f, (12, 12))
    for r in range(1, q):
        if q % 2 == 0 and 2 * r == q:
            continue
        ch, res, gap = fukui_hatsugai(g, r)
        assert res < 1e-6 and gap > 1e-3
        assert ch == diophantine_t(p, q, r)


def test_first_gap_at_one_third_is_plus_one():
    assert fukui_hatsugai_chern(BlochGrid.hofstadter(Fraction(1, 3)), 1) == 1


@pytest.mark.parametrize("flux", ["1/3", "1/5", "2/7"])
def test_all_bands_sum_to_zero(flux):
    g = BlochGrid.hofstadter(Fraction(flux), (10, 10))
    assert fukui_hatsugai(g, g.q)[0] == 0


def test_grid_too_coarse_refused():
    with pytest.raises(OracleError):
        BlochGrid.hofstadter(Fraction(1, 3), (4, 12))


def test_closed_gap_detected():
    # central bands of q = 4 touch at E = 0
    g = BlochGrid.hofstadter(Fraction(1, 4), (12, 12))
    with pytest.raises(OracleError):
        fukui_hatsugai_chern(g, 2)


def test_band_edges_are_ordered_and_bounded():
    e = hofstadter_band_edges(Fraction(1, 3), (12, 12))
    assert e.shape == (3, 2)
    assert np.all(e[:, 0] <= e[:, 1])
    assert np.all(e[1:, 0] > e[:-1, 1])
    assert e.min() >= -4 and e.max() <= 4


def test_landau_reference():
    assert landau_reference(1.0, 1, 1) == (0.0, 0.0)
    isd, sch = landau_reference(2 * np.pi, 1, 0)
    assert isd == pytest.approx(0.5) and sch == 0.5


@given(st.floats(0.1, 20), st.integers(0, 3), st.integers(0, 3))
def test_landau_reference_streda_identity(B, nu_up, nu_down):
    h = 1e-4 * B
    d = (landau_reference(B + h, nu_up, nu_down)[0] - landau_reference(B - h, nu_up, nu_down)[0]) / (2 * h)
    assert d == pytest.approx(landau_reference(B, nu_up, nu_down)[1] / (2 * np.pi), abs=1e-9)


def test_landau_reference_needs_positive_field():
    with pytest.raises(OracleError):
        landau_reference(0.0, 1, 0)


def test_random_gapped_instance_has_gap_and_commuting_observables(rng):
    H, A1, A2 = random_gapped(30, rng)
    ev = np.linalg.eigvalsh(H)
    assert np.min(np.abs(ev)) >= 0.5 - 1e-12
    assert np.abs(A1 @ A2 - A2 @ A1).max() < 1e-12
    assert np.abs(H - H.conj().T).max() < 1e-14


def test_identities_dim50():
    r = brute_force_identities(50, seed=1)
    assert r.liouvillian <= 1e-6
    assert r.uniqueness <= 1e-8
    assert r.double_commutator <= 1e-6
    assert r.trace <= 1e-8 * r.dim


def test_identities_two_level():
    r = brute_force_identities(2, seed=3)
    assert r.worst() < 1e-10


def test_identities_equal_observables_give_vanishing_double_commutator():
    r = brute_force_identities(20, seed=4, same=True)
    assert r.double_commutator < 1e-10 and r.trace < 1e-12


@settings(max_examples=8, deadline=None)
@given(st.integers(2, 40), st.integers(0, 2 ** 31))
def test_identities_random_small(dim, seed):
    assert brute_force_identities(dim, seed, nodes=96).worst() <= 1e-6


def test_identities_refuse_large():
    with pytest.raises(OracleError):
        brute_force_identities(201, 0)
