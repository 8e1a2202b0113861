import numpy as np
import pytest

from stredalab import (BulkWindow, HamiltonianSpec, build_hamiltonian, detect_gap, eigensolve,
                       fermi_projection)


class Instance:
    """A built and diagonalized sample with its Fermi projection and default window."""

    def __init__(self, spec, E_F):
        self.spec, self.E_F = spec, E_F
        self.H = build_hamiltonian(spec)
        # continuum samples need only the few states below E_F
        mode = "partial" if spec.backend == "continuum" else "auto"
        self.S = eigensolve(self.H, mode=mode, upper=E_F)
        self.gap = detect_gap(self.S, E_F)
        self.Pi = fermi_projection(self.S, self.gap)
        self.geometry = self.H.geometry
        self.window = (BulkWindow.default(self.geometry)
                       if spec.boundary != "torus" else None)


def tb(L=8, flux=0.0, offset=0.0, boundary="dirichlet", **kw):
    return HamiltonianSpec(backend="tightbinding", half_width_L=L, tb_flux_per_plaquette=flux,
                           tb_spin_flux_offset=offset, boundary=boundary, **kw)


@pytest.fixture(scope="session")
def small_tb():
    """16 x 16 open spin-flux sample, E_F in the first gap."""
    return Instance(tb(8, offset=1 / 3), -1.5)


@pytest.fixture(scope="session")
def demo_tb():
    """30 x 30 open spin-flux demo (offset 1/3), E_F in the first gap."""
    return Instance(tb(15, offset=1 / 3), -1.5)


def landau(L=3, n=6, B=4.0, zeeman=-0.5, v=0.1):
    """Continuum sample; with E_F = B / 2 only the spin-up lowest Landau level lies below."""
    return HamiltonianSpec(backend="continuum", half_width_L=L, points_per_cell=n, B1=B, B2=B,
                           zeeman_coupling=zeeman, potential_amplitudes=(v, v))


@pytest.fixture(scope="session")
def small_landau():
    """nu_up = 1, nu_down = 0 at B = 4 on a 6 x 6 box."""
    return Instance(landau(), 2.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# ---------------------------------------------------------------- acceptance summary

def pytest_terminal_summary(terminalreporter):
    rows = [r for key in ("passed", "failed", "error") for r in terminalreporter.stats.get(key, [])
            if "test_acceptance" in getattr(r, "nodeid", "") and r.when in ("call", "setup")
            and (r.when == "call" or not r.passed)]
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for r in rows:
        props = dict(r.user_properties)
        name = props.get("criterion", r.nodeid.split("::")[-1])
        status = "PASS" if r.passed else "FAIL"
        terminalreporter.write_line(f"{status}  {name}  {props.get('detail', '')}".rstrip())
