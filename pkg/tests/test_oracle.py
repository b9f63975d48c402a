import numpy as np
import pytest

from arvmc.ansatz import AnsatzConfig, init
from arvmc.hamio import MolecularIntegrals, load_fcidump
from arvmc.oracle import (
    OracleWavefunction,
    ResourceError,
    cisd_ground_state,
    enumerate_sector,
    excitation_level,
    fci_ground_state,
    fidelity,
    lanczos,
    pretrain,
    reference_configuration,
    sector_matrix,
    slater_condon,
    slater_condon_matrix,
)
from arvmc.qubit import assemble, to_dense
from arvmc.sampler import sample_bas
from arvmc.sector import SectorSpec, from_string

from conftest import data_path

# Frozen from the internal solvers (dense and Lanczos agree to 3e-14).
FCI = {
    "h2": -1.137270174660902,
    "lih": -7.8824034103355345,
    "beh2": -15.595176868923154,
    "h2o": -75.01258586023964,
}
CISD = {
    "h2": -1.137270174660902,
    "lih": -7.882390094488611,
    "beh2": -15.594423542274448,
    "h2o": -75.01188067152957,
}
# published values for geometries that differ from the bundled ones
PUBLISHED_FCI = {"lih": -7.7845, "h2o": -75.0155, "beh2": -14.4729}


@pytest.mark.parametrize("name", ["h2", "lih", "beh2", "h2o"])
def test_dual_path_matrices_agree(name):
    ints = load_fcidump(data_path(name))
    basis = enumerate_sector(ints.n_orbitals, SectorSpec.from_integrals(ints))
    pauli = to_dense(assemble(ints), basis.configs)
    sc = slater_condon_matrix(ints, basis)
    assert np.abs(pauli - sc).max() < 1e-10


@pytest.mark.parametrize("name", ["h2", "lih", "beh2", "h2o"])
def test_frozen_fci_and_cisd(name):
    ints = load_fcidump(data_path(name))
    fci = fci_ground_state(ints)
    cisd = cisd_ground_state(ints)
    assert fci.energy == pytest.approx(FCI[name], abs=1e-9)
    assert cisd.energy == pytest.approx(CISD[name], abs=1e-9)
    assert cisd.energy >= fci.energy - 1e-12


def test_published_values_are_only_references():
    # the bundled geometries are not the published ones; record how far apart
    for name, ref in PUBLISHED_FCI.items():
        assert abs(FCI[name] - ref) < 1.2


@pytest.mark.parametrize("name", ["lih", "h2o"])
def test_dense_and_iterative_agree(name):
    ints = load_fcidump(data_path(name))
    dense = fci_ground_state(ints, mode="dense")
    iterative = fci_ground_state(ints, mode="iterative")
    assert abs(dense.energy - iterative.energy) < 1e-8
    assert abs(abs(dense.amplitudes @ iterative.amplitudes) - 1.0) < 1e-8


def test_single_determinant_sector():
    h = np.diag([-1.0, 0.5])
    g = np.zeros((2,) * 4)
    g[0, 0, 0, 0] = 0.7
    ints = MolecularIntegrals(2, 2, 0, 0.2, h, g)
    sector = SectorSpec(1, 1)
    # force a 1-dimensional sector by allowing only orbital 0 per channel
    one = MolecularIntegrals(1, 2, 0, 0.2, h[:1, :1], g[:1, :1, :1, :1])
    wf = fci_ground_state(one)
    assert len(wf.basis) == 1
    assert wf.amplitudes.tolist() == [1.0]
    assert wf.energy == pytest.approx(0.2 - 2.0 + 0.7, abs=1e-14)
    assert fci_ground_state(ints, sector).energy <= wf.energy + 1e-12


def test_cisd_order_zero_is_reference_energy(h2o):
    ref = reference_configuration(14, SectorSpec(5, 5))
    assert ref == from_string("11111111110000")
    wf = cisd_ground_state(h2o, order=0)
    assert wf.energy == pytest.approx(slater_condon(ref, ref, h2o), abs=1e-10)


def test_cisd_monotone_in_order(h2o):
    energies = [cisd_ground_state(h2o, order=k).energy for k in range(5)]
    assert all(a >= b - 1e-12 for a, b in zip(energies, energies[1:]))
    assert energies[-1] >= FCI["h2o"] - 1e-10


def test_two_electron_cisd_is_exact(h2):
    assert cisd_ground_state(h2).energy == pytest.approx(fci_ground_state(h2).energy, abs=1e-12)


def test_cisd_support_is_truncated(lih):
    wf = cisd_ground_state(lih)
    ref = reference_configuration(12, SectorSpec(2, 2))
    level = excitation_level(wf.basis.configs, ref)
    assert np.all(wf.amplitudes[level > 2] == 0.0)
    assert np.any(wf.amplitudes[level == 2] != 0.0)


def test_resource_cap(lih):
    with pytest.raises(ResourceError):
        fci_ground_state(lih, iterative_cap=100)


def test_lanczos_on_known_spectrum():
    rng = np.random.default_rng(0)
    q, _ = np.linalg.qr(rng.normal(size=(300, 300)))
    eig = np.sort(rng.normal(size=300))
    A = (q * eig) @ q.T
    val, vec = lanczos(lambda v: A @ v, 300)
    assert val == pytest.approx(eig[0], abs=1e-9)
    assert np.linalg.norm(A @ vec - val * vec) < 1e-8


def test_sector_matrix_matches_dense(lih):
    H = assemble(lih)
    basis = enumerate_sector(12, SectorSpec(2, 2))
    assert np.abs(sector_matrix(H, basis.configs).toarray() - to_dense(H, basis.configs)).max() == 0.0


def test_unnormalized_target_rejected(lih):
    wf = fci_ground_state(lih)
    with pytest.raises(ValueError):
        OracleWavefunction(wf.basis, 2 * wf.amplitudes, wf.energy)


def test_rayleigh_quotient(lih):
    wf = fci_ground_state(lih)
    assert wf.rayleigh(assemble(lih)) == pytest.approx(wf.energy, abs=1e-10)


def test_pretrain_single_determinant():
    ints = load_fcidump(data_path("lih"))
    basis = enumerate_sector(12, SectorSpec(2, 2))
    ref = reference_configuration(12, SectorSpec(2, 2))
    amps = (basis.configs == ref).astype(float)
    target = OracleWavefunction(basis, amps, slater_condon(ref, ref, ints), "ref")
    res = pretrain(init(AnsatzConfig(n_orbitals=12)), target, epochs=100)
    batch = sample_bas(res.state, basis.sector, 10**5, np.random.default_rng(0))
    assert batch.entries.get(ref, 0) / 10**5 > 0.999


def test_pretrain_h2_fidelity(h2):
    target = fci_ground_state(h2)
    res = pretrain(init(AnsatzConfig(n_orbitals=4)), target)
    assert res.fidelity > 0.99
    assert res.fidelity == pytest.approx(fidelity(res.state, target), abs=1e-12)


@pytest.mark.xfail(strict=True, reason="the cross-entropy loss does not make fidelity monotone; see decisions ledger")
def test_pretrain_fidelity_is_monotone(lih):
    target = cisd_ground_state(lih)
    res = pretrain(init(AnsatzConfig(n_orbitals=12)), target, epochs=200)
    fids = [f for _, _, f in res.history]
    assert fids[-1] > fids[0]
    assert all(b >= a - 1e-6 for a, b in zip(fids, fids[1:]))


def test_pretrain_loss_decreases(lih):
    target = cisd_ground_state(lih)
    res = pretrain(init(AnsatzConfig(n_orbitals=12)), target, epochs=200)
    losses = [l for _, l, _ in res.history]
    assert losses[-1] < losses[0]
    assert all(b <= a + 1e-6 for a, b in zip(losses, losses[1:]))
