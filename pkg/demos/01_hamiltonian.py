"""
From integrals to a qubit Hamiltonian
=====================================

Load the bundled water integrals, encode them as Pauli strings and check the
result against a determinant-based construction. Finish with the exact and
truncated CI energies that the training runs are judged against.
"""

import time

import numpy as np

from arvmc.hamio import load_fcidump
from arvmc.oracle import cisd_ground_state, enumerate_sector, fci_ground_state, slater_condon_matrix
from arvmc.qubit import assemble, connected, to_dense
from arvmc.sector import SectorSpec, to_string
from arvmc.cli import DATA_DIR

ints = load_fcidump(DATA_DIR / "h2o.fcidump")
sector = SectorSpec.from_integrals(ints)
n = ints.n_orbitals
print(f"H2O/STO-3G: {ints.n_spatial} spatial orbitals, {n} spin orbitals, {sector.n_alpha}+{sector.n_beta} electrons")

# Jordan-Wigner: every one- and two-body term becomes a handful of Pauli strings
t = time.perf_counter()
H = assemble(ints)
print(f"{H.n_terms} Pauli strings in {H.n_groups} coupling groups ({time.perf_counter() - t:.2f} s)")

# the first determinant of the sector and the ones it couples to
basis = enumerate_sector(n, sector)
x = int(basis.configs[0])
row = connected(H, x)
print(f"|{to_string(x, n)}> couples to {len(row)} determinants, diagonal {dict(row)[x]:.6f}")

# two independent routes to the same matrix
pauli = to_dense(H, basis.configs)
sc = slater_condon_matrix(ints, basis)
print(f"sector dimension {len(basis)}, max |Pauli - Slater-Condon| = {np.abs(pauli - sc).max():.1e}")

fci = fci_ground_state(ints)
cisd = cisd_ground_state(ints)
print(f"E_FCI  = {fci.energy:.8f}")
print(f"E_CISD = {cisd.energy:.8f} (+{cisd.energy - fci.energy:.2e})")
print(f"HF weight in FCI vector: {fci.probabilities.max():.4f}")
