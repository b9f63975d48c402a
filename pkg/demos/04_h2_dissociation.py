"""
H2 dissociation curve
=====================

Train at six bond lengths, including 2.5 times the equilibrium distance where
a single determinant is a poor description, and compare with FCI and with the
Hartree-Fock determinant energy.
"""

import numpy as np

from arvmc.ansatz import AnsatzConfig
from arvmc.cli import DATA_DIR
from arvmc.oracle import reference_configuration
from arvmc.qubit import connected
from arvmc.vmc import CHEMICAL_ACCURACY, Problem, TrainConfig, run_vmc

print(f"{'R/A':>7} {'E_HF':>12} {'E_FCI':>12} {'E_VMC':>12} {'error':>9}")
for path in sorted(DATA_DIR.glob("h2_r*.fcidump")):
    r = float(path.stem.split("_r")[1])
    problem = Problem.load(path)
    ref = reference_configuration(problem.n_orbitals, problem.sector)
    e_hf = dict(connected(problem.H, ref))[ref]
    res = run_vmc(problem, AnsatzConfig(n_orbitals=problem.n_orbitals, seed=0), TrainConfig(seed=0))
    flag = "" if abs(res.error) < CHEMICAL_ACCURACY else "  above chemical accuracy"
    print(f"{r:7.4f} {e_hf:12.6f} {problem.e_fci:12.6f} {res.exact_energy:12.6f} {res.error:9.1e}{flag}")

print(f"chemical accuracy: {CHEMICAL_ACCURACY} Hartree")
