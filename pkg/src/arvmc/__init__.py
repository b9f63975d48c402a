"""Variational Monte Carlo for molecular Hamiltonians with an autoregressive ansatz.

Modules:

* ``hamio``: FCIDUMP reading and writing.
* ``qubit``: Jordan-Wigner compilation to grouped Pauli strings.
* ``ansatz``: transformer amplitude and MLP phase, numpy forward/backward.
* ``sampler``: batched autoregressive sampling and a Metropolis baseline.
* ``vmc``: local energies, estimators, training loop.
* ``oracle``: FCI/CISD solvers, Slater-Condon matrix elements, pre-training.
* ``cli``: command-line front end (``python -m arvmc``).
"""

from .ansatz import AnsatzConfig, AnsatzState, init, load_checkpoint, log_psi, save_checkpoint
from .hamio import FCIDumpError, MolecularIntegrals, load_fcidump, parse_fcidump, write_fcidump
from .oracle import cisd_ground_state, enumerate_sector, fci_ground_state, pretrain, slater_condon
from .qubit import QubitHamiltonian, assemble, to_dense
from .sampler import SampleBatch, sample_as, sample_bas, sample_mcmc
from .sector import SectorSpec
from .vmc import Problem, TrainConfig, estimate_energy, estimate_gradient, local_energy, run_vmc

__version__ = "0.1.0"

__all__ = [
    "AnsatzConfig",
    "AnsatzState",
    "init",
    "log_psi",
    "save_checkpoint",
    "load_checkpoint",
    "FCIDumpError",
    "MolecularIntegrals",
    "load_fcidump",
    "parse_fcidump",
    "write_fcidump",
    "cisd_ground_state",
    "enumerate_sector",
    "fci_ground_state",
    "pretrain",
    "slater_condon",
    "QubitHamiltonian",
    "assemble",
    "to_dense",
    "SampleBatch",
    "sample_as",
    "sample_bas",
    "sample_mcmc",
    "SectorSpec",
    "Problem",
    "TrainConfig",
    "estimate_energy",
    "estimate_gradient",
    "local_energy",
    "run_vmc",
]
