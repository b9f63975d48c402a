"""Local energies, Monte Carlo estimators and the training loop.

A wavefunction here is anything with ``log_psi(x) -> (log_amp, phase)``
over arrays of configurations, returning ``-inf`` where ``Psi`` vanishes.
``NeuralWavefunction`` wraps an ansatz state; ``oracle.TableWavefunction``
wraps a CI vector.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .ansatz import AnsatzConfig, AnsatzState, DomainError, evaluator, init, vjp
from .hamio import MolecularIntegrals, load_fcidump
from .optim import Adam, TrainingError
from .oracle import (
    ITERATIVE_CAP,
    TableWavefunction,
    cisd_ground_state,
    enumerate_sector,
    fci_ground_state,
    pretrain,
    sector_matrix,
)
from .qubit import QubitHamiltonian, assemble
from .sampler import SampleBatch, sample_bas, sample_mcmc
from .sector import SectorSpec

__all__ = [
    "CHEMICAL_ACCURACY",
    "NeuralWavefunction",
    "EnergyEstimate",
    "LocalEnergies",
    "local_energy",
    "local_energies",
    "estimate_energy",
    "estimate_gradient",
    "optimizer_step",
    "exact_energy",
    "TrainConfig",
    "Problem",
    "VMCResult",
    "run_vmc",
]

CHEMICAL_ACCURACY = 1.6e-3
LOG_RATIO_CLAMP = 30.0
# sectors up to this size are enumerated each iteration for exact tracking
ENUMERATION_CAP = 4000


class NeuralWavefunction:
    """``log_psi`` view of an ansatz state on one sector."""

    def __init__(self, state: AnsatzState, sector: SectorSpec):
        self.state = state
        self.sector = sector
        self._fn = evaluator(state, sector)

    def log_psi(self, x):
        return self._fn(x)

    def snapshot(self, configs) -> TableWavefunction:
        """Table of the current values on ``configs`` for repeated lookups."""
        la, ph = self._fn(configs)
        return TableWavefunction.from_logs(configs, la, ph)


@dataclass
class LocalEnergies:
    values: np.ndarray  # complex, one per input configuration
    n_clamped: int = 0


def local_energies(H: QubitHamiltonian, psi, x, clamp: float = LOG_RATIO_CLAMP) -> LocalEnergies:
    """``E_loc(x) = sum_x' <x'|H|x> Psi(x')/Psi(x)`` for an array of ``x``.

    Ratios are formed in the log domain. The real part of the log ratio is
    clamped at ``clamp`` before exponentiation; clamped terms are counted.
    """
    x = np.asarray(x, dtype=np.int64).reshape(-1)
    la_x, ph_x = psi.log_psi(x)
    if np.any(np.isneginf(la_x)):
        bad = int(x[np.argmax(np.isneginf(la_x))])
        raise DomainError(f"wavefunction vanishes at configuration {bad:#x}")
    targets, elements = H.connected_batch(x)
    row, col = np.nonzero(elements)
    uniq, inv = np.unique(targets[row, col], return_inverse=True)
    la_t, ph_t = psi.log_psi(uniq)
    live = ~np.isneginf(la_t[inv])
    row, col, inv = row[live], col[live], inv[live]
    dre = la_t[inv] - la_x[row]
    over = dre > clamp
    dre = np.minimum(dre, clamp)
    terms = elements[row, col] * np.exp(dre + 1j * (ph_t[inv] - ph_x[row]))
    values = np.bincount(row, weights=terms.real, minlength=len(x)) + 1j * np.bincount(
        row, weights=terms.imag, minlength=len(x)
    )
    return LocalEnergies(values, int(over.sum()))


def local_energy(H: QubitHamiltonian, psi, x: int) -> complex:
    return complex(local_energies(H, psi, [x]).values[0])


@dataclass
class EnergyEstimate:
    mean: float
    variance: float
    n_unique: int
    n_samples: float
    imag_residual: float  # |Im of the count-weighted mean|
    imag_max: float  # max |Im E_loc| over the batch
    n_clamped: int = 0

    @property
    def std_error(self) -> float:
        return math.sqrt(self.variance / self.n_samples) if self.n_samples > 0 else math.inf


def _weighted_mean(values, weights):
    # anchored at the first value so that a constant input returns it exactly
    if len(values) == 0:
        raise ValueError("empty batch")
    v0 = values[0]
    return v0 + np.sum(weights * (values - v0))


def _estimate(eloc: LocalEnergies, batch: SampleBatch) -> tuple[EnergyEstimate, complex]:
    w = batch.counts / batch.counts.sum()
    vals = eloc.values
    mean = _weighted_mean(vals, w)
    re = vals.real
    variance = float(np.sum(w * (re - mean.real) ** 2))
    est = EnergyEstimate(
        mean=float(mean.real),
        variance=variance,
        n_unique=batch.unique,
        n_samples=float(batch.total),
        imag_residual=float(abs(mean.imag)),
        imag_max=float(np.abs(vals.imag).max(initial=0.0)),
        n_clamped=eloc.n_clamped,
    )
    return est, mean


def estimate_energy(H: QubitHamiltonian, state, batch: SampleBatch, psi=None) -> EnergyEstimate:
    """Count-weighted mean and variance of ``Re E_loc`` over a batch.

    ``state`` may be an ``AnsatzState`` or any object with ``log_psi``;
    ``psi`` overrides the lookup path (for instance a snapshot table).
    """
    if batch.unique == 0:
        raise ValueError("empty batch")
    if psi is None:
        psi = NeuralWavefunction(state, batch.sector) if isinstance(state, AnsatzState) else state
    return _estimate(local_energies(H, psi, batch.configs), batch)[0]


def estimate_gradient(
    H: QubitHamiltonian,
    state: AnsatzState,
    batch: SampleBatch,
    psi=None,
    eloc: LocalEnergies | None = None,
) -> np.ndarray:
    """``g = 2 Re <(E_loc - <E_loc>)^* O>`` with ``O = d log Psi``.

    Writing ``E_loc - <E_loc> = a + i b`` and ``O = d log|Psi| + i d phi``,
    ``g = 2 <a d log|Psi| + b d phi>``, evaluated as one vector-Jacobian
    product over the unique configurations.
    """
    if batch.unique == 0:
        raise ValueError("empty batch")
    if eloc is None:
        psi = NeuralWavefunction(state, batch.sector) if psi is None else psi
        eloc = local_energies(H, psi, batch.configs)
    w = batch.counts / batch.counts.sum()
    mean = _weighted_mean(eloc.values, w)
    delta = eloc.values - mean
    return vjp(state, batch.configs, batch.sector, 2.0 * w * delta.real, 2.0 * w * delta.imag)


def optimizer_step(opt: Adam, state: AnsatzState, g: np.ndarray) -> tuple[Adam, AnsatzState]:
    """Adam update; raises ``TrainingError`` on non-finite gradients."""
    params = opt.step(state.params, g)
    return opt, state.with_params(params)


def exact_energy(matrix, psi, configs) -> float:
    """``<Psi|H|Psi> / <Psi|Psi>`` over an enumerated basis."""
    la, ph = psi.log_psi(configs)
    amp = np.exp(la + 1j * ph)
    num = np.vdot(amp, matrix @ amp)
    return float(num.real / np.vdot(amp, amp).real)


# ---------------------------------------------------------------------------
# training loop


@dataclass
class TrainConfig:
    """Training hyperparameters.

    ``sampler`` is 'bas' or 'mcmc'. ``pretrain`` is 'none', 'cisd' or 'fci'.
    ``target_accuracy`` stops the run as soon as the exact energy of the
    current parameters is that close to FCI (requires ``track_exact``).
    """

    n_samples: int = 100_000
    max_iters: int = 10_000
    lr: float = 3e-4
    lr_min: float = 3e-5
    lr_warmup: int = 50
    phase_lr_scale: float = 1.0
    phase_warmup: int = 0
    anneal_temperature: float = 0.0
    anneal_iters: int = 0
    seed: int = 0
    sampler: str = "bas"
    mcmc_chains: int = 100
    mcmc_burn_in: int = 1000
    mcmc_sweep: int = 0
    pretrain: str = "cisd"
    pretrain_epochs: int = 1000
    pretrain_lr: float = 3e-3
    phase_weight: float = 1.0
    plateau_window: int = 200
    plateau_tol: float = 1e-5
    track_exact: bool = True
    exact_every: int = 1
    target_accuracy: float | None = None
    final_samples: int | None = None
    clamp: float = LOG_RATIO_CLAMP

    def __post_init__(self):
        if self.sampler not in ("bas", "mcmc"):
            raise ValueError(f"unknown sampler {self.sampler!r}")
        if self.pretrain not in ("none", "cisd", "fci"):
            raise ValueError(f"unknown pretrain mode {self.pretrain!r}")
        for name in ("n_samples", "max_iters", "mcmc_chains", "exact_every"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.anneal_temperature < 0 or self.anneal_iters < 0:
            raise ValueError("annealing settings must be nonnegative")
        if self.lr <= 0 or self.lr_min < 0 or self.lr_warmup < 0:
            raise ValueError("learning rates must be positive")


@dataclass
class Problem:
    """Integrals, compiled Hamiltonian, sector and (optionally) oracle values."""

    ints: MolecularIntegrals
    H: QubitHamiltonian
    sector: SectorSpec
    e_fci: float | None = None
    basis: np.ndarray | None = None
    matrix: object = None

    @classmethod
    def load(cls, source, sector: SectorSpec | None = None, exact: bool = True) -> "Problem":
        ints = source if isinstance(source, MolecularIntegrals) else load_fcidump(source)
        sector = sector or SectorSpec.from_integrals(ints)
        H = assemble(ints)
        prob = cls(ints, H, sector)
        dim = sector.dimension(ints.n_orbitals)
        if exact and dim <= ITERATIVE_CAP:
            prob.e_fci = fci_ground_state(H, sector).energy
        if exact and dim <= ENUMERATION_CAP:
            prob.basis = enumerate_sector(ints.n_orbitals, sector).configs
            prob.matrix = sector_matrix(H, prob.basis)
        return prob

    @property
    def n_orbitals(self) -> int:
        return self.ints.n_orbitals


@dataclass
class VMCResult:
    state: AnsatzState
    energy: float  # estimate at the final parameters
    std_error: float
    exact_energy: float | None
    e_fci: float | None
    iterations: int
    stop_reason: str
    first_accurate: int | None  # first iteration whose exact energy is within chemical accuracy
    pretrain_fidelity: float | None
    trace: list = field(default_factory=list)
    imag_residual: float | None = None  # |Im| of the mean local energy of the final batch

    @property
    def error(self) -> float | None:
        if self.e_fci is None:
            return None
        ref = self.exact_energy if self.exact_energy is not None else self.energy
        return ref - self.e_fci


def _plateau(energies, window, tol) -> bool:
    if len(energies) < window:
        return False
    half = window // 2
    recent = energies[-window:]
    return abs(np.mean(recent[half:]) - np.mean(recent[:half])) < tol


def run_vmc(
    problem: Problem,
    ansatz: AnsatzConfig | AnsatzState,
    train: TrainConfig = TrainConfig(),
    callback=None,
) -> VMCResult:
    """Sample, estimate, differentiate, update; repeat.

    Each iteration produces a record with the iteration number, energy
    estimate, variance, number of unique samples and wall milliseconds
    (plus the exact energy of the parameters when the sector is
    enumerable). ``callback(record)`` is invoked per iteration.
    """
    state = ansatz if isinstance(ansatz, AnsatzState) else init(ansatz)
    if state.config.n_orbitals != problem.n_orbitals:
        raise ValueError("ansatz width does not match the number of spin orbitals")
    rng = np.random.default_rng(train.seed)
    sector = problem.sector
    track = train.track_exact and problem.basis is not None

    fid = None
    if train.pretrain != "none":
        solver = cisd_ground_state if train.pretrain == "cisd" else fci_ground_state
        target = solver(problem.H, sector)
        res = pretrain(state, target, train.pretrain_epochs, rng, lr=train.pretrain_lr, phase_weight=train.phase_weight)
        state, fid = res.state, res.fidelity

    amp_mask = state.amplitude_mask()
    scale = np.where(amp_mask, 1.0, train.phase_lr_scale)
    opt = Adam(len(state.params), lr=train.lr, lr_min=train.lr_min, total_steps=train.max_iters,
               warmup_steps=train.lr_warmup, lr_scale=scale)
    chains = None
    trace, energies = [], []
    stop = "max-iters"
    first_accurate = None
    exact = None
    it = 0
    for it in range(train.max_iters):
        t0 = time.perf_counter()
        psi = NeuralWavefunction(state, sector)
        if problem.basis is not None:
            psi = psi.snapshot(problem.basis)
        batch, acceptance = _draw(state, sector, train, rng, chains, it)
        if isinstance(batch, tuple):
            batch, chains = batch
        eloc = local_energies(problem.H, psi, batch.configs, train.clamp)
        est, _ = _estimate(eloc, batch)
        record = {
            "iteration": it,
            "energy": est.mean,
            "variance": est.variance,
            "n_unique": est.n_unique,
            "imag_residual": est.imag_residual,
            "clamped": est.n_clamped,
        }
        if acceptance is not None:
            record["acceptance"] = acceptance
        if track and it % train.exact_every == 0:
            exact = exact_energy(problem.matrix, psi, problem.basis)
            record["exact_energy"] = exact
            if first_accurate is None and abs(exact - problem.e_fci) < CHEMICAL_ACCURACY:
                first_accurate = it
        reached = (
            train.target_accuracy is not None and track and exact is not None
            and abs(exact - problem.e_fci) < train.target_accuracy
        )
        if reached:
            # stop with the parameters whose exact energy met the target
            record["wall_ms"] = (time.perf_counter() - t0) * 1e3
            trace.append(record)
            if callback is not None:
                callback(record)
            stop = "target-accuracy"
            break
        temp = _temperature(train, it)
        if temp > 0:
            # gradient of E - T * S with S the entropy of |Psi|^2
            la_b, _ = psi.log_psi(batch.configs)
            eloc = LocalEnergies(eloc.values + temp * 2.0 * la_b, eloc.n_clamped)
            record["temperature"] = temp
        g = estimate_gradient(problem.H, state, batch, eloc=eloc)
        if it < train.phase_warmup:
            g = np.where(amp_mask, 0.0, g)
        try:
            opt, state = optimizer_step(opt, state, g)
        except TrainingError as exc:
            raise TrainingError(f"iteration {it}: {exc}") from exc
        record["wall_ms"] = (time.perf_counter() - t0) * 1e3
        trace.append(record)
        energies.append(est.mean)
        if callback is not None:
            callback(record)
        if _plateau(energies, train.plateau_window, train.plateau_tol):
            stop = "plateau"
            break

    final_batch = sample_bas(state, sector, train.final_samples or train.n_samples, rng)
    psi = NeuralWavefunction(state, sector)
    final = estimate_energy(problem.H, state, final_batch, psi=psi)
    final_exact = exact_energy(problem.matrix, psi, problem.basis) if track else None
    return VMCResult(
        state=state,
        energy=final.mean,
        std_error=final.std_error,
        exact_energy=final_exact,
        e_fci=problem.e_fci,
        iterations=len(trace),
        stop_reason=stop,
        first_accurate=first_accurate,
        pretrain_fidelity=fid,
        trace=trace,
        imag_residual=final.imag_residual,
    )


def _temperature(train: TrainConfig, it: int) -> float:
    if train.anneal_temperature <= 0 or it >= train.anneal_iters:
        return 0.0
    return train.anneal_temperature * (1.0 - it / train.anneal_iters)


def _draw(state, sector, train: TrainConfig, rng, chains, it):
    if train.sampler == "bas":
        return sample_bas(state, sector, train.n_samples, rng), None
    # persistent chains: full burn-in once, then optional re-equilibration sweeps
    burn = train.mcmc_burn_in if chains is None else train.mcmc_sweep
    res = sample_mcmc(
        state, sector, train.n_samples, rng, burn_in=burn, n_chains=train.mcmc_chains, init=chains
    )
    return (res.batch, res.chains), res.acceptance


def config_dict(cfg) -> dict:
    return asdict(cfg)
