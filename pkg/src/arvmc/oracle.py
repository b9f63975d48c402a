"""Exact and truncated configuration interaction over a sector basis.

Two independent routes to the Hamiltonian matrix are available: the Pauli
route through ``qubit.sector_entries`` and the Slater-Condon rules
implemented here directly on spin-orbital integrals. The solvers use the
Pauli route; the Slater-Condon route exists to check it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .ansatz import AnsatzState, evaluator, vjp
from .hamio import MolecularIntegrals
from .optim import Adam
from .qubit import DEFAULT_DENSE_CAP, QubitHamiltonian, assemble, sector_entries
from .sector import SectorSpec, popcount, sector_configs

__all__ = [
    "SectorBasis",
    "OracleWavefunction",
    "TableWavefunction",
    "PretrainResult",
    "ResourceError",
    "enumerate_sector",
    "reference_configuration",
    "excitation_level",
    "SlaterCondon",
    "slater_condon",
    "slater_condon_matrix",
    "sector_matrix",
    "lanczos",
    "fci_ground_state",
    "cisd_ground_state",
    "pretrain",
    "fidelity",
    "ITERATIVE_CAP",
]

ITERATIVE_CAP = 100_000


class ResourceError(MemoryError):
    """Problem too large for the requested solver."""


# ---------------------------------------------------------------------------
# bases


@dataclass(frozen=True, eq=False)
class SectorBasis:
    """Sorted configurations of one (n_alpha, n_beta) sector, or a subset."""

    n_orbitals: int
    sector: SectorSpec
    configs: np.ndarray

    def __post_init__(self):
        configs = np.asarray(self.configs, dtype=np.int64)
        if len(configs) > 1 and not np.all(np.diff(configs) > 0):
            raise ValueError("basis must be strictly increasing")
        configs.setflags(write=False)
        object.__setattr__(self, "configs", configs)

    def __len__(self) -> int:
        return len(self.configs)

    @property
    def dimension(self) -> int:
        return len(self.configs)

    def index(self, x) -> np.ndarray:
        """Positions of ``x`` in the basis; -1 where absent."""
        x = np.asarray(x, dtype=np.int64)
        pos = np.searchsorted(self.configs, x).clip(0, max(len(self.configs) - 1, 0))
        found = self.configs[pos] == x if len(self.configs) else np.zeros(x.shape, bool)
        return np.where(found, pos, -1)


def enumerate_sector(n_orbitals: int, sector: SectorSpec) -> SectorBasis:
    sector.check(n_orbitals)
    return SectorBasis(n_orbitals, sector, sector_configs(n_orbitals, sector))


def reference_configuration(n_orbitals: int, sector: SectorSpec) -> int:
    """Lowest-index filling in each spin channel."""
    sector.check(n_orbitals)
    ref = sum(1 << (2 * k) for k in range(sector.n_alpha))
    ref |= sum(1 << (2 * k + 1) for k in range(sector.n_beta))
    return ref


def excitation_level(x, reference: int) -> np.ndarray:
    """Number of electrons moved out of ``reference``."""
    return popcount(np.asarray(x, dtype=np.int64) & ~np.int64(reference))


# ---------------------------------------------------------------------------
# Slater-Condon rules


def _occupied(x: int) -> list[int]:
    out = []
    while x:
        low = x & -x
        out.append(low.bit_length() - 1)
        x ^= low
    return out


def _annihilate(x: int, p: int) -> tuple[int, int]:
    """``a_p |x> = sign |x'>``; caller guarantees ``p`` is occupied."""
    sign = -1 if bin(x & ((1 << p) - 1)).count("1") & 1 else 1
    return x ^ (1 << p), sign


def _create(x: int, p: int) -> tuple[int, int]:
    sign = -1 if bin(x & ((1 << p) - 1)).count("1") & 1 else 1
    return x | (1 << p), sign


class SlaterCondon:
    """Matrix elements ``<x'|H|x>`` between determinants from integrals.

    Spin orbital ``p`` is spatial orbital ``p // 2`` with spin ``p % 2``.
    Antisymmetrized integrals ``<pq||rs> = <pq|rs> - <pq|sr>`` with
    ``<pq|rs> = (pr|qs)`` are tabulated once.
    """

    def __init__(self, ints: MolecularIntegrals):
        n = ints.n_orbitals
        spatial = np.arange(n) // 2
        spin = np.arange(n) % 2
        same = spin[:, None] == spin[None, :]
        self.n = n
        self.e_nuc = ints.e_nuc
        self.h = np.where(same, ints.h1[np.ix_(spatial, spatial)], 0.0)
        g = ints.g2[np.ix_(spatial, spatial, spatial, spatial)]  # (pr|qs) indexed [p, r, q, s]
        coul = g.transpose(0, 2, 1, 3) * (same[:, None, :, None] & same[None, :, None, :])  # <pq|rs>
        self.v = coul - coul.transpose(0, 1, 3, 2)

    def __call__(self, x: int, xp: int) -> float:
        x, xp = int(x), int(xp)
        diff = x ^ xp
        nd = bin(diff).count("1")
        if nd == 0:
            occ = _occupied(x)
            e = self.e_nuc + sum(self.h[i, i] for i in occ)
            if len(occ) > 1:
                idx = np.array(occ)
                e += 0.5 * np.einsum("ijij->", self.v[np.ix_(idx, idx, idx, idx)])
            return float(e)
        if nd == 2:
            (i,) = _occupied(x & diff)
            (a,) = _occupied(xp & diff)
            if (i ^ a) & 1:
                return 0.0
            y, s1 = _annihilate(x, i)
            _, s2 = _create(y, a)
            occ = _occupied(x)
            val = self.h[a, i] + sum(self.v[a, j, i, j] for j in occ if j != i)
            return float(s1 * s2 * val)
        if nd == 4:
            i, j = _occupied(x & diff)
            a, b = _occupied(xp & diff)
            y, s1 = _annihilate(x, i)
            y, s2 = _annihilate(y, j)
            y, s3 = _create(y, b)
            _, s4 = _create(y, a)
            return float(s1 * s2 * s3 * s4 * self.v[a, b, i, j])
        return 0.0


def slater_condon(x: int, xp: int, ints: MolecularIntegrals) -> float:
    """``<xp|H|x>`` by the Slater-Condon rules."""
    return SlaterCondon(ints)(x, xp)


def slater_condon_matrix(ints: MolecularIntegrals, basis, cap: int = DEFAULT_DENSE_CAP) -> np.ndarray:
    """Dense matrix over ``basis`` built element by element from the rules."""
    configs = basis.configs if isinstance(basis, SectorBasis) else np.asarray(basis, dtype=np.int64)
    dim = len(configs)
    if dim > cap:
        raise ResourceError(f"dimension {dim} exceeds the dense cap {cap}")
    rules = SlaterCondon(ints)
    M = np.zeros((dim, dim))
    for r in range(dim):
        close = np.flatnonzero(popcount(configs[r] ^ configs[r:]) <= 4) + r
        for c in close:
            M[r, c] = rules(configs[c], configs[r])
            M[c, r] = rules(configs[r], configs[c])
    return M


# ---------------------------------------------------------------------------
# eigensolvers


def _hamiltonian(source) -> QubitHamiltonian:
    if isinstance(source, QubitHamiltonian):
        return source
    if isinstance(source, MolecularIntegrals):
        return assemble(source)
    raise TypeError(f"expected MolecularIntegrals or QubitHamiltonian, got {type(source).__name__}")


def sector_matrix(H: QubitHamiltonian, configs) -> sp.csr_matrix:
    """Sparse Hamiltonian restricted to a sorted configuration list."""
    configs = np.asarray(configs, dtype=np.int64)
    rows, cols, vals = sector_entries(H, configs)
    dim = len(configs)
    return sp.csr_matrix((vals, (rows, cols)), shape=(dim, dim))


def lanczos(matvec, dim: int, v0=None, tol: float = 1e-9, krylov: int = 80, max_restarts: int = 200):
    """Lowest eigenpair by restarted Lanczos with full reorthogonalization.

    Each cycle builds a Krylov basis of at most ``krylov`` vectors starting
    from the current Ritz vector. Stops when ``||H v - theta v|| < tol``.
    """
    rng = np.random.default_rng(0)
    v = rng.standard_normal(dim) if v0 is None else np.array(v0, dtype=float)
    v /= np.linalg.norm(v)
    m = min(krylov, dim)
    theta = np.nan
    for _ in range(max_restarts):
        V = np.zeros((m, dim))
        alpha, beta = [], []
        V[0] = v
        k = 0
        for k in range(m):
            w = matvec(V[k])
            alpha.append(V[k] @ w)
            w -= V[: k + 1].T @ (V[: k + 1] @ w)
            w -= V[: k + 1].T @ (V[: k + 1] @ w)
            b = np.linalg.norm(w)
            if k + 1 == m or b < 1e-12:
                break
            beta.append(b)
            V[k + 1] = w / b
        T = np.diag(alpha) + np.diag(beta[:k], 1) + np.diag(beta[:k], -1)
        evals, evecs = np.linalg.eigh(T)
        theta = evals[0]
        v = evecs[:, 0] @ V[: k + 1]
        v /= np.linalg.norm(v)
        resid = np.linalg.norm(matvec(v) - theta * v)
        if resid < tol:
            return float(theta), v
    raise RuntimeError(f"Lanczos did not reach residual {tol} (last {resid:.2e})")


# amplitudes below this are eigensolver roundoff on symmetry-forbidden determinants
ZERO_AMPLITUDE = 1e-12


def _fix_sign(vec):
    """Unit vector with its largest entry positive and roundoff zeroed."""
    vec = np.array(vec, dtype=float)
    vec[np.abs(vec) < ZERO_AMPLITUDE * np.abs(vec).max()] = 0.0
    vec /= np.linalg.norm(vec)
    return vec if vec[np.argmax(np.abs(vec))] >= 0 else -vec


def _solve(H: QubitHamiltonian, configs, mode, dense_cap, iterative_cap, tol):
    dim = len(configs)
    if dim == 0:
        raise ValueError("empty basis")
    if mode == "auto":
        mode = "dense" if dim <= dense_cap else "iterative"
    if mode == "dense":
        if dim > dense_cap:
            raise ResourceError(f"dimension {dim} exceeds the dense cap {dense_cap}")
        M = sector_matrix(H, configs).toarray()
        evals, evecs = np.linalg.eigh(M)
        return float(evals[0]), evecs[:, 0]
    if mode != "iterative":
        raise ValueError(f"unknown solver mode {mode!r}")
    if dim > iterative_cap:
        raise ResourceError(f"dimension {dim} exceeds the iterative cap {iterative_cap}")
    M = sector_matrix(H, configs)
    if dim == 1:
        return float(M[0, 0]), np.ones(1)
    v0 = np.zeros(dim)
    v0[np.argmin(M.diagonal())] = 1.0
    v0 += 1e-3 * np.random.default_rng(0).standard_normal(dim)
    return lanczos(M.dot, dim, v0=v0, tol=tol)


@dataclass(frozen=True, eq=False)
class OracleWavefunction:
    """Real CI vector on a sector basis, unit norm, with its energy."""

    basis: SectorBasis
    amplitudes: np.ndarray
    energy: float
    label: str = "fci"

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=float)
        if amps.shape != (len(self.basis),):
            raise ValueError("amplitude vector does not match the basis")
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"amplitudes are not normalized (norm {norm:.15f})")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def probabilities(self) -> np.ndarray:
        return self.amplitudes ** 2

    def amplitude(self, x) -> np.ndarray:
        idx = self.basis.index(x)
        return np.where(idx >= 0, self.amplitudes[idx.clip(0)], 0.0)

    def table(self) -> "TableWavefunction":
        return TableWavefunction(self.basis.configs, self.amplitudes)

    def rayleigh(self, H: QubitHamiltonian) -> float:
        M = sector_matrix(H, self.basis.configs)
        return float(self.amplitudes @ M.dot(self.amplitudes))


class TableWavefunction:
    """Wavefunction stored as a lookup table.

    ``log_psi(x)`` returns ``(log|c_x|, arg c_x)``, with ``-inf`` for
    configurations that are absent or have zero amplitude.
    """

    def __init__(self, configs, amplitudes):
        amplitudes = np.asarray(amplitudes)
        with np.errstate(divide="ignore"):
            log_amp = np.log(np.abs(amplitudes))
        self._set(configs, log_amp, np.angle(amplitudes).astype(float))

    @classmethod
    def from_logs(cls, configs, log_amp, phase) -> "TableWavefunction":
        obj = cls.__new__(cls)
        obj._set(configs, log_amp, phase)
        return obj

    def _set(self, configs, log_amp, phase):
        configs = np.asarray(configs, dtype=np.int64)
        order = np.argsort(configs)
        self.configs = configs[order]
        self.log_amp = np.asarray(log_amp, dtype=float)[order]
        self.phase = np.asarray(phase, dtype=float)[order]

    def log_psi(self, x):
        x = np.asarray(x, dtype=np.int64).reshape(-1)
        if not len(self.configs):
            return np.full(len(x), -np.inf), np.zeros(len(x))
        pos = np.searchsorted(self.configs, x).clip(0, len(self.configs) - 1)
        found = self.configs[pos] == x
        return np.where(found, self.log_amp[pos], -np.inf), np.where(found, self.phase[pos], 0.0)

    def amplitudes(self) -> np.ndarray:
        return np.exp(self.log_amp + 1j * self.phase)


def fci_ground_state(
    source,
    sector: SectorSpec | None = None,
    mode: str = "auto",
    dense_cap: int = DEFAULT_DENSE_CAP,
    iterative_cap: int = ITERATIVE_CAP,
    tol: float = 1e-9,
) -> OracleWavefunction:
    """Lowest eigenpair over the full sector.

    ``source`` is ``MolecularIntegrals`` (sector defaults to its electron
    counts) or a ``QubitHamiltonian`` with an explicit sector. ``mode`` is
    'auto', 'dense' or 'iterative'.
    """
    if sector is None:
        if not isinstance(source, MolecularIntegrals):
            raise ValueError("a sector is required when passing a QubitHamiltonian")
        sector = SectorSpec.from_integrals(source)
    H = _hamiltonian(source)
    basis = enumerate_sector(H.n_qubits, sector)
    if len(basis) > iterative_cap:
        raise ResourceError(f"sector dimension {len(basis)} exceeds the iterative cap {iterative_cap}")
    energy, vec = _solve(H, basis.configs, mode, dense_cap, iterative_cap, tol)
    vec = _fix_sign(vec)
    return OracleWavefunction(basis, vec, energy, "fci")


def cisd_ground_state(
    source,
    sector: SectorSpec | None = None,
    order: int = 2,
    mode: str = "auto",
    dense_cap: int = DEFAULT_DENSE_CAP,
    iterative_cap: int = ITERATIVE_CAP,
    tol: float = 1e-9,
) -> OracleWavefunction:
    """Lowest eigenpair over excitations of at most ``order`` from the reference.

    ``order=2`` is CISD; the amplitudes are reported over the whole sector
    with zeros outside the truncated space.
    """
    if sector is None:
        if not isinstance(source, MolecularIntegrals):
            raise ValueError("a sector is required when passing a QubitHamiltonian")
        sector = SectorSpec.from_integrals(source)
    if order < 0:
        raise ValueError("truncation order must be nonnegative")
    H = _hamiltonian(source)
    basis = enumerate_sector(H.n_qubits, sector)
    ref = reference_configuration(H.n_qubits, sector)
    keep = np.flatnonzero(excitation_level(basis.configs, ref) <= order)
    if len(keep) > iterative_cap:
        raise ResourceError(f"truncated dimension {len(keep)} exceeds the iterative cap {iterative_cap}")
    energy, vec = _solve(H, basis.configs[keep], mode, dense_cap, iterative_cap, tol)
    full = np.zeros(len(basis))
    full[keep] = _fix_sign(vec)
    return OracleWavefunction(basis, full, energy, f"ci{order}")


# ---------------------------------------------------------------------------
# supervised pre-training


def fidelity(state: AnsatzState, target: OracleWavefunction) -> float:
    """``|<target|Psi>|^2`` with both states normalized over the sector."""
    support = np.flatnonzero(target.amplitudes)
    la, ph = evaluator(state, target.basis.sector)(target.basis.configs[support])
    overlap = np.sum(target.amplitudes[support] * np.exp(la + 1j * ph))
    return float(abs(overlap) ** 2)


@dataclass
class PretrainResult:
    state: AnsatzState
    fidelity: float
    history: list = field(default_factory=list)  # (epoch, loss, fidelity)


def pretrain(
    state: AnsatzState,
    target: OracleWavefunction,
    epochs: int = 300,
    rng: np.random.Generator | None = None,
    lr: float = 1e-2,
    phase_weight: float = 1.0,
    log_every: int = 10,
) -> PretrainResult:
    """Fit the ansatz to a CI vector.

    Minimizes ``-sum |c|^2 log p(x) - lam * sum |c|^2 cos(phi(x) - arg c)``
    over the support of the target by full-batch Adam. ``rng`` is accepted
    for interface symmetry; the procedure itself is deterministic.
    """
    norm = float(np.sum(target.amplitudes ** 2))
    if abs(norm - 1.0) > 1e-10:
        raise ValueError(f"target is not normalized (sum |c|^2 = {norm})")
    if epochs < 0:
        raise ValueError("epochs must be nonnegative")
    sector = target.basis.sector
    support = np.flatnonzero(target.amplitudes)
    xs = target.basis.configs[support]
    c = target.amplitudes[support]
    w = c * c
    arg = np.where(c < 0, math.pi, 0.0)
    opt = Adam(len(state.params), lr=lr, lr_min=lr / 100, total_steps=epochs)
    params = state.params.copy()
    history = []
    for epoch in range(epochs + 1):
        cur = state.with_params(params)
        la, ph = evaluator(cur, sector)(xs)
        dphi = ph - arg
        loss = float(-np.sum(w * 2.0 * la) - phase_weight * np.sum(w * np.cos(dphi)))
        if epoch % log_every == 0 or epoch == epochs:
            fid = float(abs(np.sum(c * np.exp(la + 1j * ph))) ** 2)
            history.append((epoch, loss, fid))
        if epoch == epochs:
            break
        g = vjp(cur, xs, sector, -2.0 * w, phase_weight * w * np.sin(dphi))
        params = opt.step(params, g)
    final = state.with_params(params)
    return PretrainResult(final, history[-1][2], history)
