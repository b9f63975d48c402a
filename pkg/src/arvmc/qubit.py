"""Second-quantized Hamiltonian to Jordan-Wigner Pauli strings.

Pauli strings are stored as ``weight * i**phase_exp * X^x_mask Z^z_mask``
where ``weight`` is the ordinary (real) Pauli coefficient and ``phase_exp``
counts the Y factors, since ``Y = i X Z``. Acting on a basis state,

    P |x> = weight * i**phase_exp * (-1)**popcount(z_mask & x) |x ^ x_mask>

Terms sharing an ``x_mask`` form one coupling group: they all connect ``x``
to the same ``x ^ x_mask``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .sector import SectorSpec, popcount, sector_configs

__all__ = [
    "FermionTerm",
    "PauliTerm",
    "QubitHamiltonian",
    "HamiltonianError",
    "build_fermion_terms",
    "jordan_wigner",
    "assemble",
    "apply_pauli",
    "connected",
    "to_dense",
    "DEFAULT_PRUNE_EPS",
    "DEFAULT_DENSE_CAP",
]

DEFAULT_PRUNE_EPS = 1e-12
DEFAULT_DENSE_CAP = 4000
_IMAG_TOL = 1e-12
# summed group elements below this are cancellation residue, not couplings
_ZERO_TOL = 1e-13


class HamiltonianError(RuntimeError):
    pass


class FermionTerm(NamedTuple):
    """``coeff * prod(op)`` with ``ops`` a tuple of ``(index, is_creation)``."""

    coeff: float
    ops: tuple

    def __str__(self):
        body = " ".join(f"a+{p}" if dag else f"a{p}" for p, dag in self.ops)
        return f"{self.coeff:+.12g} {body}".strip()


@dataclass(frozen=True)
class PauliTerm:
    weight: float
    x_mask: int
    z_mask: int
    phase_exp: int

    def label(self) -> str:
        return _pauli_label(self.x_mask, self.z_mask)


def _pauli_label(x_mask: int, z_mask: int) -> str:
    parts = []
    both = int(x_mask) | int(z_mask)
    q = 0
    while both >> q:
        xb, zb = (int(x_mask) >> q) & 1, (int(z_mask) >> q) & 1
        if xb or zb:
            parts.append(("Y" if zb else "X") if xb else "Z")
            parts[-1] += str(q)
        q += 1
    return " ".join(parts) if parts else "I"


# ---------------------------------------------------------------------------
# fermionic terms


def build_fermion_terms(ints) -> list[FermionTerm]:
    """Spin-orbital terms of the electronic Hamiltonian.

    One-body terms are ``h(p,q) a+_P a_Q`` for equal spins. Two-body terms
    ``1/2 (pr|qs) a+_P a+_Q a_S a_R`` are brought to a canonical order
    (creators ascending, annihilators descending) and merged. The nuclear
    repulsion is returned as a term with no operators.
    """
    n = ints.n_spatial
    terms = []
    if ints.e_nuc != 0.0:
        terms.append(FermionTerm(float(ints.e_nuc), ()))

    for p in range(n):
        for q in range(n):
            v = ints.h1[p, q]
            if v == 0.0:
                continue
            for s in (0, 1):
                terms.append(FermionTerm(float(v), ((2 * p + s, True), (2 * q + s, False))))

    g = ints.g2
    p, r, q, s = np.nonzero(g)  # g[p, r, q, s] = (pr|qs)
    vals = g[p, r, q, s]
    blocks = []
    for sig in (0, 1):
        for tau in (0, 1):
            P, Q = 2 * p + sig, 2 * q + tau
            R, S = 2 * r + sig, 2 * s + tau
            blocks.append((P, Q, S, R, 0.5 * vals))
    P, Q, S, R, c = (np.concatenate(parts) for parts in zip(*blocks))
    keep = (P != Q) & (R != S)
    P, Q, S, R, c = P[keep], Q[keep], S[keep], R[keep], c[keep]
    swap_c = P > Q
    swap_a = S < R
    sign = np.where(swap_c ^ swap_a, -1.0, 1.0)
    P, Q = np.where(swap_c, Q, P), np.where(swap_c, P, Q)
    S, R = np.where(swap_a, R, S), np.where(swap_a, S, R)
    key = np.stack([P, Q, S, R], axis=1)
    uniq, inv = np.unique(key, axis=0, return_inverse=True)
    coeff = np.zeros(len(uniq))
    np.add.at(coeff, inv.ravel(), sign * c)
    for (a, b, cc, d), v in zip(uniq.tolist(), coeff.tolist()):
        if v != 0.0:
            terms.append(FermionTerm(v, ((a, True), (b, True), (cc, False), (d, False))))
    return terms


# ---------------------------------------------------------------------------
# Jordan-Wigner in X^a Z^b form


def _jw_expand(indices: np.ndarray, daggers: np.ndarray, coeffs: np.ndarray):
    """Expand products of ladder operators into (coeff, a, b) XZ strings.

    ``indices`` and ``daggers`` have shape ``(K, k)``. Each ladder operator
    is ``1/2 (X_j +- X_j Z_j) Z_{<j}``: plus for creation, minus for
    annihilation.
    """
    K, k = indices.shape
    c = coeffs.astype(complex)[:, None]
    a = np.zeros((K, 1), dtype=np.int64)
    b = np.zeros((K, 1), dtype=np.int64)
    for j in range(k):
        bit = np.left_shift(np.int64(1), indices[:, j].astype(np.int64))
        low = bit - 1
        opts_a = np.stack([bit, bit], axis=1)
        opts_b = np.stack([low, low | bit], axis=1)
        opts_c = np.stack([np.full(K, 0.5), np.where(daggers[:, j], 0.5, -0.5)], axis=1)
        # (X^a1 Z^b1)(X^a2 Z^b2) = (-1)^{|b1 & a2|} X^{a1^a2} Z^{b1^b2}
        sgn = 1 - 2 * (popcount(b[:, :, None] & opts_a[:, None, :]) & 1)
        c = (c[:, :, None] * opts_c[:, None, :] * sgn).reshape(K, -1)
        a = (a[:, :, None] ^ opts_a[:, None, :]).reshape(K, -1)
        b = (b[:, :, None] ^ opts_b[:, None, :]).reshape(K, -1)
    return c.ravel(), a.ravel(), b.ravel()


def _merge(c, a, b, prune_eps, hermitian=True):
    """Sum like XZ strings and convert to (weight, x, z, phase_exp).

    ``c`` holds coefficients of ``X^a Z^b``. Since ``X^a Z^b`` equals
    ``(-i)^ny`` times the Pauli string with ``ny`` Y factors, the Pauli weight
    is ``c (-i)^ny`` and ``phase_exp = ny``. A purely imaginary Pauli weight
    (only possible for a non-Hermitian input) is folded into one more power
    of ``i``. With ``hermitian=True`` any imaginary weight is an error.
    """
    if len(c) == 0:
        return np.zeros(0), np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0, np.int64)
    key = np.stack([a, b], axis=1)
    uniq, inv = np.unique(key, axis=0, return_inverse=True)
    total = np.zeros(len(uniq), dtype=complex)
    np.add.at(total, inv.ravel(), c)
    ua, ub = uniq[:, 0], uniq[:, 1]
    ny = popcount(ua & ub)
    w = total * (-1j) ** (ny % 4)
    keep = np.abs(w) >= prune_eps if prune_eps > 0 else np.abs(w) > 0
    w, ua, ub, ny = w[keep], ua[keep], ub[keep], ny[keep]
    tol = max(_IMAG_TOL, 1e-12 * np.abs(w).max(initial=0.0))
    imag = np.abs(w.imag) > tol
    mixed = imag & (np.abs(w.real) > tol)
    if np.any(mixed) or (hermitian and np.any(imag)):
        i = int(np.argmax(mixed if np.any(mixed) else imag))
        raise HamiltonianError(
            f"Pauli string {_pauli_label(ua[i], ub[i])} has complex weight {w[i]}; "
            "the operator is not Hermitian"
        )
    weight = np.where(imag, w.imag, w.real)
    phase = (ny + imag) % 4
    return weight, ua, ub, phase


def _terms_to_arrays(terms):
    by_len: dict[int, list] = {}
    const = 0.0
    for t in terms:
        if not t.ops:
            const += t.coeff
            continue
        by_len.setdefault(len(t.ops), []).append(t)
    cs, as_, bs = [np.array([const], complex)], [np.zeros(1, np.int64)], [np.zeros(1, np.int64)]
    for group in by_len.values():
        idx = np.array([[p for p, _ in t.ops] for t in group], dtype=np.int64)
        dag = np.array([[d for _, d in t.ops] for t in group], dtype=bool)
        co = np.array([t.coeff for t in group], dtype=float)
        c, a, b = _jw_expand(idx, dag, co)
        cs.append(c), as_.append(a), bs.append(b)
    return np.concatenate(cs), np.concatenate(as_), np.concatenate(bs)


def jordan_wigner(term: FermionTerm, n_qubits: int, prune_eps: float = DEFAULT_PRUNE_EPS) -> list[PauliTerm]:
    """Map one fermionic term to merged Pauli strings.

    A lone non-Hermitian term such as ``a+_0 a_1`` maps to strings with
    imaginary Pauli coefficients; those carry the extra factor of ``i`` in
    ``phase_exp``. They cancel once the conjugate term is merged in.
    """
    for p, _ in term.ops:
        if not 0 <= p < n_qubits:
            raise IndexError(f"spin-orbital index {p} out of range for {n_qubits} qubits")
    c, a, b = _terms_to_arrays([term])
    w, a, b, ph = _merge(c, a, b, prune_eps, hermitian=False)
    return [PauliTerm(float(wi), int(ai), int(bi), int(pi)) for wi, ai, bi, pi in zip(w, a, b, ph)]


# ---------------------------------------------------------------------------


class QubitHamiltonian:
    """Merged Pauli strings grouped by ``x_mask``.

    Terms are stored sorted by group; ``group_start[g]:group_start[g+1]``
    indexes the terms of group ``g`` whose flip pattern is ``group_x[g]``.
    """

    def __init__(self, n_qubits, weights, x_masks, z_masks, phase_exp):
        order = np.lexsort((z_masks, x_masks))
        self.n_qubits = int(n_qubits)
        self.weights = np.asarray(weights, dtype=float)[order]
        self.x_masks = np.asarray(x_masks, dtype=np.int64)[order]
        self.z_masks = np.asarray(z_masks, dtype=np.int64)[order]
        self.phase_exp = np.asarray(phase_exp, dtype=np.int64)[order] % 4
        for arr in (self.weights, self.x_masks, self.z_masks, self.phase_exp):
            arr.setflags(write=False)
        if self.n_terms:
            top = int((self.x_masks | self.z_masks).max())
            if top >> self.n_qubits:
                raise ValueError("Pauli masks exceed the qubit count")
        starts = np.flatnonzero(np.r_[True, np.diff(self.x_masks) != 0]) if self.n_terms else np.zeros(0, int)
        self.group_x = self.x_masks[starts]
        self.group_start = np.r_[starts, self.n_terms].astype(np.int64)
        # i**phase * weight; real whenever every phase is even
        self._coef = self.weights * (1j ** self.phase_exp)
        self._real = bool(np.all(self.phase_exp % 2 == 0))
        if self._real:
            self._coef = self._coef.real

    @classmethod
    def from_terms(cls, terms, n_qubits, prune_eps=DEFAULT_PRUNE_EPS) -> "QubitHamiltonian":
        """Merge Pauli terms (possibly repeated) into a Hermitian Hamiltonian."""
        terms = list(terms)
        w = np.array([t.weight for t in terms], dtype=float)
        a = np.array([t.x_mask for t in terms], dtype=np.int64)
        b = np.array([t.z_mask for t in terms], dtype=np.int64)
        ph = np.array([t.phase_exp for t in terms], dtype=np.int64)
        # back to XZ form, c = w * i^ph
        c = w * (1j ** ph)
        w, a, b, ph = _merge(c, a, b, prune_eps)
        return cls(n_qubits, w, a, b, ph)

    @property
    def n_terms(self) -> int:
        return len(self.weights)

    @property
    def n_groups(self) -> int:
        return len(self.group_x)

    @property
    def terms(self) -> list[PauliTerm]:
        return [
            PauliTerm(float(w), int(a), int(b), int(p))
            for w, a, b, p in zip(self.weights, self.x_masks, self.z_masks, self.phase_exp)
        ]

    @property
    def groups(self) -> dict[int, range]:
        return {
            int(x): range(int(self.group_start[g]), int(self.group_start[g + 1]))
            for g, x in enumerate(self.group_x)
        }

    @property
    def constant(self) -> float:
        hit = (self.x_masks == 0) & (self.z_masks == 0)
        return float(self.weights[hit].sum())

    def dump(self) -> str:
        """``weight  pauli-string`` lines sorted by descending |weight|."""
        order = np.argsort(-np.abs(self.weights), kind="stable")
        return "\n".join(
            f"{self.weights[i]: .12e}  {_pauli_label(self.x_masks[i], self.z_masks[i])}" for i in order
        ) + "\n"

    def connected_batch(self, x, chunk: int = 4096):
        """Matrix elements ``<x ^ group_x[g]|H|x>`` for every group.

        Returns ``(targets, elements)``, both ``(B, n_groups)``. Elements are
        real, with cancellation residue below 1e-13 set to zero; raises ``HamiltonianError`` if an imaginary residue survives.
        """
        x = np.asarray(x, dtype=np.int64).ravel()
        out = np.empty((len(x), self.n_groups), dtype=float)
        starts = self.group_start[:-1]
        for lo in range(0, len(x), chunk):
            xs = x[lo:lo + chunk]
            sign = 1.0 - 2.0 * (np.bitwise_count(xs[:, None] & self.z_masks[None, :]) & 1)
            vals = np.add.reduceat(sign * self._coef, starts, axis=1) if self.n_terms else sign[:, :0]
            if not self._real:
                resid = np.abs(vals.imag).max(initial=0.0)
                if resid > _IMAG_TOL:
                    raise HamiltonianError(f"matrix element has imaginary part {resid:.3e}")
                vals = vals.real
            vals[np.abs(vals) < _ZERO_TOL] = 0.0
            out[lo:lo + chunk] = vals
        return x[:, None] ^ self.group_x[None, :], out


def assemble(ints, prune_eps: float = DEFAULT_PRUNE_EPS) -> QubitHamiltonian:
    terms = build_fermion_terms(ints)
    c, a, b = _terms_to_arrays(terms)
    w, a, b, ph = _merge(c, a, b, prune_eps)
    return QubitHamiltonian(ints.n_orbitals, w, a, b, ph)


def apply_pauli(term: PauliTerm, x: int):
    """Return ``(x', amplitude)`` with ``term |x> = amplitude |x'>``."""
    x = int(x)
    sign = -1 if bin(term.z_mask & x).count("1") % 2 else 1
    amp = term.weight * (1j ** term.phase_exp) * sign
    return x ^ term.x_mask, amp


def connected(H: QubitHamiltonian, x: int, tol: float = 0.0) -> list[tuple[int, float]]:
    """Configurations coupled to ``x`` with their real matrix elements.

    One entry per coupling group whose summed element exceeds ``tol`` in
    magnitude (exact zeros always dropped). The diagonal comes first when
    present.
    """
    xp, el = H.connected_batch(np.array([x]))
    xp, el = xp[0], el[0]
    keep = np.abs(el) > tol
    return [(int(a), float(e)) for a, e in zip(xp[keep], el[keep])]


def to_dense(H: QubitHamiltonian, sector, cap: int = DEFAULT_DENSE_CAP, tol: float = 1e-12) -> np.ndarray:
    """Dense real matrix over a sector basis (``SectorSpec`` or sorted array)."""
    basis = sector_configs(H.n_qubits, sector) if isinstance(sector, SectorSpec) else np.asarray(sector)
    dim = len(basis)
    if dim > cap:
        raise MemoryError(f"sector dimension {dim} exceeds the dense cap {cap}")
    rows, cols, vals = sector_entries(H, basis, tol)
    M = np.zeros((dim, dim))
    M[rows, cols] = vals
    return M


def sector_entries(H: QubitHamiltonian, basis: np.ndarray, tol: float = 1e-12, chunk: int = 2048):
    """COO triplets ``(row, col, value)`` of H restricted to a sorted basis."""
    rows, cols, vals = [], [], []
    for lo in range(0, len(basis), chunk):
        xs = basis[lo:lo + chunk]
        xp, el = H.connected_batch(xs)
        pos = np.searchsorted(basis, xp).clip(0, len(basis) - 1)
        hit = (basis[pos] == xp) & (np.abs(el) > tol)
        r, g = np.nonzero(hit)
        rows.append(pos[r, g])
        cols.append(r + lo)
        vals.append(el[r, g])
    return np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
