"""FCIDUMP reading and writing.

Integrals are kept in chemists' notation, ``g2[p, q, r, s] = (pq|rs)``, over
0-based spatial orbital indices. The two-electron table is stored dense with
all eight permutational images filled in.
"""

from __future__ import annotations

import io
import logging
import os
import re
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "FCIDumpError",
    "MolecularIntegrals",
    "parse_fcidump",
    "load_fcidump",
    "write_fcidump",
]

log = logging.getLogger(__name__)


class FCIDumpError(ValueError):
    """Malformed FCIDUMP input. ``lineno`` is 1-based when known."""

    def __init__(self, message: str, lineno: int | None = None):
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)
        self.lineno = lineno


def _g2_images(p, q, r, s):
    return {
        (p, q, r, s), (q, p, r, s), (p, q, s, r), (q, p, s, r),
        (r, s, p, q), (s, r, p, q), (r, s, q, p), (s, r, q, p),
    }


@dataclass(frozen=True, eq=False)
class MolecularIntegrals:
    n_spatial: int
    n_electrons: int
    ms2: int
    e_nuc: float
    h1: np.ndarray
    g2: np.ndarray
    label: str = field(default="")

    def __post_init__(self):
        n = self.n_spatial
        if n < 1:
            raise ValueError("n_spatial must be positive")
        if self.n_electrons < 0 or abs(self.ms2) > self.n_electrons:
            raise ValueError("need n_electrons >= 0 and |ms2| <= n_electrons")
        if (self.n_electrons + self.ms2) % 2:
            raise ValueError("n_electrons + ms2 must be even")
        if self.h1.shape != (n, n) or self.g2.shape != (n, n, n, n):
            raise ValueError("integral tables do not match n_spatial")
        self.h1.setflags(write=False)
        self.g2.setflags(write=False)

    @property
    def n_orbitals(self) -> int:
        """Number of spin orbitals (qubits)."""
        return 2 * self.n_spatial

    @property
    def n_alpha(self) -> int:
        return (self.n_electrons + self.ms2) // 2

    @property
    def n_beta(self) -> int:
        return (self.n_electrons - self.ms2) // 2

    def integral(self, p: int, q: int, r: int | None = None, s: int | None = None) -> float:
        """``h(p, q)`` when called with two indices, ``(pq|rs)`` with four."""
        idx = (p, q) if r is None and s is None else (p, q, r, s)
        if None in idx:
            raise ValueError("give either two or four indices")
        for i in idx:
            if not 0 <= i < self.n_spatial:
                raise IndexError(f"orbital index {i} out of range [0, {self.n_spatial})")
        if len(idx) == 2:
            return float(self.h1[idx])
        return float(self.g2[idx])

    def records(self, tol: float = 0.0):
        """Yield canonical ``(value, i, j, k, l)`` records with 1-based indices."""
        n = self.n_spatial
        for p in range(n):
            for q in range(p + 1):
                for r in range(n):
                    for s in range(r + 1):
                        if p * (p + 1) // 2 + q < r * (r + 1) // 2 + s:
                            continue
                        v = self.g2[p, q, r, s]
                        if abs(v) > tol:
                            yield float(v), p + 1, q + 1, r + 1, s + 1
        for p in range(n):
            for q in range(p + 1):
                v = self.h1[p, q]
                if abs(v) > tol:
                    yield float(v), p + 1, q + 1, 0, 0
        yield float(self.e_nuc), 0, 0, 0, 0

    def same_as(self, other: "MolecularIntegrals") -> bool:
        return (
            self.n_spatial == other.n_spatial
            and self.n_electrons == other.n_electrons
            and self.ms2 == other.ms2
            and self.e_nuc == other.e_nuc
            and np.array_equal(self.h1, other.h1)
            and np.array_equal(self.g2, other.g2)
        )


_KEY_RE = re.compile(r"([A-Za-z_][A-Za-z0-9_]*)\s*=\s*([^=]*?)(?=,?\s*[A-Za-z_][A-Za-z0-9_]*\s*=|$)")


def _parse_header(header: str, lineno: int) -> dict[str, str]:
    body = header.strip()
    if body[:1] == "&":
        body = re.sub(r"^&\s*FCI", "", body, flags=re.IGNORECASE)
    body = re.sub(r"(&END|/)\s*$", "", body.strip(), flags=re.IGNORECASE)
    fields = {}
    for key, value in _KEY_RE.findall(body):
        fields[key.upper()] = value.strip().rstrip(",").strip()
    return fields


def _header_int(fields, key, lineno, default=None):
    if key not in fields:
        if default is not None:
            return default
        raise FCIDumpError(f"header is missing {key}", lineno)
    try:
        return int(fields[key])
    except ValueError:
        raise FCIDumpError(f"{key} is not an integer: {fields[key]!r}", lineno) from None


def parse_fcidump(text) -> MolecularIntegrals:
    """Parse FCIDUMP content from a string or a text stream.

    Both ``&END`` and ``/`` terminate the namelist. ORBSYM, ISYM and any
    other header fields are read and ignored.
    """
    if not isinstance(text, str):
        text = text.read()
    lines = text.splitlines()

    header_parts = []
    body_start = None
    for i, line in enumerate(lines):
        stripped = line.strip()
        if not header_parts and not stripped:
            continue
        header_parts.append(stripped)
        if re.search(r"(&END|/)\s*$", stripped, flags=re.IGNORECASE) or stripped.upper() == "&END":
            body_start = i + 1
            break
    if not header_parts or not header_parts[0].upper().startswith("&FCI"):
        raise FCIDumpError("expected a namelist header starting with &FCI", 1)
    if body_start is None:
        raise FCIDumpError("namelist header is not terminated by &END or /", len(lines))

    fields = _parse_header(" ".join(header_parts), body_start)
    norb = _header_int(fields, "NORB", body_start)
    nelec = _header_int(fields, "NELEC", body_start)
    ms2 = _header_int(fields, "MS2", body_start, default=0)
    if norb < 1:
        raise FCIDumpError(f"NORB must be positive, got {norb}", body_start)

    h1 = np.zeros((norb, norb))
    g2 = np.zeros((norb, norb, norb, norb))
    e_nuc = 0.0
    seen: dict[tuple, tuple[int, float]] = {}

    for lineno, line in enumerate(lines[body_start:], start=body_start + 1):
        parts = line.split()
        if not parts:
            continue
        if len(parts) != 5:
            raise FCIDumpError(f"expected 'value i j k l', got {line.strip()!r}", lineno)
        try:
            value = float(parts[0].replace("D", "E").replace("d", "e"))
        except ValueError:
            raise FCIDumpError(f"non-numeric value {parts[0]!r}", lineno) from None
        try:
            i, j, k, l = (int(x) for x in parts[1:])
        except ValueError:
            raise FCIDumpError(f"non-integer index in {line.strip()!r}", lineno) from None
        for idx in (i, j, k, l):
            if not 0 <= idx <= norb:
                raise FCIDumpError(f"index {idx} out of range [1, {norb}]", lineno)

        if i and j and k and l:
            p, q, r, s = i - 1, j - 1, k - 1, l - 1
            images = _g2_images(p, q, r, s)
            key = ("g", min(images))
            for img in images:
                g2[img] = value
        elif i and j and not k and not l:
            p, q = i - 1, j - 1
            key = ("h", min(p, q), max(p, q))
            h1[p, q] = h1[q, p] = value
        elif not (i or j or k or l):
            key = ("e",)
            e_nuc = value
        elif i and not j and not k and not l:
            # orbital energies written by some generators
            continue
        else:
            raise FCIDumpError(f"unsupported index pattern {i} {j} {k} {l}", lineno)
        if key in seen and abs(seen[key][1] - value) > 1e-10:
            log.warning("line %d: conflicting record for %s (first at line %d); keeping the last",
                        lineno, key, seen[key][0])
        seen[key] = (lineno, value)

    return MolecularIntegrals(norb, nelec, ms2, e_nuc, h1, g2)


def load_fcidump(path) -> MolecularIntegrals:
    path = os.fspath(path)
    with open(path) as f:
        ints = parse_fcidump(f)
    object.__setattr__(ints, "label", os.path.basename(path))
    return ints


def write_fcidump(ints: MolecularIntegrals, dest=None, tol: float = 0.0) -> str:
    """Serialize to FCIDUMP text. Writes to ``dest`` (path or stream) if given."""
    buf = io.StringIO()
    buf.write(f" &FCI NORB={ints.n_spatial},NELEC={ints.n_electrons},MS2={ints.ms2},\n")
    buf.write("  ORBSYM=" + "1," * ints.n_spatial + "\n")
    buf.write("  ISYM=1,\n &END\n")
    for value, i, j, k, l in ints.records(tol):
        buf.write(f"{value: .17e} {i:4d} {j:4d} {k:4d} {l:4d}\n")
    text = buf.getvalue()
    if dest is not None:
        if hasattr(dest, "write"):
            dest.write(text)
        else:
            with open(dest, "w") as f:
                f.write(text)
    return text
