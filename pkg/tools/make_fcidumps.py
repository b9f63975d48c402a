"""Regenerate the bundled STO-3G FCIDUMP files.

Needs pyscf, which is not a runtime dependency of arvmc. Integrals are over
canonical RHF orbitals, no frozen core, so orbital order follows orbital
energy. After running this, refresh the oracle manifest with
``python -m arvmc make-fixtures``.
"""

import math
import pathlib

from pyscf import gto, scf, tools

DATA = pathlib.Path(__file__).resolve().parents[1] / "src" / "arvmc" / "data"


def water(r=0.9578, angle=104.4776):
    th = math.radians(angle)
    return f"O 0 0 0; H {r} 0 0; H {r * math.cos(th):.8f} {r * math.sin(th):.8f} 0"


MOLECULES = {
    "h2": ("H 0 0 0; H 0 0 0.7414", "H2 R=0.7414"),
    "lih": ("Li 0 0 0; H 0 0 1.5949", "LiH R=1.5949"),
    "beh2": ("Be 0 0 0; H 0 0 1.3264; H 0 0 -1.3264", "BeH2 linear R=1.3264"),
    "h2o": (water(), "H2O R=0.9578 A=104.4776"),
    "n2": ("N 0 0 0; N 0 0 1.0977", "N2 R=1.0977"),
    "c2": ("C 0 0 0; C 0 0 1.2425", "C2 R=1.2425"),
}

H2_CURVE = [0.5, 0.6, 0.7414, 1.0, 1.4, 1.8535]


def dump(name, atom):
    mol = gto.M(atom=atom, basis="sto-3g", unit="angstrom", verbose=0)
    mf = scf.RHF(mol)
    mf.conv_tol = 1e-12
    mf.kernel()
    path = DATA / f"{name}.fcidump"
    tools.fcidump.from_scf(mf, str(path), tol=1e-14)
    print(f"{path.name}: E_HF = {mf.e_tot:.10f}")


def main():
    DATA.mkdir(parents=True, exist_ok=True)
    for name, (atom, _) in MOLECULES.items():
        dump(name, atom)
    for r in H2_CURVE:
        dump(f"h2_r{r:.4f}", f"H 0 0 0; H 0 0 {r}")


if __name__ == "__main__":
    main()
