"""Relative F'=1 / F'=0 dipole couplings on the 87Rb D2 line.

Prints c1_plus (alpha = |F=1,m=-1>, sigma+ leg) and c1_minus
(beta = |F=1,m=+1>, sigma- leg) as ratios of the F'=1,m'=0 matrix element
to the F'=0,m'=0 matrix element of the same ground state.
"""
from sympy import Rational, sqrt, simplify
from sympy.physics.wigner import wigner_3j, wigner_6j

J, Jp, I = Rational(1, 2), Rational(3, 2), Rational(3, 2)
F = 1


def dipole(F, m, Fp, mp):
    q = m - mp
    return ((-1) ** (2 * Fp + J + I + m)
            * sqrt((2 * Fp + 1) * (2 * F + 1) * (2 * J + 1))
            * wigner_6j(J, Jp, 1, Fp, F, I)
            * wigner_3j(Fp, 1, F, mp, q, -m))


for name, m in (("c1_plus", -1), ("c1_minus", 1)):
    r = simplify(dipole(F, m, 1, 0) / dipole(F, m, 0, 0))
    print(f"{name} = {r} = {float(r):.12f}")
