"""Moment-to-cumulant coefficients for a few random phase laws."""
from fractions import Fraction

from wavekin import cumulants as cu

laws = {
    "gaussian": cu.gaussian_moments(6),
    "unit modulus": cu.unit_modulus_moments(6),
    "two-point |eta|^2 in {1/2, 3/2}": [Fraction(1, 2) ** k / 2 + Fraction(3, 2) ** k / 2 for k in range(7)],
}
for name, mu in laws.items():
    lam = cu.lambda_coefficients(12, mu)
    nonzero = {p: v for p, v in lam.items() if v != 0}
    print(f"{name}: {len(nonzero)} nonzero coefficients at n = 12")
    for p, v in sorted(nonzero.items())[:4]:
        print("  ", p, v)
    audit = cu.lambda_bound_audit(lam, 10.0)
    print("   bound audit:", audit)
