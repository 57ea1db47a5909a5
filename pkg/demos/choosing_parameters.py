"""Choose encryption parameters for a security level, message bound and circuit depth.

Run: python3 demos/choosing_parameters.py
"""

from fhestats.params import depth_requirement_snb, params_help

for label, lam, bound, depth in [
    ("paired naive Bayes, 500 rows", 80, 10**6, depth_requirement_snb(True)),
    ("forest L=3, M=1", 128, 65536, 4),
    ("deep product chain", 128, 100, 8),
]:
    p = params_help(lam, bound, depth)
    print(f"{label:32s} d={p.d:5d} q=2^{p.q_bits:<4d} t={p.t:<8d} "
          f"depth bound {p.depth_bound}, about {p.security_estimate_bits} bits")
