"""Black-box evasion testing for permission-based malware detectors.

Pipeline modules: featurespace (binary feature vectors), detectors (five
model families behind one query-only contract), importance (OOB permutation
importance and perturbable-category selection), evoattack (the genetic
attack and its brute-force oracle), hardening (defensive distillation),
synth (seeded synthetic corpus), experiment (master-seed orchestration),
report (byte-stable emission) and cli.
"""

__version__ = "0.1.0"
