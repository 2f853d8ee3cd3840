"""Empirical constants frozen by scripts/calibrate.py (held-out seeds 1000+, margin x1.25).

Rerun the script to regenerate; tests read these values, they are data, not tuning knobs.
"""

# recursive MAC: slots <= MAC_K * m^((levels+1)/levels), levels 1..3, m 16..4096, reuse 1
MAC_K = 34

# generalized MAC: slots <= K (A/m) m^((levels+1)/levels) log2 m, m in (256, 1024), levels 1..3
GENERALIZED_MAC_K = 5.6

# sessions at n=1024, M=32, Q=2: worst session span <= M + n/M + Q M c log2 n in >= 99% of runs
SESSION_C = 1.1

# balls into bins, as measured: regime (b) max load <= 3 log2 n, regime (a) loads in [f/2n, 2f/n]
BINS_B_FACTOR = 3.0
BINS_B_RATE = 1.0
BINS_A_RATE = 0.999
