# ---
# jupyter:
#   jupytext:
#     text_representation:
#       extension: .py
#       format_name: percent
#   kernelspec:
#     display_name: Python 3
#     language: python
#     name: python3
# ---

# %% [markdown]
# # Fuzzy PSI over oblivious transfer
#
# Two parties hold sets of bit strings. The querier learns which pairs are
# within Hamming distance `tau`; the responder learns nothing. We run the
# plaintext-input protocol, then the two-server variant on XOR shares, and
# check both against brute force.

# %%
import numpy as np

from xdup.core import Rng
from xdup.fpsi import otfpsi_run, otfpsi_ss_run, reconstruct_matches, share_set
from xdup.oracle import bruteforce_fpsi

rng = np.random.default_rng(0)
l, tau = 63, 6
Q = rng.integers(0, 2, (4, l), dtype=np.uint8)
R = rng.integers(0, 2, (12, l), dtype=np.uint8)

# one neighbour inside tau, one outside it
for i, j, d in [(0, 3, 4), (2, 7, 9)]:
    R[j] = Q[i]
    R[j, rng.choice(l, d, replace=False)] ^= 1

# %%
matches, report = otfpsi_run(Q, R, tau, seed=1)
print("matches   ", sorted(matches.pairs()))
print("oracle    ", sorted(bruteforce_fpsi(Q.tolist(), R.tolist(), tau)))
print("OTs       ", dict(report.ot_count))
print("bytes     ", report.total_bytes)

# %% [markdown]
# One 1-of-2 OT per query bit and one 1-of-`p` OT per pair, whatever `tau`
# is. The byte count is the same at `tau = 0` and `tau = l`:

# %%
for t in (0, l):
    print(t, otfpsi_run(Q, R, t, seed=1)[1].total_bytes)

# %% [markdown]
# ## Secret-shared inputs
#
# Each compute node holds one XOR share of every element and ends with a
# share of the match matrix. `ss` spends one OT per compared bit; `ssb`
# spends one per bit of each input share plus correction terms.

# %%
sharer = Rng(2)
q_shares, r_shares = share_set(Q, sharer), share_set(R, sharer)
for protocol in ("ss", "ssb"):
    p1, p2, rep = otfpsi_ss_run(q_shares, r_shares, tau, protocol=protocol, seed=3)
    got = reconstruct_matches(p1, p2).pairs()
    print(f"{protocol:4s} matches {sorted(got)}  OTs {rep.initiator.ot.total}  bytes {rep.total_bytes}")

# %% [markdown]
# Neither share says anything alone: node 2's share is fresh random bits.

# %%
print(p2)
