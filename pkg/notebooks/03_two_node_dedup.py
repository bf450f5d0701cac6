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
# # Deduplication across teams with two compute nodes
#
# Three field teams register people. Each team uploads XOR shares of its
# embeddings to two nodes that never see plaintext. A new batch from team 1
# is checked against everyone else's records, and team 1 alone learns which
# records look like duplicates.

# %%
import tempfile
from pathlib import Path

import numpy as np

from xdup.core import Rng
from xdup.dataset import generate_base, perturb
from xdup.embedding import EmbeddingParams
from xdup.system import ComputeNode, NodeConfig, TeamClient

params = EmbeddingParams(dimension=511, seed=1, tau=128)
root = Path(tempfile.mkdtemp())

n2 = ComputeNode(NodeConfig(2, params.dimension, params.tau, root / "n2")).start()
n1 = ComputeNode(NodeConfig(1, params.dimension, params.tau, root / "n1", peer_address=n2.peer_listen_address)).start()
teams = {t: TeamClient(t, params, n1.client_address, n2.client_address, Rng(t)) for t in (1, 2, 3)}

# %%
people = generate_base(600, seed=9)
for t in teams:
    teams[t].setup(people[(t - 1) * 200 : t * 200])
print(teams[1].info(1))

# %% [markdown]
# Team 1's new batch: two people already registered by teams 2 and 3 (with
# transcription noise) and three new people.

# %%
rng = np.random.default_rng(4)
batch = [perturb(people[250], rng=rng), perturb(people[530], rng=rng)] + generate_base(3, seed=10)
handle = teams[1].query(batch)
result = teams[1].retrieve(handle, timeout=300)
for d in result.duplicates:
    print(f"query {d.query} looks like record {d.record} of team {d.team}")

# %%
print("lengths at node 1", n1.store.lengths())
print("lengths at node 2", n2.store.lengths())
n1.stop()
n2.stop()
