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
# # Records to bit strings, and picking tau
#
# Records are cut into attribute-tagged bigrams, and every output bit is a
# 1-bit MinHash of that set. Two records agree on a bit with probability
# `(1 + J) / 2` for Jaccard similarity `J`, so Hamming distance tracks
# dissimilarity.

# %%
import numpy as np

from xdup.dataset import build_eval_corpus, generate_base, perturb
from xdup.embedding import EmbeddingParams, calibrate_threshold, embed, embed_many, min_distances, record_to_grams
from xdup.oracle import exact_jaccard

params = EmbeddingParams(dimension=511, seed=1)
rec = generate_base(1, seed=5)[0]
typo = perturb(rec, rng=np.random.default_rng(3))
print(rec.as_dict())
print(typo.as_dict())

# %%
J = float(exact_jaccard(record_to_grams(rec), record_to_grams(typo)))
d = (embed(rec, params).to_bits() != embed(typo, params).to_bits()).sum()
print(f"J = {J:.3f}, expected distance {(1 - J) / 2 * 511:.0f}, observed {d}")

# %% [markdown]
# ## Calibration
#
# A generated corpus: reference records, perturbed copies of some of them,
# and fresh records. A test record is flagged when its nearest reference
# record is within `tau`. We take the largest `tau` keeping the false
# positive rate at or below 0.1%. A smaller corpus keeps this quick; the
# acceptance suite runs the full desk scale.

# %%
corpus = build_eval_corpus(1 << 12, 1 << 10, 1 << 10, seed=1)
ref = embed_many(corpus.reference, params)
test = embed_many([p.record for p in corpus.test], params)
cal = calibrate_threshold(ref, test, corpus.labels, 0.001)
print(cal)

# %%
dist = min_distances(test, ref)
for name, sel in (("duplicates", corpus.labels), ("non-duplicates", ~corpus.labels)):
    print(f"{name:15s} min distance quartiles {np.percentile(dist[sel], [25, 50, 75])}")
