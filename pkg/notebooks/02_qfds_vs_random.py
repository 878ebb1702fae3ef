# coding: utf-8

# # Picking exemplars that keep the class mean
#
# Two ways to fill a quota of 10 from a pool of 200 points: uniform sampling,
# and the alternating random/greedy rule that steers the running mean of the
# chosen points toward the pool mean.

# In[1]:

import numpy as np
import matplotlib.pyplot as plt

from corereplay import class_feature_mean, qfds_select, random_select

rng = np.random.default_rng(0)
pool = np.concatenate([rng.normal([0, 0], [1.0, 0.4], size=(150, 2)),
                       rng.normal([3, 2], 0.5, size=(50, 2))])
mu = class_feature_mean(pool).mean
mu


# In[2]:

q = qfds_select(pool, 10, seed=1)
r = random_select(pool, 10, seed=1)
print("qfds  ", q, np.linalg.norm(pool[q].mean(axis=0) - mu))
print("random", r, np.linalg.norm(pool[r].mean(axis=0) - mu))


# Half of the picks are still random, so the selection keeps some spread. The
# greedy half corrects the drift those random picks introduce.

# In[3]:

fig, ax = plt.subplots(figsize=(5, 4))
ax.scatter(*pool.T, s=6, c="0.8")
ax.scatter(*pool[r].T, marker="x", label="random")
ax.scatter(*pool[q].T, marker="o", facecolors="none", edgecolors="C3", label="qfds")
ax.plot(*mu, "k*", ms=12, label="pool mean")
ax.legend(fontsize=8)
fig.tight_layout()
fig.savefig("qfds_vs_random.png", dpi=120)


# How far is the chosen mean from the pool mean, across many seeds and quotas?

# In[4]:

quotas = [2, 4, 8, 16, 32]
gap = {"qfds": [], "random": []}
for k in quotas:
    dq = [np.linalg.norm(pool[qfds_select(pool, k, seed=s)].mean(axis=0) - mu) for s in range(200)]
    dr = [np.linalg.norm(pool[random_select(pool, k, seed=s)].mean(axis=0) - mu) for s in range(200)]
    gap["qfds"].append(np.mean(dq))
    gap["random"].append(np.mean(dr))
for k, a, b in zip(quotas, gap["qfds"], gap["random"]):
    print(f"quota {k:>2}: qfds {a:.4f}  random {b:.4f}")


# In[5]:

fig, ax = plt.subplots(figsize=(5, 3.5))
for name, vals in gap.items():
    ax.loglog(quotas, vals, "o-", label=name)
ax.set_xlabel("quota")
ax.set_ylabel("mean distance to pool mean")
ax.legend()
fig.tight_layout()
fig.savefig("mean_gap_vs_quota.png", dpi=120)
