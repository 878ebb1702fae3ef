# coding: utf-8

# # From accuracy trajectories to buffer quotas
#
# A replay buffer has a fixed number of slots. This notebook follows one
# accuracy table through forgetting rates, interference, attention and the
# final per-task slot counts.

# In[1]:

import numpy as np
import matplotlib.pyplot as plt

from corereplay import (AccuracyHistory, AqaConfig, allocate, attention_to_counts, compute_attention,
                        forgetting_rates, interference_rates)


# Four rounds of training. Row i holds the test accuracy of every task seen so
# far, measured right after round i.

# In[2]:

history = AccuracyHistory()
for i, row in enumerate([
    {1: 0.99},
    {1: 0.97, 2: 0.98},
    {1: 0.96, 2: 0.45, 3: 0.97},
    {1: 0.95, 2: 0.08, 3: 0.60, 4: 0.98},
], start=1):
    history = history.record(i, row)

print(history.to_csv())


# Forgetting is the drop from a task's best earlier accuracy. Interference is a
# softmax over the drop caused by the latest round alone.

# In[3]:

tau = history.num_rounds
F = forgetting_rates(history, tau)
I = interference_rates(history, tau)
for p in F:
    print(f"task {p}: forgetting {F[p]:.3f}  interference {I[p]:.3f}")


# Attention grows like -log(1 - f). The newest task has no history of its own,
# so it borrows the interference-weighted forgetting of the others.

# In[4]:

raw = compute_attention(F, I, tau)
raw


# In[5]:

cfg = AqaConfig(lam=2.0, buffer_capacity=500)
alloc = allocate(raw, cfg)
counts = attention_to_counts(alloc.final, cfg)
for p in sorted(raw):
    print(f"task {p}: softmax {alloc.normalized[p]:.3f}  group {alloc.group(p)}  "
          f"share {alloc.final[p]:.3f}  slots {counts[p]}")


# Tasks whose softmax share falls at or under 1/(lambda n) keep exactly that
# floor. Everything else is split among the remaining tasks in proportion to
# their attention. Larger lambda lowers the floor, so quiet tasks get fewer slots.
# At lambda = 1 every task ends up with the same count; once the floor drops
# under every softmax share the split is purely proportional.

# In[6]:

lams = [1, 1.5, 2, 3, 5, 10]
table = np.array([[attention_to_counts(allocate(raw, AqaConfig(lam, 500)).final, AqaConfig(lam, 500))[p]
                   for p in sorted(raw)] for lam in lams])
for lam, row in zip(lams, table):
    print(f"lambda={lam:>4}: {row.tolist()}")


# In[7]:

fig, ax = plt.subplots(figsize=(6, 3.5))
bottom = np.zeros(len(lams))
for k, p in enumerate(sorted(raw)):
    ax.bar([str(l) for l in lams], table[:, k], bottom=bottom, label=f"task {p}")
    bottom += table[:, k]
ax.set_xlabel("lambda")
ax.set_ylabel("buffer slots")
ax.legend(fontsize=8)
fig.tight_layout()
fig.savefig("allocation_vs_lambda.png", dpi=120)
