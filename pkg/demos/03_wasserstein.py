# # Wasserstein distances
#
# In one dimension W2 compares sorted samples.  In two dimensions the
# optimal coupling between equal-size clouds is a linear assignment.

import numpy as np

from dpdd import w2_assignment, w2_sorted_samples

rng = np.random.default_rng(2)

# Two unit Gaussians one unit apart are at distance exactly 1.
a = rng.normal(0.0, 1.0, 10_000)
b = rng.normal(1.0, 1.0, 10_000)
print("W2(N(0,1), N(1,1)) from samples:", round(w2_sorted_samples(a, b), 4))

# Sorting is the optimal matching on the line, so the assignment solver agrees.
a, b = rng.normal(size=50), rng.normal(size=50)
print("1D assignment minus sorted:", abs(w2_assignment(a, b) - w2_sorted_samples(a, b)))

# A pure translation of a planar cloud moves every point by the same vector.
cloud = rng.normal(size=(300, 2))
print("translated cloud:", round(w2_assignment(cloud, cloud + [3.0, 4.0]), 12))
