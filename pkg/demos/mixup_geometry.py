"""Look at what feature-geometry mixup produces on a small world."""

import numpy as np

from semcond.mixup import class_centers, closest_classes, similarity_matrix, synthesize_mixup
from semcond.synthbench import make_world, planar_world

spec = planar_world(samples_per_class=200)
fs, table, catalog = make_world(spec)
seen = fs.restrict(spec.split().seen_ids(catalog))

centers = class_centers(seen)
A = similarity_matrix(centers)
print("squared center distances between seen classes:")
print(np.round(A.distances, 1))
for c in A.ids:
    print(f"  {catalog.names[c]:>10} -> closest {[catalog.names[n] for n in closest_classes(A, c, 2)]}")

pairs = synthesize_mixup(seen, table, neighbors=2, gamma=0.5, rng=np.random.default_rng(0))
print(f"\n{len(pairs)} mixed pairs from {len(seen)} real points")

# each mixed feature sits on the segment between its two source points, and
# its semantic vector sits at the same fraction along the semantic segment
i = 0
a, b = pairs.sources[i]
beta = pairs.betas[i]
print("beta", round(beta, 3))
print("feature residual", np.abs(pairs.features[i] - (beta * seen.features[a] + (1 - beta) * seen.features[b])).max())

# the mixed semantics cover the region between seen classes, where the unseen
# "north" and "south" classes live
north = table["north"]
d = np.linalg.norm(pairs.semantics - north, axis=1)
print("closest mixed semantic to 'north':", round(d.min(), 3))
