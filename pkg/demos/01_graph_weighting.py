"""Build a small graph and look at the three edge-weighting schemes.

A path 0-1-2-3 plus a triangle on 3-4-5. Self-loops are added, so every
row has at least one entry. Symmetric normalization scales by
1/sqrt(d_v d_u); row normalization makes every row sum to one.
"""

import numpy as np

from nagg import EdgeList, build_graph, row_normalize, sym_normalize

edges = EdgeList.from_pairs([(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 3)], num_nodes=6)
g = build_graph(edges)

np.set_printoptions(precision=3, suppress=True)
print("binary adjacency with self-loops")
print(g.to_dense())
print("\nsymmetric normalization")
print(sym_normalize(g).to_dense())
rn = row_normalize(g).to_dense()
print("\nrow normalization, row sums:", rn.sum(axis=1))
