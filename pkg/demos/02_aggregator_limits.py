"""Watch the nonlinear aggregators move between sum/mean and max.

One node with four neighbors carrying scalar features. As the parameter
grows, lp and poly approach the neighborhood max. Softmax normalizes over
the neighborhood itself, so it is run on unit edge weights: it starts at
the neighborhood mean and ends at the max. With row-normalized weights the edge
weights and the softmax both normalize, and the result shrinks by the degree.
"""

import numpy as np

from nagg import EdgeList, Tensor, agg_lp, agg_max, agg_poly, agg_softmax, agg_sum, build_graph
from nagg.graph import row_normalize

edges = EdgeList.from_pairs([(0, 1), (0, 2), (0, 3), (0, 4)], num_nodes=5)
binary = build_graph(edges, add_self_loops=False)
g = row_normalize(binary)
h = Tensor(np.array([[0.0], [1.0], [2.0], [3.0], [5.0]]))

print(f"mean of neighbors {agg_sum(g, h).data[0, 0]:.4f}")
print(f"max of neighbors  {agg_max(g, h).data[0, 0]:.4f}\n")
print(f"{'param':>7} {'lp':>8} {'poly':>8} {'softmax':>8}")
for param in (1.0, 2.0, 4.0, 16.0, 128.0):
    lp = agg_lp(g, h, param).data[0, 0]
    poly = agg_poly(g, h, param - 1.0).data[0, 0]
    soft = agg_softmax(binary, h, param - 1.0).data[0, 0]
    print(f"{param:7g} {lp:8.4f} {poly:8.4f} {soft:8.4f}")
shrunk = agg_softmax(g, h, 127.0).data[0, 0]
print(f"\nsoftmax at gamma 127 with row-normalized weights: {shrunk:.4f}")
print("(poly and softmax use param - 1, so the first row is alpha = gamma = 0)")
