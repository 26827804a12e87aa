"""Graph neural network aggregation with learnable nonlinear aggregators.

The package is layered bottom-up: ``graph`` (CSR structure and edge
weights), ``autodiff`` (a small reverse-mode engine), ``aggregators``
(sum, max, lp, poly, softmax), ``models`` (GCN/GAT layers), ``trainer``,
``data`` and the ``nagg`` command line in ``cli``.
"""

from .aggregators import (AggConfig, AggKind, agg_lp, agg_max, agg_poly, agg_softmax,
                          agg_sum, aggregate, global_min, reparam)
from .autodiff import Tape, Tensor, backward, grad_check
from .data import SBM_STD, DatasetBundle, SbmSpec, generate_sbm, load_dataset, make_splits
from .graph import EdgeList, Graph, Scheme, build_graph, row_normalize, sym_normalize
from .models import build_specs, init_params, model_forward
from .trainer import SplitMask, TrainConfig, train

__version__ = "0.1.0"
