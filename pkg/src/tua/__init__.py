"""Targeted universal attack on two-layer graph convolutional networks.

Library layout:

- :mod:`tua.graphs` - graph containers, symmetric normalization, fake-node
  injection, victim linking
- :mod:`tua.gcn` - the two-layer GCN, training, analytic feature gradients,
  checkpoints
- :mod:`tua.subgraph` - exact 2-hop subgraph views used to accelerate
  gradients and predictions
- :mod:`tua.attack` - the greedy attack loop, node selection, ASR evaluation
- :mod:`tua.data` - dataset loaders, splits, the canonical JSON container
- :mod:`tua.experiments` - seeded sweeps, CSV records, the subgraph benchmark
- :mod:`tua.cli` - the ``tua`` command
"""

from .attack import (
    AttackConfig,
    AttackResult,
    IterationRecord,
    eligible_victims,
    evaluate_asr,
    grad_matrix,
    greedy_select,
    objective,
    run_attack,
    select_ancillary_nodes,
    select_attack_nodes,
)
from .data import (
    DatasetDescriptor,
    DESCRIPTORS,
    SplitMasks,
    binarize_features,
    load_canonical,
    load_citation_text,
    make_split,
    save_canonical,
)
from .errors import (
    ConfigurationError,
    DatasetParseError,
    GraphStructureError,
    ValidationError,
)
from .gcn import (
    GcnParams,
    TrainConfig,
    accuracy,
    forward,
    load_checkpoint,
    objective_grad_wrt_fake,
    predict,
    save_checkpoint,
    train,
)
from .graphs import (
    Graph,
    NormalizedAdjacency,
    PerturbedGraph,
    build_graph,
    inject_fake_nodes,
    link_victim,
    normalize,
    unlink_victim,
)
from .subgraph import (
    SubgraphCache,
    SubgraphView,
    extract,
    forward_on_subgraph,
    grad_on_subgraph,
)

__version__ = "0.1.0"
