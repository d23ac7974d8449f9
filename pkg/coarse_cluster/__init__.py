# Licensed under an MIT open source license - see LICENSE

from ._astropy_init import __version__, test

from .graphdata import AttributedGraph, load_graph
from .coarsen import multi_scale_coarsen, CoarsenedGraph
from .spectral import verify_theorems, SpectralReport
from .netfwd import ModelParams
from .trainer import TrainConfig, TrainResult, train, pretrain
from .metrics import clustering_metrics, MetricsReport
