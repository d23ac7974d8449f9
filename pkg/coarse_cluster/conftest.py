# Licensed under an MIT open source license - see LICENSE

# Imports the astropy header plugin so pytest reports the versions of the
# numerical stack no matter how it is invoked within the source tree.
import os

import pytest
from pytest_astropy_header.display import PYTEST_HEADER_MODULES

from coarse_cluster.tests.testing_utils import (planted_graph, path_graph,
                                                write_dataset)


def pytest_configure(config):

    config.option.astropy_header = True

    PYTEST_HEADER_MODULES.pop('Matplotlib', None)
    PYTEST_HEADER_MODULES['SciPy'] = 'scipy'
    PYTEST_HEADER_MODULES['scikit-learn'] = 'sklearn'
    PYTEST_HEADER_MODULES['h5py'] = 'h5py'
    PYTEST_HEADER_MODULES['NetworkX'] = 'networkx'
    PYTEST_HEADER_MODULES['Astropy'] = 'astropy'

    config.addinivalue_line("markers",
                            "slow: end-to-end runs on benchmark data")


@pytest.fixture
def small_graph():

    yield planted_graph(n_nodes=40, n_features=10, n_classes=3, seed=1)


@pytest.fixture
def p3_graph():

    yield path_graph(3)


@pytest.fixture
def dataset_dir(tmp_path, small_graph):

    yield write_dataset(small_graph, os.path.join(str(tmp_path), 'toy'))
