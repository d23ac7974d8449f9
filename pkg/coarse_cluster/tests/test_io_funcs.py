# Licensed under an MIT open source license - see LICENSE

import json
import os

import pytest
import numpy as np
import numpy.testing as npt
from astropy.table import Table

from ..io_funcs import (coarse_edges_table, merge_map_table, write_coarsening,
                        write_json, write_labels, read_labels,
                        write_embeddings, write_train_outputs)
from ..coarsen import multi_scale_coarsen
from ..netfwd import ModelParams
from ..trainer import TrainConfig, train
from ..exceptions import IoError, FormatError
from .testing_utils import write_text


def test_edge_and_map_tables(small_graph):

    cg = multi_scale_coarsen(small_graph, [0.5], n_min=4)[0]
    edges = coarse_edges_table(cg)
    mapping = merge_map_table(cg)

    assert edges.colnames == ['u', 'v', 'weight']
    assert (edges['u'] < edges['v']).all()
    npt.assert_allclose(edges['weight'].sum(), cg.graph.total_weight())
    npt.assert_equal(mapping['super_node'], cg.merge_map.assignment)
    assert len(mapping) == small_graph.n_nodes


def test_write_coarsening(small_graph, tmp_path):

    coarsened = multi_scale_coarsen(small_graph, [0.5, 0.25], n_min=4)
    out = str(tmp_path / 'coarse')
    paths = write_coarsening(coarsened, out)

    assert len(paths) == 6
    assert all(os.path.isfile(p) for p in paths)

    edges = Table.read(os.path.join(out, 'coarse_0.25_edges.csv'),
                       format='ascii.csv')
    u, v, w = coarsened[1].graph.edge_list()
    npt.assert_equal(edges['u'], u)
    npt.assert_equal(edges['v'], v)
    # 17 significant digits reproduce the weights exactly.
    npt.assert_array_equal(edges['weight'], w)

    with open(os.path.join(out, 'coarse_0.5_meta.json')) as f:
        meta = json.load(f)
    assert meta['n_nodes'] == 20
    assert meta['early_stop'] is False


def test_write_json_is_stable(tmp_path):

    path = str(tmp_path / 'a.json')
    write_json({'b': 1, 'a': [1.5, None]}, path)
    with open(path) as f:
        text = f.read()

    assert text == '{\n  "a": [\n    1.5,\n    null\n  ],\n  "b": 1\n}\n'

    write_json({'a': [1.5, None], 'b': 1}, path)
    with open(path) as f:
        assert f.read() == text


def test_write_json_bad_dir(tmp_path):

    with pytest.raises(IoError):
        write_json({}, str(tmp_path / 'missing' / 'a.json'))


def test_labels_round_trip(tmp_path):

    path = str(tmp_path / 'labels.csv')
    write_labels([2, 0, 1, 1], path)

    with open(path) as f:
        assert f.read() == "2\n0\n1\n1\n"
    npt.assert_equal(read_labels(path), [2, 0, 1, 1])


def test_read_labels_errors(tmp_path):

    with pytest.raises(IoError):
        read_labels(str(tmp_path / 'none.csv'))

    path = write_text(str(tmp_path / 'frac.csv'), "1\n0.5\n")
    with pytest.raises(FormatError):
        read_labels(path)

    path = write_text(str(tmp_path / 'text.csv'), "1\nabc\n")
    with pytest.raises(FormatError):
        read_labels(path)


def test_write_embeddings(tmp_path):

    H = np.random.default_rng(0).normal(size=(4, 3))
    path = str(tmp_path / 'emb.csv')
    write_embeddings(H, path)

    npt.assert_array_equal(np.loadtxt(path, delimiter=','), H)


def test_write_train_outputs(small_graph, tmp_path):

    cfg = TrainConfig(dims=(8, 6, 10, 5), scales=(0.5, 0.25), n_min=4,
                      epochs=2, pretrain_epochs=1, kmeans_restarts=1,
                      n_clusters=3)
    result = train(small_graph, cfg)
    out = str(tmp_path / 'run')
    emb = str(tmp_path / 'emb.csv')
    write_train_outputs(result, out, dump_embeddings=emb)

    for name in ('metrics.json', 'labels.csv', 'losses.ecsv', 'params.hdf5'):
        assert os.path.isfile(os.path.join(out, name))

    with open(os.path.join(out, 'metrics.json')) as f:
        report = json.load(f)
    assert set(report['metrics']) >= {'acc', 'nmi', 'ari', 'f1'}

    npt.assert_equal(read_labels(os.path.join(out, 'labels.csv')),
                     result.labels)
    losses = Table.read(os.path.join(out, 'losses.ecsv'), format='ascii.ecsv')
    assert len(losses) == 2

    params, centroids = ModelParams.from_hdf5(
        os.path.join(out, 'params.hdf5'), return_centroids=True)
    npt.assert_equal(params.W1, result.params.W1)
    npt.assert_equal(centroids, result.centroids)
    assert np.loadtxt(emb, delimiter=',').shape == (small_graph.n_nodes, 6)
