# Licensed under an MIT open source license - see LICENSE

"""
Writers and readers for coarsening exports, label files, embeddings, loss
tables and JSON reports.
"""

import json
import os

import numpy as np
from astropy.table import Table, Column

from .exceptions import IoError, FormatError
from .graphdata import _read_table
from .utilities import format_scale

__all__ = ['coarse_edges_table', 'merge_map_table', 'write_coarsening',
           'write_json', 'write_labels', 'read_labels', 'write_embeddings',
           'write_train_outputs']


def _ensure_dir(path):
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise IoError("Cannot create output directory {0}: {1}"
                      .format(path, exc))


def coarse_edges_table(cg):
    '''
    Edges of a coarse graph as a `~astropy.table.Table` with columns
    ``u``, ``v`` and ``weight`` (each undirected edge once, ``u < v``).
    '''
    u, v, w = cg.graph.edge_list()
    tab = Table()
    tab['u'] = Column(u)
    tab['v'] = Column(v)
    tab['weight'] = Column(w)
    return tab


def merge_map_table(cg):
    '''
    Original node to super-node table.
    '''
    assignment = cg.merge_map.assignment
    tab = Table()
    tab['original_node'] = Column(np.arange(assignment.size))
    tab['super_node'] = Column(assignment)
    return tab


def write_json(obj, path):
    '''
    Write ``obj`` as indented JSON with sorted keys.
    '''
    try:
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(obj, f, sort_keys=True, indent=2)
            f.write("\n")
    except OSError as exc:
        raise IoError("Could not write {0}: {1}".format(path, exc))


def write_coarsening(coarsened, out_dir):
    '''
    Export every scale of a coarsening cascade.

    Writes ``coarse_<s>_edges.csv`` (weights with 17 significant digits),
    ``coarse_<s>_map.csv`` and ``coarse_<s>_meta.json`` per scale.

    Parameters
    ----------
    coarsened : list of `~coarse_cluster.coarsen.CoarsenedGraph`
    out_dir : str

    Returns
    -------
    paths : list of str
    '''
    _ensure_dir(out_dir)
    paths = []
    for cg in coarsened:
        stem = os.path.join(out_dir, "coarse_{}".format(format_scale(cg.scale)))
        coarse_edges_table(cg).write(stem + "_edges.csv", format='ascii.csv',
                                     formats={'weight': '.17g'},
                                     overwrite=True)
        merge_map_table(cg).write(stem + "_map.csv", format='ascii.csv',
                                  overwrite=True)
        write_json(cg.meta(), stem + "_meta.json")
        paths.extend([stem + "_edges.csv", stem + "_map.csv",
                      stem + "_meta.json"])
    return paths


def write_labels(labels, path):
    '''
    One integer label per line.
    '''
    try:
        np.savetxt(path, np.asarray(labels, dtype=np.int64), fmt='%d')
    except OSError as exc:
        raise IoError("Could not write {0}: {1}".format(path, exc))


def read_labels(path):
    '''
    Read a file of one integer label per line.
    '''
    if not os.path.isfile(path):
        raise IoError("Missing label file: {}".format(path))
    raw = _read_table(path, np.float64, os.path.basename(path)).ravel()
    if not np.all(raw == np.round(raw)):
        raise FormatError("{} must hold integers.".format(path))
    return raw.astype(np.int64)


def write_embeddings(H, path):
    '''
    N rows of comma-separated reals.
    '''
    try:
        np.savetxt(path, H, delimiter=',', fmt='%.17g')
    except OSError as exc:
        raise IoError("Could not write {0}: {1}".format(path, exc))


def write_train_outputs(result, out_dir, dump_embeddings=None):
    '''
    Write ``metrics.json``, ``labels.csv``, ``losses.ecsv`` and
    ``params.hdf5`` for a training run.

    Parameters
    ----------
    result : `~coarse_cluster.trainer.TrainResult`
    out_dir : str
    dump_embeddings : str, optional
        Path for the final encoder embeddings.
    '''
    _ensure_dir(out_dir)
    write_json(result.report(), os.path.join(out_dir, 'metrics.json'))
    write_labels(result.labels, os.path.join(out_dir, 'labels.csv'))
    if result.history:
        result.loss_table().write(os.path.join(out_dir, 'losses.ecsv'),
                                  format='ascii.ecsv', overwrite=True)
    result.params.to_hdf5(os.path.join(out_dir, 'params.hdf5'),
                          centroids=result.centroids, overwrite=True)
    if dump_embeddings is not None and result.embedding is not None:
        write_embeddings(result.embedding, dump_embeddings)
