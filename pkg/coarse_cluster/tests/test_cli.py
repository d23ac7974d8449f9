# Licensed under an MIT open source license - see LICENSE

import json
import os

import pytest
import numpy.testing as npt

from .. import cli
from ..cli import run_cli
from ..exceptions import NumericsError
from ..io_funcs import read_labels, write_labels
from .testing_utils import write_text

TINY_CONFIG = """
dims = [8, 6, 10, 5]
scales = [0.5, 0.25]
n_min = 4
epochs = 2
pretrain_epochs = 1
kmeans_restarts = 1
n_clusters = 3
"""


@pytest.fixture
def tiny_config(tmp_path):

    yield write_text(str(tmp_path / 'tiny.toml'), TINY_CONFIG)


def test_eval_identical(tmp_path, capsys):

    path = str(tmp_path / 'labels.csv')
    write_labels([0, 1, 1, 2], path)
    report = str(tmp_path / 'report.json')

    assert run_cli(['eval', '--pred', path, '--truth', path,
                    '--report', report]) == 0
    assert capsys.readouterr().out.startswith("acc=1.0 ")
    with open(report) as f:
        assert json.load(f)['acc'] == 1.0


def test_eval_length_mismatch(tmp_path):

    a = str(tmp_path / 'a.csv')
    b = str(tmp_path / 'b.csv')
    write_labels([0, 1], a)
    write_labels([0, 1, 1], b)

    assert run_cli(['eval', '--pred', a, '--truth', b]) == 1


def test_usage_errors():

    assert run_cli(['eval', '--bogus']) == 2
    assert run_cli([]) == 2
    assert run_cli(['coarsen', '--input', 'x', '--scales', 'a,b',
                    '--out', 'y']) == 2


def test_help():

    assert run_cli(['--help']) == 0
    assert run_cli(['train', '--help']) == 0


def test_coarsen(dataset_dir, tmp_path, capsys):

    out = str(tmp_path / 'coarse')
    assert run_cli(['coarsen', '--input', dataset_dir, '--scales', '0.5,0.25',
                    '--min-nodes', '4', '--out', out]) == 0

    for s in ('0.5', '0.25'):
        for suffix in ('_edges.csv', '_map.csv', '_meta.json'):
            assert os.path.isfile(os.path.join(out, 'coarse_' + s + suffix))
    assert "scale 0.25: 10 nodes" in capsys.readouterr().out


def test_coarsen_bad_scales(dataset_dir, tmp_path):

    assert run_cli(['coarsen', '--input', dataset_dir, '--scales', '0.2,0.5',
                    '--out', str(tmp_path / 'c')]) == 2


def test_missing_dataset(tmp_path):

    assert run_cli(['coarsen', '--input', str(tmp_path / 'nowhere'),
                    '--scales', '0.5', '--out', str(tmp_path / 'c')]) == 1


def test_verify_spectral(dataset_dir, tmp_path):

    report = str(tmp_path / 'spectral.json')
    assert run_cli(['verify-spectral', '--input', dataset_dir,
                    '--scales', '0.5', '--min-nodes', '4',
                    '--report', report]) == 0

    with open(report) as f:
        reports = json.load(f)
    assert len(reports) == 1
    assert reports[0]['n_coarse'] == 20
    assert reports[0]['weyl_ok'] is True


def test_train(dataset_dir, tiny_config, tmp_path, capsys):

    out = str(tmp_path / 'run')
    emb = str(tmp_path / 'emb.csv')
    assert run_cli(['train', '--config', tiny_config, '--input', dataset_dir,
                    '--out', out, '--dump-embeddings', emb]) == 0

    with open(os.path.join(out, 'metrics.json')) as f:
        metrics = json.load(f)['metrics']
    for key in ('acc', 'nmi', 'f1'):
        assert 0. <= metrics[key] <= 1.
    assert -1. <= metrics['ari'] <= 1.
    assert os.path.isfile(emb)
    assert capsys.readouterr().out.startswith("acc=")


def test_train_is_deterministic(dataset_dir, tiny_config, tmp_path):

    outs = [str(tmp_path / name) for name in ('first', 'second')]
    for out in outs:
        assert run_cli(['train', '--config', tiny_config, '--input',
                        dataset_dir, '--out', out, '--seed', '3']) == 0

    files = []
    for out in outs:
        with open(os.path.join(out, 'labels.csv'), 'rb') as f:
            files.append(f.read())
    assert files[0] == files[1]


def test_train_ablation_flags(dataset_dir, tiny_config, tmp_path):

    out = str(tmp_path / 'ablate')
    assert run_cli(['train', '--config', tiny_config, '--input', dataset_dir,
                    '--out', out, '--single-scale', '--single-view',
                    '--no-one-to-many']) == 0

    with open(os.path.join(out, 'metrics.json')) as f:
        config = json.load(f)['config']
    assert config['scales'] == [0.5]
    assert config['dual_view'] is False
    assert config['one_to_many'] is False


def test_train_repeats(dataset_dir, tiny_config, tmp_path):

    out = str(tmp_path / 'repeats')
    assert run_cli(['train', '--config', tiny_config, '--input', dataset_dir,
                    '--out', out, '--repeats', '2', '--seed', '10']) == 0

    with open(os.path.join(out, 'summary.json')) as f:
        summary = json.load(f)
    assert summary['repeats'] == 2
    assert len(summary['acc']['values']) == 2
    for seed in (10, 11):
        assert os.path.isfile(os.path.join(out, 'seed_{}'.format(seed),
                                           'labels.csv'))


def test_pretrain_then_train(dataset_dir, tiny_config, tmp_path):

    pre = str(tmp_path / 'pre')
    assert run_cli(['pretrain', '--config', tiny_config, '--input',
                    dataset_dir, '--out', pre]) == 0
    params = os.path.join(pre, 'params.hdf5')
    assert os.path.isfile(params)

    out = str(tmp_path / 'run')
    assert run_cli(['train', '--config', tiny_config, '--input', dataset_dir,
                    '--out', out, '--params', params]) == 0
    labels = read_labels(os.path.join(out, 'labels.csv'))
    assert labels.size == 40


def test_train_config_errors(dataset_dir, tiny_config, tmp_path):

    bad = write_text(str(tmp_path / 'bad.toml'), "learning_rat = 0.1\n")
    assert run_cli(['train', '--config', bad, '--input', dataset_dir,
                    '--out', str(tmp_path / 'o')]) == 2

    # No dataset given anywhere.
    assert run_cli(['train', '--config', tiny_config,
                    '--out', str(tmp_path / 'o')]) == 2
    assert run_cli(['train', '--config', tiny_config, '--input', dataset_dir,
                    '--repeats', '0', '--out', str(tmp_path / 'o')]) == 2
    assert run_cli(['train', '--preset', 'pubmed', '--input', dataset_dir,
                    '--out', str(tmp_path / 'o')]) == 2


def test_numerics_exit_code(dataset_dir, tiny_config, tmp_path, monkeypatch):

    def broken(*args, **kwargs):
        raise NumericsError("Total loss is not finite", epoch=4)

    monkeypatch.setattr(cli, 'train', broken)
    assert run_cli(['train', '--config', tiny_config, '--input', dataset_dir,
                    '--out', str(tmp_path / 'o')]) == 3


def test_gradcheck(tmp_path, capsys):

    report = str(tmp_path / 'grad.json')
    assert run_cli(['gradcheck', '--seed', '7', '--report', report]) == 0

    with open(report) as f:
        result = json.load(f)
    assert result['max_rel_error'] < 1e-4
    assert "max_rel_error=" in capsys.readouterr().out


def test_eval_against_truth_file(dataset_dir, tmp_path):

    truth = os.path.join(dataset_dir, 'labels.csv')
    report = str(tmp_path / 'r.json')
    assert run_cli(['eval', '--pred', truth, '--truth', truth,
                    '--report', report]) == 0
    with open(report) as f:
        npt.assert_allclose(json.load(f)['nmi'], 1.)


def test_pretrain_unwritable_out(dataset_dir, tiny_config, tmp_path):

    blocker = write_text(str(tmp_path / 'blocker'), "not a directory\n")
    assert run_cli(['pretrain', '--config', tiny_config, '--input',
                    dataset_dir, '--out', os.path.join(blocker, 'pre')]) == 1


def test_train_config_bad_type(dataset_dir, tmp_path):

    bad = write_text(str(tmp_path / 'typed.toml'), "epochs = \"x\"\n")
    assert run_cli(['train', '--config', bad, '--input', dataset_dir,
                    '--out', str(tmp_path / 'o')]) == 2
