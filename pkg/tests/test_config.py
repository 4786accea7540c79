from __future__ import annotations

import pytest

from ccgs.config import CONFIGURATIONS, EvalConfig, RunConfig, TrainConfig
from ccgs.core.constants import (
    REFERENCE_HIDDEN_SIZE,
    EvalMode,
    NegativeStrategy,
    Precision,
    Split,
)
from ccgs.errors import ConfigError



def test_defaults():
    config = RunConfig()
    assert config.encoder.d == 64
    assert config.train.num_negatives == 1
    assert config.train.batch_size == 2
    assert config.train.max_length == 1300
    assert config.model.dropout == 0.1
    assert config.eval.rank_ks == (1, 10, 100)
    assert config.eval.thresholds == (0.3, 0.5, 0.7)


def test_overrides():
    config = RunConfig().with_overrides([
        'encoder.d=32',
        'train.lr=0.001',
        'train.negative_strategy=bm25-hard',
        'eval.rank_ks=[1, 5]',
        'model.use_fusion=false',
    ])
    assert config.encoder.d == 32
    assert config.train.lr == 0.001
    assert config.train.negative_strategy == NegativeStrategy.bm25_hard
    assert config.eval.rank_ks == (1, 5)
    assert config.model.use_fusion is False


@pytest.mark.parametrize('override', [
    'encoder.width=3',
    'decoder.d=3',
    'encoder.d',
    'd=3',
    'train.lr=-1',
    'train.num_negatives=-1',
    'eval.mode=dense',
    'eval.thresholds=[1.5]',
    'model.dropout=1.0',
])
def test_invalid_overrides(override):
    with pytest.raises(ConfigError):
        RunConfig().with_overrides([override])


def test_unknown_keys_are_rejected():
    with pytest.raises(ConfigError):
        RunConfig.from_dict({'train': {'learning_rate': 0.1}})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({'optimizer': {}})
    with pytest.raises(ConfigError):
        RunConfig.from_dict([1, 2])


def test_losses_cannot_both_be_disabled():
    with pytest.raises(ConfigError):
        TrainConfig(use_contrastive=False, use_predictor=False)


def test_json_round_trip(tmp_path):
    config = RunConfig().with_preset('CCGS-NoFusion').with_overrides(['eval.mode=bm25'])
    path = tmp_path / 'config.json'
    path.write_text(config.to_json())
    again = RunConfig.load(path)
    assert again == config
    assert again.eval.mode == EvalMode.bm25
    assert again.to_dict()['eval']['mode'] == 'bm25'


def test_load_errors(tmp_path):
    with pytest.raises(ConfigError):
        RunConfig.load(tmp_path / 'missing.json')
    bad = tmp_path / 'bad.json'
    bad.write_text('{"train": ')
    with pytest.raises(ConfigError):
        RunConfig.load(bad)


@pytest.mark.parametrize('name', list(CONFIGURATIONS))
def test_presets(name):
    config = RunConfig().with_preset(name)
    assert isinstance(config, RunConfig)


def test_preset_values():
    assert RunConfig().with_preset('CCGS-Reference').encoder.d == REFERENCE_HIDDEN_SIZE
    assert RunConfig().with_preset('CCGS-NoContrastive').train.use_contrastive is False
    with pytest.raises(ConfigError):
        RunConfig().with_preset('CCGS-Unknown')


def test_enum_parsing():
    assert EvalMode.parse('BM25+CCGS-SPAN') == EvalMode.pipeline
    assert EvalMode.parse('pipeline') == EvalMode.pipeline
    assert Precision.parse(Precision.float32) is Precision.float32
    assert str(Split.val) == 'val'
    assert int(Split.test) == 2
    assert EvalConfig(mode='bm25').mode == EvalMode.bm25
    with pytest.raises(ConfigError):
        Split.parse('dev')
