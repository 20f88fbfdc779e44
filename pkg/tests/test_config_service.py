"""Tests for experiment config parsing, canonical form and validation"""

import shutil
import tempfile
from pathlib import Path

import pytest

from services.config_service import ConfigService, parse_bool, parse_model_spec
from utils.errors import ConfigError

SAMPLE = """
# small blobs run
seed = 3
model.arch = mlp2
model.input_shape = 20
model.hidden = 16
model.classes = 4
fl.clients = 7
fl.byzantine = 2
fl.epochs = 2
agg.kind = cc
attack.kind = hybrid_sparse
mask.method = force
mask.delta = 0.05
mask.critical = yes
mask.fc_cap = 0.25
"""


def resolved_from(text):
    return ConfigService.resolve(ConfigService.parse_config_text(text))


class TestParseConfigText:
    """Test cases for the key-value parser"""

    def test_comments_and_blank_lines(self):
        raw = ConfigService.parse_config_text("# c\n\nseed = 4\n")
        assert raw == {"seed": "4"}

    def test_malformed_line(self):
        with pytest.raises(ConfigError, match="line 1"):
            ConfigService.parse_config_text("seed 4")

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="unknown key"):
            ConfigService.parse_config_text("fl.rounds = 3")

    def test_duplicate_key(self):
        with pytest.raises(ConfigError, match="duplicate"):
            ConfigService.parse_config_text("seed = 1\nseed = 2")

    def test_bad_value(self):
        with pytest.raises(ConfigError, match="fl.clients"):
            resolved_from("fl.clients = many")


class TestResolve:
    """Test cases for defaults and the canonical form"""

    def test_defaults(self):
        resolved = resolved_from("")
        assert resolved["fl.clients"] == 25
        assert resolved["fl.byzantine"] == 5
        assert resolved["model.input_shape"] == "784"
        assert resolved["fl.lr"] == 0.1
        assert resolved["mask.method"] == "random-layer"

    def test_signsgd_learning_rate(self):
        assert resolved_from("agg.kind = signsgd")["fl.lr"] == 0.01

    def test_canonical_round_trip(self):
        resolved = resolved_from(SAMPLE)
        text = ConfigService.canonicalize(resolved)
        again = resolved_from(text)
        assert ConfigService.canonicalize(again) == text
        assert again == {k: v for k, v in resolved.items()}

    def test_canonical_is_sorted_and_omits_unset(self):
        lines = ConfigService.canonicalize(resolved_from("")).splitlines()
        keys = [line.split(" = ")[0] for line in lines]
        assert keys == sorted(keys)
        assert "attack.z" not in keys

    def test_hash_ignores_comments_and_order(self):
        a = resolved_from("seed = 1\nfl.epochs = 3\n")
        b = resolved_from("# reordered\nfl.epochs = 3\nseed = 1\n")
        assert ConfigService.config_hash(a) == ConfigService.config_hash(b)
        assert ConfigService.config_hash(a) != ConfigService.config_hash(resolved_from("seed = 2"))

    def test_parse_bool(self):
        assert parse_bool("On") is True
        assert parse_bool("0") is False
        with pytest.raises(ValueError):
            parse_bool("maybe")


class TestBuildExperimentConfig:
    """Test cases for validation into an ExperimentConfig"""

    def test_sample(self):
        cfg = ConfigService.build_experiment_config(resolved_from(SAMPLE))
        assert cfg.model.input_shape == (20,)
        assert cfg.aggregator.byzantine == 2
        assert cfg.mask.kind == "force"
        assert cfg.mask.cap_map == {"fc2.weight": 0.25}
        assert cfg.mask.critical
        assert cfg.seed == 3

    def test_unknown_attack(self):
        with pytest.raises(ConfigError, match="not available"):
            ConfigService.build_experiment_config(resolved_from("attack.kind = rop"))

    def test_byzantine_majority(self):
        with pytest.raises(ConfigError):
            ConfigService.build_experiment_config(resolved_from("fl.clients = 10\nfl.byzantine = 5"))

    def test_blob_dimension_mismatch(self):
        with pytest.raises(ConfigError, match="blobs.dim"):
            ConfigService.build_experiment_config(resolved_from("data.blobs.dim = 10"))

    def test_gas_chunks_exceed_dimension(self):
        text = "model.input_shape = 2\nmodel.hidden = 1\nmodel.classes = 2\nagg.kind = gas\nagg.p = 100"
        with pytest.raises(ConfigError, match="agg.p"):
            ConfigService.build_experiment_config(resolved_from(text))

    def test_unknown_mask_method(self):
        with pytest.raises(ConfigError, match="mask method"):
            ConfigService.build_experiment_config(resolved_from("mask.method = lottery"))

    @pytest.mark.parametrize("value", [0, 7, 25])
    def test_krum_neighborhood_out_of_range(self, value):
        text = f"fl.clients = 7\nfl.byzantine = 2\nagg.kind = krum\nagg.krum_neighborhood = {value}"
        with pytest.raises(ConfigError, match="krum_neighborhood"):
            ConfigService.build_experiment_config(resolved_from(text))

    def test_krum_neighborhood_upper_bound_accepted(self):
        text = "fl.clients = 7\nfl.byzantine = 2\nagg.kind = krum\nagg.krum_neighborhood = 6"
        assert ConfigService.build_experiment_config(resolved_from(text)).aggregator.neighborhood(7) == 6

    @pytest.mark.parametrize("value", [0, 8])
    def test_multikrum_select_out_of_range(self, value):
        text = f"fl.clients = 7\nfl.byzantine = 2\nagg.kind = multikrum\nagg.multikrum_select = {value}"
        with pytest.raises(ConfigError, match="multikrum_select"):
            ConfigService.build_experiment_config(resolved_from(text))

    @pytest.mark.parametrize("method", ["random", "random-layer", "erk"])
    def test_fc_cap_rejected_for_random_masks(self, method):
        text = f"mask.method = {method}\nmask.fc_cap = 0.2"
        with pytest.raises(ConfigError, match="fc_cap"):
            ConfigService.build_experiment_config(resolved_from(text))

    def test_unsupported_architecture(self):
        with pytest.raises(ConfigError):
            resolved_from("model.arch = resnet20")


class TestLoadConfig:
    """Test cases for reading config files"""

    @pytest.fixture
    def temp_dir(self):
        """Create a temporary directory for config files"""
        temp_dir = tempfile.mkdtemp()
        yield Path(temp_dir)
        shutil.rmtree(temp_dir)

    def test_seed_override(self, temp_dir):
        path = temp_dir / "exp.cfg"
        path.write_text(SAMPLE)
        resolved, cfg = ConfigService.load_config(str(path), seed=11)
        assert resolved["seed"] == 11
        assert cfg.seed == 11 and cfg.model.seed == 11

    def test_missing_file(self, temp_dir):
        with pytest.raises(ConfigError, match="not found"):
            ConfigService.load_config(str(temp_dir / "absent.cfg"))


class TestParseModelSpec:
    """Test cases for the compact model spec strings"""

    def test_default(self):
        spec = parse_model_spec("cnn2")
        assert spec.input_shape == (1, 28, 28) and spec.hidden == (16, 32)

    def test_explicit_sizes(self):
        spec = parse_model_spec("mlp2:20-16-4", seed=2)
        assert (spec.input_shape, spec.hidden, spec.classes, spec.seed) == ((20,), (16,), 4, 2)

    def test_cnn_shape(self):
        spec = parse_model_spec("cnn2:1x8x8-2-3-5")
        assert spec.input_shape == (1, 8, 8) and spec.hidden == (2, 3) and spec.classes == 5

    @pytest.mark.parametrize("text", ["mlp2:20", "mlp2:a-b-c", "vgg:1-2-3"])
    def test_invalid(self, text):
        with pytest.raises(ConfigError):
            parse_model_spec(text)
