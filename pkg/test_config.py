"""
Unit tests for config files
"""

import json
import shutil
import tempfile
import unittest
from pathlib import Path

from cocoa.config import CliConfig, load_config, template, write_template
from cocoa.errors import ConfigurationError, InputError

REPO_TEMPLATE = Path(__file__).resolve().parent / "config_template.json"


class TestCliConfig(unittest.TestCase):
    """Section parsing and override order"""

    def setUp(self):
        self.test_dir = Path(tempfile.mkdtemp())

    def tearDown(self):
        shutil.rmtree(self.test_dir, ignore_errors=True)

    def test_unknown_sections_and_keys(self):
        cases = [{"training": {}}, {"train": {"epochs": 3}}, {"hyper": {"temperature": 0.5}},
                 {"synth": []}, ["train"]]
        for data in cases:
            with self.subTest(data=data):
                with self.assertRaises(ConfigurationError):
                    CliConfig.from_dict(data)

    def test_flags_override_file(self):
        config = CliConfig.from_dict({"train": {"batch_size": 32, "method": "dcl"}, "hyper": {"tau": 0.5}})
        train = config.train_config({"batch_size": 64, "method": None}, {"tau": None, "lambda_": 2.0})
        self.assertEqual(train.batch_size, 64)
        self.assertEqual(train.method, "dcl")
        self.assertEqual(train.hyper.tau, 0.5)
        self.assertEqual(train.hyper.lambda_, 2.0)

    def test_invalid_values_surface(self):
        config = CliConfig.from_dict({"hyper": {"tau": 0.0}})
        with self.assertRaises(ConfigurationError):
            config.train_config()
        with self.assertRaises(ConfigurationError):
            CliConfig().synth_config({"num_classes": 1})

    def test_synth_section(self):
        config = CliConfig.from_dict({"synth": {"num_classes": 3, "window": 32}})
        synth = config.synth_config({"seed": 9, "window": None})
        self.assertEqual((synth.num_classes, synth.window, synth.seed), (3, 32, 9))

    def test_load_errors(self):
        with self.assertRaises(InputError):
            load_config(self.test_dir / "missing.json")
        bad = self.test_dir / "bad.json"
        bad.write_text("{", encoding="utf-8")
        with self.assertRaises(ConfigurationError):
            load_config(bad)
        self.assertEqual(load_config(None), CliConfig())

    def test_template_round_trip(self):
        path = write_template(self.test_dir / "template.json")
        config = load_config(path)
        train = config.train_config()
        self.assertEqual(train.batch_size, 16)
        self.assertEqual(train.hyper.tau, 0.1)
        self.assertEqual(train.encoder["kernel_sizes"], [10, 8, 4])
        self.assertEqual(config.synth_config().windows_per_class, 300)

    def test_shipped_template_is_current(self):
        with open(REPO_TEMPLATE, "r", encoding="utf-8") as handle:
            shipped = json.load(handle)
        self.assertEqual(shipped, json.loads(json.dumps(template())))


if __name__ == '__main__':
    unittest.main()
