"""Sentence-mask explanations for long-document classification.

Thin wrappers over the native core; JSON results come back as dicts.
"""

import json
import os

from . import _sentmask
from ._sentmask import SentmaskError, bernoulli_kl, harden, split_sentences, tokenize

__all__ = [
    "Classifier",
    "SentmaskError",
    "bernoulli_kl",
    "cli_path",
    "config_keys",
    "evaluate",
    "explain",
    "harden",
    "ingest",
    "resolve_config",
    "split_sentences",
    "synth",
    "tokenize",
    "train",
]


def _overrides(overrides):
    if overrides is None:
        return []
    if isinstance(overrides, dict):
        return [f"{k}={_render(v)}" for k, v in overrides.items()]
    return list(overrides)


def _render(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


def config_keys():
    """Every config key mapped to its one-line documentation."""
    return dict(_sentmask.config_keys())


def resolve_config(file="", overrides=None):
    return json.loads(_sentmask.resolve_config(os.fspath(file), _overrides(overrides)))


def synth(out_dir, **kwargs):
    _sentmask.synth(os.fspath(out_dir), **kwargs)


def ingest(data, manifest, out_dir, config="", overrides=None, vocab=""):
    return json.loads(_sentmask.ingest(os.fspath(data), os.fspath(manifest), os.fspath(out_dir),
                                       os.fspath(config), _overrides(overrides), os.fspath(vocab)))


def train(data_dir, out_dir, config="", overrides=None, resume=""):
    return json.loads(_sentmask.train(os.fspath(data_dir), os.fspath(out_dir), os.fspath(config),
                                      _overrides(overrides), os.fspath(resume)))


def evaluate(data_dir, checkpoint, out_dir, n=(), compact=False, control="", seed=13):
    if isinstance(n, int):
        n = [n]
    lines = _sentmask.evaluate(os.fspath(data_dir), os.fspath(checkpoint), os.fspath(out_dir),
                               list(n), compact, control, seed)
    return [json.loads(line) for line in lines]


def explain(data_dir, checkpoint, out_dir, format="both", n=20, split="test", ids=()):
    return _sentmask.explain(os.fspath(data_dir), os.fspath(checkpoint), os.fspath(out_dir),
                             format, n, split, list(ids))


class Classifier:
    """A trained checkpoint with its vocabulary, applied to raw text."""

    def __init__(self, checkpoint, vocab):
        self._impl = _sentmask.Classifier(os.fspath(checkpoint), os.fspath(vocab))

    @property
    def checkpoint_id(self):
        return self._impl.checkpoint_id

    @property
    def config(self):
        return json.loads(self._impl.config_json)

    def predict(self, text):
        """[P(y=0), P(y=1)] under the hardened inference mask."""
        return self._impl.predict(text)

    def explain(self, text, n=20):
        return json.loads(self._impl.explain(text, n, "record"))

    def report(self, text, n=20, format="html"):
        return self._impl.explain(text, n, format)


def cli_path():
    """Location of the bundled command-line tool, if installed alongside."""
    here = os.path.join(os.path.dirname(__file__), "bin", "sentmask")
    return here if os.path.exists(here) else None
