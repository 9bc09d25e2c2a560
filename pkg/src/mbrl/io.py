"""JSON / JSONL readers and writers for MDPs, model classes, datasets and results."""
from __future__ import annotations

import json
import os

from mbrl.errors import InvariantError
from mbrl.estimation import ModelClass, TransitionDataset
from mbrl.mdp import TabularMdp


def _read(path):
    try:
        with open(path) as fh:
            return fh.read()
    except OSError as exc:
        raise InvariantError(f"cannot read {path}: {exc}") from exc


def _read_json(path):
    try:
        return json.loads(_read(path))
    except json.JSONDecodeError as exc:
        raise InvariantError(f"{path} is not valid JSON: {exc}") from exc


def write_text(path, text):
    """Write atomically so a crashed run never leaves a truncated artifact."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_json(path, doc):
    write_text(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_mdp(path):
    return TabularMdp.from_dict(_read_json(path))


def save_mdp(path, mdp):
    write_json(path, mdp.to_dict())


def load_model_class(path):
    return ModelClass.from_dict(_read_json(path))


def save_model_class(path, model_class):
    write_json(path, model_class.to_dict())


def load_dataset(path, horizon=None):
    return TransitionDataset.from_jsonl(_read(path), horizon)


def save_dataset(path, data):
    write_text(path, data.to_jsonl())
