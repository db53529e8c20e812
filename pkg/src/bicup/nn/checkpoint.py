"""Versioned parameter checkpoints.

Parameter trees are nested dicts of str -> dict | ndarray. They are
flattened with '::' separators into a single .npz archive, which keeps
round trips bit-exact (dtype and values preserved).
"""

import json

import numpy as np

FORMAT_VERSION = 1


SEP = "::"


def _flatten(tree: dict, prefix: str, out: dict):
    for key, val in tree.items():
        if SEP in key:
            raise ValueError(f"parameter key {key!r} may not contain {SEP!r}")
        path = f"{prefix}{SEP}{key}" if prefix else key
        if isinstance(val, dict):
            _flatten(val, path, out)
        else:
            out[path] = np.asarray(val)


def _insert(tree: dict, path: str, arr):
    parts = path.split(SEP)
    node = tree
    for part in parts[:-1]:
        node = node.setdefault(part, {})
    node[parts[-1]] = arr


def save_params(path, tree: dict, meta: dict | None = None) -> None:
    flat = {}
    _flatten(tree, "", flat)
    header = {"format_version": FORMAT_VERSION, "meta": meta or {}}
    flat["__header__"] = np.frombuffer(
        json.dumps(header).encode("utf-8"), dtype=np.uint8)
    np.savez(path, **flat)


def load_params(path):
    """Returns (tree, meta). Rejects unknown format versions."""
    with np.load(path) as archive:
        if "__header__" not in archive:
            raise ValueError(f"{path}: not a parameter checkpoint")
        header = json.loads(archive["__header__"].tobytes().decode("utf-8"))
        if header.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version "
                             f"{header.get('format_version')}")
        tree: dict = {}
        for key in archive.files:
            if key == "__header__":
                continue
            _insert(tree, key, archive[key])
    return tree, header["meta"]
