"""Named parameter collections and their binary serialisation."""

from __future__ import annotations

import json
import struct
from collections.abc import Mapping
from pathlib import Path

import jax
import jax.numpy as jnp
import numpy as np

MAGIC = b"SKPS"
FORMAT_VERSION = 1


@jax.tree_util.register_pytree_node_class
class ParamStore(Mapping):
    """Immutable mapping from array name to float64 array.

    Iteration order is the sorted name order, which is also the pytree
    flattening order, so reductions over a store are reproducible.
    """

    def __init__(self, arrays: Mapping | None = None):
        self._arrays = {k: arrays[k] for k in sorted(arrays or {})}

    def __getitem__(self, name):
        return self._arrays[name]

    def __iter__(self):
        return iter(self._arrays)

    def __len__(self):
        return len(self._arrays)

    def __repr__(self):
        inner = ", ".join(f"{k}: {tuple(np.shape(v))}" for k, v in self._arrays.items())
        return f"ParamStore({inner})"

    def tree_flatten(self):
        return tuple(self._arrays.values()), tuple(self._arrays)

    @classmethod
    def tree_unflatten(cls, names, leaves):
        store = cls.__new__(cls)
        store._arrays = dict(zip(names, leaves))
        return store

    @property
    def shapes(self) -> dict[str, tuple[int, ...]]:
        return {k: tuple(np.shape(v)) for k, v in self._arrays.items()}

    @property
    def size(self) -> int:
        """Total number of scalar parameters."""
        return int(sum(np.prod(s, dtype=np.int64) for s in self.shapes.values()))

    def replace(self, **updates) -> "ParamStore":
        unknown = set(updates) - set(self._arrays)
        if unknown:
            raise KeyError(f"unknown parameter arrays: {sorted(unknown)}")
        new = dict(self._arrays)
        for k, v in updates.items():
            v = jnp.asarray(v, dtype=jnp.float64)
            if v.shape != np.shape(self._arrays[k]):
                raise ValueError(f"shape mismatch for {k}: {v.shape} vs {np.shape(self._arrays[k])}")
            new[k] = v
        return ParamStore(new)

    def map(self, fn) -> "ParamStore":
        return ParamStore({k: fn(v) for k, v in self._arrays.items()})

    def to_numpy(self) -> dict[str, np.ndarray]:
        return {k: np.asarray(v, dtype=np.float64) for k, v in self._arrays.items()}

    def manifest(self) -> dict:
        return {
            "version": FORMAT_VERSION,
            "byte_order": "little",
            "dtype": "float64",
            "arrays": [{"name": k, "shape": list(s)} for k, s in self.shapes.items()],
        }

    def save(self, path) -> Path:
        """Write ``path`` (binary) and ``path.manifest.json`` (text sidecar).

        Layout: 4-byte magic, u32 version, u32 manifest length, the JSON
        manifest, then every array in manifest order as little-endian float64.
        """
        path = Path(path)
        man = self.manifest()
        text = json.dumps(man, indent=1).encode()
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<II", FORMAT_VERSION, len(text)))
            fh.write(text)
            for arr in self.to_numpy().values():
                fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        path.with_name(path.name + ".manifest.json").write_text(json.dumps(man, indent=1) + "\n")
        return path

    @classmethod
    def load(cls, path) -> "ParamStore":
        raw = Path(path).read_bytes()
        if raw[:4] != MAGIC:
            raise ValueError(f"{path}: not a parameter file")
        version, n = struct.unpack("<II", raw[4:12])
        if version != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported format version {version}")
        man = json.loads(raw[12 : 12 + n])
        offset = 12 + n
        arrays = {}
        for entry in man["arrays"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape, dtype=np.int64))
            data = np.frombuffer(raw, dtype="<f8", count=count, offset=offset)
            arrays[entry["name"]] = jnp.asarray(data.reshape(shape).astype(np.float64))
            offset += 8 * count
        if offset != len(raw):
            raise ValueError(f"{path}: trailing bytes after last array")
        return cls(arrays)


def tree_all_finite(store: ParamStore) -> dict[str, bool]:
    return {k: bool(np.all(np.isfinite(np.asarray(v)))) for k, v in store.items()}
