"""On-disk cache of computed Fourier block sets.

File layout (all little-endian, version 1):

    offset  size      content
    0       8         magic b"CHIBLK01"
    8       4         uint32 header length H
    12      H         UTF-8 JSON header: {"version": 1, "fingerprint":
                      {...}, "n": N, "q_eps": ..., "q_max": ..., "n_phi":
                      ..., "n_min": ..., "n_max": ..., "c_norm": ...,
                      "parseval_residual": ...}
    12+H    8 N       float64 radial nodes
    ...     8 N       float64 radial weights
    ...     8 n_phi   float64 normalized per-harmonic weight profile
    ...     16 K N N  complex128 blocks, row-major, n ascending

Cache keys are SHA-256 digests of the canonical JSON fingerprint, so any
change in the physics or grids produces a fresh entry.  Entries are
written atomically (rename from a temp file) and are portable between
little-endian machines.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import tempfile

import numpy as np

from .config import OpticalSetup
from .errors import ConfigError
from .kernels import AngularGrid, ChiBlockSet, RadialGrid

_MAGIC = b"CHIBLK01"

DEFAULT_CACHE_ENV = "OAMPDC_CACHE_DIR"


def cache_fingerprint(setup: OpticalSetup, grid: RadialGrid,
                      angular: AngularGrid, n_range=None) -> dict:
    fp = dict(setup.fingerprint())
    fp.update(grid.fingerprint())
    fp.update(angular.fingerprint())
    if n_range is not None:
        fp.update({"n_min": int(n_range[0]), "n_max": int(n_range[1])})
    return fp


def cache_key(fingerprint: dict) -> str:
    canon = json.dumps(fingerprint, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def save_blocks(path: str, blocks: ChiBlockSet) -> str:
    header = {
        "version": 1,
        "fingerprint": blocks.fingerprint(),
        "n": int(blocks.grid.n),
        "q_eps": blocks.grid.q_eps,
        "q_max": blocks.grid.q_max,
        "n_phi": int(blocks.angular.n_phi),
        "n_min": blocks.n_min,
        "n_max": blocks.n_max,
        "c_norm": blocks.c_norm,
        "parseval_residual": blocks.parseval_residual,
    }
    payload = json.dumps(header, sort_keys=True).encode()
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(os.path.abspath(path)))
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<I", len(payload)))
            fh.write(payload)
            fh.write(blocks.grid.nodes.astype("<f8").tobytes())
            fh.write(blocks.grid.weights.astype("<f8").tobytes())
            fh.write(blocks.weight_profile.astype("<f8").tobytes())
            fh.write(np.ascontiguousarray(blocks.blocks).astype("<c16").tobytes())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def load_blocks(path: str, setup: OpticalSetup) -> ChiBlockSet:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != _MAGIC:
            raise ConfigError(f"{path} is not a block cache file")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode())
        if header.get("version") != 1:
            raise ConfigError(f"unsupported cache version in {path}")
        n = header["n"]
        n_phi = header["n_phi"]
        nodes = np.frombuffer(fh.read(8 * n), dtype="<f8").copy()
        weights = np.frombuffer(fh.read(8 * n), dtype="<f8").copy()
        profile = np.frombuffer(fh.read(8 * n_phi), dtype="<f8").copy()
        k = header["n_max"] - header["n_min"] + 1
        blocks = np.frombuffer(fh.read(16 * k * n * n), dtype="<c16").copy()
        blocks = blocks.reshape(k, n, n)
    grid = RadialGrid(nodes=nodes, weights=weights,
                      q_eps=header["q_eps"], q_max=header["q_max"])
    return ChiBlockSet(
        setup=setup,
        grid=grid,
        angular=AngularGrid(n_phi),
        n_values=np.arange(header["n_min"], header["n_max"] + 1),
        blocks=blocks,
        c_norm=header["c_norm"],
        parseval_residual=header["parseval_residual"],
        weight_profile=profile,
    )


class BlockCache:
    """Directory-backed cache keyed by physics + grid fingerprints."""

    def __init__(self, directory: str | None = None):
        if directory is None:
            directory = os.environ.get(DEFAULT_CACHE_ENV)
        self.directory = directory

    def _path(self, fingerprint: dict) -> str | None:
        if not self.directory:
            return None
        return os.path.join(self.directory, cache_key(fingerprint) + ".chiblk")

    def get(self, setup: OpticalSetup, grid: RadialGrid,
            angular: AngularGrid) -> ChiBlockSet | None:
        """Look up by physics + grid (any OAM window computed earlier)."""
        if not self.directory or not os.path.isdir(self.directory):
            return None
        base = cache_fingerprint(setup, grid, angular)
        for name in sorted(os.listdir(self.directory)):
            if not name.endswith(".chiblk"):
                continue
            path = os.path.join(self.directory, name)
            try:
                with open(path, "rb") as fh:
                    if fh.read(8) != _MAGIC:
                        continue
                    (hlen,) = struct.unpack("<I", fh.read(4))
                    header = json.loads(fh.read(hlen).decode())
            except (OSError, ValueError):
                continue
            stored = dict(header.get("fingerprint", {}))
            stored.pop("n_min", None)
            stored.pop("n_max", None)
            stored_n_phi = stored.pop("n_phi", 0)
            probe = dict(base)
            probe.pop("n_min", None)
            probe.pop("n_max", None)
            probe_n_phi = probe.pop("n_phi", 0)
            # a finer angular grid than requested is a valid superset
            # (the block computation may escalate n_phi while widening)
            if stored == probe and stored_n_phi >= probe_n_phi:
                return load_blocks(path, setup)
        return None

    def put(self, blocks: ChiBlockSet) -> str | None:
        path = self._path(blocks.fingerprint())
        if path is None:
            return None
        return save_blocks(path, blocks)


def compute_or_load(setup: OpticalSetup, grid: RadialGrid, angular: AngularGrid,
                    cache: BlockCache | None = None, **kwargs) -> ChiBlockSet:
    """compute_chi_blocks with transparent disk caching."""
    from .kernels import compute_chi_blocks

    if cache is None:
        cache = BlockCache()
    hit = cache.get(setup, grid, angular)
    if hit is not None:
        return hit
    blocks = compute_chi_blocks(setup, grid, angular, **kwargs)
    cache.put(blocks)
    return blocks
