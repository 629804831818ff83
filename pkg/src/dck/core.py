"""Shared data containers, error types and the seeded RNG policy."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

STREAMS = ("simulation", "layout", "split", "train-shuffle", "weight-init", "sampling")


class DCKError(Exception):
    """Base class for every error raised by this package."""


class BundleError(DCKError):
    pass


class ConfigError(DCKError):
    pass


class DataError(DCKError, ValueError):
    pass


def as_locations(locations) -> np.ndarray:
    loc = np.asarray(locations, dtype=np.float64)
    if loc.ndim == 1 and loc.shape[0] == 2:
        loc = loc[None, :]
    if loc.ndim != 2 or loc.shape[1] != 2:
        raise DataError(f"locations must have shape (N, 2), got {loc.shape}")
    if not np.all(np.isfinite(loc)):
        raise DataError("locations contain NaN or Inf")
    return loc


@dataclass(frozen=True)
class UniDataset:
    """Observations of one variable at planar locations.

    ``locations`` is an (N, 2) array, ``values`` an (N,) array and
    ``covariates`` an optional (N, k) array.
    """

    locations: np.ndarray
    values: np.ndarray
    covariates: Optional[np.ndarray] = None

    def __post_init__(self):
        loc = as_locations(self.locations)
        val = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if val.shape[0] != loc.shape[0]:
            raise DataError(
                f"{loc.shape[0]} locations but {val.shape[0]} values")
        object.__setattr__(self, "locations", loc)
        object.__setattr__(self, "values", val)
        if self.covariates is not None:
            cov = np.asarray(self.covariates, dtype=np.float64)
            if cov.ndim == 1:
                cov = cov[:, None]
            if cov.shape[0] != loc.shape[0]:
                raise DataError(
                    f"covariate rows ({cov.shape[0]}) != locations ({loc.shape[0]})")
            object.__setattr__(self, "covariates", cov)

    def __len__(self):
        return self.values.shape[0]

    @property
    def n_covariates(self) -> int:
        return 0 if self.covariates is None else self.covariates.shape[1]

    def subset(self, index) -> "UniDataset":
        cov = None if self.covariates is None else self.covariates[index]
        return UniDataset(self.locations[index], self.values[index], cov)


@dataclass(frozen=True)
class BiSampleSets:
    """Z1 observed at S1 and Z2 observed at S2; the sets need not overlap."""

    set1: UniDataset
    set2: UniDataset

    @property
    def n1(self) -> int:
        return len(self.set1)

    @property
    def n2(self) -> int:
        return len(self.set2)


def _label_key(label: str) -> int:
    return int.from_bytes(hashlib.sha256(label.encode()).digest()[:4], "little")


@dataclass(frozen=True)
class RngSeedPolicy:
    """Named, independent random streams derived from one master seed.

    Every stream is a PCG64 generator seeded from ``SeedSequence(master_seed,
    spawn_key=(hash(label), *extra))``, so drawing from one stream never shifts
    another.
    """

    master_seed: int = 0
    streams: tuple = field(default=STREAMS)

    def __post_init__(self):
        if not 0 <= int(self.master_seed) < 2**64:
            raise ConfigError("master_seed must be a 64-bit unsigned integer")

    def seed_sequence(self, stream: str, *extra: int) -> np.random.SeedSequence:
        if stream not in self.streams:
            raise ConfigError(f"unknown RNG stream {stream!r}")
        key = (_label_key(stream),) + tuple(int(e) for e in extra)
        return np.random.SeedSequence(int(self.master_seed), spawn_key=key)

    def generator(self, stream: str, *extra: int) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(self.seed_sequence(stream, *extra)))

    def child(self, index: int) -> "RngSeedPolicy":
        """Policy for replicate ``index``; seeds are a pure function of (master, index)."""
        ss = np.random.SeedSequence(int(self.master_seed), spawn_key=(_label_key("replicate"), int(index)))
        return RngSeedPolicy(int(ss.generate_state(1, np.uint64)[0]), self.streams)


def as_generator(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
