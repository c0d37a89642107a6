"""Unpaired patch batches for translation training.

An epoch is one pass over the larger dataset; the smaller one is drawn
with replacement. All random choices of an epoch (images and crop
corners) are planned up front from ``(seed, epoch)``, so the batch
sequence does not depend on how many threads materialize the crops.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from src.config import LOGGER_NAME
from src.data.patches import crop_at, sample_corner
from src.data.samples import LabeledDataset
from src.errors import DataError
from src.schemas import PatchSpec

logger = logging.getLogger(LOGGER_NAME)


@dataclass(frozen=True)
class CropPlan:
    index: int
    top: int
    left: int


@dataclass(frozen=True)
class UnpairedBatch:
    """One training step: independent patches from both domains.

    Attributes:
        x: (B, S, S, 3) source-domain patches
        y: (B, S, S, 3) target-domain patches
        x_plan: Crop plan that produced x
        y_plan: Crop plan that produced y
    """
    x: np.ndarray
    y: np.ndarray
    x_plan: tuple[CropPlan, ...]
    y_plan: tuple[CropPlan, ...]


class UnpairedPatchLoader:
    """Seed-deterministic stream of unpaired (X, Y) patch batches.

    Attributes:
        X: Source dataset
        Y: Target dataset
        batch: Patches per domain per step
        spec: Patch specification
        seed: Base seed
        num_workers: Prefetch threads (0 = synchronous)
    """

    def __init__(
        self,
        X: LabeledDataset,
        Y: LabeledDataset,
        batch: int,
        spec: PatchSpec,
        seed: int,
        num_workers: int = 0
    ):
        if len(X) == 0 or len(Y) == 0:
            raise DataError(f"Unpaired batches need non-empty datasets (|X|={len(X)}, |Y|={len(Y)})")
        if batch < 1:
            raise DataError(f"batch must be >= 1, got {batch}")
        for dataset in (X, Y):
            for sample in dataset:
                spec.check(sample.size)

        self.X = X
        self.Y = Y
        self.batch = batch
        self.spec = spec
        self.seed = seed
        self.num_workers = num_workers

    def __len__(self) -> int:
        return self.steps_per_epoch

    @property
    def steps_per_epoch(self) -> int:
        return math.ceil(max(len(self.X), len(self.Y)) / self.batch)

    def _indices(self, n: int, rng: np.random.Generator, full_pass: bool) -> np.ndarray:
        total = self.steps_per_epoch * self.batch
        if not full_pass:
            return rng.integers(0, n, size=total)
        order = rng.permutation(n)
        if len(order) < total:
            order = np.concatenate([order, rng.integers(0, n, size=total - len(order))])
        return order

    def plan_epoch(self, epoch: int) -> list[tuple[tuple[CropPlan, ...], tuple[CropPlan, ...]]]:
        """All crop plans of one epoch, in step order."""
        rng = np.random.default_rng([self.seed, epoch])
        x_full = len(self.X) >= len(self.Y)
        y_full = len(self.Y) >= len(self.X)
        x_idx = self._indices(len(self.X), rng, x_full)
        y_idx = self._indices(len(self.Y), rng, y_full)

        size = self.spec.crop_size

        def plans(dataset: LabeledDataset, indices: np.ndarray) -> list[CropPlan]:
            out = []
            for i in indices:
                top, left = sample_corner(dataset[int(i)].size, size, rng)
                out.append(CropPlan(int(i), top, left))
            return out

        x_plans = plans(self.X, x_idx)
        y_plans = plans(self.Y, y_idx)
        b = self.batch
        return [
            (tuple(x_plans[s * b:(s + 1) * b]), tuple(y_plans[s * b:(s + 1) * b]))
            for s in range(self.steps_per_epoch)
        ]

    def _materialize(self, dataset: LabeledDataset, plan: Sequence[CropPlan]) -> np.ndarray:
        return np.stack([crop_at(dataset[p.index], p.top, p.left, self.spec).image for p in plan])

    def _make_batch(self, plans) -> UnpairedBatch:
        x_plan, y_plan = plans
        return UnpairedBatch(
            x=self._materialize(self.X, x_plan),
            y=self._materialize(self.Y, y_plan),
            x_plan=x_plan,
            y_plan=y_plan,
        )

    def iter_epoch(self, epoch: int) -> Iterator[UnpairedBatch]:
        """Yield the batches of one epoch, prefetching one step ahead."""
        epoch_plans = self.plan_epoch(epoch)
        if self.num_workers <= 0:
            for plans in epoch_plans:
                yield self._make_batch(plans)
            return

        with ThreadPoolExecutor(max_workers=self.num_workers) as pool:
            pending = None
            for plans in epoch_plans:
                future = pool.submit(self._make_batch, plans)
                if pending is not None:
                    yield pending.result()
                pending = future
            if pending is not None:
                yield pending.result()

    def __iter__(self) -> Iterator[UnpairedBatch]:
        return self.iter_epoch(0)


def unpaired_batch_iterator(
    X: LabeledDataset,
    Y: LabeledDataset,
    batch: int,
    spec: PatchSpec,
    seed: int,
    epochs: int = 1,
    num_workers: int = 0
) -> Iterator[UnpairedBatch]:
    """Stream unpaired patch batches over ``epochs`` epochs."""
    loader = UnpairedPatchLoader(X, Y, batch, spec, seed, num_workers)
    for epoch in range(epochs):
        yield from loader.iter_epoch(epoch)
