import logging
from typing import Dict, Optional, Sequence

import numpy as np

from .dataset import Dataset
from .errors import ConfigError

logger = logging.getLogger(__name__)

# background, car, van, truck, bus regions of the UAV benchmark
UAV_CLASS_COUNTS: Dict[int, int] = {0: 4905, 1: 4479, 2: 780, 3: 2629, 4: 82}
MIN_CLASS_REGIONS = 10


def class_sizes(n_regions: int, class_count: int) -> np.ndarray:
    """Region count per label: benchmark proportions for 4 object classes, uniform otherwise."""
    if class_count == len(UAV_CLASS_COUNTS) - 1:
        shares = np.array(list(UAV_CLASS_COUNTS.values()), dtype=np.float64)
        shares /= shares.sum()
    else:
        shares = np.full(class_count + 1, 1.0 / (class_count + 1))
    sizes = np.maximum(np.floor(shares * n_regions + 0.5).astype(np.int64), MIN_CLASS_REGIONS)
    sizes[0] += n_regions - sizes.sum()
    if sizes[0] < MIN_CLASS_REGIONS:
        raise ConfigError(f"{n_regions} regions cannot hold {class_count + 1} classes of at least "
                          f"{MIN_CLASS_REGIONS} regions")
    return sizes


def generate_synthetic(n_regions: int = 500, channel_dims: Sequence[int] = (8, 8, 8), class_count: int = 4,
                       seed: int = 2023, separation: float = 1.5, sizes: Optional[Sequence[int]] = None) -> Dataset:
    """Gaussian blobs per class and channel; later channels are noisier, so channels differ in quality."""
    rng = np.random.Generator(np.random.PCG64(seed))
    sizes = np.asarray(sizes, dtype=np.int64) if sizes is not None else class_sizes(n_regions, class_count)
    if len(sizes) != class_count + 1:
        raise ConfigError(f"expected {class_count + 1} class sizes, got {len(sizes)}")
    labels = rng.permutation(np.repeat(np.arange(class_count + 1), sizes))
    channels = []
    for i, dim in enumerate(channel_dims):
        means = rng.normal(0.0, separation, size=(class_count + 1, dim))
        noise = 1.0 + 0.75 * i
        channels.append(means[labels] + rng.normal(0.0, noise, size=(len(labels), dim)))
    width = len(str(len(labels)))
    region_ids = tuple(f"r{k:0{width}d}" for k in range(len(labels)))
    dataset = Dataset(region_ids=region_ids, labels=labels, channels=tuple(channels), class_count=class_count)
    logger.info(f"generated {len(dataset)} synthetic regions over {len(channels)} channels, "
                f"class counts {dataset.class_counts}")
    return dataset
