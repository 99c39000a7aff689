"""Core containers: hyperparameters, point sets, datasets, predictions."""

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Hyperparams:
    """Squared-exponential kernel hyperparameters.

    signal_variance and noise_variance are in squared output units;
    length_scales holds one positive scale per input dimension.
    """

    signal_variance: float
    noise_variance: float
    length_scales: np.ndarray

    def __post_init__(self):
        ls = np.atleast_1d(np.asarray(self.length_scales, dtype=np.float64))
        object.__setattr__(self, "signal_variance", float(self.signal_variance))
        object.__setattr__(self, "noise_variance", float(self.noise_variance))
        object.__setattr__(self, "length_scales", ls)
        if self.signal_variance < 0:
            raise ValueError("signal_variance must be nonnegative")
        if self.noise_variance < 0:
            raise ValueError("noise_variance must be nonnegative")
        if ls.ndim != 1 or not np.all(ls > 0):
            raise ValueError("length_scales must be a 1-d array of positive reals")

    @property
    def dim(self):
        return self.length_scales.shape[0]

    @property
    def prior_variance(self):
        """Marginal prior variance of any single observation."""
        return self.signal_variance + self.noise_variance


@dataclass(frozen=True)
class Point:
    """A single input location with an integer identity."""

    coords: np.ndarray
    id: int

    def __post_init__(self):
        object.__setattr__(
            self, "coords", np.atleast_1d(np.asarray(self.coords, dtype=np.float64))
        )
        object.__setattr__(self, "id", int(self.id))

    @property
    def dim(self):
        return self.coords.shape[0]


@dataclass(frozen=True, eq=False)
class Points:
    """A batch of input locations.

    Identities (not coordinates) decide whether two points are "the
    same" for noise purposes, so ids must be unique within a set.
    """

    coords: np.ndarray
    ids: np.ndarray

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=np.float64)
        if coords.ndim != 2:
            coords = coords.reshape(len(coords), -1)
        ids = np.asarray(self.ids, dtype=np.int64)
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "ids", ids)
        if ids.shape != (coords.shape[0],):
            raise ValueError("ids must be one per point")
        if len(np.unique(ids)) != len(ids):
            raise ValueError("point ids must be unique within a set")

    def __len__(self):
        return self.coords.shape[0]

    @property
    def dim(self):
        return self.coords.shape[1]

    def take(self, idx):
        idx = np.asarray(idx, dtype=np.intp)
        return Points(self.coords[idx], self.ids[idx])

    def point(self, i):
        return Point(self.coords[i], int(self.ids[i]))

    @staticmethod
    def from_coords(coords, start_id=0):
        coords = np.asarray(coords, dtype=np.float64)
        if coords.ndim == 1:
            coords = coords[:, None]
        return Points(coords, start_id + np.arange(coords.shape[0]))

    @staticmethod
    def concat(parts):
        parts = list(parts)
        if not parts:
            raise ValueError("cannot concatenate zero point sets")
        return Points(
            np.concatenate([p.coords for p in parts], axis=0),
            np.concatenate([p.ids for p in parts]),
        )


@dataclass(frozen=True, eq=False)
class Dataset:
    """Observed inputs and outputs, with a constant prior mean."""

    x: Points
    y: np.ndarray
    prior_mean: float = 0.0

    def __post_init__(self):
        y = np.asarray(self.y, dtype=np.float64).reshape(-1)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "prior_mean", float(self.prior_mean))
        if y.shape[0] != len(self.x):
            raise ValueError(
                f"outputs ({y.shape[0]}) and inputs ({len(self.x)}) differ in length"
            )

    @property
    def n(self):
        return len(self.x)

    def residual(self):
        """Outputs minus the prior mean."""
        return self.y - self.prior_mean

    def take(self, idx):
        idx = np.asarray(idx, dtype=np.intp)
        return Dataset(self.x.take(idx), self.y[idx], self.prior_mean)


def concat_datasets(blocks):
    blocks = list(blocks)
    if not blocks:
        raise ValueError("cannot concatenate zero datasets")
    means = {b.prior_mean for b in blocks}
    if len(means) != 1:
        raise ValueError("all blocks must share one prior mean")
    return Dataset(
        Points.concat([b.x for b in blocks]),
        np.concatenate([b.y for b in blocks]),
        blocks[0].prior_mean,
    )


@dataclass(frozen=True, eq=False)
class Prediction:
    """Posterior mean and marginal variances, optionally a full covariance.

    Variances are reported raw: the ICF-based predictor can produce
    negative values and callers are expected to count rather than hide
    them.
    """

    mean: np.ndarray
    var: np.ndarray = None
    cov: np.ndarray = field(default=None)

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64).reshape(-1)
        object.__setattr__(self, "mean", mean)
        if self.cov is not None:
            cov = np.asarray(self.cov, dtype=np.float64)
            object.__setattr__(self, "cov", cov)
            object.__setattr__(self, "var", np.diag(cov).copy())
        elif self.var is not None:
            object.__setattr__(
                self, "var", np.asarray(self.var, dtype=np.float64).reshape(-1)
            )
        else:
            raise ValueError("need variances or a covariance matrix")
        if self.var.shape != mean.shape:
            raise ValueError("mean and variances differ in length")

    def __len__(self):
        return self.mean.shape[0]
