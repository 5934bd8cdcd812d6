from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import EmptyData, MissingFeature


@dataclass(frozen=True)
class Dataset:
    """Feature matrix with optional targets.

    ``y`` holds class labels (any sortable values) or reals. ``X`` may not
    contain nulls.
    """

    X: np.ndarray
    y: np.ndarray | None = None
    feature_names: tuple = field(default=())

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2:
            raise ValueError("X must be 2-D")
        if np.isnan(X).any():
            raise ValueError("X contains nulls")
        object.__setattr__(self, "X", X)
        if self.y is not None:
            y = np.asarray(self.y)
            if y.shape[0] != X.shape[0]:
                raise ValueError(f"|y|={y.shape[0]} does not match n={X.shape[0]}")
            object.__setattr__(self, "y", y)
        names = tuple(self.feature_names) or tuple(f"f{i}" for i in range(X.shape[1]))
        if len(names) != X.shape[1]:
            raise ValueError("feature_names length does not match X")
        object.__setattr__(self, "feature_names", names)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def require_nonempty(self):
        if self.n == 0:
            raise EmptyData("dataset has no rows")
        return self

    def column(self, name: str) -> np.ndarray:
        try:
            return self.X[:, self.feature_names.index(name)]
        except ValueError:
            raise MissingFeature(f"feature {name!r} not in dataset") from None

    def select(self, names) -> "Dataset":
        idx = []
        for nm in names:
            if nm not in self.feature_names:
                raise MissingFeature(f"feature {nm!r} not in dataset")
            idx.append(self.feature_names.index(nm))
        return Dataset(self.X[:, idx], self.y, tuple(names))

    def subset(self, rows) -> "Dataset":
        return Dataset(self.X[rows], None if self.y is None else self.y[rows], self.feature_names)
