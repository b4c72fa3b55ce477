"""User records, CSV ingestion/export, empirical joints and synthetic data."""

from __future__ import annotations

import csv
import io
import math
from collections.abc import Mapping
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class DatasetError(ValueError):
    """Base class for dataset validation failures."""


class MissingColumnError(DatasetError):
    def __init__(self, column, available):
        self.column = column
        super().__init__(f"missing column {column!r}; file has {list(available)}")


class NonNumericFeatureError(DatasetError):
    def __init__(self, row, column, cell):
        self.row = row
        self.column = column
        self.cell = cell
        super().__init__(
            f"row {row}, column {column!r}: feature cell {cell!r} is not a finite number"
        )


class EmptyDatasetError(DatasetError):
    def __init__(self, path=None):
        where = f" in {path}" if path else ""
        super().__init__(f"empty dataset: no data rows{where}")


@dataclass(frozen=True)
class UserRecord:
    user_id: str
    features: tuple
    private_value: object


@dataclass(frozen=True)
class CsvSchema:
    """Column mapping for :func:`load_csv`.

    ``features=None`` takes every column that is neither the private column
    nor the id column.  ``bin_width`` floors a continuous private attribute
    onto multiples of the width.
    """

    private: str
    features: tuple | None = None
    user_id: str | None = None
    bin_width: float | None = None


def _readonly(a):
    a = np.array(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable table of users: features ``X`` plus one ordered private value ``Y``."""

    user_ids: tuple
    features: np.ndarray
    private_values: tuple
    private_domain: tuple = None
    feature_names: tuple = None
    private_name: str = "y"
    id_name: str | None = None
    column_order: tuple = None
    _index: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=float)
        if feats.ndim != 2:
            raise DatasetError("features must be a 2-D array (users x dims)")
        n, d = feats.shape
        if n < 2:
            raise DatasetError(f"a dataset needs at least 2 records, got {n}")
        if d < 1:
            raise DatasetError("feature_dim must be positive")
        if not np.all(np.isfinite(feats)):
            r, c = np.argwhere(~np.isfinite(feats))[0]
            raise NonNumericFeatureError(int(r) + 1, c, feats[r, c])
        if len(self.user_ids) != n or len(self.private_values) != n:
            raise DatasetError("user_ids, features and private_values disagree in length")
        if len(set(self.user_ids)) != n:
            raise DatasetError("user ids must be unique")
        domain = self.private_domain
        if domain is None:
            domain = tuple(sorted(set(self.private_values)))
        domain = tuple(domain)
        if list(domain) != sorted(set(domain)):
            raise DatasetError("private_domain must be sorted ascending without duplicates")
        lookup = {v: i for i, v in enumerate(domain)}
        try:
            index = np.array([lookup[v] for v in self.private_values], dtype=np.int64)
        except KeyError as exc:
            raise DatasetError(f"private value {exc.args[0]!r} not in private_domain") from None
        names = self.feature_names or tuple(f"x{j}" for j in range(d))
        if len(names) != d:
            raise DatasetError("feature_names length must equal feature_dim")
        order = self.column_order
        if order is None:
            order = ((self.id_name,) if self.id_name else ()) + tuple(names) + (self.private_name,)
        set_ = object.__setattr__
        set_(self, "features", _readonly(feats))
        set_(self, "user_ids", tuple(str(u) for u in self.user_ids))
        set_(self, "private_values", tuple(self.private_values))
        set_(self, "private_domain", domain)
        set_(self, "feature_names", tuple(names))
        set_(self, "column_order", tuple(order))
        set_(self, "_index", _readonly(index))

    @property
    def n_users(self):
        return self.features.shape[0]

    @property
    def feature_dim(self):
        return self.features.shape[1]

    @property
    def value_index(self):
        """Position of each user's private value in ``private_domain``."""
        return self._index

    @property
    def domain_positions(self):
        """Numeric coordinates of the domain values (ranks for non-numeric labels)."""
        if all(isinstance(v, (int, float, np.integer, np.floating)) for v in self.private_domain):
            return np.asarray(self.private_domain, dtype=float)
        return np.arange(len(self.private_domain), dtype=float)

    @property
    def value_counts(self):
        return np.bincount(self._index, minlength=len(self.private_domain))

    @property
    def records(self):
        return [
            UserRecord(u, tuple(float(x) for x in row), y)
            for u, row, y in zip(self.user_ids, self.features, self.private_values)
        ]

    def to_csv(self, path=None):
        """Write the dataset mirroring its ingestion schema; returns the text."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.column_order)
        col = {name: j for j, name in enumerate(self.feature_names)}
        for i in range(self.n_users):
            row = []
            for name in self.column_order:
                if name == self.id_name:
                    row.append(self.user_ids[i])
                elif name == self.private_name:
                    row.append(_format_value(self.private_values[i]))
                else:
                    row.append(repr(float(self.features[i, col[name]])))
            w.writerow(row)
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text


def _format_value(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _parse_private(cells, bin_width):
    try:
        vals = [int(c) for c in cells]
    except ValueError:
        try:
            vals = [float(c) for c in cells]
        except ValueError:
            if bin_width is not None:
                raise DatasetError("bin_width requires a numeric private column") from None
            return list(cells)
        if not all(math.isfinite(v) for v in vals):
            raise DatasetError("private column contains non-finite values")
    if bin_width is not None:
        if bin_width <= 0:
            raise DatasetError("bin_width must be positive")
        binned = [math.floor(v / bin_width) * bin_width for v in vals]
        if float(bin_width).is_integer():
            return [int(b) for b in binned]
        return [float(b) for b in binned]
    return vals


def load_csv(path, schema):
    """Read a CSV file into a :class:`Dataset`.

    ``schema`` is a :class:`CsvSchema` or a mapping with the same keys.
    Rows keep file order; the private domain is the sorted set of observed
    values.
    """
    if isinstance(schema, Mapping):
        schema = CsvSchema(**schema)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise EmptyDatasetError(path)
    header = [h.strip() for h in rows[0]]
    body = [r for r in rows[1:] if any(cell.strip() for cell in r)]
    pos = {h: j for j, h in enumerate(header)}
    wanted = [schema.private] + ([schema.user_id] if schema.user_id else [])
    if schema.features is not None:
        wanted += list(schema.features)
    for name in wanted:
        if name not in pos:
            raise MissingColumnError(name, header)
    if schema.features is None:
        feature_cols = tuple(h for h in header if h not in (schema.private, schema.user_id))
    else:
        feature_cols = tuple(schema.features)
    if not feature_cols:
        raise DatasetError("schema names no feature columns")
    if not body:
        raise EmptyDatasetError(path)

    feats = np.empty((len(body), len(feature_cols)))
    private_cells = []
    ids = []
    for r, row in enumerate(body, start=1):
        if len(row) != len(header):
            raise DatasetError(f"row {r}: expected {len(header)} cells, found {len(row)}")
        for j, name in enumerate(feature_cols):
            cell = row[pos[name]].strip()
            try:
                v = float(cell)
            except ValueError:
                raise NonNumericFeatureError(r, name, cell) from None
            if not math.isfinite(v):
                raise NonNumericFeatureError(r, name, cell)
            feats[r - 1, j] = v
        private_cells.append(row[pos[schema.private]].strip())
        ids.append(row[pos[schema.user_id]].strip() if schema.user_id else str(r - 1))

    used = set(feature_cols) | {schema.private} | ({schema.user_id} if schema.user_id else set())
    return Dataset(
        user_ids=tuple(ids),
        features=feats,
        private_values=tuple(_parse_private(private_cells, schema.bin_width)),
        feature_names=feature_cols,
        private_name=schema.private,
        id_name=schema.user_id,
        column_order=tuple(h for h in header if h in used),
    )


@dataclass(frozen=True, eq=False)
class EmpiricalJoint:
    """Joint probability table over (row state, column state)."""

    probabilities: np.ndarray
    row_labels: tuple = None
    col_labels: tuple = None

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=float)
        if p.ndim != 2:
            raise ValueError("joint table must be 2-D")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("joint table must be non-negative and sum to 1")
        object.__setattr__(self, "probabilities", _readonly(p))
        object.__setattr__(self, "row_labels", tuple(self.row_labels or range(p.shape[0])))
        object.__setattr__(self, "col_labels", tuple(self.col_labels or range(p.shape[1])))

    @property
    def row_marginal(self):
        return self.probabilities.sum(axis=1)

    @property
    def col_marginal(self):
        return self.probabilities.sum(axis=0)


def cluster_array(ds, cluster_of):
    """Normalise a user->cluster map (array or mapping by user id) to an int array."""
    if isinstance(cluster_of, Mapping):
        missing = [u for u in ds.user_ids if u not in cluster_of]
        if missing:
            raise DatasetError(f"user {missing[0]!r} missing from cluster map")
        arr = np.array([cluster_of[u] for u in ds.user_ids], dtype=np.int64)
    else:
        arr = np.asarray(getattr(cluster_of, "assignment", cluster_of))
        if arr.shape != (ds.n_users,):
            raise DatasetError(
                f"cluster map covers {arr.size} users, dataset has {ds.n_users}"
            )
        if not np.issubdtype(arr.dtype, np.integer):
            raise DatasetError("cluster labels must be integers")
        arr = arr.astype(np.int64)
    if arr.min() < 0:
        raise DatasetError("cluster labels must be non-negative")
    return arr


def joint_counts(clusters, values, n_clusters, n_values):
    """Integer table of users per (cluster, value index)."""
    flat = np.bincount(clusters * n_values + values, minlength=n_clusters * n_values)
    return flat.reshape(n_clusters, n_values)


def empirical_joint(ds, cluster_of, n_clusters=None):
    """Plug-in joint distribution of (cluster, private value) over all users."""
    cl = cluster_array(ds, cluster_of)
    if n_clusters is None:
        labels, cl = np.unique(cl, return_inverse=True)
        n_clusters = labels.size
        row_labels = tuple(int(x) for x in labels)
    else:
        if cl.max() >= n_clusters:
            raise DatasetError("cluster label exceeds n_clusters")
        row_labels = tuple(range(n_clusters))
    counts = joint_counts(cl, ds.value_index, n_clusters, len(ds.private_domain))
    return EmpiricalJoint(counts / ds.n_users, row_labels, ds.private_domain)


def synth_population(n_users, n_clusters, private_domain_size, correlation, seed,
                     feature_dim=4, separation=6.0, return_clusters=False):
    """Generate a population whose private value is tied to a latent cluster.

    Algorithm (numpy PCG64 generator seeded with ``seed``, draws in this order):

    1. cluster centroids ``~ N(0, separation^2)`` of shape ``(n_clusters, feature_dim)``;
    2. latent cluster of user ``i`` is ``perm(i mod n_clusters)`` (balanced);
    3. features = centroid + ``N(0, 1)`` noise;
    4. with probability ``correlation`` the private value is the cluster-linked
       value ``floor(c * m / n_clusters)``, otherwise uniform on ``0..m-1``.

    The private domain is the sorted set of realised values.
    """
    if not (n_clusters >= 1 and n_users >= max(n_clusters, 2)):
        raise ValueError("need n_users >= n_clusters >= 1 and n_users >= 2")
    if private_domain_size < 2:
        raise ValueError("private_domain_size must be at least 2")
    if not 0.0 <= correlation <= 1.0:
        raise ValueError("correlation must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    m = private_domain_size
    centroids = rng.normal(0.0, separation, size=(n_clusters, feature_dim))
    latent = rng.permutation(np.arange(n_users) % n_clusters)
    feats = centroids[latent] + rng.normal(size=(n_users, feature_dim))
    linked = (latent * m) // n_clusters
    use_link = rng.random(n_users) < correlation
    noise = rng.integers(0, m, size=n_users)
    y = np.where(use_link, linked, noise)
    ds = Dataset(
        user_ids=tuple(f"u{i}" for i in range(n_users)),
        features=feats,
        private_values=tuple(int(v) for v in y),
        feature_names=tuple(f"x{j}" for j in range(feature_dim)),
        private_name="y",
        id_name="user_id",
    )
    if return_clusters:
        return ds, latent
    return ds
