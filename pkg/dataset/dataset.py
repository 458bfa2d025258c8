import io
import re
import warnings
from dataclasses import dataclass, field
from typing import IO, Iterator, Optional, Union
import os

import numpy as np
import pandas as pd
import scipy.sparse as sp

from src.errors import (DuplicateEntryError, InsufficientDataError, RatingDomainError,
                        RatingParseError, UnknownIdError)
from src.logger import logger
from src.manifest import Axis, MOVIELENS_CSV, RatingsFormat

RATING_MIN = 1.0
RATING_MAX = 5.0
NO_TIMESTAMP = -1

Source = Union[str, os.PathLike, IO]


@dataclass(frozen=True)
class RatingTriple:
    """One observed rating. Timestamps ride along and are never used by the predictors."""
    user_id: int
    item_id: int
    rating: float
    timestamp: Optional[int] = None

    def __post_init__(self):
        if not RATING_MIN <= self.rating <= RATING_MAX:
            raise RatingDomainError(f'rating {self.rating} outside [{RATING_MIN:g}, {RATING_MAX:g}]')
        if self.user_id < 0 or self.item_id < 0:
            raise RatingDomainError(f'ids must be non-negative, got user {self.user_id}, item {self.item_id}')


class RatingMatrix:
    """
    Sparse N_u x N_i utility matrix.

    Entries are kept as a coordinate list (users, items, ratings) over dense
    0-based indices, plus a CSR (per-user) and a CSC (per-item) adjacency
    index. Raw MovieLens ids are mapped to indices in ascending id order, so
    ordering by index is ordering by id. Instances are read-only.
    """

    def __init__(self, users: np.ndarray, items: np.ndarray, ratings: np.ndarray,
                 user_ids: np.ndarray, item_ids: np.ndarray, timestamps: Optional[np.ndarray] = None):
        users = np.array(users, dtype=np.int64)
        items = np.array(items, dtype=np.int64)
        ratings = np.array(ratings, dtype=np.float64)
        user_ids = np.array(user_ids, dtype=np.int64)
        item_ids = np.array(item_ids, dtype=np.int64)
        if timestamps is None:
            timestamps = np.full(len(ratings), NO_TIMESTAMP, dtype=np.int64)
        timestamps = np.array(timestamps, dtype=np.int64)

        if not (len(users) == len(items) == len(ratings) == len(timestamps)):
            raise ValueError('users, items, ratings and timestamps must have equal length')
        if len(users) and (users.min() < 0 or users.max() >= len(user_ids)):
            raise ValueError('user index out of range of the user id map')
        if len(items) and (items.min() < 0 or items.max() >= len(item_ids)):
            raise ValueError('item index out of range of the item id map')
        if np.any(np.diff(user_ids) <= 0) or np.any(np.diff(item_ids) <= 0):
            raise ValueError('id maps must be strictly ascending')
        if len(ratings) and (ratings.min() < RATING_MIN or ratings.max() > RATING_MAX):
            raise RatingDomainError(f'ratings must lie in [{RATING_MIN:g}, {RATING_MAX:g}]')

        shape = (len(user_ids), len(item_ids))
        flat = users * max(shape[1], 1) + items
        if len(np.unique(flat)) != len(flat):
            raise DuplicateEntryError('duplicate (user, item) pair in rating matrix')

        for array in (users, items, ratings, timestamps, user_ids, item_ids):
            array.flags.writeable = False

        self.users = users
        self.items = items
        self.ratings = ratings
        self.timestamps = timestamps
        self.user_ids = user_ids
        self.item_ids = item_ids

        self.csr = sp.csr_matrix((ratings, (users, items)), shape=shape)
        self.csr.sort_indices()
        self.csc = self.csr.tocsc()
        self.csc.sort_indices()

        self._user_index = {int(raw): idx for idx, raw in enumerate(user_ids)}
        self._item_index = {int(raw): idx for idx, raw in enumerate(item_ids)}

    @classmethod
    def from_arrays(cls, user_ids, item_ids, ratings, timestamps=None,
                    user_universe=None, item_universe=None) -> 'RatingMatrix':
        """Build from raw ids. Universes default to the ids present; extra ids become empty rows/columns."""
        user_ids = np.asarray(user_ids, dtype=np.int64)
        item_ids = np.asarray(item_ids, dtype=np.int64)
        users_sorted = np.unique(user_ids if user_universe is None else np.asarray(user_universe, dtype=np.int64))
        items_sorted = np.unique(item_ids if item_universe is None else np.asarray(item_universe, dtype=np.int64))
        users = np.searchsorted(users_sorted, user_ids)
        items = np.searchsorted(items_sorted, item_ids)
        if len(user_ids) and (np.any(users >= len(users_sorted)) or np.any(users_sorted[users] != user_ids)):
            raise UnknownIdError('user id missing from the user universe')
        if len(item_ids) and (np.any(items >= len(items_sorted)) or np.any(items_sorted[items] != item_ids)):
            raise UnknownIdError('item id missing from the item universe')
        return cls(users, items, ratings, users_sorted, items_sorted, timestamps)

    @classmethod
    def from_triples(cls, triples, user_universe=None, item_universe=None) -> 'RatingMatrix':
        triples = list(triples)
        return cls.from_arrays(
            [t.user_id for t in triples],
            [t.item_id for t in triples],
            [t.rating for t in triples],
            [NO_TIMESTAMP if t.timestamp is None else t.timestamp for t in triples],
            user_universe=user_universe,
            item_universe=item_universe,
        )

    @property
    def n_users(self) -> int:
        return len(self.user_ids)

    @property
    def n_items(self) -> int:
        return len(self.item_ids)

    @property
    def nnz(self) -> int:
        return len(self.ratings)

    def __len__(self):
        return self.nnz

    def __repr__(self):
        return f'RatingMatrix(n_users={self.n_users}, n_items={self.n_items}, nnz={self.nnz})'

    def user_index(self, user_id: int) -> int:
        try:
            return self._user_index[int(user_id)]
        except KeyError:
            raise UnknownIdError(f'unknown user id {user_id}') from None

    def item_index(self, item_id: int) -> int:
        try:
            return self._item_index[int(item_id)]
        except KeyError:
            raise UnknownIdError(f'unknown item id {item_id}') from None

    def has_user(self, user_id: int) -> bool:
        return int(user_id) in self._user_index

    def has_item(self, item_id: int) -> bool:
        return int(item_id) in self._item_index

    def triples(self) -> Iterator[RatingTriple]:
        """Entries in storage (file) order."""
        for u, i, r, ts in zip(self.users, self.items, self.ratings, self.timestamps):
            yield RatingTriple(
                int(self.user_ids[u]), int(self.item_ids[i]), float(r),
                None if ts == NO_TIMESTAMP else int(ts),
            )

    def user_items(self, user: int) -> tuple[np.ndarray, np.ndarray]:
        """(item indices, ratings) of a user index, ascending by item."""
        start, end = self.csr.indptr[user], self.csr.indptr[user + 1]
        return self.csr.indices[start:end], self.csr.data[start:end]

    def item_users(self, item: int) -> tuple[np.ndarray, np.ndarray]:
        """(user indices, ratings) of an item index, ascending by user."""
        start, end = self.csc.indptr[item], self.csc.indptr[item + 1]
        return self.csc.indices[start:end], self.csc.data[start:end]

    def rating(self, user: int, item: int) -> Optional[float]:
        items, ratings = self.user_items(user)
        pos = np.searchsorted(items, item)
        if pos < len(items) and items[pos] == item:
            return float(ratings[pos])
        return None

    def user_counts(self) -> np.ndarray:
        return np.diff(self.csr.indptr)

    def item_counts(self) -> np.ndarray:
        return np.diff(self.csc.indptr)

    def user_means(self) -> np.ndarray:
        """Mean rating per user index; NaN for users with no ratings."""
        return _means(self.users, self.ratings, self.n_users)

    def item_means(self) -> np.ndarray:
        """Mean rating per item index; NaN for items with no ratings."""
        return _means(self.items, self.ratings, self.n_items)

    def global_mean(self) -> float:
        if self.nnz == 0:
            return (RATING_MIN + RATING_MAX) / 2
        return float(self.ratings.mean())

    def to_dense(self) -> np.ndarray:
        """Dense rendering with NaN in unobserved cells."""
        dense = np.full((self.n_users, self.n_items), np.nan)
        dense[self.users, self.items] = self.ratings
        return dense

    def transpose(self) -> 'RatingMatrix':
        """Same ratings with the user and item roles swapped."""
        return RatingMatrix(self.items, self.users, self.ratings, self.item_ids, self.user_ids, self.timestamps)

    def take(self, entries: np.ndarray) -> 'RatingMatrix':
        """Sub-matrix of the given entry positions, keeping the full dimensions."""
        entries = np.asarray(entries, dtype=np.int64)
        return RatingMatrix(self.users[entries], self.items[entries], self.ratings[entries],
                            self.user_ids, self.item_ids, self.timestamps[entries])

    def restrict_users(self, user_ids) -> 'RatingMatrix':
        """Entries of the given users only, re-indexed to the users and items that remain."""
        wanted = np.asarray(list(user_ids), dtype=np.int64)
        mask = np.isin(self.user_ids[self.users], wanted)
        return RatingMatrix.from_arrays(
            self.user_ids[self.users[mask]],
            self.item_ids[self.items[mask]],
            self.ratings[mask],
            self.timestamps[mask],
        )


@dataclass(frozen=True, eq=False)
class CenteredMatrix:
    """
    Ratings minus the mean of their row (axis=user) or column (axis=item).

    Unobserved cells read as 0. `means` holds one mean per user (or item)
    over its observed entries, NaN when there are none.
    """
    source: RatingMatrix
    values: sp.csr_matrix
    means: np.ndarray
    axis: Axis = Axis.USER
    _vectors: sp.csr_matrix = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        vectors = self.values if self.axis == Axis.USER else self.values.T.tocsr()
        vectors.sort_indices()
        object.__setattr__(self, '_vectors', vectors)

    @property
    def row_means(self) -> np.ndarray:
        return self.means

    @property
    def vectors(self) -> sp.csr_matrix:
        """One row per compared entity: users for axis=user, items for axis=item."""
        return self._vectors

    def index_of(self, entity_id: int) -> int:
        if self.axis == Axis.USER:
            return self.source.user_index(entity_id)
        return self.source.item_index(entity_id)

    def id_of(self, index: int) -> int:
        ids = self.source.user_ids if self.axis == Axis.USER else self.source.item_ids
        return int(ids[index])

    def vector(self, index: int) -> np.ndarray:
        """Dense centered vector of one entity (row for users, column for items)."""
        return self._vectors[index].toarray().ravel()

    def to_dense(self) -> np.ndarray:
        return self.values.toarray()


def _means(index: np.ndarray, values: np.ndarray, size: int) -> np.ndarray:
    counts = np.bincount(index, minlength=size)
    sums = np.bincount(index, weights=values, minlength=size)
    with np.errstate(invalid='ignore', divide='ignore'):
        return np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)


def center_rows(m: RatingMatrix) -> CenteredMatrix:
    """Subtract each user's mean from that user's observed ratings."""
    means = m.user_means()
    values = m.csr.copy()
    values.data = values.data - np.repeat(np.nan_to_num(means), m.user_counts())
    return CenteredMatrix(m, values, means, Axis.USER)


def center_columns(m: RatingMatrix) -> CenteredMatrix:
    """Subtract each item's mean from that item's observed ratings."""
    means = m.item_means()
    values = m.csc.copy()
    values.data = values.data - np.repeat(np.nan_to_num(means), m.item_counts())
    return CenteredMatrix(m, values.tocsr(), means, Axis.ITEM)


def holdout_split(m: RatingMatrix, test_fraction: float, seed: int) -> tuple[RatingMatrix, RatingMatrix]:
    """
    Random train/test partition of the entries.

    |test| = round(test_fraction * nnz) with Python's round-half-to-even;
    both halves keep the full id maps and dimensions.
    """
    if not 0 < test_fraction < 1:
        raise ValueError(f'test_fraction must lie in (0, 1), got {test_fraction}')
    if m.nnz == 0:
        raise InsufficientDataError('cannot split an empty rating matrix')

    n_test = round(test_fraction * m.nnz)
    order = np.random.default_rng(seed).permutation(m.nnz)
    test_entries = np.sort(order[:n_test])
    train_entries = np.sort(order[n_test:])
    logger.info('Holdout split (seed %s): %d train / %d test entries', seed, len(train_entries), len(test_entries))
    return m.take(train_entries), m.take(test_entries)

####################
# File I/O
####################

_PANDAS_LINE = re.compile(r'line (\d+)')


def _read_text(source: Source, encoding: str) -> str:
    if isinstance(source, (str, os.PathLike)):
        with open(source, encoding=encoding, newline='') as f:
            return f.read()
    text = source.read()
    return text.decode(encoding) if isinstance(text, bytes) else text


def read_delimited(source: Source, what: str, delimiter: str = ',', names: Optional[list[str]] = None,
                   encoding: str = 'utf-8') -> pd.DataFrame:
    """
    Read a delimited table as strings, indexed by physical (1-based) line number.

    The header comes from the first line unless `names` is given. Blank lines
    are dropped and a row with more fields than the header raises
    RatingParseError naming its line; short rows come back padded with NaN.
    Raises pandas' EmptyDataError when there is no header line.
    """
    text = _read_text(source, encoding)
    kwargs = dict(sep=delimiter, dtype=str, keep_default_na=False, index_col=False)
    if len(delimiter) > 1:
        kwargs['engine'] = 'python'

    try:
        if names is None:
            header = pd.read_csv(io.StringIO(text), nrows=0, skip_blank_lines=False, **kwargs)
            columns = [str(c).strip() for c in header.columns]
        else:
            columns = list(names)
        width = len(columns)
        try:
            # Any surplus field lands in the spare column; fields past it are dropped with a ParserWarning
            with warnings.catch_warnings():
                warnings.simplefilter('ignore', pd.errors.ParserWarning)
                frame = pd.read_csv(io.StringIO(text), header=None, names=list(range(width + 1)),
                                    skiprows=0 if names else 1, skip_blank_lines=False, **kwargs)
        except pd.errors.EmptyDataError:
            frame = pd.DataFrame(columns=list(range(width + 1)), dtype=object)
    except pd.errors.ParserError as e:
        match = _PANDAS_LINE.search(str(e))
        raise RatingParseError(f'malformed {what} row: {e}', int(match.group(1)) if match else None) from e

    frame.index = frame.index + (1 if names else 2)
    first = frame[0]
    blank = frame.iloc[:, 1:].isna().all(axis=1) & (first.isna() | (first.str.strip() == ''))
    frame = frame[~blank]

    surplus = frame[width].notna().to_numpy()
    if surplus.any():
        raise RatingParseError(f'expected {width} fields', int(frame.index[np.argmax(surplus)]))
    frame = frame.drop(columns=width)
    frame.columns = columns
    return frame


def read_ratings_frame(source: Source, fmt: RatingsFormat = MOVIELENS_CSV) -> pd.DataFrame:
    """
    Parse and validate a ratings table.

    Returns a frame with integer `user`, `item`, `timestamp` (NO_TIMESTAMP when
    empty) and float `rating` columns plus the source `line` of every row.
    """
    user_col, item_col, rating_col, ts_col = fmt.columns
    try:
        frame = read_delimited(source, 'ratings', fmt.delimiter, names=None if fmt.header else list(fmt.columns))
    except pd.errors.EmptyDataError:
        frame = pd.DataFrame(columns=list(fmt.columns), dtype=str)

    if fmt.header:
        header = list(frame.columns)
        if header[:3] != [user_col, item_col, rating_col] or header[3:] not in ([], [ts_col]):
            raise RatingParseError(f'expected header {",".join(fmt.columns)}, got {",".join(header)}', 1)

    lines = frame.index.to_numpy(dtype=np.int64)
    declared = [c for c in fmt.columns if c in frame.columns]

    # A missing trailing field comes back as NaN; an empty one as ''
    short = frame[declared].isna().any(axis=1).to_numpy()
    if short.any():
        line = int(lines[np.argmax(short)])
        raise RatingParseError(f'expected {len(declared)} fields', line)

    users = pd.to_numeric(frame[user_col].str.strip(), errors='coerce').to_numpy(dtype=float)
    items = pd.to_numeric(frame[item_col].str.strip(), errors='coerce').to_numpy(dtype=float)
    ratings = pd.to_numeric(frame[rating_col].str.strip(), errors='coerce').to_numpy(dtype=float)

    bad = np.isnan(users) | np.isnan(items) | np.isnan(ratings)
    bad |= (users % 1 != 0) | (items % 1 != 0)
    if bad.any():
        pos = int(np.argmax(bad))
        raise RatingParseError(
            f'non-numeric value in "{frame.iloc[pos].to_dict()}"', int(lines[pos]))

    negative = (users < 0) | (items < 0)
    if negative.any():
        pos = int(np.argmax(negative))
        raise RatingDomainError(f'negative id (user {users[pos]:g}, item {items[pos]:g})', int(lines[pos]))

    out_of_range = (ratings < RATING_MIN) | (ratings > RATING_MAX)
    if out_of_range.any():
        pos = int(np.argmax(out_of_range))
        raise RatingDomainError(f'rating {ratings[pos]:g} outside [{RATING_MIN:g}, {RATING_MAX:g}]', int(lines[pos]))

    timestamps = np.full(len(frame), NO_TIMESTAMP, dtype=np.int64)
    if ts_col in frame.columns:
        raw_ts = frame[ts_col].str.strip()
        present = (raw_ts != '').to_numpy()
        parsed = pd.to_numeric(raw_ts[present], errors='coerce').to_numpy(dtype=float)
        if np.isnan(parsed).any() or (parsed % 1 != 0).any():
            pos = int(np.flatnonzero(present)[np.argmax(np.isnan(parsed) | (parsed % 1 != 0))])
            raise RatingParseError(f'non-numeric timestamp "{raw_ts.iloc[pos]}"', int(lines[pos]))
        timestamps[present] = parsed.astype(np.int64)

    result = pd.DataFrame({
        'user': users.astype(np.int64),
        'item': items.astype(np.int64),
        'rating': ratings,
        'timestamp': timestamps,
        'line': lines,
    })
    duplicated = result.duplicated(subset=['user', 'item']).to_numpy()
    if duplicated.any():
        pos = int(np.argmax(duplicated))
        raise DuplicateEntryError(
            f'duplicate rating for user {result.user.iloc[pos]}, item {result.item.iloc[pos]}', int(lines[pos]))
    return result


def load_ratings(source: Source, fmt: RatingsFormat = MOVIELENS_CSV) -> RatingMatrix:
    frame = read_ratings_frame(source, fmt)
    m = RatingMatrix.from_arrays(frame.user, frame.item, frame.rating, frame.timestamp)
    logger.info('Loaded %d ratings (%d users, %d items)', m.nnz, m.n_users, m.n_items)
    return m


def load_split(train_source: Source, test_source: Source,
               fmt: RatingsFormat = MOVIELENS_CSV) -> tuple[RatingMatrix, RatingMatrix]:
    """Load a train/test pair over one shared id universe (identical dimensions and index maps)."""
    train_frame = read_ratings_frame(train_source, fmt)
    test_frame = read_ratings_frame(test_source, fmt)
    users = np.union1d(train_frame.user.to_numpy(), test_frame.user.to_numpy())
    items = np.union1d(train_frame.item.to_numpy(), test_frame.item.to_numpy())

    overlap = train_frame.merge(test_frame, on=['user', 'item'])
    if len(overlap):
        logger.warning('%d (user, item) pairs appear in both train and test', len(overlap))

    train = RatingMatrix.from_arrays(train_frame.user, train_frame.item, train_frame.rating,
                                     train_frame.timestamp, user_universe=users, item_universe=items)
    test = RatingMatrix.from_arrays(test_frame.user, test_frame.item, test_frame.rating,
                                    test_frame.timestamp, user_universe=users, item_universe=items)
    logger.info('Loaded split: %d train / %d test ratings over %d users, %d items',
                train.nnz, test.nnz, len(users), len(items))
    return train, test


def save_ratings(m: RatingMatrix, dest: Source, fmt: RatingsFormat = MOVIELENS_CSV):
    """Write entries in file order; missing timestamps are written as empty fields."""
    frame = pd.DataFrame({
        fmt.columns[0]: m.user_ids[m.users],
        fmt.columns[1]: m.item_ids[m.items],
        fmt.columns[2]: m.ratings,
        fmt.columns[3]: [('' if ts == NO_TIMESTAMP else str(ts)) for ts in m.timestamps],
    })
    if len(fmt.delimiter) > 1:
        # pandas cannot write multi-character separators
        sep = fmt.delimiter
        lines = [sep.join(fmt.columns)] if fmt.header else []
        for u, i, r, ts in zip(frame.iloc[:, 0], frame.iloc[:, 1], frame.iloc[:, 2], frame.iloc[:, 3]):
            lines.append(f'{int(u)}{sep}{int(i)}{sep}{float(r)!r}{sep}{ts}')
        text = ''.join(line + '\n' for line in lines)
        if isinstance(dest, (str, os.PathLike)):
            with open(dest, 'w', encoding='utf-8') as f:
                f.write(text)
        else:
            dest.write(text)
        return
    frame.to_csv(dest, sep=fmt.delimiter, header=fmt.header, index=False, lineterminator='\n')
