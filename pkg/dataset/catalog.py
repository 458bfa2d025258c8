import re
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd

from src.errors import DuplicateEntryError, RatingDomainError, RatingParseError, UnknownIdError
from src.logger import logger
from .dataset import Source, read_delimited

NO_GENRES = '(no genres listed)'
ATTRIBUTE_COLUMNS = ['imdb_rating', 'year', 'genres', 'country', 'actor', 'director']
NUMERIC_ATTRIBUTES = ['imdb_rating', 'year']
CATEGORICAL_ATTRIBUTES = ['genres', 'country', 'actor', 'director']

_YEAR = re.compile(r'\((\d{4})\)\s*$')


@dataclass(frozen=True)
class CatalogEntry:
    title: str
    genres: tuple[str, ...]

    @property
    def year(self) -> Optional[int]:
        match = _YEAR.search(self.title)
        return int(match.group(1)) if match else None


@dataclass(frozen=True)
class ItemCatalog:
    """item_id -> (title, genre tags)."""
    entries: dict[int, CatalogEntry]

    def __contains__(self, item_id):
        return int(item_id) in self.entries

    def __len__(self):
        return len(self.entries)

    def get(self, item_id: int) -> CatalogEntry:
        try:
            return self.entries[int(item_id)]
        except KeyError:
            raise UnknownIdError(f'item {item_id} is not in the catalog') from None

    def describe(self, item_id: int) -> str:
        """'Title (Year) Genre | Genre' the way top-N lists are printed."""
        entry = self.entries.get(int(item_id))
        if entry is None:
            return f'Movie {item_id}'
        if not entry.genres:
            return entry.title
        return f"{entry.title} {' | '.join(entry.genres)}"


def _read_table(source: Source, what: str, delimiter: str = ',', names: Optional[list[str]] = None,
                encoding: str = 'utf-8') -> pd.DataFrame:
    try:
        return read_delimited(source, what, delimiter, names=names, encoding=encoding)
    except pd.errors.EmptyDataError as e:
        raise RatingParseError(f'{what} file is empty', 1) from e


def _item_ids(frame: pd.DataFrame, column: str, what: str) -> np.ndarray:
    lines = frame.index.to_numpy(dtype=np.int64)
    if frame[column].isna().any():
        raise RatingParseError(f'ragged {what} row', int(lines[np.argmax(frame[column].isna().to_numpy())]))
    ids = pd.to_numeric(frame[column].str.strip(), errors='coerce').to_numpy(dtype=float)
    bad = np.isnan(ids) | (ids % 1 != 0)
    if bad.any():
        raise RatingParseError(f'non-numeric {column} "{frame[column].iloc[np.argmax(bad)]}"',
                               int(lines[np.argmax(bad)]))
    if (ids < 0).any():
        raise RatingDomainError(f'negative {column}', int(lines[np.argmax(ids < 0)]))
    ids = ids.astype(np.int64)
    duplicated = pd.Series(ids).duplicated().to_numpy()
    if duplicated.any():
        pos = int(np.argmax(duplicated))
        raise DuplicateEntryError(f'{column} {ids[pos]} listed twice in {what} file', int(lines[pos]))
    return ids


def load_catalog(source: Source, delimiter: str = ',', header: bool = True,
                 encoding: str = 'utf-8') -> ItemCatalog:
    """Read movieId,title,genres (ratings.csv companion movies.csv, or movies.dat with '::')."""
    names = None if header else ['movieId', 'title', 'genres']
    frame = _read_table(source, 'catalog', delimiter, names=names, encoding=encoding)

    missing = {'movieId', 'title', 'genres'} - set(frame.columns)
    if missing:
        raise RatingParseError(f'catalog header lacks {sorted(missing)}', 1)

    ids = _item_ids(frame, 'movieId', 'catalog')
    entries = {}
    for item_id, title, genres in zip(ids, frame['title'], frame['genres']):
        tags = () if genres in ('', NO_GENRES) else tuple(g.strip() for g in genres.split('|'))
        entries[int(item_id)] = CatalogEntry(title.strip(), tags)
    logger.info('Loaded catalog with %d items', len(entries))
    return ItemCatalog(entries)


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """Binary item x feature matrix; rows in file order."""
    feature_names: tuple[str, ...]
    item_ids: np.ndarray
    matrix: np.ndarray
    _rows: dict = field(init=False, repr=False)

    def __post_init__(self):
        if not self.feature_names:
            raise RatingParseError('feature matrix needs at least one feature')
        if self.matrix.shape != (len(self.item_ids), len(self.feature_names)):
            raise ValueError(f'matrix shape {self.matrix.shape} does not match '
                             f'{len(self.item_ids)} items x {len(self.feature_names)} features')
        if not np.isin(self.matrix, (0, 1)).all():
            raise RatingDomainError('feature values must be 0 or 1')
        object.__setattr__(self, '_rows', {int(item): pos for pos, item in enumerate(self.item_ids)})

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def has_item(self, item_id: int) -> bool:
        return int(item_id) in self._rows

    def row_index(self, item_id: int) -> int:
        try:
            return self._rows[int(item_id)]
        except KeyError:
            raise UnknownIdError(f'item {item_id} has no feature row') from None

    def vector(self, item_id: int) -> np.ndarray:
        return self.matrix[self.row_index(item_id)]


def load_features(source: Source) -> FeatureMatrix:
    """
    Read `movieId,<feature names...>` with one 0/1 row per item.

    Feature names follow the ActorID-*, DirID-*, genre and country schema,
    but any names are accepted.
    """
    frame = _read_table(source, 'features')
    if len(frame.columns) < 2:
        raise RatingParseError('features header declares no feature columns', 1)

    id_column = frame.columns[0]
    names = tuple(str(c).strip() for c in frame.columns[1:])
    lines = frame.index.to_numpy(dtype=np.int64)

    ragged = frame.isna().any(axis=1).to_numpy()
    if ragged.any():
        raise RatingParseError(f'expected {len(frame.columns)} fields', int(lines[np.argmax(ragged)]))

    ids = _item_ids(frame, id_column, 'features')
    values = frame.iloc[:, 1:].apply(lambda col: col.str.strip())
    binary = values.isin(['0', '1']).to_numpy()
    if not binary.all():
        row, col = np.argwhere(~binary)[0]
        raise RatingDomainError(f'feature {names[col]} has non-binary value "{values.iat[row, col]}"',
                                int(lines[row]))

    matrix = (values.to_numpy() == '1').astype(np.uint8)
    logger.info('Loaded %d feature rows over %d features', len(ids), len(names))
    return FeatureMatrix(names, ids, matrix)


def load_item_attributes(source: Source) -> pd.DataFrame:
    """
    Read movieId plus any of imdb_rating, year, genres, country, actor, director.

    Returns a frame indexed by movieId; numeric columns as floats (NaN when
    empty), categorical columns as stripped strings.
    """
    frame = _read_table(source, 'attributes')
    if 'movieId' not in frame.columns:
        raise RatingParseError('attributes header lacks movieId', 1)
    unknown = [c for c in frame.columns if c != 'movieId' and c not in ATTRIBUTE_COLUMNS]
    if unknown:
        logger.warning('Ignoring unknown attribute columns: %s', ', '.join(unknown))

    ids = _item_ids(frame, 'movieId', 'attributes')
    result = pd.DataFrame(index=pd.Index(ids, name='movieId'))
    for column in ATTRIBUTE_COLUMNS:
        if column not in frame.columns:
            continue
        values = frame[column].str.strip()
        if column in NUMERIC_ATTRIBUTES:
            parsed = pd.to_numeric(values.replace('', np.nan), errors='coerce')
            bad = parsed.isna() & (values != '')
            if bad.any():
                pos = int(np.argmax(bad.to_numpy()))
                raise RatingParseError(f'non-numeric {column} "{values.iloc[pos]}"', int(frame.index[pos]))
            result[column] = parsed.to_numpy(dtype=float)
        else:
            result[column] = values.to_numpy()
    return result


def attributes_from_catalog(catalog: ItemCatalog) -> pd.DataFrame:
    """Release year and genre string for every catalog item, in ascending id order."""
    ids = sorted(catalog.entries)
    return pd.DataFrame(
        {
            'year': [float(catalog.entries[i].year) if catalog.entries[i].year else np.nan for i in ids],
            'genres': ['|'.join(catalog.entries[i].genres) for i in ids],
        },
        index=pd.Index(ids, name='movieId'),
    )
