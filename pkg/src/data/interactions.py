"""
Structural Complexity Toolkit - Interaction Logs

Parsing and validation of delimited (user, item, rating[, timestamp]) logs.
"""

import io
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Iterator, List, Optional, Sequence, TextIO, Union

import numpy as np
import pandas as pd

from src.utils import logging as log
from src.utils.errors import EmptyInputError, InvalidArgumentError, ParseError

# Sentinel stored in place of a missing timestamp
TIMESTAMP_ABSENT = np.iinfo(np.int64).min

INTERACTION_COLUMNS = ["user_id", "item_id", "rating", "timestamp"]

ColumnRef = Union[int, str]
Source = Union[bytes, str, Path, BinaryIO]

_LINE_PATTERN = re.compile(r"line (\d+)")


@dataclass(frozen=True)
class InteractionRecord:
    """
    One raw log record

    Args:
        user_id: Opaque user token
        item_id: Opaque item token
        rating: Finite rating value in dataset units
        timestamp: Epoch seconds or TIMESTAMP_ABSENT
    """

    user_id: str
    item_id: str
    rating: float
    timestamp: int = TIMESTAMP_ABSENT

    def __post_init__(self):
        if not self.user_id or not self.item_id:
            raise InvalidArgumentError("user_id and item_id must be non-empty")
        if not math.isfinite(self.rating):
            raise InvalidArgumentError(f"rating must be finite, got {self.rating}")

    @property
    def has_timestamp(self) -> bool:
        return self.timestamp != TIMESTAMP_ABSENT


@dataclass(frozen=True)
class InteractionFormat:
    """
    Layout of a delimited interaction file

    Column references are zero-based positions, or header names when
    header=True.
    """

    delimiter: str = ","
    header: bool = False
    user: ColumnRef = 0
    item: ColumnRef = 1
    rating: ColumnRef = 2
    timestamp: Optional[ColumnRef] = 3

    @classmethod
    def from_spec(cls, columns: str, delimiter: str = ",", header: bool = False) -> "InteractionFormat":
        """
        Build a format from a comma-separated column spec such as "0,1,2,3" or
        "userId,movieId,rating" (three entries means no timestamp column)
        """
        parts = [part.strip() for part in columns.split(",") if part.strip()]
        if len(parts) not in (3, 4):
            raise InvalidArgumentError(f"column spec needs 3 or 4 entries, got {columns!r}")
        refs: List[ColumnRef] = [int(part) if part.isdigit() else part for part in parts]
        if any(isinstance(ref, str) for ref in refs) and not header:
            raise InvalidArgumentError("named columns require a header row")
        return cls(
            delimiter=delimiter,
            header=header,
            user=refs[0],
            item=refs[1],
            rating=refs[2],
            timestamp=refs[3] if len(refs) == 4 else None,
        )


class InteractionSet:
    """
    Parsed interaction log, records kept in input order (duplicates included)
    """

    def __init__(self, frame: pd.DataFrame):
        missing = [col for col in INTERACTION_COLUMNS if col not in frame.columns]
        if missing:
            raise InvalidArgumentError(f"interaction frame lacks columns {missing}")
        self.frame = frame[INTERACTION_COLUMNS].reset_index(drop=True)

    @classmethod
    def from_records(cls, records: Sequence[InteractionRecord]) -> "InteractionSet":
        frame = pd.DataFrame(
            {
                "user_id": pd.Series([r.user_id for r in records], dtype=object),
                "item_id": pd.Series([r.item_id for r in records], dtype=object),
                "rating": np.array([r.rating for r in records], dtype=np.float64),
                "timestamp": np.array([r.timestamp for r in records], dtype=np.int64),
            }
        )
        return cls(frame)

    def __len__(self) -> int:
        return len(self.frame)

    @property
    def n_users(self) -> int:
        return int(self.frame["user_id"].nunique())

    @property
    def n_items(self) -> int:
        return int(self.frame["item_id"].nunique())

    @property
    def has_timestamps(self) -> bool:
        return bool(len(self.frame)) and bool((self.frame["timestamp"] != TIMESTAMP_ABSENT).all())

    def records(self) -> Iterator[InteractionRecord]:
        for user_id, item_id, rating, timestamp in self.frame.itertuples(index=False, name=None):
            yield InteractionRecord(str(user_id), str(item_id), float(rating), int(timestamp))

    def __repr__(self) -> str:
        return f"InteractionSet(records={len(self)}, users={self.n_users}, items={self.n_items})"


def _read_bytes(source: Source) -> bytes:
    if isinstance(source, bytes):
        return source
    if isinstance(source, (str, Path)):
        return Path(source).read_bytes()
    return source.read()


def _resolve_column(frame: pd.DataFrame, ref: ColumnRef, role: str, first_line: int) -> pd.Series:
    if isinstance(ref, str):
        if ref not in frame.columns:
            raise InvalidArgumentError(f"{role} column {ref!r} not found in header")
        return frame[ref]
    if ref >= frame.shape[1]:
        raise ParseError(first_line, f"expected at least {ref + 1} fields for the {role} column")
    return frame.iloc[:, ref]


def load_interactions(source: Source, fmt: Optional[InteractionFormat] = None) -> InteractionSet:
    """
    Parse a delimited UTF-8 interaction log

    Args:
        source: Raw bytes, a file path, or a binary stream
        fmt: Delimiter, header flag and column mapping

    Returns:
        InteractionSet with every record in input order

    Raises:
        ParseError: Malformed row (wrong arity, unparsable rating/timestamp)
        EmptyInputError: No records
    """
    fmt = fmt or InteractionFormat()
    raw = _read_bytes(source)
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as e:
        raise ParseError(raw[:e.start].count(b"\n") + 1, "invalid UTF-8") from e

    if not text.strip():
        raise EmptyInputError("interaction input is empty")

    header_lines = 1 if fmt.header else 0
    try:
        frame = pd.read_csv(
            io.StringIO(text),
            sep=fmt.delimiter,
            header=0 if fmt.header else None,
            dtype=str,
            keep_default_na=False,
            skip_blank_lines=False,
        )
    except pd.errors.EmptyDataError as e:
        raise EmptyInputError("interaction input is empty") from e
    except pd.errors.ParserError as e:
        match = _LINE_PATTERN.search(str(e))
        line = int(match.group(1)) if match else 0
        raise ParseError(line, "wrong number of fields") from e

    # Blank lines become all-NaN rows; drop them but keep the original index for line numbers
    frame = frame[~frame.isna().all(axis=1)]
    if frame.empty:
        raise EmptyInputError("interaction input has no records")

    line_numbers = frame.index.to_numpy() + 1 + header_lines
    first_line = int(line_numbers[0])

    users = _resolve_column(frame, fmt.user, "user", first_line)
    items = _resolve_column(frame, fmt.item, "item", first_line)
    ratings_raw = _resolve_column(frame, fmt.rating, "rating", first_line)

    problems = []

    def _flag(mask: np.ndarray, reason: str):
        if mask.any():
            position = int(np.argmax(mask))
            problems.append((int(line_numbers[position]), reason))

    missing = frame.isna().any(axis=1).to_numpy()
    _flag(missing, "wrong number of fields")

    users = users.fillna("").str.strip()
    items = items.fillna("").str.strip()
    _flag((users == "").to_numpy() & ~missing, "empty user_id")
    _flag((items == "").to_numpy() & ~missing, "empty item_id")

    ratings = pd.to_numeric(ratings_raw.str.strip(), errors="coerce").to_numpy(dtype=np.float64)
    _flag(~np.isfinite(ratings) & ~missing, "unparsable or non-finite rating")

    timestamps = np.full(len(frame), TIMESTAMP_ABSENT, dtype=np.int64)
    ts_column = fmt.timestamp
    if isinstance(ts_column, int) and ts_column >= frame.shape[1]:
        # Positional timestamp column is optional: a 3-field file simply has none
        ts_column = None
    if ts_column is not None:
        ts_raw = _resolve_column(frame, ts_column, "timestamp", first_line).fillna("").str.strip()
        present = (ts_raw != "").to_numpy()
        ts_values = pd.to_numeric(ts_raw.where(present, "0"), errors="coerce").to_numpy(dtype=np.float64)
        bad = present & ~missing & (~np.isfinite(ts_values) | (np.floor(ts_values) != ts_values))
        _flag(bad, "unparsable timestamp")
        if not bad.any():
            timestamps = np.where(present, ts_values, 0).astype(np.int64)
            timestamps[~present] = TIMESTAMP_ABSENT

    if problems:
        line, reason = min(problems)
        raise ParseError(line, reason)

    interactions = InteractionSet(
        pd.DataFrame(
            {
                "user_id": users.to_numpy(dtype=object),
                "item_id": items.to_numpy(dtype=object),
                "rating": ratings,
                "timestamp": timestamps,
            }
        )
    )

    log.info_event("interactions_loaded", {
        "records": len(interactions),
        "users": interactions.n_users,
        "items": interactions.n_items,
        "timestamps": interactions.has_timestamps,
    })
    return interactions


def write_interactions(interactions: InteractionSet, sink: Union[str, Path, TextIO], delimiter: str = ",") -> None:
    """
    Write records in the ingestion schema (header row user,item,rating,timestamp)

    Absent timestamps are written as empty fields, so the output loads back with
    InteractionFormat(header=True).
    """
    frame = interactions.frame
    timestamps = frame["timestamp"].to_numpy()
    out = pd.DataFrame(
        {
            "user": frame["user_id"],
            "item": frame["item_id"],
            "rating": frame["rating"],
            "timestamp": np.where(timestamps == TIMESTAMP_ABSENT, "", timestamps.astype(str)),
        }
    )
    if isinstance(sink, (str, Path)):
        Path(sink).parent.mkdir(parents=True, exist_ok=True)
    out.to_csv(sink, sep=delimiter, index=False, lineterminator="\n")
