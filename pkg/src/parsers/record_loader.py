import logging
import os
from datetime import datetime, timezone
from typing import Iterable, NamedTuple, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from src.core.errors import ConfigurationError, InputDataError

logger = logging.getLogger(__name__)


class RetweetRef(BaseModel):
    model_config = ConfigDict(frozen=True)

    user_id: str
    tweet_id: str


class TweetRecord(BaseModel):
    """One collected interaction; unknown fields in the input are ignored."""

    model_config = ConfigDict(frozen=True, extra="ignore")

    tweet_id: str
    created_at: datetime
    user_id: str
    screen_name: str = ""
    text: str = ""
    lang: str = "und"
    hashtags: list[str] = Field(default_factory=list)
    followers_count: Optional[int] = Field(default=None, ge=0)
    retweet_of: Optional[RetweetRef] = None

    @field_validator("created_at")
    @classmethod
    def _as_utc(cls, value: datetime) -> datetime:
        if value.tzinfo is None:
            return value.replace(tzinfo=timezone.utc)
        return value.astimezone(timezone.utc)

    @model_validator(mode="after")
    def _no_self_retweet(self) -> "TweetRecord":
        if self.retweet_of is not None and self.retweet_of.user_id == self.user_id:
            raise ValueError("retweet_of must reference a different user")
        return self

    @property
    def is_retweet(self) -> bool:
        return self.retweet_of is not None


class NarrativeSpec(BaseModel):
    """Hashtags and keywords characterising a narrative."""

    hashtags: list[str] = Field(default_factory=list)
    keywords: list[str] = Field(default_factory=list)
    case_sensitive: bool = False

    @field_validator("hashtags")
    @classmethod
    def _strip_hash(cls, value: list[str]) -> list[str]:
        return [tag.lstrip("#") for tag in value if tag.lstrip("#")]

    @property
    def is_empty(self) -> bool:
        return not self.hashtags and not [k for k in self.keywords if k]


class ParsedRecords(NamedTuple):
    records: list[TweetRecord]
    skipped: int


def parse_records(lines: Iterable[Union[str, bytes]]) -> ParsedRecords:
    """
    Parse JSON-lines tweet records.

    Malformed lines, lines that are not valid UTF-8, duplicate tweet ids and
    self-retweets are skipped and counted; blank lines are ignored.

    Returns:
        ParsedRecords: Valid records in input order and the skip count
    """
    records: list[TweetRecord] = []
    seen: set[str] = set()
    skipped = 0

    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        if isinstance(line, bytes):
            try:
                line = line.decode("utf-8")
            except UnicodeDecodeError as e:
                skipped += 1
                logger.debug(f"Skipping line {line_no}: {e.reason} at byte {e.start}")
                continue
        try:
            record = TweetRecord.model_validate_json(line)
        except ValidationError as e:
            skipped += 1
            logger.debug(f"Skipping line {line_no}: {e.error_count()} validation error(s)")
            continue
        if record.tweet_id in seen:
            skipped += 1
            logger.debug(f"Skipping line {line_no}: duplicate tweet_id {record.tweet_id}")
            continue
        seen.add(record.tweet_id)
        records.append(record)

    if skipped:
        logger.warning(f"Skipped {skipped} malformed line(s)")
    if not records:
        raise InputDataError(f"No valid records found ({skipped} line(s) skipped)")
    return ParsedRecords(records=records, skipped=skipped)


def load_records(file_path: str) -> ParsedRecords:
    if not os.path.isfile(file_path):
        raise InputDataError(f"Input file not found: {file_path}")
    try:
        with open(file_path, "rb") as f:
            return parse_records(f)
    except OSError as e:
        raise InputDataError(f"Cannot read {file_path}: {e}") from e


def load_narrative_spec(file_path: str) -> NarrativeSpec:
    if not os.path.isfile(file_path):
        raise InputDataError(f"Narrative spec not found: {file_path}")
    with open(file_path, "r", encoding="utf-8") as f:
        spec = NarrativeSpec.model_validate_json(f.read())
    if spec.is_empty:
        raise ConfigurationError("Narrative spec needs at least one hashtag or keyword")
    return spec
