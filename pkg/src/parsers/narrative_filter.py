import logging
from typing import List

from src.core.errors import ConfigurationError
from src.parsers.record_loader import NarrativeSpec, TweetRecord

logger = logging.getLogger(__name__)


def _normalize(text: str, case_sensitive: bool) -> str:
    return text if case_sensitive else text.casefold()


def matches_narrative(record: TweetRecord, spec: NarrativeSpec) -> bool:
    tags = {_normalize(tag.lstrip("#"), spec.case_sensitive) for tag in record.hashtags}
    if any(_normalize(tag, spec.case_sensitive) in tags for tag in spec.hashtags):
        return True
    text = _normalize(record.text, spec.case_sensitive)
    return any(_normalize(kw, spec.case_sensitive) in text for kw in spec.keywords if kw)


def filter_narrative(records: List[TweetRecord], spec: NarrativeSpec) -> List[TweetRecord]:
    """
    Keep records belonging to the narrative.

    A record matches when a spec hashtag equals one of its hashtags or a
    keyword occurs in its text. A retweet also matches when the tweet it
    retweets matched.
    """
    if spec.is_empty:
        raise ConfigurationError("Narrative spec needs at least one hashtag or keyword")

    matched = {r.tweet_id for r in records if matches_narrative(r, spec)}
    kept = [
        r
        for r in records
        if r.tweet_id in matched or (r.retweet_of is not None and r.retweet_of.tweet_id in matched)
    ]
    logger.info(f"Narrative filter kept {len(kept)} of {len(records)} records")
    return kept
