"""
Users, documents, samples and the JSON-lines dataset format.

Each line holds one record:
    {"kind": "user", "user_id": ..., "history": [{"id", "text", "aux"?, "position"?}, ...]}
    {"kind": "sample", "id"?, "user_id", "query", "target", "task", "aux"?}
"""

import json
import logging
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from utils.constants import ALL_TASKS
from utils.errors import IntegrityError, ParseError

logger = logging.getLogger(__name__)


@dataclass
class Document:
    """A history item. ``position`` is its index in the owner's chronology."""

    id: str
    text: str
    position: int
    aux: Dict[str, str] = field(default_factory=dict)


@dataclass
class UserProfile:
    """A user and their chronologically ordered history."""

    user_id: str
    history: List[Document]

    def __len__(self) -> int:
        return len(self.history)

    def document_ids(self) -> List[str]:
        return [doc.id for doc in self.history]


@dataclass
class Sample:
    """A personalized generation request with its reference output."""

    sample_id: str
    user_id: str
    query: str
    target: str
    task: str
    aux: Dict[str, str] = field(default_factory=dict)


Profiles = Dict[str, UserProfile]


def _require(record: dict, key: str, line: int) -> str:
    if key not in record:
        raise ParseError(f"missing field '{key}'", line)
    value = record[key]
    if not isinstance(value, str) or not value:
        raise ParseError(f"field '{key}' must be a nonempty string", line)
    return value


def _parse_aux(record: dict, line: int) -> Dict[str, str]:
    aux = record.get("aux", {})
    if not isinstance(aux, dict):
        raise ParseError("field 'aux' must be an object", line)
    return {str(key): str(value) for key, value in aux.items()}


def _parse_user(record: dict, line: int, max_history: Optional[int]) -> UserProfile:
    user_id = _require(record, "user_id", line)
    items = record.get("history")
    if not isinstance(items, list) or not items:
        raise ParseError("user history must be a nonempty array", line)

    history = []
    for index, item in enumerate(items):
        if not isinstance(item, dict):
            raise ParseError(f"history entry {index} is not an object", line)
        position = item.get("position", index)
        if not isinstance(position, int) or position < 0:
            raise ParseError(f"history entry {index} has an invalid position", line)
        history.append(
            Document(
                id=_require(item, "id", line),
                text=_require(item, "text", line),
                position=position,
                aux=_parse_aux(item, line),
            )
        )

    history.sort(key=lambda doc: doc.position)
    for earlier, later in zip(history, history[1:]):
        if earlier.position == later.position:
            raise ParseError(f"duplicate history position {later.position}", line)

    if max_history is not None and len(history) > max_history:
        history = history[-max_history:]
    return UserProfile(user_id=user_id, history=history)


def _parse_sample(record: dict, line: int) -> Sample:
    task = _require(record, "task", line)
    if task not in ALL_TASKS:
        raise ParseError(f"unknown task '{task}'", line)
    sample_id = record.get("id", f"s{line}")
    if not isinstance(sample_id, str) or not sample_id:
        raise ParseError("field 'id' must be a nonempty string", line)
    target = record.get("target")
    if not isinstance(target, str):
        raise ParseError("missing field 'target'", line)
    return Sample(
        sample_id=sample_id,
        user_id=_require(record, "user_id", line),
        query=_require(record, "query", line),
        target=target,
        task=task,
        aux=_parse_aux(record, line),
    )


def load_dataset(path: str, max_history: Optional[int] = None) -> Tuple[Profiles, List[Sample]]:
    """
    Load users and samples from a JSON-lines file.

    Args:
        path: Dataset file
        max_history: Keep only the most recent documents of longer histories

    Returns:
        (profiles keyed by user id in file order, samples in file order)
    """
    profiles: Profiles = {}
    samples: List[Sample] = []
    seen_docs: Dict[str, str] = {}

    with open(path, "r", encoding="utf-8") as f:
        for line_number, raw in enumerate(f, start=1):
            if not raw.strip():
                continue
            try:
                record = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON ({exc.msg})", line_number) from exc
            if not isinstance(record, dict):
                raise ParseError("record is not an object", line_number)

            kind = record.get("kind")
            if kind == "user":
                profile = _parse_user(record, line_number, max_history)
                if profile.user_id in profiles:
                    raise IntegrityError(f"user '{profile.user_id}' defined twice (line {line_number})")
                for doc in profile.history:
                    if doc.id in seen_docs:
                        raise IntegrityError(
                            f"document '{doc.id}' appears for users '{seen_docs[doc.id]}' and '{profile.user_id}'"
                        )
                    seen_docs[doc.id] = profile.user_id
                profiles[profile.user_id] = profile
            elif kind == "sample":
                samples.append(_parse_sample(record, line_number))
            else:
                raise ParseError(f"unknown record kind {kind!r}", line_number)

    sample_ids = set()
    for sample in samples:
        if sample.user_id not in profiles:
            raise IntegrityError(f"sample '{sample.sample_id}' references unknown user '{sample.user_id}'")
        if sample.sample_id in sample_ids:
            raise IntegrityError(f"sample id '{sample.sample_id}' is not unique")
        sample_ids.add(sample.sample_id)

    logger.info("Loaded %d users and %d samples from %s", len(profiles), len(samples), path)
    return profiles, samples


def save_dataset(path: str, profiles: Profiles, samples: List[Sample]) -> None:
    """Write users then samples as JSON lines, preserving history order."""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)

    with open(path, "w", encoding="utf-8") as f:
        for profile in profiles.values():
            history = []
            for doc in profile.history:
                item = {"id": doc.id, "text": doc.text, "position": doc.position}
                if doc.aux:
                    item["aux"] = doc.aux
                history.append(item)
            f.write(json.dumps({"kind": "user", "user_id": profile.user_id, "history": history}) + "\n")
        for sample in samples:
            record = {
                "kind": "sample",
                "id": sample.sample_id,
                "user_id": sample.user_id,
                "query": sample.query,
                "target": sample.target,
                "task": sample.task,
            }
            if sample.aux:
                record["aux"] = sample.aux
            f.write(json.dumps(record) + "\n")
