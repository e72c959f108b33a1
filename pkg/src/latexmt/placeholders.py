"""Placeholder tokens and the token -> original-text mapping.

Protected regions (environments, captions, file boundaries) are swapped out
for opaque tokens before translation and swapped back afterwards.  The map
is append-only and serializable so a run can be audited or resumed.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

KIND_CAP = "CAP"
KIND_ENV = "ENV"
KIND_FILE_BEGIN = "FILE_BEGIN"
KIND_FILE_END = "FILE_END"

_KINDS = (KIND_CAP, KIND_ENV, KIND_FILE_BEGIN, KIND_FILE_END)

# Any token this package ever emits.
TOKEN_RE = re.compile(
    r"<PLACEHOLDER_(?:CAP|ENV)_\d+>|<PLACEHOLDER_FILE_\d+_(?:begin|end)>"
)
CAP_TOKEN_RE = re.compile(r"<PLACEHOLDER_CAP_(\d+)>")
ENV_TOKEN_RE = re.compile(r"<PLACEHOLDER_ENV_(\d+)>")
FILE_TOKEN_RE = re.compile(r"<PLACEHOLDER_FILE_(\d+)_(begin|end)>")


def cap_token(index: int) -> str:
    return f"<PLACEHOLDER_CAP_{index}>"


def env_token(index: int) -> str:
    return f"<PLACEHOLDER_ENV_{index}>"


def file_begin_token(index: int) -> str:
    return f"<PLACEHOLDER_FILE_{index}_begin>"


def file_end_token(index: int) -> str:
    return f"<PLACEHOLDER_FILE_{index}_end>"


@dataclass(frozen=True)
class PlaceholderEntry:
    token: str
    kind: str
    original_text: str


class PlaceholderMap:
    """Ordered, write-once table from token to the exact source text it hides."""

    def __init__(self, entries: list[PlaceholderEntry] | None = None):
        self._entries: list[PlaceholderEntry] = []
        self._by_token: dict[str, PlaceholderEntry] = {}
        for e in entries or []:
            self.add(e.token, e.kind, e.original_text)

    def add(self, token: str, kind: str, original_text: str) -> PlaceholderEntry:
        if kind not in _KINDS:
            raise ValueError(f"unknown placeholder kind: {kind!r}")
        if token in self._by_token:
            raise ValueError(f"duplicate placeholder token: {token}")
        entry = PlaceholderEntry(token, kind, original_text)
        self._entries.append(entry)
        self._by_token[token] = entry
        return entry

    def get(self, token: str) -> PlaceholderEntry | None:
        return self._by_token.get(token)

    def __contains__(self, token: str) -> bool:
        return token in self._by_token

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self) -> Iterator[PlaceholderEntry]:
        return iter(self._entries)

    @property
    def tokens(self) -> list[str]:
        return [e.token for e in self._entries]

    def restore(self, text: str) -> str:
        """Replace every known token in *text* with its original source.

        Unknown tokens are left untouched; strict conservation checking is
        the reassembler's job, not this helper's.
        """

        def repl(m: re.Match[str]) -> str:
            entry = self._by_token.get(m.group(0))
            return entry.original_text if entry is not None else m.group(0)

        return TOKEN_RE.sub(repl, text)

    # -- serialization ------------------------------------------------------

    def to_json(self) -> str:
        payload = {
            "entries": [
                {"token": e.token, "kind": e.kind, "original_text": e.original_text}
                for e in self._entries
            ]
        }
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "PlaceholderMap":
        payload = json.loads(text)
        pmap = cls()
        for item in payload["entries"]:
            pmap.add(item["token"], item["kind"], item["original_text"])
        return pmap

    def save(self, path: Path | str) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path: Path | str) -> "PlaceholderMap":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))
