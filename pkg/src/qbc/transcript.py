"""Ordered protocol event log."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Any

import numpy as np

MESSAGE = "message"          # public classical announcement
MEASUREMENT = "measurement"  # private measurement record
OPERATION = "operation"      # private operation record


@dataclass(frozen=True)
class Event:
    seq: int
    phase: str
    actor: str
    kind: str
    payload: dict


def _jsonable(obj: Any):
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (tuple, set, frozenset)):
        return list(obj)
    return str(obj)


@dataclass
class Transcript:
    events: list[Event] = field(default_factory=list)

    def record(self, phase: str, actor: str, kind: str, **payload) -> Event:
        ev = Event(len(self.events), phase, actor, kind, payload)
        self.events.append(ev)
        return ev

    def announce(self, phase: str, actor: str, **payload) -> Event:
        return self.record(phase, actor, MESSAGE, **payload)

    def public(self) -> list[Event]:
        """What an eavesdropper on the classical channel sees."""
        return [e for e in self.events if e.kind == MESSAGE]

    def find(self, phase: str | None = None, actor: str | None = None, kind: str | None = None):
        return [
            e for e in self.events
            if (phase is None or e.phase == phase)
            and (actor is None or e.actor == actor)
            and (kind is None or e.kind == kind)
        ]

    def to_jsonl(self, session: int | None = None) -> str:
        lines = []
        for e in self.events:
            row = asdict(e)
            if session is not None:
                row = {"session": session, **row}
            lines.append(json.dumps(row, default=_jsonable, sort_keys=False))
        return "\n".join(lines) + ("\n" if lines else "")

    def __len__(self):
        return len(self.events)
