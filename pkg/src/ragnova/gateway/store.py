"""Append-only JSONL store of chat exchanges (the record/replay fixture)."""

from __future__ import annotations

import json
import threading
from pathlib import Path
from typing import Iterator

from .messages import ChatExchange


class ExchangeStore:
    """One exchange per line: {fingerprint, request, response, backend_id,
    timestamp}. Appends are serialized; reads may happen concurrently."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._write_lock = threading.Lock()

    def exists(self) -> bool:
        return self.path.is_file()

    def append(self, exchange: ChatExchange) -> None:
        line = json.dumps(
            {
                "fingerprint": exchange.request_fingerprint,
                "request": exchange.request,
                "response": exchange.response_text,
                "backend_id": exchange.backend_id,
                "timestamp": exchange.timestamp,
            },
            ensure_ascii=False,
            sort_keys=True,
        )
        with self._write_lock:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a", encoding="utf-8", newline="\n") as fh:
                fh.write(line + "\n")

    def iter_exchanges(self) -> Iterator[ChatExchange]:
        if not self.exists():
            return
        with open(self.path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                row = json.loads(line)
                yield ChatExchange(
                    request_fingerprint=row["fingerprint"],
                    request=row["request"],
                    response_text=row["response"],
                    backend_id=row.get("backend_id", "unknown"),
                    timestamp=row.get("timestamp", ""),
                )

    def responses_by_fingerprint(self) -> dict[str, str]:
        """Replay map. Later duplicates of a fingerprint win; duplicates only
        arise from re-recording the same deterministic request."""
        return {e.request_fingerprint: e.response_text for e in self.iter_exchanges()}
