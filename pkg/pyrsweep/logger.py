"""Run records for pyrsweep commands

Features:
- Appends one JSON line per command run to a per-command JSONL file
- Encodes numpy scalars, arrays and paths so records stay loadable
"""

import json
import re
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List

import numpy as np


class RecordJSONEncoder(json.JSONEncoder):
    """JSON encoder that understands numpy values and paths"""

    def default(self, o):
        if isinstance(o, np.integer):
            return int(o)
        if isinstance(o, np.floating):
            return float(o)
        if isinstance(o, np.bool_):
            return bool(o)
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, Path):
            return str(o)
        try:
            return super().default(o)
        except TypeError:
            return str(o)


def dumps(data: Any) -> str:
    """Deterministic JSON text for sidecars and ``--json`` output"""
    return json.dumps(data, cls=RecordJSONEncoder, sort_keys=True, indent=2)


class RunLogger:
    """Appends run records of one command to ``<base_dir>/runs/<name>/logged.jsonl``"""

    def __init__(self, command: str, base_dir: str = ".pyrsweep") -> None:
        # Sanitize command name to prevent path traversal
        safe_name = re.sub(r"[^a-zA-Z0-9_\-]", "_", command)
        safe_name = safe_name.replace("..", "_")

        self.base_dir = Path(base_dir) / "runs" / safe_name
        self.base_dir.mkdir(parents=True, exist_ok=True)
        self.logged_file = self.base_dir / "logged.jsonl"
        if not self.logged_file.exists():
            self.logged_file.touch()

    def load_records(self) -> List[Dict[str, Any]]:
        """Load earlier records, skipping empty and malformed lines"""
        records = []
        with open(self.logged_file, "r", encoding="utf-8") as f:
            for line in f:
                line = line.strip()
                if not line:
                    continue
                try:
                    records.append(json.loads(line))
                except json.JSONDecodeError:
                    continue
        return records

    def log(self, data: Dict[str, Any]) -> None:
        """Append a record stamped with an ISO 8601 UTC timestamp"""
        record = dict(data)
        record["timestamp"] = (
            datetime.now(timezone.utc).replace(tzinfo=None).isoformat() + "Z"
        )
        with open(self.logged_file, "a", encoding="utf-8") as f:
            f.write(json.dumps(record, cls=RecordJSONEncoder, sort_keys=True) + "\n")
