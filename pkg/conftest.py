"""Lets the suite run from a fresh checkout: src/ is importable directly,
with the numpy kernel fallback covering an unbuilt extension. An editable
install that built the extension in place takes precedence naturally."""

import sys
from pathlib import Path

SRC = str(Path(__file__).resolve().parent / "src")
if SRC not in sys.path:
    sys.path.insert(0, SRC)
