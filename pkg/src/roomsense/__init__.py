"""roomsense: classroom occupancy estimation from WiFi session logs."""

from .records import ApInventory, ApLocation, ClassEvent, SessionRecord
from .store import SessionStore, load_inventory, load_rosters, load_sessions, load_timetable

__version__ = "0.1.0"

__all__ = [
    "ApInventory",
    "ApLocation",
    "ClassEvent",
    "SessionRecord",
    "SessionStore",
    "load_inventory",
    "load_rosters",
    "load_sessions",
    "load_timetable",
    "__version__",
]
