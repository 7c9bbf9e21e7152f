from .api import create_app
from .service import (
    ALLOWED_VALUES,
    EXCLUDED,
    LANDMARK_CODES,
    LANDMARKS,
    aggregate,
    complete_session,
    create_session,
    export_csv_rows,
    load_rating_manifest,
    next_item,
    record_score,
    reveal,
)
from .store import RatingStore

__all__ = [
    "ALLOWED_VALUES",
    "EXCLUDED",
    "LANDMARKS",
    "LANDMARK_CODES",
    "RatingStore",
    "aggregate",
    "complete_session",
    "create_app",
    "create_session",
    "export_csv_rows",
    "load_rating_manifest",
    "next_item",
    "record_score",
    "reveal",
]
