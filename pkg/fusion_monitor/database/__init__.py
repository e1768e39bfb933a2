"""
Optional SQLAlchemy run registry
"""
from .models import Base, RunRecord, config_digest, create_tables, list_runs, make_engine, record_run, session_scope

__all__ = [
    "Base",
    "RunRecord",
    "config_digest",
    "create_tables",
    "list_runs",
    "make_engine",
    "record_run",
    "session_scope",
]
