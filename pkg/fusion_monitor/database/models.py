"""
Run registry: one row per simulation run
"""

import hashlib
from contextlib import contextmanager
from datetime import datetime
from typing import Iterator, List, Optional

from sqlalchemy import Column, DateTime, Float, Integer, String, create_engine
from sqlalchemy.engine import Engine
from sqlalchemy.orm import Session, declarative_base, sessionmaker

from fusion_monitor import settings
from fusion_monitor.sim.config import ScenarioConfig, dump_config
from fusion_monitor.sim.runner import RunMetrics

Base = declarative_base()


class RunRecord(Base):
    """
    Summary of one run
    """
    __tablename__ = "runs"

    id = Column(Integer, primary_key=True, index=True)
    scenario = Column(String(100), nullable=False, index=True)  # Scenario name
    seed = Column(Integer, nullable=False)
    config_digest = Column(String(64), nullable=False, index=True)  # sha256 of the config used
    messages_total = Column(Integer, default=0)
    bits_total = Column(Integer, default=0)
    ops_per_bit = Column(Integer, nullable=False)
    radio_energy = Column(Float, default=0.0)
    compute_energy = Column(Float, default=0.0)
    rmse_mean = Column(Float, default=0.0)
    events = Column(Integer, default=0)
    events_detected = Column(Integer, default=0)
    false_positives = Column(Integer, default=0)
    created_at = Column(DateTime, default=datetime.utcnow)

    def to_dict(self):
        return {
            "id": self.id,
            "scenario": self.scenario,
            "seed": self.seed,
            "config_digest": self.config_digest,
            "messages_total": self.messages_total,
            "bits_total": self.bits_total,
            "ops_per_bit": self.ops_per_bit,
            "radio_energy": self.radio_energy,
            "compute_energy": self.compute_energy,
            "rmse_mean": self.rmse_mean,
            "events": self.events,
            "events_detected": self.events_detected,
            "false_positives": self.false_positives,
            "created_at": self.created_at.isoformat() if self.created_at else None,
        }


def make_engine(url: Optional[str] = None) -> Engine:
    url = url or settings.DATABASE_URL
    if not url:
        raise ValueError("no database URL configured (pass --db or set FUSION_DATABASE_URL)")
    return create_engine(
        url,
        connect_args={"check_same_thread": False} if url.startswith("sqlite") else {},
    )


def create_tables(engine: Engine) -> None:
    Base.metadata.create_all(bind=engine)


@contextmanager
def session_scope(url: Optional[str] = None) -> Iterator[Session]:
    """
    Session bound to the registry at `url`; commits on success, rolls back on error
    """
    engine = make_engine(url)
    create_tables(engine)
    SessionLocal = sessionmaker(autocommit=False, autoflush=False, bind=engine)
    db = SessionLocal()
    try:
        yield db
        db.commit()
    except Exception:
        db.rollback()
        raise
    finally:
        db.close()
        engine.dispose()


def config_digest(config: ScenarioConfig) -> str:
    return hashlib.sha256(dump_config(config).encode("utf-8")).hexdigest()


def record_run(db: Session, metrics: RunMetrics, config: ScenarioConfig) -> RunRecord:
    """Store `metrics` under the digest of the config that produced them"""
    produced_by = (config.name, config.seed, config.energy.ops_per_bit)
    if (metrics.scenario, metrics.seed, metrics.ops_per_bit) != produced_by:
        raise ValueError(
            f"metrics of {metrics.scenario!r} (seed {metrics.seed}) do not come from scenario "
            f"{config.name!r} (seed {config.seed})"
        )
    record = RunRecord(
        scenario=config.name,
        seed=config.seed,
        config_digest=config_digest(config),
        messages_total=metrics.messages_total,
        bits_total=metrics.bits_total,
        ops_per_bit=metrics.ops_per_bit,
        radio_energy=metrics.radio_energy,
        compute_energy=metrics.compute_energy,
        rmse_mean=metrics.rmse_mean,
        events=len(metrics.events),
        events_detected=metrics.events_detected,
        false_positives=metrics.false_positives,
    )
    db.add(record)
    db.flush()
    return record


def list_runs(db: Session, scenario: Optional[str] = None) -> List[RunRecord]:
    query = db.query(RunRecord)
    if scenario is not None:
        query = query.filter(RunRecord.scenario == scenario)
    return query.order_by(RunRecord.id).all()
