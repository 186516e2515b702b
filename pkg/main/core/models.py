from datetime import datetime

from sqlalchemy import Column, Integer, String, Float, DateTime, Text, ForeignKey, CheckConstraint
from sqlalchemy.orm import relationship
from .database import Base


class ExperimentRun(Base):
    __tablename__ = "experiment_runs"

    id = Column(Integer, primary_key=True, index=True)
    family = Column(String, index=True, nullable=False)
    base_seed = Column(String, nullable=False)  # 64-bit values overflow SQLite INTEGER
    rng = Column(String, nullable=False)
    config_text = Column(Text, nullable=True)
    created_at = Column(DateTime, default=datetime.utcnow, nullable=False)

    records = relationship("ExperimentRecordEntry", back_populates="run", order_by="ExperimentRecordEntry.position")

    def __repr__(self):
        return f"<ExperimentRun(family='{self.family}', base_seed={self.base_seed})>"


class ExperimentRecordEntry(Base):
    __tablename__ = "experiment_records"
    __table_args__ = (
        CheckConstraint('success IN (0, 1)', name='check_success_flag'),
    )

    id = Column(Integer, primary_key=True, index=True)
    position = Column(Integer, nullable=False)
    family = Column(String, index=True, nullable=False)
    solver = Column(String, nullable=False, default="irls")
    p = Column(Float, nullable=True)
    k = Column(Integer, nullable=True)
    rho = Column(Float, nullable=True)
    kappa = Column(Float, nullable=True)
    alpha_p = Column(Float, nullable=True)
    start = Column(Float, nullable=True)
    trial = Column(Integer, nullable=False)
    seed = Column(String, nullable=False)
    success = Column(Integer, nullable=False)
    rel_error = Column(Float, nullable=True)
    outer_iters = Column(Integer, nullable=True)
    final_eps = Column(Float, nullable=True)
    runtime_ms = Column(Float, nullable=True)
    error = Column(String, nullable=True)

    run_id = Column(Integer, ForeignKey("experiment_runs.id"), nullable=False, index=True)
    run = relationship("ExperimentRun", back_populates="records")

    def __repr__(self):
        return f"<ExperimentRecordEntry(family='{self.family}', trial={self.trial}, success={self.success})>"
