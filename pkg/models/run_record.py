from sqlalchemy.orm import declarative_base
from sqlalchemy import Column, Integer, String, Float, DateTime, Text
from datetime import datetime

Base = declarative_base()

class RunRecord(Base):
    """One training run (one seed of one configuration) in the run registry."""
    __tablename__ = 'runs'
    
    id = Column(Integer, primary_key=True, autoincrement=True)
    config_name = Column(String, nullable=False, index=True)
    algorithm = Column(String, nullable=False)
    problem = Column(String, nullable=False)
    seed = Column(Integer, nullable=False)
    status = Column(String, nullable=False)  # converged/max_iters/diverged
    iterations = Column(Integer, default=0)
    loss_total = Column(Float, nullable=True)
    de_loss = Column(Float, nullable=True)
    bc_loss = Column(Float, nullable=True)
    circuits_cum = Column(Integer, default=0)
    gates_cum = Column(Integer, default=0)
    wall_clock = Column(Float, nullable=True)  # seconds
    report_dir = Column(Text, nullable=True)
    created_at = Column(DateTime, default=datetime.now)
    
    def __repr__(self):
        return f"<RunRecord(id={self.id}, config='{self.config_name}', seed={self.seed}, status='{self.status}')>"
    
    def to_dict(self):
        """Convert to dictionary."""
        return {
            'id': self.id,
            'config_name': self.config_name,
            'algorithm': self.algorithm,
            'problem': self.problem,
            'seed': self.seed,
            'status': self.status,
            'iterations': self.iterations,
            'loss_total': self.loss_total,
            'de_loss': self.de_loss,
            'bc_loss': self.bc_loss,
            'circuits_cum': self.circuits_cum,
            'gates_cum': self.gates_cum,
            'wall_clock': self.wall_clock,
            'report_dir': self.report_dir,
            'created_at': self.created_at.isoformat() if self.created_at else None
        }
