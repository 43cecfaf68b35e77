"""
Run registry database management.
"""
import logging
import os
from typing import Dict, List, Optional

from sqlalchemy import create_engine
from sqlalchemy.orm import sessionmaker, Session

from config import DATABASE_PATH, DATABASE_ECHO
from models.audit_log import AUDIT_ACTIONS, AuditLog
from models.run_record import Base, RunRecord
from utils.exceptions import RegistryError

logger = logging.getLogger(__name__)


class DatabaseManager:
    """Manages one SQLite run registry per database path."""

    _instances: Dict[str, 'DatabaseManager'] = {}

    def __new__(cls, db_path: str = DATABASE_PATH):
        key = os.path.abspath(db_path)
        if key not in cls._instances:
            instance = super().__new__(cls)
            instance._initialized = False
            cls._instances[key] = instance
        return cls._instances[key]

    def __init__(self, db_path: str = DATABASE_PATH):
        if self._initialized:
            return

        self.db_path = os.path.abspath(db_path)
        self.engine = create_engine(f'sqlite:///{self.db_path}', echo=DATABASE_ECHO)
        Base.metadata.create_all(self.engine)
        self.SessionLocal = sessionmaker(bind=self.engine)
        self._initialized = True
        logger.debug(f"Run registry ready at {self.db_path}")

    @classmethod
    def for_output_dir(cls, output_dir: str) -> 'DatabaseManager':
        """Registry stored next to the reports."""
        os.makedirs(output_dir, exist_ok=True)
        return cls(os.path.join(output_dir, DATABASE_PATH))

    def get_session(self) -> Session:
        """Get a new database session."""
        return self.SessionLocal()

    def log_action(self, session: Session, action: str, details: str = None, run_id: int = None):
        """Log an action to audit log."""
        if action not in AUDIT_ACTIONS:
            raise RegistryError(f"unknown audit action '{action}'")
        log = AuditLog(action=action, details=details, run_id=run_id)
        session.add(log)
        session.commit()

    def record_run(self, session: Session, **kwargs) -> RunRecord:
        """Store a finished run and log how it ended."""
        run = RunRecord(**kwargs)
        session.add(run)
        session.commit()
        action = 'RUN_DIVERGED' if run.status == 'diverged' else 'RUN_FINISHED'
        self.log_action(session, action, f"{run.config_name} seed {run.seed}: {run.status}", run.id)
        return run

    def get_runs(self, session: Session, config_name: Optional[str] = None) -> List[RunRecord]:
        """Get runs, optionally for one configuration, oldest first."""
        query = session.query(RunRecord)
        if config_name is not None:
            query = query.filter_by(config_name=config_name)
        return query.order_by(RunRecord.id).all()

    def get_run_by_id(self, session: Session, run_id: int) -> Optional[RunRecord]:
        """Get a run by ID."""
        return session.get(RunRecord, run_id)

    def get_audit_log(self, session: Session, action: Optional[str] = None) -> List[AuditLog]:
        """Get audit entries, optionally of one action."""
        query = session.query(AuditLog)
        if action is not None:
            query = query.filter_by(action=action)
        return query.order_by(AuditLog.id).all()
