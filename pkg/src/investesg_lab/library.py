from __future__ import annotations

import os
import sqlite3
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

from . import db as db_mod
from .util import ensure_dir, expand_path

PACKAGED_CONFIGS = ("default_env.json", "default_train.json")


def default_output_path() -> Path:
    env = os.environ.get("INVESTESG_OUT")
    if env:
        return expand_path(env)
    return Path.home() / "InvestESG_Runs"


@dataclass(frozen=True)
class RunLibrary:
    root: Path

    @property
    def runs_dir(self) -> Path:
        return self.root / "runs"

    @property
    def sweeps_dir(self) -> Path:
        return self.root / "sweeps"

    @property
    def analysis_dir(self) -> Path:
        return self.root / "analysis"

    @property
    def schelling_dir(self) -> Path:
        return self.root / "schelling"

    @property
    def db_path(self) -> Path:
        return self.root / "manifest.sqlite3"

    @property
    def env_config_path(self) -> Path:
        return self.root / "env.json"

    @property
    def train_config_path(self) -> Path:
        return self.root / "train.json"

    def run_dir(self, run_id: str) -> Path:
        return self.runs_dir / run_id

    def checkpoint_dir(self, run_id: str) -> Path:
        return self.run_dir(run_id) / "checkpoints"

    def ensure_initialized(self) -> None:
        ensure_dir(self.root)
        for d in (self.runs_dir, self.sweeps_dir, self.analysis_dir, self.schelling_dir):
            ensure_dir(d)

        # Packaged defaults are copied once so the user can edit them.
        from importlib import resources

        for name, dest in zip(PACKAGED_CONFIGS, (self.env_config_path, self.train_config_path)):
            if not dest.exists():
                dest.write_bytes(resources.files("investesg_lab").joinpath(name).read_bytes())

        with self.connect() as conn:
            db_mod.init_schema(conn)

    @contextmanager
    def connect(self) -> Iterator[sqlite3.Connection]:
        """Commit on success, close always."""
        conn = db_mod.connect(self.db_path)
        try:
            yield conn
            conn.commit()
        finally:
            conn.close()
