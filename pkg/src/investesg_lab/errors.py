from __future__ import annotations

from typing import Any


class InvestESGError(RuntimeError):
    pass


class ConfigError(InvestESGError, ValueError):
    def __init__(self, field: str, message: str) -> None:
        super().__init__(f"{field}: {message}")
        self.field = field


class ActionError(InvestESGError, ValueError):
    def __init__(self, message: str, *, env_index: int | None = None) -> None:
        prefix = f"env {env_index}: " if env_index is not None else ""
        super().__init__(prefix + message)
        self.env_index = env_index


class DomainError(InvestESGError, ValueError):
    pass


class NoSignFlipError(DomainError):
    pass


class SearchError(InvestESGError):
    def __init__(self, message: str, **diagnostics: Any) -> None:
        if diagnostics:
            detail = ", ".join(f"{k}={v!r}" for k, v in sorted(diagnostics.items()))
            message = f"{message} ({detail})"
        super().__init__(message)
        self.diagnostics = diagnostics


class TrainingError(InvestESGError):
    def __init__(self, message: str, *, batch: int | None = None) -> None:
        prefix = f"batch {batch}: " if batch is not None else ""
        super().__init__(prefix + message)
        self.batch = batch


class InputError(InvestESGError, ValueError):
    pass
