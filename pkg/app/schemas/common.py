"""
Common schemas
"""
from typing import Optional

from pydantic import BaseModel

from app.core.errors import LabError


class ErrorResponse(BaseModel):
    """Error written into run artifacts"""
    error: str
    detail: Optional[str] = None
    code: Optional[str] = None

    @classmethod
    def from_error(cls, exc: LabError) -> "ErrorResponse":
        return cls(error=type(exc).__name__, detail=exc.detail, code=exc.code)
