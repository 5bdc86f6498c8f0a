"""HTTP service layer: FastAPI app plus pydantic schemas."""

from .app import app  # noqa: F401
