"""HTTP service exposing dataset generation, training jobs and evaluation."""

from .app import create_app

__all__ = ["create_app"]
