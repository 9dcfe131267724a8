"""Minimal reverse-mode autodiff: tensors, a gradient tape, and the op set
needed by the melody-extraction network and its losses."""

from . import kernels, ops
from .tensor import Graph, Tensor

__all__ = ["Graph", "Tensor", "ops", "kernels"]
