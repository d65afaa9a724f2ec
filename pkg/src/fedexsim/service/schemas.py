"""Pydantic request/response models for the HTTP prediction service."""

from typing import List, Optional

from pydantic import BaseModel


class ModelInfo(BaseModel):
    input_shape: List[int]
    class_count: int
    mode: str


class BudgetStatus(BaseModel):
    budget: int
    used: int
    remaining: int


class PredictRequest(BaseModel):
    input: List[float]  # flattened row-major input


class PredictResponse(BaseModel):
    probs: Optional[List[float]] = None
    label: Optional[int] = None


class PredictBatchRequest(BaseModel):
    inputs: List[List[float]]


class PredictBatchResponse(BaseModel):
    results: List[PredictResponse]


class ErrorResponse(BaseModel):
    detail: str
