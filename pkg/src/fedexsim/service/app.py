"""FastAPI wrapper around the prediction oracle.

Exposes the MLaaS surface over HTTP: shape metadata, budget status, and
metered single/batch prediction. Budget exhaustion maps to 429; bad input
shapes to 422 without consuming budget.
"""

import numpy as np
from fastapi import FastAPI, HTTPException

from ..errors import BudgetExceededError, ShapeError
from ..oracle import PredictionOracle
from . import schemas


def _to_schema(resp):
    if resp.mode == "probability_vector":
        return schemas.PredictResponse(probs=[float(p) for p in resp.payload])
    return schemas.PredictResponse(label=resp.payload[0])


def create_app(oracle: PredictionOracle) -> FastAPI:
    app = FastAPI(title="fedexsim prediction oracle", version="0.1.0")

    def reshape(flat):
        arr = np.asarray(flat, dtype=np.float64)
        try:
            return arr.reshape(oracle.input_shape)
        except ValueError:
            raise HTTPException(
                status_code=422,
                detail=f"input of length {arr.size} does not fit shape {oracle.input_shape}",
            )

    @app.get("/health")
    def health():
        return {"status": "ok"}

    @app.get("/model", response_model=schemas.ModelInfo)
    def model_info():
        return schemas.ModelInfo(
            input_shape=list(oracle.input_shape),
            class_count=oracle.class_count,
            mode=oracle.mode,
        )

    @app.get("/budget", response_model=schemas.BudgetStatus)
    def budget():
        ledger = oracle.ledger
        return schemas.BudgetStatus(budget=ledger.budget, used=ledger.used, remaining=ledger.remaining)

    @app.post("/predict", response_model=schemas.PredictResponse)
    def predict(req: schemas.PredictRequest):
        x = reshape(req.input)
        try:
            return _to_schema(oracle.query(x))
        except BudgetExceededError as exc:
            raise HTTPException(status_code=429, detail=str(exc))
        except ShapeError as exc:
            raise HTTPException(status_code=422, detail=str(exc))

    @app.post("/predict/batch", response_model=schemas.PredictBatchResponse)
    def predict_batch(req: schemas.PredictBatchRequest):
        batch = np.stack([np.asarray(reshape(row)) for row in req.inputs]) if req.inputs else np.empty((0,) + oracle.input_shape)
        try:
            results = oracle.query_batch(batch)
        except BudgetExceededError as exc:
            raise HTTPException(status_code=429, detail=str(exc))
        except ShapeError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return schemas.PredictBatchResponse(results=[_to_schema(r) for r in results])

    return app
