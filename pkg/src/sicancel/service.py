"""HTTP facade over the canceller toolkit.

The CLI talks to this app in process by default; ``sicancel serve`` exposes
the same app over the network.  Endpoints take filesystem paths, so a remote
server must share a filesystem view with its clients.

Domain errors map to stable status codes with an
``{"error": {"kind", "message"}}`` body: configuration 400, data-format 415,
missing files 404, numeric failures 422.
"""

from __future__ import annotations

import time
from typing import Literal, Optional

import numpy as np
from fastapi import FastAPI, Query
from fastapi.responses import JSONResponse
from pydantic import BaseModel, ConfigDict

from . import __version__
from .cancellers import fit_linear, fit_poly, num_basis
from .complexity import comparison_table, linear_counts, nn_counts, poly_counts
from .config import (
    DEFAULTS,
    chain_from_config,
    format_config,
    ofdm_from_config,
    parse_config_text,
    split_bounds,
)
from .errors import ConfigurationError, DataFormatError, NumericError
from .fixed_point import (
    FxFormat,
    calibration_max_abs,
    format_for_max,
    quantize_model,
    scale_plan,
)
from .metrics import (
    CALIBRATION_SAMPLES,
    cancellation_db,
    evaluate,
    model_kind,
    sweep_q,
    write_sweep_csv,
)
from .model_io import coefficient_count, load_model, save_model
from .network import TrainConfig, train_nn
from .pipeline import (
    StageConfig,
    composition_cycles_per_sample,
    nn_stage_configs,
    reference_linear_canceller,
    reference_nn_canceller,
    reference_poly_canceller,
    simulate_linear_canceller,
    simulate_nn_canceller,
    simulate_poly_canceller,
)
from .signals import make_dataset, read_dataset, write_dataset

DEFAULT_MEMORY_LEN = 13
DEFAULT_MAX_ORDER = 7
DEFAULT_N_HIDDEN = 18


class GenerateRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    path: str
    config_text: str = ""  # key = value overrides applied over the defaults


class TrainOptions(BaseModel):
    model_config = ConfigDict(extra="forbid")
    epochs: int = 3000
    batch_size: int = 512
    learning_rate: float = 3e-3
    optimizer: Literal["adam", "sgd"] = "adam"
    seed: int = 0
    val_fraction: float = 0.15
    lr_decay_every: int = 400
    lr_decay_factor: float = 0.5
    lr_min: float = 1e-5

    def to_config(self) -> TrainConfig:
        return TrainConfig(**self.model_dump())


class FitRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    dataset: str
    kind: Literal["linear", "poly", "nn"]
    out: str
    memory_len: int = DEFAULT_MEMORY_LEN
    max_order: int = DEFAULT_MAX_ORDER
    n_hidden: int = DEFAULT_N_HIDDEN
    ridge: float = 0.0
    train: Optional[TrainOptions] = None


class EvaluateRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    dataset: str
    model: str
    total_bits: Optional[int] = None  # evaluate the quantized model when set
    frac_bits: Optional[int] = None  # pin the fraction split instead of calibrating
    split: Literal["train", "eval", "all"] = "eval"


class SweepRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    dataset: str
    models: dict[str, str]
    q_values: list[int]
    out_csv: Optional[str] = None


class SimulateRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    dataset: str
    model: str
    total_bits: int
    frac_bits: Optional[int] = None  # pin the fraction split instead of calibrating
    num_samples: int = 256
    n_pe_hidden: int = 52
    n_pe_out: int = 4
    n_pe_fir: int = 2
    n_pe: int = 20  # MAC lanes for linear/poly models
    trace: bool = False
    trace_limit: int = 200


class CompareRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    dataset: str
    models: dict[str, str] = {}  # empty means fit the three defaults in place


def _split_arrays(dataset: str, split: str = "eval"):
    x, y = read_dataset(dataset)
    xs, ys = x.samples, y.samples
    train_end, eval_start = split_bounds(xs.size)
    if split == "train":
        return xs[:train_end], ys[:train_end]
    if split == "eval":
        return xs[eval_start:], ys[eval_start:]
    return xs, ys


def _calibrated_quantized(model, dataset: str, total_bits: int, frac_bits=None):
    x_train, _ = _split_arrays(dataset, "train")
    x_calib = x_train[:CALIBRATION_SAMPLES]
    in_shift, hid_shift = scale_plan(model, x_calib)
    if frac_bits is None:
        max_abs = calibration_max_abs(model, x_calib, in_shift, hid_shift)
        fmt = format_for_max(max_abs, total_bits)
    else:
        fmt = FxFormat(total_bits, frac_bits)
    qmodel, report = quantize_model(model, fmt, in_shift, hid_shift)
    return qmodel, fmt, report


def _counts_for(model):
    kind = model_kind(model)
    if kind == "linear":
        return linear_counts(model.memory_len)
    if kind == "poly":
        return poly_counts(model.memory_len, model.max_order)
    return nn_counts(model.memory_len, model.n_hidden)


def _cycles_for(model) -> int:
    kind = model_kind(model)
    if kind == "linear":
        return StageConfig("cmac", 2, model.memory_len, ragged=True).words_per_sample
    if kind == "poly":
        terms = num_basis(model.memory_len, model.max_order)
        return StageConfig("cmac", 20, terms, ragged=bool(terms % 20)).words_per_sample
    return composition_cycles_per_sample(*nn_stage_configs(model, 52, 4, 2).values())


def create_app() -> FastAPI:
    app = FastAPI(title="si-canceller toolkit", version=__version__)

    def _error(kind: str, status: int):
        def handler(request, exc):
            return JSONResponse(
                status_code=status,
                content={"error": {"kind": kind, "message": str(exc)}},
            )

        return handler

    app.add_exception_handler(ConfigurationError, _error("configuration", 400))
    app.add_exception_handler(DataFormatError, _error("data-format", 415))
    app.add_exception_handler(NumericError, _error("numeric", 422))
    app.add_exception_handler(FileNotFoundError, _error("not-found", 404))

    @app.get("/health")
    def health():
        return {"status": "ok", "version": __version__}

    @app.get("/config/defaults")
    def config_defaults():
        return {"text": format_config(DEFAULTS)}

    @app.post("/datasets/generate")
    def generate(req: GenerateRequest):
        cfg = parse_config_text(req.config_text)
        x, y = make_dataset(ofdm_from_config(cfg), chain_from_config(cfg), seed=cfg["seed"])
        write_dataset(req.path, x, y)
        si_power = float(np.mean(np.abs(y.samples) ** 2))
        return {
            "path": req.path,
            "num_samples": int(x.samples.size),
            "sample_rate_hz": x.sample_rate_hz,
            "si_power_db": 10.0 * np.log10(si_power),
            "config_text": format_config(cfg),
        }

    @app.post("/models/fit")
    def fit(req: FitRequest):
        x_train, y_train = _split_arrays(req.dataset, "train")
        x_eval, y_eval = _split_arrays(req.dataset, "eval")
        started = time.monotonic()
        extra = {}
        if req.kind == "linear":
            model = fit_linear(x_train, y_train, req.memory_len, ridge=req.ridge)
        elif req.kind == "poly":
            model = fit_poly(
                x_train, y_train, req.memory_len, req.max_order, ridge=req.ridge
            )
        else:
            opts = req.train or TrainOptions()
            model, report = train_nn(
                x_train, y_train, req.memory_len, req.n_hidden,
                cfg=opts.to_config(), ridge=req.ridge,
            )
            extra = {
                "train_report": {
                    "initial_val_mse": report.initial_val_mse,
                    "best_val_mse": report.best_val_mse,
                    "best_epoch": report.best_epoch,
                    "epochs_run": report.epochs_run,
                    "denorm_shift": report.denorm_shift,
                }
            }
        save_model(model, req.out)
        return {
            "model": req.out,
            "kind": req.kind,
            "coefficients": coefficient_count(model),
            "train_db": evaluate(model, x_train, y_train),
            "eval_db": evaluate(model, x_eval, y_eval),
            "fit_seconds": time.monotonic() - started,
            **extra,
        }

    @app.post("/evaluate")
    def evaluate_model(req: EvaluateRequest):
        model = load_model(req.model)
        xs, ys = _split_arrays(req.dataset, req.split)
        fmt = None
        if req.frac_bits is not None and req.total_bits is None:
            raise ConfigurationError("frac_bits needs total_bits")
        if req.total_bits is not None:
            model, fmt, _ = _calibrated_quantized(
                model, req.dataset, req.total_bits, req.frac_bits
            )
        return {
            "cancellation_db": evaluate(model, xs, ys),
            "kind": model_kind(model),
            "split": req.split,
            "num_samples": int(xs.size),
            "fx_format": str(fmt) if fmt else None,
        }

    @app.post("/sweep")
    def sweep(req: SweepRequest):
        if not req.q_values:
            raise ConfigurationError("q_values must not be empty")
        models = {label: load_model(path) for label, path in req.models.items()}
        x_train, _ = _split_arrays(req.dataset, "train")
        x_eval, y_eval = _split_arrays(req.dataset, "eval")
        rows = sweep_q(
            models, x_train[:CALIBRATION_SAMPLES], x_eval, y_eval, req.q_values
        )
        if req.out_csv:
            write_sweep_csv(req.out_csv, rows)
        return {
            "rows": [
                {
                    "q": r.q,
                    "canceller": r.canceller,
                    "frac_bits": r.frac_bits,
                    "cancellation_db": r.cancellation_db,
                }
                for r in rows
            ],
            "csv": req.out_csv,
        }

    @app.get("/complexity")
    def complexity(
        memory_len: int = Query(DEFAULT_MEMORY_LEN),
        max_order: int = Query(DEFAULT_MAX_ORDER),
        n_hidden: int = Query(DEFAULT_N_HIDDEN),
    ):
        rows = {
            "linear": linear_counts(memory_len),
            "poly": poly_counts(memory_len, max_order),
            "nn": nn_counts(memory_len, n_hidden),
        }
        return {
            "counts": {
                label: {
                    "real_mults": c.real_mults,
                    "real_adds": c.real_adds,
                    "params": c.params,
                }
                for label, c in rows.items()
            },
            "table": comparison_table(memory_len, max_order, n_hidden),
        }

    @app.post("/simulate")
    def simulate(req: SimulateRequest):
        model = load_model(req.model)
        qmodel, fmt, _ = _calibrated_quantized(
            model, req.dataset, req.total_bits, req.frac_bits
        )
        x_eval, y_eval = _split_arrays(req.dataset, "eval")
        xs = x_eval if req.num_samples <= 0 else x_eval[: req.num_samples]
        ys = y_eval if req.num_samples <= 0 else y_eval[: req.num_samples]
        kind = model_kind(qmodel)
        if kind == "nn":
            m_re, m_im, report, trace = simulate_nn_canceller(
                qmodel, xs, req.n_pe_hidden, req.n_pe_out, req.n_pe_fir,
                trace=req.trace,
            )
            r_re, r_im = reference_nn_canceller(
                qmodel, xs, req.n_pe_hidden, req.n_pe_out, req.n_pe_fir
            )
        elif kind == "poly":
            m_re, m_im, report, trace = simulate_poly_canceller(
                qmodel, xs, req.n_pe, trace=req.trace
            )
            r_re, r_im = reference_poly_canceller(qmodel, xs, req.n_pe)
        else:
            m_re, m_im, report, trace = simulate_linear_canceller(
                qmodel, xs, req.n_pe, trace=req.trace
            )
            r_re, r_im = reference_linear_canceller(qmodel, xs, req.n_pe)
        matches = bool(np.array_equal(m_re, r_re) and np.array_equal(m_im, r_im))
        yhat = (m_re + 1j * m_im) * fmt.resolution
        return {
            "kind": kind,
            "fx_format": str(fmt),
            "num_samples": int(xs.size),
            "matches_reference": matches,
            "cancellation_db": cancellation_db(ys, ys - yhat, skip=qmodel.memory_len),
            "latency_cycles": report.latency_cycles,
            "first_output_cycle": report.first_output_cycle,
            "cycles_per_sample": report.cycles_per_sample,
            "stall_cycles": report.stall_cycles,
            "total_cycles": report.total_cycles,
            "per_stage_stalls": report.per_stage,
            "trace": [str(r) for r in trace[: req.trace_limit]],
        }

    @app.post("/compare")
    def compare(req: CompareRequest):
        x_eval, y_eval = _split_arrays(req.dataset, "eval")
        if req.models:
            models = {label: load_model(path) for label, path in req.models.items()}
        else:
            x_train, y_train = _split_arrays(req.dataset, "train")
            models = {
                "linear": fit_linear(x_train, y_train, DEFAULT_MEMORY_LEN),
                "poly": fit_poly(
                    x_train, y_train, DEFAULT_MEMORY_LEN, DEFAULT_MAX_ORDER
                ),
                "nn": train_nn(
                    x_train, y_train, DEFAULT_MEMORY_LEN, DEFAULT_N_HIDDEN,
                    cfg=TrainOptions().to_config(),
                )[0],
            }
        rows = []
        for label in sorted(models):
            model = models[label]
            counts = _counts_for(model)
            rows.append(
                {
                    "label": label,
                    "kind": model_kind(model),
                    "real_mults": counts.real_mults,
                    "real_adds": counts.real_adds,
                    "params": counts.params,
                    "cancellation_db": evaluate(model, x_eval, y_eval),
                    "cycles_per_sample": _cycles_for(model),
                }
            )
        return {"rows": rows}

    return app


app = create_app()
