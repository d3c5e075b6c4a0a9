"""Training-run records, run-log ingestion, and FLOPs / parameter counting.

Runs are opaque numeric logs: an objective tag, a non-embedding parameter
count and a validation-loss curve over elapsed training tokens. Two on-disk
layouts are supported:

* JSONL, one run per line::

    {"id": "clm-85m", "objective": "CLM", "n_params": 85000000,
     "curve": [[1000000, 3.1], [2000000, 2.9]], "steps": 20000}

  ``model_config`` (``d_model``, ``ffw_dim``, ``kv_size``, ``head_num``,
  ``layers``) may replace ``n_params``.

* CSV in long format with columns ``run_id, objective, n_params,
  tokens_elapsed, loss`` (plus optional ``steps``, ``pretrain_tokens``,
  ``batch_size``), one row per curve point.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import logging
import math
import warnings
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Any, NamedTuple

from .errors import FieldError, IngestError, RowDiagnostic, ValidationError

logger = logging.getLogger(__name__)

INT64_MAX = 2**63 - 1
TOKENS_PER_SEQUENCE = 1024

CSV_COLUMNS = ("run_id", "objective", "n_params", "tokens_elapsed", "loss")
CSV_OPTIONAL_COLUMNS = ("steps", "pretrain_tokens", "batch_size")


class Objective(str, enum.Enum):
    CLM = "CLM"
    MLM = "MLM"
    TRANSFER_CLM_TO_MLM = "TransferCLMtoMLM"
    TRANSFER_MLM_TO_CLM = "TransferMLMtoCLM"

    @property
    def is_transfer(self) -> bool:
        return self in (Objective.TRANSFER_CLM_TO_MLM, Objective.TRANSFER_MLM_TO_CLM)

    @classmethod
    def parse(cls, value: str | Objective) -> Objective:
        if isinstance(value, Objective):
            return value
        key = str(value).strip().lower()
        for member in cls:
            if key in (member.value.lower(), member.name.lower()):
                return member
        raise FieldError("objective", f"unknown objective {value!r}")


@dataclass(frozen=True)
class ModelConfig:
    d_model: int
    ffw_dim: int
    kv_size: int
    head_num: int
    layers: int

    def __post_init__(self) -> None:
        for name in ("d_model", "ffw_dim", "kv_size", "head_num", "layers"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value <= 0:
                raise FieldError(name, f"must be a positive integer, got {value!r}")

    @property
    def heads_consistent(self) -> bool:
        return self.kv_size * self.head_num == self.d_model


def param_count(config: ModelConfig, *, strict: bool = False) -> int:
    """Non-embedding parameter count of a GLU transformer.

    Counts ``4 * d_model**2`` per layer for the Q/K/V/O projections and
    ``3 * d_model * ffw_dim`` for the gated feed-forward block. Embeddings,
    biases and norms are excluded.

    A config whose ``kv_size * head_num`` differs from ``d_model`` raises
    :class:`ValidationError` when ``strict`` is set and only warns otherwise,
    since two published configurations have that shape.
    """
    if not config.heads_consistent:
        msg = (
            f"kv_size * head_num = {config.kv_size * config.head_num} "
            f"does not equal d_model = {config.d_model}"
        )
        if strict:
            raise ValidationError(msg)
        warnings.warn(msg, stacklevel=2)
    d = config.d_model
    return config.layers * (4 * d * d + 3 * d * config.ffw_dim)


def flops(n_params: float, tokens: float) -> float:
    """Training compute ``6 * N * D``."""
    if n_params < 0 or tokens < 0:
        raise ValidationError("n_params and tokens must be non-negative")
    return 6.0 * float(n_params) * float(tokens)


class CurvePoint(NamedTuple):
    tokens_elapsed: int
    loss: float


def _as_count(field: str, value: Any, *, positive: bool = False) -> int:
    if isinstance(value, bool) or value is None:
        raise FieldError(field, f"expected a number, got {value!r}")
    if isinstance(value, str):
        try:
            value = float(value)
        except ValueError:
            raise FieldError(field, f"expected a number, got {value!r}") from None
    if isinstance(value, float):
        if not math.isfinite(value):
            raise FieldError(field, f"must be finite, got {value!r}")
        value = round(value)
    if not isinstance(value, int):
        raise FieldError(field, f"expected a number, got {type(value).__name__}")
    if value < 0 or (positive and value == 0):
        raise FieldError(field, f"must be {'positive' if positive else 'non-negative'}, got {value}")
    if value > INT64_MAX:
        raise FieldError(field, "exceeds the 64-bit integer range")
    return value


def _as_loss(field: str, value: Any) -> float:
    if isinstance(value, bool):
        raise FieldError(field, f"expected a number, got {value!r}")
    try:
        loss = float(value)
    except (TypeError, ValueError):
        raise FieldError(field, f"expected a number, got {value!r}") from None
    if not math.isfinite(loss) or loss <= 0:
        raise FieldError(field, f"must be finite and > 0, got {value!r}")
    return loss


@dataclass(frozen=True)
class TrainingRun:
    """One pre-training run.

    ``n_params`` is the non-embedding parameter count. For transfer runs
    ``pretrain_tokens`` records the tokens already spent on the source
    objective; it must be absent for every other objective.
    """

    id: str
    objective: Objective
    n_params: int
    curve: tuple[CurvePoint, ...]
    steps: int | None = None
    pretrain_tokens: int | None = None
    batch_size: int | None = None

    def __post_init__(self) -> None:
        if not isinstance(self.id, str) or not self.id:
            raise FieldError("id", "must be a non-empty string")
        object.__setattr__(self, "objective", Objective.parse(self.objective))
        object.__setattr__(self, "n_params", _as_count("n_params", self.n_params, positive=True))
        points = []
        for i, point in enumerate(self.curve):
            try:
                tokens, loss = point
            except (TypeError, ValueError):
                raise FieldError(f"curve[{i}]", "expected a [tokens_elapsed, loss] pair") from None
            points.append(
                CurvePoint(_as_count(f"curve[{i}].tokens_elapsed", tokens), _as_loss(f"curve[{i}].loss", loss))
            )
        if not points:
            raise FieldError("curve", "must contain at least one point")
        for i in range(1, len(points)):
            if points[i].tokens_elapsed <= points[i - 1].tokens_elapsed:
                raise FieldError(
                    f"curve[{i}].tokens_elapsed",
                    "curve is not strictly increasing in tokens_elapsed",
                )
        object.__setattr__(self, "curve", tuple(points))
        if self.steps is not None:
            object.__setattr__(self, "steps", _as_count("steps", self.steps, positive=True))
        if self.batch_size is not None:
            object.__setattr__(self, "batch_size", _as_count("batch_size", self.batch_size, positive=True))
        if self.objective.is_transfer:
            if self.pretrain_tokens is None:
                raise FieldError("pretrain_tokens", f"required for objective {self.objective.value}")
            object.__setattr__(self, "pretrain_tokens", _as_count("pretrain_tokens", self.pretrain_tokens))
        elif self.pretrain_tokens is not None:
            raise FieldError("pretrain_tokens", f"only allowed for transfer objectives, not {self.objective.value}")

    @property
    def final_tokens(self) -> int:
        return self.curve[-1].tokens_elapsed

    @property
    def final_loss(self) -> float:
        return self.curve[-1].loss

    @property
    def flops(self) -> float:
        """Compute spent on this run's own objective (pre-training excluded)."""
        return flops(self.n_params, self.final_tokens)

    @property
    def total_flops(self) -> float:
        return flops(self.n_params, self.final_tokens + (self.pretrain_tokens or 0))

    @property
    def estimated_steps(self) -> int | None:
        """``steps`` if logged, else tokens / (batch_size * 1024) when batch size is known."""
        if self.steps is not None:
            return self.steps
        if self.batch_size is not None:
            return self.final_tokens // (self.batch_size * TOKENS_PER_SEQUENCE)
        return None

    def to_record(self) -> dict[str, Any]:
        record: dict[str, Any] = {
            "id": self.id,
            "objective": self.objective.value,
            "n_params": self.n_params,
            "curve": [[p.tokens_elapsed, p.loss] for p in self.curve],
        }
        for name in ("steps", "pretrain_tokens", "batch_size"):
            value = getattr(self, name)
            if value is not None:
                record[name] = value
        return record

    @classmethod
    def from_record(cls, record: dict[str, Any]) -> TrainingRun:
        if not isinstance(record, dict):
            raise FieldError("record", "expected a JSON object")
        for key in ("id", "objective", "curve"):
            if key not in record:
                raise FieldError(key, "missing required field")
        if "n_params" in record:
            n_params = record["n_params"]
        elif "model_config" in record:
            cfg = record["model_config"]
            if not isinstance(cfg, dict):
                raise FieldError("model_config", "expected an object")
            try:
                config = ModelConfig(**{k: cfg[k] for k in ("d_model", "ffw_dim", "kv_size", "head_num", "layers")})
            except KeyError as exc:
                raise FieldError(f"model_config.{exc.args[0]}", "missing required field") from None
            except FieldError as exc:
                raise FieldError(f"model_config.{exc.field}", str(exc)) from None
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                n_params = param_count(config)
        else:
            raise FieldError("n_params", "missing required field (or model_config)")
        curve = record["curve"]
        if not isinstance(curve, list):
            raise FieldError("curve", "expected an array of [tokens_elapsed, loss] pairs")
        return cls(
            id=record["id"],
            objective=record["objective"],
            n_params=n_params,
            curve=tuple(curve),
            steps=record.get("steps"),
            pretrain_tokens=record.get("pretrain_tokens"),
            batch_size=record.get("batch_size"),
        )


def _read_text(source: bytes | str | IO[bytes] | IO[str]) -> str:
    if isinstance(source, bytes):
        return source.decode("utf-8")
    if isinstance(source, str):
        return source
    data = source.read()
    return data.decode("utf-8") if isinstance(data, bytes) else data


def _finish(runs: list[TrainingRun], diagnostics: list[RowDiagnostic], skip_invalid: bool) -> list[TrainingRun]:
    if diagnostics:
        if not skip_invalid:
            raise IngestError(diagnostics)
        for diag in diagnostics:
            logger.warning("rejected %s", diag)
    return runs


def _parse_jsonl(text: str, skip_invalid: bool) -> list[TrainingRun]:
    runs: list[TrainingRun] = []
    seen: dict[str, int] = {}
    diagnostics: list[RowDiagnostic] = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            diagnostics.append(RowDiagnostic(lineno, None, f"invalid JSON ({exc.msg})"))
            continue
        try:
            run = TrainingRun.from_record(record)
        except FieldError as exc:
            diagnostics.append(RowDiagnostic(lineno, exc.field, str(exc)))
            continue
        if run.id in seen:
            diagnostics.append(RowDiagnostic(lineno, "id", f"duplicate id {run.id!r} (first seen on line {seen[run.id]})"))
            continue
        seen[run.id] = lineno
        runs.append(run)
    return _finish(runs, diagnostics, skip_invalid)


def _parse_csv(text: str, skip_invalid: bool) -> list[TrainingRun]:
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None:
        return []
    missing = [c for c in CSV_COLUMNS if c not in reader.fieldnames]
    if missing:
        raise IngestError([RowDiagnostic(1, col, "missing CSV column") for col in missing])

    groups: dict[str, dict[str, Any]] = {}
    diagnostics: list[RowDiagnostic] = []
    for lineno, row in enumerate(reader, 2):
        run_id = (row.get("run_id") or "").strip()
        if not run_id:
            diagnostics.append(RowDiagnostic(lineno, "run_id", "empty run_id"))
            continue
        meta = {"objective": row["objective"], "n_params": row["n_params"]}
        for col in CSV_OPTIONAL_COLUMNS:
            value = (row.get(col) or "").strip()
            meta[col] = value or None
        group = groups.get(run_id)
        if group is None:
            group = groups[run_id] = {"meta": meta, "points": [], "lines": [], "bad": False}
        elif group["meta"] != meta:
            changed = next(k for k in meta if meta[k] != group["meta"][k])
            diagnostics.append(RowDiagnostic(lineno, changed, f"inconsistent value for run {run_id!r}"))
            group["bad"] = True
            continue
        group["points"].append((row["tokens_elapsed"], row["loss"]))
        group["lines"].append(lineno)

    runs: list[TrainingRun] = []
    for run_id, group in groups.items():
        if group["bad"]:
            continue
        meta = group["meta"]
        try:
            run = TrainingRun(
                id=run_id,
                objective=meta["objective"],
                n_params=meta["n_params"],
                curve=tuple(group["points"]),
                steps=meta["steps"],
                pretrain_tokens=meta["pretrain_tokens"],
                batch_size=meta["batch_size"],
            )
        except FieldError as exc:
            line = group["lines"][0]
            if exc.field.startswith("curve["):
                index = int(exc.field[6 : exc.field.index("]")])
                line = group["lines"][index]
                column = "loss" if exc.field.endswith("loss") else "tokens_elapsed"
                diagnostics.append(RowDiagnostic(line, column, str(exc)))
            else:
                diagnostics.append(RowDiagnostic(line, exc.field, str(exc)))
            continue
        runs.append(run)
    return _finish(runs, diagnostics, skip_invalid)


def ingest_runs(
    source: bytes | str | IO[bytes] | IO[str],
    format: str = "jsonl",
    *,
    skip_invalid: bool = False,
) -> list[TrainingRun]:
    """Parse and validate run logs.

    Args:
        source: Raw content (bytes or text) or an open file.
        format: ``"jsonl"`` or ``"csv"``.
        skip_invalid: Drop rejected rows (logging each diagnostic) instead of
            raising.

    Raises:
        IngestError: Some rows were rejected; ``.diagnostics`` lists each one
            with its line number and field.
    """
    fmt = format.lower()
    text = _read_text(source)
    if fmt == "jsonl":
        return _parse_jsonl(text, skip_invalid)
    if fmt == "csv":
        return _parse_csv(text, skip_invalid)
    raise ValidationError(f"unknown run format {format!r} (expected jsonl or csv)")


def load_runs(path: str | Path, format: str | None = None, *, skip_invalid: bool = False) -> list[TrainingRun]:
    path = Path(path)
    if format is None:
        format = "csv" if path.suffix.lower() == ".csv" else "jsonl"
    with open(path, "rb") as fh:
        return ingest_runs(fh, format, skip_invalid=skip_invalid)


def runs_to_jsonl(runs: Iterable[TrainingRun]) -> str:
    return "".join(json.dumps(run.to_record()) + "\n" for run in runs)


def runs_to_csv(runs: Sequence[TrainingRun]) -> str:
    optional = [c for c in CSV_OPTIONAL_COLUMNS if any(getattr(r, c) is not None for r in runs)]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([*CSV_COLUMNS, *optional])
    for run in runs:
        extra = ["" if getattr(run, c) is None else getattr(run, c) for c in optional]
        for point in run.curve:
            writer.writerow([run.id, run.objective.value, run.n_params, point.tokens_elapsed, repr(point.loss), *extra])
    return buf.getvalue()
