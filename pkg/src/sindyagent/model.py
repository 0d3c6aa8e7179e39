"""Fitting, evaluating, simulating, scoring, and printing sparse ODE models."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import specdsl
from .dynamics import Dataset, SystemDefinition, Trajectory, integrate
from .features import FeatureLibrarySpec, build_design_matrix, feature_count
from .sparse_opt import Coefficients, OptimizerSpec, solve
from .terms import Bin, Neg, parse_term

MODEL_FORMAT_VERSION = 1

NEG_INF = float("-inf")


@dataclass
class Provenance:
    candidate_id: str | None = None
    iteration: int | None = None
    sample: int | None = None

    def to_dict(self) -> dict:
        return {"candidate_id": self.candidate_id, "iteration": self.iteration, "sample": self.sample}


@dataclass
class SindyModel:
    library: FeatureLibrarySpec
    optimizer: OptimizerSpec
    coefficients: Coefficients
    feature_names: list[str]
    dimension: int
    provenance: Provenance = field(default_factory=Provenance)

    def __post_init__(self):
        p = feature_count(self.library, self.dimension)
        if self.coefficients.xi.shape != (p, self.dimension):
            raise ValueError(
                f"coefficients have shape {self.coefficients.xi.shape}, "
                f"expected ({p}, {self.dimension})"
            )
        if len(self.feature_names) != p:
            raise ValueError("feature_names length must equal feature count")


@dataclass
class Score:
    """Derivative-space fit quality on the train/test split.

    The aggregate values are unweighted means of the per-dimension values;
    candidate selection ranks by r2_test and breaks ties toward fewer active
    terms. Failed evaluations carry -inf and the error text.
    """

    r2_train: float
    r2_test: float
    per_dimension: list[tuple[float, float]]
    active_terms: int
    error: str | None = None
    sim_r2_train: float | None = None
    sim_r2_test: float | None = None

    def to_dict(self) -> dict:
        return {
            "r2_train": self.r2_train,
            "r2_test": self.r2_test,
            "per_dimension": [list(pair) for pair in self.per_dimension],
            "active_terms": self.active_terms,
            "error": self.error,
            "sim_r2_train": self.sim_r2_train,
            "sim_r2_test": self.sim_r2_test,
        }

    @classmethod
    def failed(cls, error: str) -> "Score":
        return cls(r2_train=NEG_INF, r2_test=NEG_INF, per_dimension=[], active_terms=0, error=error)


def fit(
    dataset: Dataset,
    library: FeatureLibrarySpec,
    optimizer: OptimizerSpec,
    provenance: Provenance | None = None,
) -> SindyModel:
    """Fit a sparse model on all stacked training trajectories."""
    for traj in dataset.train:
        if traj.derivatives is None:
            raise ValueError("train trajectories must have derivatives filled")
    X = np.vstack([t.states for t in dataset.train])
    Xdot = np.vstack([t.derivatives for t in dataset.train])
    design = build_design_matrix(library, X)
    coefficients = solve(design.values, Xdot, optimizer)
    return SindyModel(
        library=library,
        optimizer=optimizer,
        coefficients=coefficients,
        feature_names=design.feature_names,
        dimension=dataset.dimension,
        provenance=provenance or Provenance(),
    )


def predict_derivatives(model: SindyModel, X: np.ndarray) -> np.ndarray:
    """Model right-hand side evaluated row-wise: Theta(X) @ Xi."""
    design = build_design_matrix(model.library, np.atleast_2d(X))
    return design.values @ model.coefficients.xi


def simulate(model: SindyModel, x0, dt: float, steps: int) -> Trajectory:
    """Integrate the fitted right-hand side like any benchmark system."""
    system = SystemDefinition(
        id="fitted-model",
        dimension=model.dimension,
        rhs=lambda x: predict_derivatives(model, x[None, :])[0],
        params={},
        description="fitted model",
    )
    return integrate(system, x0, dt, steps)


def r2(y: np.ndarray, yhat: np.ndarray) -> float:
    """Coefficient of determination, averaged over columns.

    Per column: 1 - SS_res/SS_tot. A constant column (zero SS_tot) scores 1
    for an exact fit and -inf otherwise.
    """
    return float(np.mean(r2_per_column(y, yhat)))


def r2_per_column(y: np.ndarray, yhat: np.ndarray) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    if yhat.ndim == 1:
        yhat = yhat[:, None]
    if y.shape != yhat.shape:
        raise ValueError(f"shape mismatch: {y.shape} vs {yhat.shape}")
    if y.shape[0] < 2:
        raise ValueError("need at least 2 rows")
    out = np.empty(y.shape[1])
    for j in range(y.shape[1]):
        ss_res = float(np.sum((y[:, j] - yhat[:, j]) ** 2))
        ss_tot = float(np.sum((y[:, j] - np.mean(y[:, j])) ** 2))
        if ss_tot == 0.0:
            out[j] = 1.0 if ss_res == 0.0 else NEG_INF
        else:
            out[j] = 1.0 - ss_res / ss_tot
    return out


def score(model: SindyModel, dataset: Dataset) -> Score:
    """R2 between finite-difference derivatives and model predictions."""
    try:
        train_cols = _split_r2(model, dataset.train)
        test_cols = _split_r2(model, dataset.test)
    except Exception as exc:  # fed to the reflection prompt, never raised
        return Score.failed(f"{type(exc).__name__}: {exc}")
    return Score(
        r2_train=float(np.mean(train_cols)),
        r2_test=float(np.mean(test_cols)),
        per_dimension=[(float(a), float(b)) for a, b in zip(train_cols, test_cols)],
        active_terms=model.coefficients.active_terms,
    )


def _split_r2(model: SindyModel, trajectories) -> np.ndarray:
    for traj in trajectories:
        if traj.derivatives is None:
            raise ValueError("trajectories must have derivatives filled")
    X = np.vstack([t.states for t in trajectories])
    Y = np.vstack([t.derivatives for t in trajectories])
    return r2_per_column(Y, predict_derivatives(model, X))


def simulation_score(model: SindyModel, dataset: Dataset) -> tuple[float | None, float | None]:
    """Best-effort R2 between simulated and measured states.

    Stored for reporting only; candidate selection never uses it. Returns
    None for a split whose simulation diverges.
    """

    def split(trajectories):
        values = []
        for traj in trajectories:
            dt = float(traj.times[1] - traj.times[0])
            try:
                sim = simulate(model, traj.states[0], dt, traj.K - 1)
            except Exception:
                return None
            values.append(r2(traj.states, sim.states))
        return float(np.mean(values))

    return split(dataset.train), split(dataset.test)


def _printable_name(name: str, n: int) -> str:
    """Parenthesize names whose top level is a sum, difference, or negation
    so that coefficient * name keeps its value when reparsed."""
    ast = parse_term(name, n).ast
    if isinstance(ast, Neg) or (isinstance(ast, Bin) and ast.op in "+-"):
        return f"({name})"
    return name


def equation_text(model: SindyModel) -> list[str]:
    """Human-readable equations, one per dimension.

    Coefficients print to 6 significant figures; zero terms are omitted; the
    right-hand sides parse back as term expressions.
    """
    lines = []
    xi = model.coefficients.xi
    for j in range(model.dimension):
        parts: list[str] = []
        for i, name in enumerate(model.feature_names):
            c = xi[i, j]
            if c == 0.0:
                continue
            magnitude = f"{abs(c):.6g}"
            text = (
                magnitude
                if name == "1"
                else f"{magnitude}*{_printable_name(name, model.dimension)}"
            )
            if not parts:
                parts.append(text if c > 0 else f"-{text}")
            else:
                parts.append(f"+ {text}" if c > 0 else f"- {text}")
        rhs = " ".join(parts) if parts else "0"
        lines.append(f"dx{j}/dt = {rhs}")
    return lines


def parse_equation_rhs(line: str) -> list[tuple[str, float]]:
    """Invert equation_text: (feature name, coefficient) pairs from one line."""
    _, _, rhs = line.partition("=")
    rhs = rhs.strip()
    if rhs == "0":
        return []
    # split on " + " / " - " at parenthesis depth zero
    chunks: list[tuple[float, str]] = []
    sign, start, depth = 1.0, 0, 0
    i = 0
    while i < len(rhs):
        ch = rhs[i]
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        elif depth == 0 and rhs[i : i + 3] in (" + ", " - "):
            chunks.append((sign, rhs[start:i]))
            sign = 1.0 if rhs[i + 1] == "+" else -1.0
            i += 3
            start = i
            continue
        i += 1
    chunks.append((sign, rhs[start:]))

    pairs: list[tuple[str, float]] = []
    for sign, chunk in chunks:
        chunk = chunk.strip()
        if chunk.startswith("-"):
            sign, chunk = -sign, chunk[1:]
        coef_text, star, name = chunk.partition("*")
        if name.startswith("(") and name.endswith(")"):
            name = name[1:-1]
        pairs.append((name if star else "1", sign * float(coef_text)))
    return pairs


def save_model(model: SindyModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=2))


def model_to_dict(model: SindyModel) -> dict:
    return {
        "format_version": MODEL_FORMAT_VERSION,
        "dimension": model.dimension,
        "library": specdsl.library_to_obj(model.library),
        "optimizer": specdsl.optimizer_to_obj(model.optimizer),
        "feature_names": list(model.feature_names),
        "xi": model.coefficients.xi.tolist(),
        "provenance": model.provenance.to_dict(),
        "equations": equation_text(model),
    }


def load_model(path: str | Path) -> SindyModel:
    doc = json.loads(Path(path).read_text())
    return model_from_dict(doc)


def model_from_dict(doc: dict) -> SindyModel:
    if doc.get("format_version") != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format {doc.get('format_version')!r}")
    n = doc["dimension"]
    candidate_yaml = {
        "schema_version": specdsl.SCHEMA_VERSION,
        "library": doc["library"],
        "optimizer": doc["optimizer"],
    }
    spec, diags = specdsl.parse_candidate(yaml.safe_dump(candidate_yaml), n)
    if spec is None:
        raise ValueError(f"stored model spec invalid: {[str(d) for d in diags]}")
    xi = np.asarray(doc["xi"], dtype=float)
    coefficients = Coefficients(xi=xi, support=xi != 0.0)
    model = SindyModel(
        library=spec.library,
        optimizer=spec.optimizer,
        coefficients=coefficients,
        feature_names=list(doc["feature_names"]),
        dimension=n,
        provenance=Provenance(**doc.get("provenance", {})),
    )
    return model


def better_score(a: Score, b: Score) -> bool:
    """True when a beats b: higher test R2, ties toward fewer active terms."""
    if abs(a.r2_test - b.r2_test) <= 1e-12:
        return a.active_terms < b.active_terms
    return a.r2_test > b.r2_test
