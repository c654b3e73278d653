"""Command-line surface: fit, predict, tune, stability, benchmark.

Exit codes: 0 success, 2 configuration / usage errors, 3 data errors,
4 runtime failures.  All commands take an explicit seed (default 0) and are
bit-reproducible for a fixed seed on one machine.
"""

from __future__ import annotations

import csv
import json
import sys
import time
from pathlib import Path

import click
import numpy as np
import pandas as pd

from .aggregation import SirusModel, fit_sirus, model_from_json, model_to_json
from .data import Dataset, load_dataset
from .errors import DataError, SirusError
from .forest import ADAPTIVE, ForestParams, full_depth_forest_predict
from .metrics import cv_evaluate, unexplained_variance
from .render import render_rule_table
from .tuning import TuningResult, tune_p0

EXIT_DATA_ERROR = 3
EXIT_RUNTIME_ERROR = 4


def _forest_params(q: int, trees: str, seed: int) -> ForestParams:
    if trees == ADAPTIVE:
        num_trees: int | str = ADAPTIVE
    else:
        try:
            num_trees = int(trees)
        except ValueError:
            raise click.BadParameter(f"--trees must be an integer or {ADAPTIVE!r}")
        if num_trees < 1:
            raise click.BadParameter("--trees must be positive")
    return ForestParams(num_trees=num_trees, q=q, seed=seed)


def _load(data_path: str, response: str, categorical: tuple[str, ...]) -> Dataset:
    columns = tuple(c for chunk in categorical for c in chunk.split(",") if c)
    data = load_dataset(data_path, response_column=response,
                        categorical_columns=columns)
    click.echo(
        f"loaded {data_path}: n={data.n}, p={data.p}, "
        f"dropped {data.n_dropped} row(s)",
        err=True,
    )
    return data


def _write_pareto(result: TuningResult, out_dir: Path, stem: str = "pareto") -> None:
    rows = [
        {"p0": pt.p0, "size": pt.size, "error": pt.error,
         "stability": pt.stability, "distance": pt.distance}
        for pt in result.pareto
    ]
    with open(out_dir / f"{stem}.csv", "w", newline="") as handle:
        writer = csv.DictWriter(
            handle, fieldnames=["p0", "size", "error", "stability", "distance"]
        )
        writer.writeheader()
        writer.writerows(rows)
    from .plots import save_pareto_plot, save_size_curves_plot

    save_pareto_plot(result.pareto, result.p0, out_dir / f"{stem}.png")
    save_size_curves_plot(result.pareto, out_dir / f"{stem}_size_curves.png")


def _evaluation_csv(report, dataset: str, path: Path) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.DictWriter(
            handle,
            fieldnames=["dataset", "p0", "size", "stability", "error", "M", "seed"],
        )
        writer.writeheader()
        writer.writerow(report.to_row(dataset))


@click.group()
def main() -> None:
    """Stable rule-set regression: short weighted if/else rule lists."""


@main.command()
@click.option("--data", "data_path", required=True, help="training CSV")
@click.option("--response", required=True, help="response column name")
@click.option("--categorical", multiple=True, help="categorical columns (repeat or comma-separate)")
@click.option("--q", default=10, show_default=True, help="quantile count")
@click.option("--p0", type=float, default=None, help="selection threshold (default: tune)")
@click.option("--trees", default=ADAPTIVE, show_default=True, help="tree count or 'adaptive'")
@click.option("--seed", default=0, show_default=True)
@click.option("--folds", default=10, show_default=True, help="CV folds for tuning")
@click.option("--repeats", default=10, show_default=True, help="CV repetitions for tuning")
@click.option("--out", "out_dir", default=".", show_default=True, help="output directory")
def fit(data_path, response, categorical, q, p0, trees, seed, folds, repeats, out_dir):
    """Fit a rule-set model; writes model.json and rules.txt."""
    params = _forest_params(q, trees, seed)  # config errors before data I/O
    data = _load(data_path, response, categorical)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if p0 is None:
        result = tune_p0(data, params, k=folds, repeats=repeats, seed=seed)
        p0 = result.p0
        _write_pareto(result, out)
        click.echo(f"tuned p0 = {p0:.6g}")
    model = fit_sirus(data, p0, params)
    (out / "model.json").write_text(model_to_json(model))
    table = render_rule_table(model)
    (out / "rules.txt").write_text(table)
    click.echo(table, nl=False)
    if not model.rules:
        click.echo("warning: no rules selected at this threshold", err=True)
    click.echo(f"model written to {out / 'model.json'}")


def _query_matrix(model: SirusModel, frame: pd.DataFrame) -> np.ndarray:
    """Assemble the model's feature columns from a query table.

    One-hot columns may be given directly or derived from the raw
    categorical source column recorded in the model.
    """
    derived: dict[str, np.ndarray] = {}
    for source, levels in model.categorical_levels.items():
        if source in frame.columns:
            values = frame[source].astype(str).to_numpy()
            for level in levels:
                derived[f"{source}={level}"] = (values == level).astype(float)
    columns = []
    for name in model.feature_names:
        if name in frame.columns:
            try:
                columns.append(pd.to_numeric(frame[name], errors="raise").to_numpy(dtype=float))
            except (ValueError, TypeError):
                raise DataError(f"non-numeric value in query column {name!r}")
        elif name in derived:
            columns.append(derived[name])
        else:
            raise DataError(f"query is missing feature column {name!r}")
    matrix = np.column_stack(columns)
    if not np.all(np.isfinite(matrix)):
        raise DataError("query contains missing or non-finite values")
    return matrix


@main.command()
@click.option("--model", "model_path", required=True, help="model JSON file")
@click.option("--data", "data_path", required=True, help="query CSV")
@click.option("--out", "out_path", default="-", show_default=True,
              help="predictions CSV ('-' for stdout)")
def predict(model_path, data_path, out_path):
    """Predict a query table with a saved model; one prediction per row."""
    try:
        model = model_from_json(Path(model_path).read_text())
    except FileNotFoundError:
        raise DataError(f"model file not found: {model_path}")
    try:
        frame = pd.read_csv(data_path, float_precision="round_trip")
    except FileNotFoundError:
        raise DataError(f"query file not found: {data_path}")
    except pd.errors.EmptyDataError:
        frame = pd.DataFrame()
    if len(frame) == 0:
        rows = []
    else:
        rows = model.predict(_query_matrix(model, frame))
    handle = sys.stdout if out_path == "-" else open(out_path, "w", newline="")
    try:
        writer = csv.writer(handle)
        writer.writerow(["prediction"])
        for value in rows:
            writer.writerow([repr(float(value))])
    finally:
        if handle is not sys.stdout:
            handle.close()


@main.command()
@click.option("--data", "data_path", required=True)
@click.option("--response", required=True)
@click.option("--categorical", multiple=True)
@click.option("--q", default=10, show_default=True)
@click.option("--trees", default=ADAPTIVE, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--folds", default=10, show_default=True)
@click.option("--repeats", default=10, show_default=True)
@click.option("--out", "out_dir", default=".", show_default=True)
def tune(data_path, response, categorical, q, trees, seed, folds, repeats, out_dir):
    """Tune the selection threshold; writes pareto.csv and figures."""
    params = _forest_params(q, trees, seed)
    data = _load(data_path, response, categorical)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    result = tune_p0(data, params, k=folds, repeats=repeats, seed=seed)
    _write_pareto(result, out)
    report = result.evaluation
    _evaluation_csv(report, Path(data_path).stem, out / "tuned_evaluation.csv")
    click.echo(
        f"tuned p0 = {result.p0:.6g} (size {report.model_size:.1f}, "
        f"error {report.unexplained_variance:.3f}, "
        f"stability {report.stability:.3f})"
    )


@main.command()
@click.option("--data", "data_path", required=True)
@click.option("--response", required=True)
@click.option("--categorical", multiple=True)
@click.option("--q", default=10, show_default=True)
@click.option("--p0", type=float, required=True)
@click.option("--trees", default=ADAPTIVE, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--folds", default=10, show_default=True)
@click.option("--repeats", default=1, show_default=True)
@click.option("--out", "out_dir", default=".", show_default=True)
def stability(data_path, response, categorical, q, p0, trees, seed, folds, repeats, out_dir):
    """Cross-validated stability / error / size report at a fixed threshold."""
    params = _forest_params(q, trees, seed)
    data = _load(data_path, response, categorical)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report = cv_evaluate(data, p0, params, k=folds, repeats=repeats, seed=seed)
    (out / "stability.json").write_text(json.dumps(report.__dict__, indent=2))
    _evaluation_csv(report, Path(data_path).stem, out / "stability.csv")
    click.echo(
        f"stability {report.stability:.3f}, error "
        f"{report.unexplained_variance:.3f}, size {report.model_size:.1f}"
    )


def _benchmark_one(entry: dict, base: Path, q, trees, seed, folds, repeats,
                   baseline_trees, out: Path) -> list[dict]:
    name = entry["name"]
    data = load_dataset(
        base / entry["path"],
        response_column=entry["response"],
        categorical_columns=tuple(entry.get("categorical", [])),
    )
    params = _forest_params(q, trees, seed)
    started = time.perf_counter()
    result = tune_p0(data, params, k=folds, repeats=repeats, seed=seed)
    _write_pareto(result, out, stem=f"{name}_pareto")
    report = result.evaluation
    sirus_row = report.to_row(name)
    sirus_row["method"] = "sirus"
    sirus_row["seconds"] = round(time.perf_counter() - started, 2)

    started = time.perf_counter()
    baseline_params = ForestParams(num_trees=baseline_trees, q=q, seed=seed)
    from .data import compute_quantile_grid, kfold_split

    folds_assignment = kfold_split(data.n, folds, seed=seed)
    pooled = np.empty(data.n)
    for fold in range(folds):
        train = folds_assignment.train_rows(fold)
        test = folds_assignment.test_rows(fold)
        subset = data.subset(train)
        grid = compute_quantile_grid(subset, q)
        pooled[test] = full_depth_forest_predict(
            subset, grid, baseline_params, data.x[test]
        )
    forest_row = {
        "dataset": name,
        "method": "forest",
        "p0": "",
        "size": "",
        "stability": "",
        "error": unexplained_variance(pooled, data.y),
        "M": baseline_trees,
        "seed": seed,
        "seconds": round(time.perf_counter() - started, 2),
    }
    return [sirus_row, forest_row]


@main.command()
@click.option("--manifest", "manifest_path", required=True,
              help="JSON list of {name, path, response, categorical}")
@click.option("--q", default=10, show_default=True)
@click.option("--trees", default=ADAPTIVE, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--folds", default=10, show_default=True)
@click.option("--repeats", default=10, show_default=True)
@click.option("--baseline-trees", default=300, show_default=True,
              help="tree count of the full-depth forest baseline")
@click.option("--out", "out_dir", default=".", show_default=True)
def benchmark(manifest_path, q, trees, seed, folds, repeats, baseline_trees, out_dir):
    """Tuned evaluation plus forest baseline for every manifest dataset."""
    try:
        entries = json.loads(Path(manifest_path).read_text())
    except FileNotFoundError:
        raise DataError(f"manifest not found: {manifest_path}")
    base = Path(manifest_path).parent
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows: list[dict] = []
    failures = 0
    for entry in entries:
        try:
            rows.extend(
                _benchmark_one(entry, base, q, trees, seed, folds, repeats,
                               baseline_trees, out)
            )
        except (SirusError, OSError) as exc:
            failures += 1
            click.echo(f"dataset {entry.get('name', '?')} failed: {exc}", err=True)
    fieldnames = ["dataset", "method", "p0", "size", "stability", "error",
                  "M", "seed", "seconds"]
    with open(out / "results.csv", "w", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)
    if rows:
        from .plots import save_benchmark_plot

        numeric = [r for r in rows if isinstance(r["error"], float)]
        save_benchmark_plot(numeric, out / "results.png")
    click.echo(f"wrote {out / 'results.csv'} ({len(rows)} rows)")
    if failures:
        sys.exit(EXIT_RUNTIME_ERROR)


def run() -> None:
    try:
        main(standalone_mode=False)
    except click.ClickException as exc:
        exc.show()
        sys.exit(2)
    except click.Abort:
        sys.exit(2)
    except DataError as exc:
        click.echo(f"data error: {exc}", err=True)
        sys.exit(EXIT_DATA_ERROR)
    except SirusError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_RUNTIME_ERROR)


if __name__ == "__main__":
    run()
