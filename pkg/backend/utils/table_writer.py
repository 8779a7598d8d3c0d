"""
Result Table Writer
Turns simulation cells into the three result tables (CSV and markdown)
"""

import logging
from pathlib import Path
from typing import Dict, List, Sequence

import pandas as pd

from utils.schema import CellResult, Estimand, EstimandSummary, PriorMethod

logger = logging.getLogger(__name__)

# Full round-trip precision for CSV output
CSV_FLOAT_FORMAT = "%.17g"

TABLE_NAMES = ("table1", "table2", "table3")

# Markdown display precision by column prefix
MARKDOWN_FORMATS = {
    "mean_se": "{:.4f}",
    "mean": "{:.1f}",
    "variance": "{:.6f}",
    "pre": "{:.1f}",
    "rb_se": "{:.4f}",
    "rb": "{:.4f}",
    "z": "{:.2f}",
    "bias_se": "{:.6f}",
    "bias": "{:.6f}",
    "analytic_bias": "{:.6f}",
    "alt_rb": "{:.4f}",
    "length": "{:.4f}",
    "coverage_se": "{:.2f}",
    "coverage": "{:.1f}",
    "df": "{:.2f}",
}


def _methods(results: Sequence[CellResult]) -> List[PriorMethod]:
    seen: List[PriorMethod] = []
    for cell in results:
        for summary in cell.summaries:
            if summary.method not in seen:
                seen.append(summary.method)
    return seen


def _estimands(results: Sequence[CellResult]) -> List[Estimand]:
    seen: List[Estimand] = []
    for cell in results:
        for summary in cell.summaries:
            if summary.estimand not in seen:
                seen.append(summary.estimand)
    return seen


def _table1_columns(s: EstimandSummary) -> Dict[str, float]:
    columns = {"mean": s.mc_mean, "mean_se": s.mc_mean_se, "variance": s.mc_variance}
    if s.pre_percent is not None:
        columns["pre"] = s.pre_percent
    return columns


def _table2_columns(s: EstimandSummary) -> Dict[str, float]:
    return {
        "rb": s.relative_bias,
        "rb_se": s.empirical_bias_se / s.mc_variance,
        "z": s.z_statistic,
        "bias": s.empirical_bias,
        "bias_se": s.empirical_bias_se,
        "analytic_bias": s.analytic_bias,
        "alt_rb": s.alternative_relative_bias,
    }


def _table3_columns(s: EstimandSummary) -> Dict[str, float]:
    return {
        "length": s.mean_ci_length,
        "coverage": s.coverage_percent,
        "coverage_se": s.coverage_se,
        "df": s.mean_df,
    }


COLUMN_BUILDERS = {
    "table1": _table1_columns,
    "table2": _table2_columns,
    "table3": _table3_columns,
}


class TableWriter:
    """Build and write the mean/variance/PRE, relative-bias and interval tables"""

    @staticmethod
    def build_tables(results: Sequence[CellResult]) -> Dict[str, pd.DataFrame]:
        """
        One row per (parameter, n, r/n), one column per statistic and method.

        Args:
            results: Simulated cells, in the order rows should appear within a parameter

        Returns:
            Dict mapping table name to DataFrame
        """
        methods = _methods(results)
        estimands = _estimands(results)
        tables = {}
        for name in TABLE_NAMES:
            builder = COLUMN_BUILDERS[name]
            rows = []
            for estimand in estimands:
                for cell in results:
                    row = {"parameter": estimand.value, "n": cell.n, "r_over_n": cell.rate}
                    for method in methods:
                        try:
                            summary = cell.get(estimand, method)
                        except KeyError:
                            continue
                        for key, value in builder(summary).items():
                            row[f"{key}_{method.value}"] = value
                    rows.append(row)
            # statistic-major column order: mean_sw, mean_new, variance_sw, ...
            frame = pd.DataFrame(rows)
            ordered = ["parameter", "n", "r_over_n"]
            stats = [c for c in frame.columns if c not in ordered]
            stat_names = list(dict.fromkeys(c.rsplit("_", 1)[0] for c in stats))
            for stat in stat_names:
                ordered.extend(f"{stat}_{m.value}" for m in methods if f"{stat}_{m.value}" in frame.columns)
            tables[name] = frame[ordered]
        return tables

    @staticmethod
    def write_tables(results: Sequence[CellResult], out_dir: str) -> Dict[str, Path]:
        """Write table1.csv, table2.csv and table3.csv at full precision"""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {}
        for name, frame in TableWriter.build_tables(results).items():
            path = out / f"{name}.csv"
            frame.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT, encoding="utf-8", lineterminator="\n")
            paths[name] = path
            logger.info(f"Wrote {path} ({len(frame)} rows)")
        return paths

    @staticmethod
    def render_markdown(tables: Dict[str, pd.DataFrame]) -> str:
        """Human-readable rendering, rounded per statistic"""
        sections = []
        for name, frame in tables.items():
            header = list(frame.columns)
            lines = [f"## {name}", "", "| " + " | ".join(header) + " |",
                     "|" + "|".join("---" for _ in header) + "|"]
            for record in frame.to_dict(orient="records"):
                lines.append("| " + " | ".join(_format_cell(col, record[col]) for col in header) + " |")
            sections.append("\n".join(lines))
        return "\n\n".join(sections) + "\n"


def _format_cell(column: str, value) -> str:
    if isinstance(value, str):
        return value
    if pd.isna(value):
        return ""
    if column == "n":
        return str(int(value))
    if column == "r_over_n":
        return f"{value:g}"
    stat = column.rsplit("_", 1)[0]
    return MARKDOWN_FORMATS.get(stat, "{:.6g}").format(value)
