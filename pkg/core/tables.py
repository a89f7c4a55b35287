"""
Box-drawn terminal tables and Markdown tables for command summaries.
"""

import os
from typing import Any, List

import numpy as np
import pandas as pd


def _cell(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "PASS" if value else "FAIL"
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


class TableGenerator:
    """Collects rows and renders them for the terminal or as Markdown."""

    def __init__(self, title: str = ""):
        self.title = title
        self.headers: List[str] = []
        self.rows: List[List[str]] = []
        self.column_widths: List[int] = []

    def set_headers(self, headers: List[str]):
        self.headers = [str(h) for h in headers]
        self._calculate_column_widths()

    def add_row(self, row: List[Any]):
        self.rows.append([_cell(c) for c in row])
        self._calculate_column_widths()

    def add_rows(self, rows: List[List[Any]]):
        self.rows.extend([_cell(c) for c in row] for row in rows)
        self._calculate_column_widths()

    @classmethod
    def from_frame(cls, frame: pd.DataFrame, title: str = "") -> "TableGenerator":
        table = cls(title)
        table.set_headers(list(frame.columns))
        table.add_rows(frame.itertuples(index=False, name=None))
        return table

    def _calculate_column_widths(self):
        all_rows = ([self.headers] if self.headers else []) + self.rows
        if not all_rows:
            return
        widths = [0] * max(len(r) for r in all_rows)
        for row in all_rows:
            for i, cell in enumerate(row):
                widths[i] = max(widths[i], len(cell))
        self.column_widths = [max(w, 3) for w in widths]

    def _line(self, cells: List[str]) -> str:
        padded = [c.ljust(w) for c, w in zip(cells, self.column_widths)]
        return "│ " + " │ ".join(padded) + " │"

    def _rule(self, left: str, mid: str, right: str) -> str:
        return left + mid.join("─" * (w + 2) for w in self.column_widths) + right

    def generate_terminal_table(self) -> str:
        if not self.headers and not self.rows:
            return "(empty table)"
        parts = []
        if self.title:
            parts.append(self.title)
        parts.append(self._rule("┌", "┬", "┐"))
        if self.headers:
            parts.append(self._line(self.headers))
            parts.append(self._rule("├", "┼", "┤"))
        parts.extend(self._line(row) for row in self.rows)
        parts.append(self._rule("└", "┴", "┘"))
        return "\n".join(parts)

    def generate_markdown_table(self) -> str:
        if not self.headers:
            return ""
        lines = []
        if self.title:
            lines += [f"## {self.title}", ""]
        lines.append("| " + " | ".join(self.headers) + " |")
        lines.append("|" + "|".join("---" for _ in self.headers) + "|")
        for row in self.rows:
            lines.append("| " + " | ".join(c.replace("|", "\\|") for c in row) + " |")
        return "\n".join(lines)

    def save_to_file(self, filename: str, format_type: str = "markdown"):
        os.makedirs(os.path.dirname(filename) or ".", exist_ok=True)
        text = self.generate_markdown_table() if format_type == "markdown" else self.generate_terminal_table()
        with open(filename, "w", encoding="utf-8") as f:
            f.write(text + "\n")
