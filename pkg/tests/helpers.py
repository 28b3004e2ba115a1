"""Shared fixtures-by-hand for CLI / pipeline / ablation tests."""

import csv


def write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    return path


def identity_pair(directory, n_cols=3, n_rows=20, decorate_source=True):
    """Source/target/gt CSVs where source names differ only by case and punctuation."""
    target_names = [f"col_{i}" for i in range(n_cols)]
    source_names = [f"Col {i}" for i in range(n_cols)] if decorate_source else list(target_names)
    rows = [[f"v{i}_{r}" for i in range(n_cols)] for r in range(n_rows)]
    source = write_csv(directory / "source.csv", source_names, rows)
    target = write_csv(directory / "target.csv", target_names, rows)
    gt = write_csv(
        directory / "gt.csv",
        ["source_column", "target_column"],
        [[source_names[i], target_names[i]] for i in range(n_cols)],
    )
    return source, target, gt


class ScriptedLlmClient:
    """Answers every prompt by scoring the listed target columns 0.9, 0.8, ...

    Reads the candidate names back out of the prompt's Target Columns block,
    so it works for any source column without pre-scripting.
    """

    def complete(self, prompt: str) -> str:
        lines = prompt.splitlines()
        start = len(lines) - 1 - lines[::-1].index("Target Columns:")
        names = []
        for line in lines[start + 1 :]:
            if not line.startswith("Column: "):
                break
            names.append(line[len("Column: ") : line.index(", Sample values:")])
        return "; ".join(f"{name}({max(0.9 - 0.1 * i, 0.01):.2f})" for i, name in enumerate(names))
