import csv


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.17g}"
    return v


def write_rows(path, header, rows) -> None:
    """Write a CSV with a header row; floats at full double precision."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
