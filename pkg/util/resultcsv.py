import csv
import math
import os
from typing import Iterable, List

import numpy as np
import simplejson as json


def numpy_encoder(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    raise TypeError("Type %s not serializable" % type(obj))


def dumps(value) -> str:
    return json.dumps(value, default=numpy_encoder, allow_nan=True)


def write_json(path: str, value):
    with open(path, "w") as file:
        json.dump(value, file, default=numpy_encoder, allow_nan=True, indent=2, sort_keys=True)


def _cell(value):
    if value is None:
        return ""
    if isinstance(value, (list, tuple, dict, np.ndarray)):
        return dumps(value)
    if isinstance(value, (float, np.floating)):
        return repr(float(value)) if not math.isnan(value) else "nan"
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    return value


class ResultCSV:
    """
    Row-by-row CSV writer for run artifacts (verdict tables, traces, score curves, trajectories).

    While a row batch is in flight a `<file>_current` marker names the item being computed, so an
    interrupted run shows where it stopped.
    """

    def __init__(self, filename: str, fieldnames: List[str], append: bool = False):
        self.filename = filename
        self.filename_current = filename + "_current"
        self.fieldnames = list(fieldnames)
        self.append = append

    def __enter__(self):
        self.append = self.append and os.path.exists(self.filename)
        self.file = open(self.filename, "a" if self.append else "w", newline="")

        self.writer = csv.DictWriter(self.file, fieldnames=self.fieldnames, extrasaction="raise")
        if not self.append:
            self.writer.writeheader()
            self.file.flush()

        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.file.close()
        try:
            os.remove(self.filename_current)
        except FileNotFoundError:
            pass

    def start(self, item: str):
        with open(self.filename_current, "w") as file:
            file.write(item)

    def row(self, values: dict):
        self.writer.writerow({k: _cell(values.get(k)) for k in self.fieldnames})
        self.file.flush()

    def rows(self, rows: Iterable[dict]):
        for values in rows:
            self.row(values)


def write_columns(filename: str, columns: dict):
    """
    Writes equally long 1-d arrays as the columns of a CSV file.
    """
    names = list(columns.keys())
    arrays = [np.asarray(columns[n]) for n in names]
    with ResultCSV(filename, names) as out:
        for i in range(len(arrays[0]) if arrays else 0):
            out.row({n: a[i] for n, a in zip(names, arrays)})
