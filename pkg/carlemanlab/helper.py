import csv
import hashlib
import json
import math
import os
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np


def to_plain(obj):
    """
    Convert numpy scalars/arrays, tuples and non-finite floats into plain JSON-compatible values.

    :param obj: Any nested structure of dicts, lists, numbers and strings
    :return: The same structure with only JSON types
    """
    if isinstance(obj, dict):
        return {str(k): to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_plain(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    if isinstance(obj, Path):
        return str(obj)
    return obj


def dumps(obj) -> str:
    """
    Deterministic pretty JSON.

    :param obj: JSON-compatible structure (numpy values allowed)
    :return: JSON text with sorted keys and a trailing newline
    """
    return json.dumps(to_plain(obj), indent=2, sort_keys=True) + "\n"


def write_json(path: Union[str, Path], obj) -> Path:
    """
    Write a JSON document.

    :param path: Target file
    :param obj: JSON-compatible structure
    :return: The path written
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(obj))
    return path


def format_number(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path: Union[str, Path], header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    """
    Write a RFC-4180 CSV file with reproducible number formatting.

    :param path: Target file
    :param header: Column names
    :param rows: Row sequences
    :return: The path written
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_number(v) for v in row])
    return path


def read_csv(path: Union[str, Path]) -> tuple:
    """
    Read a CSV file written by :func:`write_csv`.

    :param path: Source file
    :return: (header, rows) with rows as lists of strings
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return header, [row for row in reader]


def rle_encode(mask: np.ndarray) -> list:
    """
    Run-length encode a boolean mask in row-major order. The first run always counts False values
    (and may be 0).

    :param mask: Boolean array
    :return: List of run lengths
    """
    flat = np.asarray(mask, dtype=bool).ravel()
    if flat.size == 0:
        return []
    changes = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], changes, [flat.size]))
    runs = np.diff(bounds).tolist()
    if flat[0]:
        runs = [0] + runs
    return [int(r) for r in runs]


def rle_decode(runs: Sequence[int], shape: Sequence[int]) -> np.ndarray:
    """
    Inverse of :func:`rle_encode`.

    :param runs: Run lengths, first run counts False values
    :param shape: Shape of the mask
    :return: Boolean array
    """
    values = np.zeros(len(runs), dtype=bool)
    values[1::2] = True
    flat = np.repeat(values, np.asarray(runs, dtype=int))
    if flat.size != int(np.prod(shape)):
        raise ValueError("run lengths do not match shape {}".format(tuple(shape)))
    return flat.reshape(tuple(shape))


def config_hash(document: dict) -> str:
    """
    SHA-256 of the canonical JSON form of a config document.

    :param document: Config as dict
    :return: Hex digest
    """
    canonical = json.dumps(to_plain(document), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def package_versions() -> dict:
    """
    Versions of the numerical stack, recorded in every manifest.

    :return: Dict package -> version string
    """
    import scipy
    import carlemanlab

    return {
        "carlemanlab": carlemanlab.__version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    }


def ensure_directory(path: Union[str, Path]) -> Path:
    path = Path(path)
    os.makedirs(path, exist_ok=True)
    return path


def trapezoid_weights(n: int, step: float) -> np.ndarray:
    """
    1D trapezoidal quadrature weights.

    :param n: Number of nodes
    :param step: Node spacing
    :return: Array of n weights
    """
    w = np.full(n, float(step))
    if n > 1:
        w[0] = w[-1] = 0.5 * step
    return w


def outer_weights(weights: Sequence[np.ndarray]) -> np.ndarray:
    """
    Tensor product of 1D quadrature weights.
    """
    result = np.ones(())
    for w in weights:
        result = np.multiply.outer(result, w)
    return result


def file_digest(path: Union[str, Path]) -> str:
    """SHA-256 of a file's bytes."""
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def convergence_order(errors: Sequence[float], spacings: Sequence[float]) -> float:
    """
    Least-squares slope of log(error) against log(spacing).

    :param errors: Positive errors, one per refinement level
    :param spacings: Grid spacings or time steps of the same levels
    :return: Observed order

    :Example:

    >>> round(convergence_order([4e-2, 1e-2, 2.5e-3], [0.2, 0.1, 0.05]), 6)
    2.0
    """
    errors = np.asarray(errors, dtype=float)
    spacings = np.asarray(spacings, dtype=float)
    if len(errors) < 2 or len(errors) != len(spacings):
        raise ValueError("need at least two levels with one spacing each")
    if np.any(errors <= 0) or np.any(spacings <= 0):
        raise ValueError("errors and spacings must be positive")
    slope, _ = np.polyfit(np.log(spacings), np.log(errors), 1)
    return float(slope)
