"""Problem file I/O.

A problem file is JSON: either the bare problem object or
{"problem": {...}, "metadata": {...}}.  Loading validates structure and
runs the sampling certificates (piece consistency and convexity) with a
fixed seed; certificate failures abort the load.
"""

import json

import numpy as np

from .errors import ParseError, PLQError, ValidationError
from .kkt import CompositeProblem
from .plq import PLQFunction, check_consistency, check_convexity


def load_problem(path, check_certificates: bool = True):
    """Parse and validate a problem file; returns (problem, metadata)."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    obj = raw.get("problem", raw)
    metadata = raw.get("metadata", {})
    for key in ("phi", "Phi", "g", "Theta"):
        if key not in obj:
            raise ParseError(f"{path}: missing field {key!r}")
    try:
        problem = CompositeProblem.from_dict(obj)
    except ValidationError:
        raise
    except PLQError as exc:
        raise ValidationError(str(exc)) from exc
    except (KeyError, TypeError, IndexError) as exc:
        raise ParseError(f"{path}: malformed field ({exc})") from exc
    if check_certificates and isinstance(problem.g, PLQFunction):
        rng = np.random.default_rng(20240 + len(problem.g.pieces))
        ok, why = check_consistency(problem.g, rng)
        if not ok:
            raise ValidationError(f"piece consistency certificate failed: {why}")
        ok, why = check_convexity(problem.g, rng)
        if not ok:
            raise ValidationError(f"convexity certificate failed: {why}")
    return problem, metadata


def save_problem(path, problem: CompositeProblem, metadata=None):
    """Write a problem (and optional sidecar metadata) as JSON."""
    payload = {"problem": problem.to_dict()}
    if metadata:
        payload["metadata"] = metadata
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
