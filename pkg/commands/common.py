"""
Helpers shared by the command handlers: run scoping, manifests, output
writers and constraint resolution.
"""

import csv
import hashlib
import io
import sys
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence

import orjson

from mqra.approximant import Constraint, Recipe, standard_constraints
from mqra.core import ProblemFamily, validate_family
from mqra.odesolve import ShootingConfig
from mqra.reference import get_recipe
from utils.config import get_settings
from utils.exceptions import InvalidInputError, MqraError, exit_code_for
from utils.structured_logger import RunContext, create_run_context
from utils.validation import FamilyModel, RunManifest, parse_node_tokens, parse_replacement

JSON_OPTIONS = orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS | orjson.OPT_SERIALIZE_NUMPY


def run_id_for(command: str, args) -> str:
    """Digest of the invocation, so reruns share an id."""
    content = orjson.dumps({k: str(v) for k, v in sorted(vars(args).items()) if k != "handler"})
    return hashlib.sha256(command.encode() + content).hexdigest()[:16]


def run_command(command: str, args, body: Callable[[RunContext], None]) -> int:
    """
    Run a command body inside a RunContext and translate failures to exit codes.

    Errors are written to stderr as one JSON object.
    """
    context = create_run_context(run_id_for(command, args), command)
    try:
        with context:
            body(context)
        return 0
    except Exception as e:
        payload = e.to_dict() if isinstance(e, MqraError) else {
            "error": str(e), "error_code": type(e).__name__, "details": {}
        }
        sys.stderr.write(orjson.dumps(payload, default=str).decode() + "\n")
        return exit_code_for(e)


def shooting_config(args) -> ShootingConfig:
    return ShootingConfig.from_settings(
        h=getattr(args, "h", None),
        x_max=getattr(args, "x_max", None),
        tol_e=getattr(args, "tol_e", None),
        decay_tol=getattr(args, "decay_tol", None),
    )


def solver_block(config: ShootingConfig, **extra) -> Dict[str, Any]:
    settings = get_settings()
    block = {
        "h": config.h,
        "x_max": config.x_max,
        "tol_e": config.tol_e,
        "decay_tol": config.decay_tol,
        "precision": settings.precision,
    }
    block.update(extra)
    return {k: v for k, v in block.items() if v is not None}


def build_manifest(command: str, family: Optional[ProblemFamily] = None, levels: Sequence[int] = (),
                   constraints: Sequence[Constraint] = (), solver: Optional[Dict[str, Any]] = None,
                   outputs: Sequence[str] = ()) -> RunManifest:
    return RunManifest(
        command=command,
        family=FamilyModel(a=family.a, b=family.b) if family else None,
        levels=list(levels),
        constraints=[c.token for c in constraints],
        solver=solver or {},
        outputs=[str(o) for o in outputs],
    )


def dump_json(document: Any) -> bytes:
    return orjson.dumps(document, option=JSON_OPTIONS)


def emit(data: bytes, out: Optional[str]) -> None:
    """Write to a file, or to stdout when no path is given."""
    if out:
        path = Path(out)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(data)
    else:
        sys.stdout.write(data.decode())
        if not data.endswith(b"\n"):
            sys.stdout.write("\n")


def fmt(value: Any) -> str:
    """Fixed 12-significant-digit rendering for CSV cells."""
    if isinstance(value, float):
        return f"{value:.12g}"
    return "" if value is None else str(value)


def csv_bytes(header: Sequence[str], rows: Iterable[Sequence[Any]], manifest: Optional[RunManifest] = None) -> bytes:
    buffer = io.StringIO()
    if manifest is not None:
        buffer.write("# manifest " + orjson.dumps(manifest.model_dump(exclude_none=True),
                                                   option=orjson.OPT_SORT_KEYS).decode() + "\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    return buffer.getvalue().encode()


def parse_replace_flags(values: Optional[List[str]]) -> Dict[int, tuple]:
    """'K=token' pairs from the normalized --replace-power-<K>-by flags."""
    replacements: Dict[int, tuple] = {}
    for value in values or []:
        position, _, token = value.partition("=")
        if not position.isdigit() or not token:
            raise InvalidInputError("Use --replace-power-<K>-by d<k>@<alpha>", field="replace", value=value)
        replacements[int(position)] = parse_replacement(token)
    return replacements


def resolve_constraints(args) -> tuple:
    """
    (family, N, mu, constraints) from a --recipe, overridden by explicit flags.

    Returns:
        Tuple of ProblemFamily, degree, mu and the constraint list
    """
    recipe: Optional[Recipe] = get_recipe(args.recipe) if getattr(args, "recipe", None) else None

    def pick(name: str, fallback=None):
        value = getattr(args, name, None)
        if value is not None:
            return value
        if recipe is not None:
            return getattr(recipe, name)
        if fallback is not None:
            return fallback
        raise InvalidInputError(f"--{name.replace('_', '-')} is required without --recipe", field=name)

    family = validate_family(pick("a"), pick("b"))
    N = pick("N")
    mu = getattr(args, "mu", None) if getattr(args, "mu", None) is not None else (recipe.mu if recipe else None)
    powers = pick("powers", 0)
    asymptotic = pick("asymptotic", 0)

    if getattr(args, "nodes", None):
        nodes = parse_node_tokens(args.nodes)
    elif recipe is not None:
        nodes = parse_node_tokens(",".join(recipe.nodes)) if recipe.nodes else []
    else:
        nodes = []

    replacements = parse_replace_flags(getattr(args, "replace_power", None))
    if not replacements and recipe is not None:
        replacements = {k: parse_replacement(v) for k, v in recipe.replacements.items()}

    constraints = standard_constraints(powers, asymptotic, nodes, replacements)
    return family, N, mu, constraints
