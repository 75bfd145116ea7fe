"""`vinstruct` command line.

Exit codes: 0 success, 1 usage error, 2 data error. Data goes to stdout,
diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import logging
import sys
from typing import Any, Callable, List, Optional, Sequence

from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

from vinstruct import __version__
from vinstruct.data.datastore import (
    canonical_line,
    read_manifest,
    read_records,
    write_json_lines,
    write_plan,
    write_records,
)
from vinstruct.data.mixture import HISTOGRAM_BUCKET, compile_mixture, stats, subsample
from vinstruct.data.schema import MAX_SEED
from vinstruct.data.tokens import make_counter
from vinstruct.data.validate import validate_records, write_report
from vinstruct.errors import VinstructError
from vinstruct.evaluation.prompts import DEFAULT_REGISTRY, PromptRegistry
from vinstruct.sampling.batching import plan_batches
from vinstruct.tiling.featuremap import EncoderProfile, budget_records, build_layout
from vinstruct.tiling.geometry import (
    DEFAULT_TILE_SIDE,
    ImageDim,
    default_candidates,
    plan_tiling,
    select_resolution,
)

logger = logging.getLogger("vinstruct.cli")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2

CONSOLE_WIDTH = 100


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(f"{self.prog}: error: {message}")


def _positive_int(value: str) -> int:
    try:
        n = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {value!r}") from None
    if n < 1:
        raise argparse.ArgumentTypeError(f"must be positive, got {n}")
    return n


def _seed(value: str) -> int:
    try:
        n = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer seed, got {value!r}") from None
    if not 0 <= n <= MAX_SEED:
        raise argparse.ArgumentTypeError(f"seed must be in [0, 2**64), got {n}")
    return n


def _ratio(value: str) -> float:
    try:
        r = float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {value!r}") from None
    if not 0.0 < r <= 1.0:
        raise argparse.ArgumentTypeError(f"ratio must be in (0, 1], got {r}")
    return r


def _stdout() -> Console:
    return Console(file=sys.stdout, width=CONSOLE_WIDTH, color_system=None, highlight=False,
                   emoji=False)


def _configure_logging(level: str) -> None:
    handler = RichHandler(
        console=Console(stderr=True, width=CONSOLE_WIDTH),
        show_time=False,
        show_path=False,
    )
    logging.basicConfig(level=level.upper(), format="%(message)s", handlers=[handler], force=True)


def _kv_table(title: str, rows: Sequence[tuple[str, Any]]) -> Table:
    table = Table(title=title, show_header=False)
    table.add_column("key")
    table.add_column("value", justify="right")
    for k, v in rows:
        table.add_row(k, str(v))
    return table


def _tile_profile(tile_side: int) -> EncoderProfile:
    try:
        return EncoderProfile(tile_side=tile_side)
    except ValueError as e:
        raise UsageError(f"--tile-side: {e}") from e


# ---- commands ------------------------------------------------------------------


def cmd_plan(args: argparse.Namespace, out: Console) -> int:
    profile = _tile_profile(args.tile_side)
    dim = ImageDim(width=args.width, height=args.height)
    grid = select_resolution(dim, default_candidates(args.tile_side))
    plan = plan_tiling(dim, grid, args.tile_side)
    layout = build_layout(plan, profile)

    out.print(_kv_table(f"Tiling plan {dim.width}x{dim.height}", [
        ("grid", grid),
        ("canvas", f"{plan.canvas.width}x{plan.canvas.height}"),
        ("scaled content", f"{plan.scaled_content.width}x{plan.scaled_content.height}"),
        ("padding l/r/t/b", f"{plan.pad_left}/{plan.pad_right}/{plan.pad_top}/{plan.pad_bottom}"),
        ("merged map", f"{layout.merged_rows}x{layout.merged_cols}"),
        ("kept rows", f"{layout.kept_row_count} from {layout.kept_row_start}"),
        ("kept cols", f"{layout.kept_col_count} from {layout.kept_col_start}"),
        ("global tokens", layout.global_tokens),
        ("high-res tokens", layout.highres_tokens),
        ("row-end tokens", layout.rowend_count),
        ("total tokens", layout.total_tokens),
    ]))
    out.out(canonical_line({"tiling": plan.to_record(), "layout": layout.to_record()}))
    if args.out:
        write_plan(plan, args.out)
    return EXIT_OK


def cmd_budget(args: argparse.Namespace, out: Console) -> int:
    profile = _tile_profile(args.tile_side)
    convs = [c for c in read_records(args.input) if c.image is not None]
    dims = [c.image.dim for c in convs]  # type: ignore[union-attr]
    layouts, summary = budget_records(dims, default_candidates(args.tile_side), profile)

    rec = summary.to_record()
    out.print(_kv_table("Visual token budget", [
        ("images", rec["images"]),
        ("total tokens", rec["total_tokens"]),
        ("mean tokens", rec["mean_tokens"]),
        ("max tokens", rec["max_tokens"]),
    ]))
    grids = Table(title="Grids")
    grids.add_column("grid")
    grids.add_column("images", justify="right")
    for g, n in rec["grid_counts"].items():
        grids.add_row(g, str(n))
    out.print(grids)
    out.out(canonical_line(rec))

    if args.out:
        write_json_lines(({"id": c.id, **lay.to_record()} for c, lay in zip(convs, layouts)),
                         args.out)
    return EXIT_OK


def cmd_compile(args: argparse.Namespace, out: Console) -> int:
    manifest = read_manifest(args.manifest)
    manifest = manifest.model_copy(update={"seed": args.seed})
    result = compile_mixture(manifest, counter=make_counter(args.tokenizer), n_jobs=args.jobs)
    digest = write_records(result.conversations, args.out)

    table = Table(title="Datasets")
    for col in ("dataset", "kind", "raw", "filtered", "truncated", "dropped", "capped", "emitted"):
        table.add_column(col, justify="left" if col in ("dataset", "kind") else "right")
    for d in result.datasets:
        table.add_row(d.name, d.kind, str(d.raw_records), str(d.filtered), str(d.truncated),
                      str(d.dropped_by_truncation), str(d.capped_away), str(d.emitted))
    out.print(table)

    if args.report:
        write_report({**result.report(), "sha256": digest}, args.report)

    out.out(f"sha256: {digest}")
    out.out(f"total: {result.total}")
    return EXIT_OK


def cmd_stats(args: argparse.Namespace, out: Console) -> int:
    st = stats(read_records(args.input), make_counter(args.tokenizer))

    sources = Table(title="Sources")
    sources.add_column("source")
    sources.add_column("conversations", justify="right")
    for name, n in st.per_source.items():
        sources.add_row(name, str(n))
    out.print(sources)

    hist = Table(title="Token lengths")
    hist.add_column("bucket")
    hist.add_column("conversations", justify="right")
    for start, n in st.histogram.items():
        hist.add_row(f"{start}-{start + HISTOGRAM_BUCKET - 1}", str(n))
    out.print(hist)

    out.out(f"total: {st.total}")
    out.out(f"visual: {st.per_modality['visual']}")
    out.out(f"text: {st.per_modality['text']}")
    out.out(f"max_tokens: {st.max_tokens}")
    out.out(canonical_line(st.to_dict()))
    return EXIT_OK


def cmd_batches(args: argparse.Namespace, out: Console) -> int:
    plan = plan_batches(read_records(args.input), args.batch_size, args.seed)
    if args.out:
        digest = write_plan(plan, args.out)
        out.out(f"sha256: {digest}")
    else:
        for b in plan.batches:
            out.out(canonical_line(b.to_record()))
    visual = sum(1 for b in plan.batches if b.modality == "visual")
    out.out(f"batches: {len(plan)} (visual={visual}, text={len(plan) - visual})")
    return EXIT_OK


def cmd_subsample(args: argparse.Namespace, out: Console) -> int:
    convs = read_records(args.input)
    kept = subsample(convs, args.ratio, args.seed)
    digest = write_records(kept, args.out)
    out.out(f"sha256: {digest}")
    out.out(f"kept: {len(kept)} of {len(convs)}")
    return EXIT_OK


def cmd_validate(args: argparse.Namespace, out: Console) -> int:
    result = validate_records(read_records(args.input, check=False),
                              dataset_name=str(args.input), report_path=args.report)
    for err in result.errors:
        out.out(f"- {err}")
    out.out(f"passed: {str(result.passed).lower()}")
    return EXIT_OK if result.passed else EXIT_DATA


def cmd_eval_prompt(args: argparse.Namespace, out: Console) -> int:
    registry = PromptRegistry.from_yaml(args.registry) if args.registry else DEFAULT_REGISTRY
    if args.export:
        registry.to_yaml(args.export)
    if args.list:
        table = Table(title="Benchmark prompts")
        table.add_column("benchmark")
        table.add_column("prompt")
        for rule in registry.rules:
            table.add_row(rule.benchmark, rule.prompt or "-")
        out.print(table)
        return EXIT_OK
    if args.question is not None:
        out.out(registry.apply(args.question, args.benchmark))
        return EXIT_OK
    prompt = registry.prompt(args.benchmark)
    if prompt is None:
        logger.info("%s has no response-format prompt", args.benchmark)
    else:
        out.out(prompt)
    return EXIT_OK


# ---- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="vinstruct",
        description="Any-resolution tiling plans and instruction-tuning mixtures.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default="WARNING",
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, fn: Callable[[argparse.Namespace, Console], int], help_: str
            ) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_)
        p.set_defaults(func=fn)
        return p

    p = add("plan", cmd_plan, "Tiling and token layout for one image size")
    p.add_argument("--width", type=_positive_int, required=True)
    p.add_argument("--height", type=_positive_int, required=True)
    p.add_argument("--tile-side", type=_positive_int, default=DEFAULT_TILE_SIDE)
    p.add_argument("--out", default=None, help="Write the tiling plan as one JSON line")

    p = add("budget", cmd_budget, "Visual token budget over a record stream")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--tile-side", type=_positive_int, default=DEFAULT_TILE_SIDE)
    p.add_argument("--out", default=None, help="Per-record layout plans (JSON Lines)")

    p = add("compile", cmd_compile, "Compile a mixture manifest into a record stream")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=_seed, required=True, help="Overrides the manifest seed")
    p.add_argument("--jobs", type=_positive_int, default=1)
    p.add_argument("--tokenizer", default=None, help="HF tokenizer name (default: whitespace)")
    p.add_argument("--report", default=None, help="Per-dataset compile report (JSON)")

    p = add("stats", cmd_stats, "Per-source counts and token-length histogram")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--tokenizer", default=None)

    p = add("batches", cmd_batches, "Modality-homogeneous batch plan")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--batch-size", type=_positive_int, required=True)
    p.add_argument("--seed", type=_seed, required=True)
    p.add_argument("--out", default=None)

    p = add("subsample", cmd_subsample, "Uniform subset of a record stream")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--ratio", type=_ratio, required=True)
    p.add_argument("--seed", type=_seed, required=True)
    p.add_argument("--out", required=True)

    p = add("validate", cmd_validate, "Structural checks over a record stream")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--report", default=None)

    p = add("eval-prompt", cmd_eval_prompt, "Response-format prompt for a benchmark")
    target = p.add_mutually_exclusive_group(required=True)
    target.add_argument("--benchmark")
    target.add_argument("--list", action="store_true")
    p.add_argument("--question", default=None, help="Print the question with the prompt applied")
    p.add_argument("--registry", default=None, help="YAML registry overriding the built-in one")
    p.add_argument("--export", default=None, help="Write the registry in use to this YAML file")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(e, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:  # --help / --version
        return int(e.code or 0)

    _configure_logging(args.log_level)
    out = _stdout()
    try:
        return int(args.func(args, out))
    except UsageError as e:
        print(f"vinstruct {args.command}: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (VinstructError, ValueError, OSError) as e:
        logger.error("%s", e)
        return EXIT_DATA


if __name__ == "__main__":
    raise SystemExit(main())
