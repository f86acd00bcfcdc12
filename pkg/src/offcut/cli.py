"""Command line entry points: offcut optimize / offcut serve."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .document import build_runtime, load_design
from .layout import boards_wastage
from .optimizer import OptimConfig, SearchContext, min_wastage, select_suggestions, try_pack
from .svgplan import export_svg


def _optimize(args) -> int:
    raw = Path(args.design).read_bytes()
    doc = load_design(raw)
    runtime = build_runtime(doc)
    config = OptimConfig(
        seed=args.seed,
        generations=args.generations,
        keep=args.keep,
        improve_iters=args.improve_iters,
        workers=args.workers,
        raster_res=args.raster_res,
        boards_mm=runtime.boards_mm,
        suggestions=args.suggestions,
    )
    ctx = SearchContext(runtime.evaluator, runtime.system, runtime.spec, config)
    identity = tuple(range(runtime.evaluator.part_count))
    start = boards_wastage(try_pack(ctx, runtime.x0.values, identity))
    results = min_wastage(ctx, runtime.x0.values)
    if not results:
        print("no feasible layout: every exploration overflowed the boards", file=sys.stderr)
        return 1
    picked = select_suggestions(results, ctx, args.suggestions)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report = {
        "seed": args.seed,
        "raster_res_mm": args.raster_res,
        "start_wastage": start,
        "suggestions": [],
    }
    for k, res in enumerate(picked):
        parts = runtime.evaluator.evaluate(res.params.values)
        svgs = export_svg(res.layouts, parts, runtime.boards_mm, args.raster_res)
        svg_files = []
        for b, svg in enumerate(svgs):
            name = f"suggestion-{k}.board-{b}.plan.svg"
            (out / name).write_text(svg)
            svg_files.append(name)
        report["suggestions"].append(
            {
                "id": k,
                "wastage": res.wastage,
                "ordering": list(res.ordering),
                "params": {
                    n: float(v)
                    for n, v in zip(res.params.names, res.params.values)
                },
                "path_length": len(res.path),
                "boards": [
                    [
                        {"part": p.part, "u": p.u, "v": p.v, "o": p.o}
                        for p in lt.placements
                    ]
                    for lt in res.layouts
                ],
                "svg": svg_files,
            }
        )
    result_path = out / "result.json"
    result_path.write_text(json.dumps(report, sort_keys=True, indent=2) + "\n")
    print(f"start wastage {start:.4f} -> best {picked[0].wastage:.4f}; wrote {result_path}")
    return 0


def _serve(args) -> int:
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port, log_level="warning")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="offcut", description="waste-minimizing plank design")
    sub = parser.add_subparsers(dest="command", required=True)

    opt = sub.add_parser("optimize", help="optimize a design file and write suggestions")
    opt.add_argument("design", help="path to a .design.json file")
    opt.add_argument("--seed", type=int, default=0)
    opt.add_argument("--out", default="offcut-out")
    opt.add_argument("--generations", type=int, default=3)
    opt.add_argument("--keep", type=int, default=8)
    opt.add_argument("--improve-iters", type=int, default=20)
    opt.add_argument("--workers", type=int, default=8)
    opt.add_argument("--raster-res", type=float, default=2.0)
    opt.add_argument("--suggestions", type=int, default=3)
    opt.set_defaults(func=_optimize)

    srv = sub.add_parser("serve", help="run the HTTP service")
    srv.add_argument("--host", default="127.0.0.1")
    srv.add_argument("--port", type=int, default=8750)
    srv.set_defaults(func=_serve)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
