"""Command-line front end: a thin client of the service.

    finslerlab geom      --config cfg.ini -x 0.1,0.2,0.3 -y 1,0,0 [--check]
    finslerlab invariants --config cfg.ini [--out DIR]
    finslerlab spectrum  --config cfg.ini [--m 10]
    finslerlab isospec   --config cfg.ini [--m 10] [--tol 1e-8]
    finslerlab probe     --config cfg.ini [--bootstrap EPS]
    finslerlab serve     [--host 127.0.0.1] [--port 8763]

Exit codes: 0 success, 2 config error, 3 numeric/identity failure,
4 convergence failure.  All CSV outputs carry a header row and a trailing
metadata comment block (tool version, config hash); reruns of the same
config are byte-identical.  ``--threads 1`` forces the reproducibility mode
(the pipeline is deterministic; the flag is recorded in outputs).
"""

from __future__ import annotations

import argparse
import os
import sys

from . import errors as E
from .client import ServiceClient
from .csvio import write_csv
from .runconfig import parse_config_file

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_CONVERGENCE = 4


def _parser():
    p = argparse.ArgumentParser(prog="finslerlab", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--server", default=None, help="remote service URL (default: in-process)")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required, help="config file path")
        sp.add_argument("--out", default=None, help="output directory (default from config)")
        sp.add_argument("--threads", type=int, default=1,
                        help="1 forces reproducibility mode (default)")
        sp.add_argument("--tol", type=float, default=None, help="tolerance override")

    sp = sub.add_parser("geom", help="geometry table at a point")
    common(sp)
    sp.add_argument("-x", required=True, help="chart point, comma separated")
    sp.add_argument("-y", required=True, help="direction, comma separated")
    sp.add_argument("--check", action="store_true", help="run the homogeneity/Euler suite")

    sp = sub.add_parser("invariants", help="heat-invariant table for the factor family")
    common(sp)

    sp = sub.add_parser("spectrum", help="discrete spectrum of the base metric")
    common(sp)
    sp.add_argument("--m", type=int, default=None, help="eigenvalue count")

    sp = sub.add_parser("isospec", help="isospectrality verdicts base vs deformed family")
    common(sp)
    sp.add_argument("--m", type=int, default=None)

    sp = sub.add_parser("probe", help="compactness probe (theorem hypotheses + envelopes)")
    common(sp)
    sp.add_argument("--bootstrap", type=float, default=None, metavar="EPS",
                    help="print the exponent bootstrap table for EPS and exit")

    sp = sub.add_parser("serve", help="run the HTTP service")
    sp.add_argument("--host", default="127.0.0.1")
    sp.add_argument("--port", type=int, default=8763)
    return p


def _vec(text):
    parts = [p for p in text.replace(",", " ").split() if p]
    if len(parts) != 3:
        raise E.ConfigError(f"expected 3 components, got {text!r}")
    return [float(p) for p in parts]


def _load(args):
    cfg = parse_config_file(args.config)
    if args.out:
        cfg.output_dir = args.out
    return cfg


def _meta(cfg, extra=None):
    meta = {"config_hash": cfg.config_hash()}
    meta.update(extra or {})
    return meta


def cmd_geom(client, args):
    cfg = _load(args)
    data = client.geometry_point(cfg, _vec(args.x), _vec(args.y), check=args.check)
    print(f"F                = {data['F']:.12g}")
    print(f"g                = {data['g']}")
    print(f"|A|              = {data['cartan_norm']:.12g}")
    print(f"G                = {data['sprayG']}")
    print(f"N                = {data['N']}")
    print(f"|Gamma|          = {data['gamma_norm']:.12g}")
    print(f"S-hat            = {data['scalar_curvature']:.12g}")
    print(f"chern route dev  = {data['chern_route_deviation']:.3e}")
    if args.check:
        status = "PASS" if data["check_passed"] else "FAIL"
        print(f"invariant suite  = {status} (max deviation {data['check_max_deviation']:.3e})")
        if not data["check_passed"]:
            return EXIT_NUMERIC
    path = os.path.join(cfg.output_dir, "geom.csv")
    write_csv(path, ["quantity", "value"], [
        ("F", data["F"]), ("cartan_norm", data["cartan_norm"]),
        ("gamma_norm", data["gamma_norm"]), ("scalar_curvature", data["scalar_curvature"]),
        ("chern_route_deviation", data["chern_route_deviation"]),
    ], _meta(cfg, {"x": args.x, "y": args.y}))
    print(f"wrote {path}")
    return EXIT_OK


def cmd_invariants(client, args):
    cfg = _load(args)
    if args.tol is not None:
        cfg.spectrum_tol = args.tol
    data = client.invariants(cfg)
    path = os.path.join(cfg.output_dir, "invariants.csv")
    header = ["factor", "a0", "a1", "a2", "err0", "err1", "err2", "a1_stilde_form"]
    write_csv(path, header, data["rows"], _meta(cfg))
    for row in data["rows"]:
        print(f"{row['factor']}: a0={row['a0']:.10g} a1={row['a1']:.10g} a2={row['a2']:.10g}")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_spectrum(client, args):
    cfg = _load(args)
    m = args.m or cfg.spectrum_m
    data = client.spectrum(cfg, m)
    path = os.path.join(cfg.output_dir, "spectrum.csv")
    rows = [
        {"index": i, "eigenvalue": ev, "residual": r}
        for i, (ev, r) in enumerate(zip(data["eigenvalues"], data["residuals"]))
    ]
    write_csv(path, ["index", "eigenvalue", "residual"], rows,
              _meta(cfg, {"method": data["method"],
                          "block_multiplicity": data["block_multiplicity"]}))
    print(f"first eigenvalues: {[round(v, 6) for v in data['eigenvalues'][:8]]}")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_isospec(client, args):
    cfg = _load(args)
    m = args.m or cfg.spectrum_m
    tol = args.tol if args.tol is not None else cfg.spectrum_tol
    data = client.isospectral(cfg, m, tol)
    path = os.path.join(cfg.output_dir, "isospec.csv")
    write_csv(path, ["factor", "max_rel_gap", "verdict"], data["rows"], _meta(cfg, {"m": m, "tol": tol}))
    for row in data["rows"]:
        print(f"{row['factor']}: gap={row['max_rel_gap']:.3e} verdict={row['verdict']}")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_probe(client, args):
    cfg = _load(args)
    if args.bootstrap is not None:
        data = client.bootstrap(args.bootstrap)
        print("k, r_k, p_k")
        for k, (r, p) in enumerate(zip(data["r"], data["p"])):
            print(f"{k}, {r:.12g}, {p:.12g}")
        path = os.path.join(cfg.output_dir, "bootstrap.csv")
        rows = [
            {"k": k, "r": r, "p": p, "r_exact": rx, "p_exact": px}
            for k, (r, p, rx, px) in enumerate(
                zip(data["r"], data["p"], data["r_exact"], data["p_exact"])
            )
        ]
        write_csv(path, ["k", "r", "p", "r_exact", "p_exact"], rows,
                  _meta(cfg, {"epsilon": args.bootstrap}))
        print(f"wrote {path}")
        return EXIT_OK
    data = client.probe(cfg)
    header = ["label", "a0", "a1", "a2", "lambda1_deformed", "h1_volume", "h2_a1",
              "h3_a2", "h4_lambda", "passes", "phi_min", "phi_max", "w22_norm",
              "a0_deviation", "error"]
    rows = []
    for mrec in data["members"]:
        row = {h: mrec.get(h) for h in header}
        for key, val in row.items():
            if val is None:
                row[key] = "nan"
        rows.append(row)
    path = os.path.join(cfg.output_dir, "probe_members.csv")
    write_csv(path, header, rows, _meta(cfg, {
        "alpha0": data["alpha0"], "alpha1": data["alpha1"],
        "alpha2": data["alpha2"], "lambda": data["lam"],
    }))
    spath = os.path.join(cfg.output_dir, "probe_summary.csv")
    write_csv(spath, ["quantity", "value"], [
        ("n_pass", data["n_pass"]),
        ("envelope_phi_min", data["envelope_phi_min"] if data["envelope_phi_min"] is not None else "nan"),
        ("envelope_phi_max", data["envelope_phi_max"] if data["envelope_phi_max"] is not None else "nan"),
        ("envelope_w22", data["envelope_w22"] if data["envelope_w22"] is not None else "nan"),
        ("identity_health", data["identity_health"]),
    ], _meta(cfg))
    print(f"probe: {data['n_pass']}/{len(data['members'])} members pass")
    print(f"envelopes: phi_min={data['envelope_phi_min']} phi_max={data['envelope_phi_max']} "
          f"W22={data['envelope_w22']}")
    worst = max((s["max_residual"] for s in data["identities"]), default=0.0)
    print(f"identity suite: max residual {worst:.3e} "
          f"({'healthy' if data['identity_health'] else 'UNHEALTHY'})")
    print(f"wrote {path}, {spath}")
    if data["errors"]:
        for err in data["errors"]:
            print(f"member error: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    if not data["identity_health"]:
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_serve(args):
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port)
    return EXIT_OK


def main(argv=None):
    args = _parser().parse_args(argv)
    if args.command == "serve":
        return cmd_serve(args)
    handlers = {
        "geom": cmd_geom,
        "invariants": cmd_invariants,
        "spectrum": cmd_spectrum,
        "isospec": cmd_isospec,
        "probe": cmd_probe,
    }
    try:
        with ServiceClient(server=args.server) as client:
            return handlers[args.command](client, args)
    except E.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except E.ConvergenceFailure as exc:
        print(f"convergence failure: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except E.FinslerError as exc:
        print(f"numeric failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
