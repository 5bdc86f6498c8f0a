"""Command-line client for the synthesis service.

Every subcommand reads a JSON config, posts the request to the HTTP
service (an in-process instance by default, or a remote one via
--server) and emits results as JSON or CSV with a provenance header
(config hash, seed, package version). With --out, artifacts are written
into that directory; otherwise the primary artifact goes to stdout.

Exit codes: 0 success, 2 invalid input or config, 3 infeasible
constraint set, 4 stability certificate failed.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import sys
from pathlib import Path

import click
import httpx

from . import __version__

EXIT_OK = 0
EXIT_BAD_INPUT = 2
EXIT_INFEASIBLE = 3
EXIT_CERT_FAILED = 4


def _fail(code, message):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _client(server):
    if server:
        return httpx.Client(base_url=server, timeout=600.0)
    from fastapi.testclient import TestClient

    from .service.app import app
    return TestClient(app, raise_server_exceptions=False)


def _load_config(path):
    """Returns (config dict, sha256 of the raw bytes, config directory)."""
    if path is None:
        return {}, hashlib.sha256(b"{}").hexdigest(), Path.cwd()
    try:
        raw = Path(path).read_bytes()
        return (json.loads(raw), hashlib.sha256(raw).hexdigest(),
                Path(path).resolve().parent)
    except OSError as exc:
        _fail(EXIT_BAD_INPUT, f"cannot read config: {exc}")
    except json.JSONDecodeError as exc:
        _fail(EXIT_BAD_INPUT, f"config is not valid JSON: {exc}")


def _post(server, path, payload):
    client = _client(server)
    try:
        resp = client.post(path, json=payload)
    except httpx.HTTPError as exc:
        _fail(EXIT_BAD_INPUT, f"request failed: {exc}")
    if resp.status_code == 409:
        _fail(EXIT_INFEASIBLE, f"infeasible: {resp.json().get('detail')}")
    if resp.status_code != 200:
        try:
            detail = resp.json().get("detail")
        except ValueError:
            detail = resp.text
        _fail(EXIT_BAD_INPUT, f"HTTP {resp.status_code}: {detail}")
    return resp.json()


def _provenance(config_hash, seed):
    return {"config_sha256": config_hash, "seed": seed,
            "version": __version__}


def _render_csv(provenance, header, rows):
    buf = io.StringIO()
    for key, val in provenance.items():
        buf.write(f"# {key}={val}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _emit(result, provenance, out, fmt, to_rows, name, extra=None):
    """Write the primary artifact (and any extra JSON artifacts) to the
    output directory, or the primary artifact to stdout."""
    if fmt == "json":
        text = json.dumps({"provenance": provenance, "result": result},
                          indent=2) + "\n"
    else:
        header, rows = to_rows(result)
        text = _render_csv(provenance, header, rows)
    if out:
        outdir = Path(out)
        outdir.mkdir(parents=True, exist_ok=True)
        (outdir / f"{name}.{fmt}").write_text(text)
        (outdir / "provenance.json").write_text(
            json.dumps(provenance, indent=2) + "\n")
        for fname, payload in (extra or {}).items():
            (outdir / fname).write_text(
                json.dumps(payload, indent=2) + "\n")
    else:
        click.echo(text, nl=False)


def _common_options(fn):
    fn = click.option("--config", "config_path", type=click.Path(),
                      default=None, help="JSON config file.")(fn)
    fn = click.option("--seed", type=int, default=0, show_default=True,
                      help="Random seed recorded in provenance and used "
                           "by seeded commands.")(fn)
    fn = click.option("--out", type=click.Path(), default=None,
                      help="Output directory (stdout when omitted).")(fn)
    fn = click.option("--format", "fmt",
                      type=click.Choice(["csv", "json"]), default="json",
                      show_default=True, help="Output format.")(fn)
    fn = click.option("--server", default=None,
                      help="Base URL of a running service; defaults to an "
                           "in-process instance.")(fn)
    return fn


@click.group()
@click.version_option(__version__)
def main():
    """Data-driven iFIR/2DOF controller synthesis with stability
    constraints."""


def _signal_from_config(spec, name, base_dir):
    """A signal entry is either a list of samples or {'csv': path}; paths
    are resolved relative to the config file."""
    if isinstance(spec, dict) and "csv" in spec:
        from .lti import SignalRecord
        path = Path(spec["csv"])
        if not path.is_absolute():
            path = base_dir / path
        rec = SignalRecord.from_csv(path, label=name)
        return rec.samples.tolist(), rec.ts
    if isinstance(spec, list):
        return spec, None
    raise ValueError(f"data entry {name!r} must be a list or {{'csv': path}}")


def _build_dataset(cfg, base_dir):
    data_cfg = cfg.get("data")
    if not isinstance(data_cfg, dict):
        raise ValueError("config must contain a 'data' object")
    out, ts_seen = {}, []
    for name in ("u", "y", "d", "y_fb"):
        if name not in data_cfg:
            continue
        samples, ts = _signal_from_config(data_cfg[name], name, base_dir)
        out[name] = samples
        if ts is not None:
            ts_seen.append(ts)
    ts = data_cfg.get("ts")
    if ts is None:
        if not ts_seen:
            raise ValueError("data needs 'ts' or at least one CSV signal")
        ts = ts_seen[0]
    for other in ts_seen:
        if abs(other - ts) > 1e-9 * max(abs(ts), 1.0):
            raise ValueError("signals disagree on the sampling period")
    out["ts"] = ts
    return out


@main.command()
@_common_options
def synth(config_path, seed, out, fmt, server):
    """Fit a controller from input-output data, optionally with stability
    constraints and a certificate."""
    cfg, cfg_hash, base_dir = _load_config(config_path)
    try:
        payload = {key: cfg[key] for key in
                   ("objective", "mr", "md", "m_fb", "m_ff", "integrator",
                    "constraints", "solver", "dense_grid") if key in cfg}
        payload["data"] = _build_dataset(cfg, base_dir)
        if "objective" not in payload:
            raise ValueError("config must set 'objective'")
    except ValueError as exc:
        _fail(EXIT_BAD_INPUT, str(exc))
    result = _post(server, "/synthesize", payload)

    def to_rows(res):
        ctrl = res["controller"]
        rows = [["gamma", 0, ctrl["gamma"]], ["ts", 0, ctrl["ts"]],
                ["objective_value", 0, res["objective_value"]],
                ["solver_status", 0, res["solver_status"]]]
        rows += [["g_fb", t, v] for t, v in enumerate(ctrl["g_fb"])]
        rows += [["g_ff", t, v] for t, v in enumerate(ctrl["g_ff"])]
        cert = res.get("certificate")
        if cert:
            rows += [["certificate_passed", 0, cert["passed"]],
                     ["certificate_margin", 0, cert["margin"]]]
        return ["field", "index", "value"], rows

    extra = {"controller.json": result["controller"]}
    if result.get("certificate") is not None:
        extra["certificate.json"] = result["certificate"]
    _emit(result, _provenance(cfg_hash, seed), out, fmt, to_rows,
          "synth", extra)
    cert = result.get("certificate")
    if cert is not None and not cert["passed"]:
        _fail(EXIT_CERT_FAILED,
              f"certificate failed (margin {cert['margin']:.3g})")


@main.command()
@_common_options
def verify(config_path, seed, out, fmt, server):
    """Check a controller's Nyquist locus against a constraint region."""
    cfg, cfg_hash, _ = _load_config(config_path)
    result = _post(server, "/verify", cfg)

    def to_rows(res):
        header = list(res.keys())
        return header, [[res[k] for k in header]]

    _emit(result, _provenance(cfg_hash, seed), out, fmt, to_rows,
          "certificate")
    if not result["passed"]:
        _fail(EXIT_CERT_FAILED,
              f"certificate failed (margin {result['margin']:.3g})")


@main.command()
@_common_options
def simulate(config_path, seed, out, fmt, server):
    """Simulate the benchmark plant, open loop or under a controller."""
    cfg, cfg_hash, _ = _load_config(config_path)
    result = _post(server, "/simulate", cfg)

    def to_rows(res):
        header = ["t", "reference", "disturbance", "y_pos", "y_vel"]
        rows = list(zip(*(res[k] for k in header)))
        return header, rows

    prov = _provenance(cfg_hash, seed)
    prov["stable"] = result["stable"]
    prov["spectral_radius"] = result["spectral_radius"]
    _emit(result, prov, out, fmt, to_rows, "simulate")


@main.command()
@_common_options
def bench(config_path, seed, out, fmt, server):
    """Solve-time scaling study over controller order and constraint
    sampling density."""
    cfg, cfg_hash, _ = _load_config(config_path)
    payload = dict(cfg)
    payload.setdefault("seed", seed)
    result = _post(server, "/bench", payload)

    def to_rows(res):
        header = ["sampling_m", "m_fb", "solve_time", "assembly_time",
                  "status"]
        return header, [[row[k] for k in header] for row in res["rows"]]

    _emit(result, _provenance(cfg_hash, seed), out, fmt, to_rows, "bench")


@main.command("demo_gripper")
@_common_options
def demo_gripper(config_path, seed, out, fmt, server):
    """Run the full flexible-gripper benchmark: data generation, baseline
    synthesis, certification and closed-loop evaluation."""
    cfg, cfg_hash, _ = _load_config(config_path)
    payload = dict(cfg)
    payload.setdefault("seed", seed)
    result = _post(server, "/gripper/demo", payload)

    def to_rows(res):
        header = ["baseline", "stable", "spectral_radius",
                  "steady_state_error", "max_mismatch_tracking_db",
                  "max_mismatch_disturbance_db", "objective_value",
                  "solver_status"]
        rows = [[name] + [rep[k] for k in header[1:]]
                for name, rep in res["baselines"].items()]
        return header, rows

    prov = _provenance(cfg_hash, seed)
    cert = result["certificate"]
    prov["certificate_passed"] = cert["passed"]
    prov["certificate_margin"] = cert["margin"]
    prov["published_pd_spectral_radius"] = result["published_pd_spectral_radius"]
    extra = {"certificate.json": cert,
             "controllers.json": {
                 name: rep["controller"]
                 for name, rep in result["baselines"].items()}}
    _emit(result, prov, out, fmt, to_rows, "demo_gripper", extra)
    if not cert["passed"]:
        _fail(EXIT_CERT_FAILED,
              f"certificate failed (margin {cert['margin']:.3g})")


if __name__ == "__main__":
    main()
