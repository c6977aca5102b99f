"""Command-line pipeline driver.

Subcommands: generate, fit-local, evaluate, qualify, fit-global, report,
config-init.  Exit codes: 0 success, 1 usage/config error, 2 data error,
3 numeric failure.  Every command is deterministic given (config, seeds,
inputs); reruns produce byte-identical outputs.
"""

import argparse
import csv
import json
import re
import sys
from pathlib import Path

import numpy as np

from . import config as config_mod
from .config import ConfigError
from .data import load_bins_csv, save_bins_csv
from .errors import (
    ConvergenceError,
    DegenerateDataError,
    DivergenceError,
    DomainError,
    EmptyEnsembleError,
    InsufficientReplicasError,
    MissingTruthError,
    NonFiniteError,
    SchemaError,
    ShapeError,
    SingularityError,
    ZeroSigmaError,
)
from .globalfit import GlobalNetSpec, LocalExtraction, predict_grid, train_global
from .metrics import (
    CFF_NAMES,
    ErrorReport,
    accuracy,
    algorithmic_error,
    cff_curve,
    ensemble_mean,
    m_chi2,
    m_dvcs,
    methodological_error,
    precision,
    qualifier_calibration,
    qualifier_features,
    quantum_outperformance,
)
from .physics import CFFSet
from .pseudodata import (
    GENERATOR_TABLES,
    QUALIFIER_SCALINGS,
    make_pseudobin,
    qualifier_grid_specs,
    synthetic_template_bins,
    truth_curve,
)
from .training import (
    FitConfig,
    ReplicaEnsemble,
    fit_replicas,
    load_ensembles_json,
    replica_seed_streams,
    save_ensemble_csv,
    save_ensemble_json,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

_NUMERIC_ERRORS = (
    ConvergenceError, DegenerateDataError, DivergenceError, DomainError,
    EmptyEnsembleError, InsufficientReplicasError, MissingTruthError,
    NonFiniteError, ShapeError, SingularityError, ZeroSigmaError,
    ZeroDivisionError, OverflowError,
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        sys.exit(EXIT_USAGE)


def _fmt(value) -> str:
    return repr(float(value))


def _json_dump(payload, path):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _safe_name(set_id: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]", "_", str(set_id))


# ----------------------------------------------------------------------------
# Shared plumbing
# ----------------------------------------------------------------------------

def _load_config(args) -> dict:
    return config_mod.load_config(args.config)


def _out_dir(cfg) -> Path:
    out = Path(cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _template_bins(cfg):
    data_cfg = cfg["data"]
    if data_cfg["template_csv"]:
        return load_bins_csv(data_cfg["template_csv"])
    return synthetic_template_bins(
        data_cfg["synthetic_bins"],
        seed=data_cfg["synthetic_seed"],
        n_phi=data_cfg["synthetic_phi_points"],
        rel_err_range=(data_cfg["rel_err_min"], data_cfg["rel_err_max"]),
    )


def _data_csv_path(cfg, args) -> Path:
    if getattr(args, "data", None):
        return Path(args.data)
    return _out_dir(cfg) / "pseudodata" / "data.csv"


def _load_data_bins(cfg, args):
    path = _data_csv_path(cfg, args)
    if not path.exists():
        raise SchemaError(f"data file {path} not found; run 'generate' first or pass --data")
    return load_bins_csv(path), path


def _fit_config(cfg, model_class: str, seed: int) -> FitConfig:
    fit = cfg["fit"]
    if model_class == "cdnn":
        return FitConfig(epochs=fit["cdnn_epochs"], lr=fit["cdnn_lr"],
                         angle_lr=fit["cdnn_lr"], seed=seed,
                         early_stop_tol=fit["early_stop_tol"])
    return FitConfig(epochs=fit["qdnn_epochs"], lr=fit["qdnn_lr"],
                     angle_lr=fit["qdnn_angle_lr"], seed=seed,
                     start_depth=fit["qdnn_start_depth"],
                     early_stop_tol=fit["early_stop_tol"])


def _truth_cffs_path(out: Path) -> Path:
    return out / "pseudodata" / "truth_cffs.csv"


def _load_truth_cffs(out: Path):
    path = _truth_cffs_path(out)
    if not path.exists():
        return None
    truths = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            truths[row["set_id"]] = CFFSet(
                float(row["ReH"]), float(row["ReE"]), float(row["ReHt"]),
                float(row["dvcs_const"]),
            )
    return truths


# ----------------------------------------------------------------------------
# generate
# ----------------------------------------------------------------------------

def cmd_generate(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(cfg)
    pseudo_dir = out / "pseudodata"
    pseudo_dir.mkdir(parents=True, exist_ok=True)

    bins = _template_bins(cfg)
    generator = GENERATOR_TABLES[cfg["pseudodata"]["generator"]]
    noise_scale = cfg["pseudodata"]["noise_scale"]

    noisy_bins = []
    truth_bins = []
    truth_rows = []
    for bin in bins:
        seed = replica_seed_streams(cfg["seed"], bin.set_id, 0)[0]
        pb = make_pseudobin(bin, generator, noise_scale, seed=seed)
        noisy_bins.append(pb.bin)
        truth_bins.append(bin.with_f(pb.truth_f))
        truth_rows.append((bin, pb.truth_cffs))

    save_bins_csv(noisy_bins, pseudo_dir / "data.csv")
    save_bins_csv(truth_bins, pseudo_dir / "truth_f.csv")
    with open(pseudo_dir / "truth_cffs.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["set_id", "k", "Q2", "xB", "t",
                         "ReH", "ReE", "ReHt", "dvcs_const"])
        for bin, cffs in truth_rows:
            writer.writerow([bin.set_id, _fmt(bin.k), _fmt(bin.Q2), _fmt(bin.xB),
                             _fmt(bin.t), _fmt(cffs.ReH), _fmt(cffs.ReE),
                             _fmt(cffs.ReHt), _fmt(cffs.dvcs_const)])

    n_points = sum(b.n_points for b in bins)
    ps = cfg["pseudodata"]
    per_bin = ps["qualifier_cff_values"] ** 4 * len(ps["qualifier_noise_scales"])
    print(f"generated pseudodata for {len(bins)} bins ({n_points} phi points) "
          f"at noise scale {noise_scale}")
    print(f"qualifier grid: {ps['qualifier_cff_values']}^4 CFF combinations x "
          f"{len(ps['qualifier_noise_scales'])} scalings = {per_bin} replica specs "
          f"per kinematic point ({len(bins) * per_bin} total)")

    if ps["write_qualifier_manifest"]:
        manifest = pseudo_dir / "qualifier_manifest.csv"
        half = ps["qualifier_half_width"]
        with open(manifest, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["set_id", "combo", "noise_scale",
                             "ReH", "ReE", "ReHt", "dvcs_const"])
            for bin in bins:
                center = generator.cffs_at(bin.xB, bin.t)
                specs = qualifier_grid_specs(
                    bin, center,
                    CFFSet(half[0], half[1], half[2], half[3]),
                    n_values=ps["qualifier_cff_values"],
                    scalings=tuple(ps["qualifier_noise_scales"]),
                )
                for combo, (cffs, s) in enumerate(specs):
                    writer.writerow([bin.set_id, combo, _fmt(s), _fmt(cffs.ReH),
                                     _fmt(cffs.ReE), _fmt(cffs.ReHt),
                                     _fmt(cffs.dvcs_const)])
        print(f"wrote qualifier manifest: {manifest}")
    return EXIT_OK


# ----------------------------------------------------------------------------
# fit-local
# ----------------------------------------------------------------------------

def cmd_fit_local(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(cfg)
    bins, data_path = _load_data_bins(cfg, args)
    fits_dir = out / "fits"
    partial_dir = fits_dir / "partial"
    partial_dir.mkdir(parents=True, exist_ok=True)

    models = cfg["fit"]["models"]
    n_replicas = cfg["fit"]["n_replicas"]
    mode = cfg["fit"]["resample_mode"]
    ensembles = []
    n_skipped = 0
    for bin in bins:
        for model_class in models:
            part = partial_dir / f"{_safe_name(bin.set_id)}_{model_class}.json"
            if part.exists():
                ensembles.extend(load_ensembles_json(part))
                n_skipped += 1
                continue
            fit_cfg = _fit_config(cfg, model_class, seed=cfg["seed"])
            ens = fit_replicas(model_class, bin, n_replicas, mode, fit_cfg)
            save_ensemble_json([ens], part)
            ensembles.append(ens)
            print(f"fitted set {bin.set_id} with {model_class}: "
                  f"{ens.included_count}/{ens.n_replicas} replicas kept")
    if n_skipped:
        print(f"resumed: skipped {n_skipped} completed (set, model) fits")
    save_ensemble_csv(ensembles, fits_dir / "fit_records.csv")
    save_ensemble_json(ensembles, fits_dir / "fit_records.json")
    print(f"wrote {len(ensembles)} ensembles from {data_path} to {fits_dir}")
    return EXIT_OK


def _load_fits(out: Path):
    path = out / "fits" / "fit_records.json"
    if not path.exists():
        raise SchemaError(f"fit records {path} not found; run 'fit-local' first")
    return load_ensembles_json(path)


# ----------------------------------------------------------------------------
# evaluate
# ----------------------------------------------------------------------------

def cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(cfg)
    ensembles = _load_fits(out)
    bins, _ = _load_data_bins(cfg, args)
    bins_by_id = {b.set_id: b for b in bins}
    truths = _load_truth_cffs(out)
    eval_dir = out / "evaluate"
    eval_dir.mkdir(parents=True, exist_ok=True)

    generator = GENERATOR_TABLES[cfg["pseudodata"]["generator"]]
    ev = cfg["evaluate"]
    reports = []
    m_dvcs_rows = []
    for ens in ensembles:
        bin = bins_by_id.get(ens.set_id)
        truth = truths.get(ens.set_id) if truths else None
        report = ErrorReport(set_id=ens.set_id, model_class=ens.model_class)
        report.precision = precision(ens)
        if truth is not None:
            report.accuracy = accuracy(ens, truth)
        if ev["algorithmic_replicas"] >= 2 and bin is not None:
            report.algorithmic = algorithmic_error(
                ens.model_class, bin, ev["algorithmic_replicas"],
                _fit_config(cfg, ens.model_class, seed=cfg["seed"] + 1),
            )
        if ev["methodological_draws"] >= 2 and bin is not None:
            report.methodological = methodological_error(
                ens.model_class, [bin], generator, ev["param_spread"],
                ev["methodological_draws"],
                _fit_config(cfg, ens.model_class, seed=cfg["seed"] + 2),
                seed=cfg["seed"] + 3,
            )
        reports.extend(report.rows())
        if truth is not None and bin is not None:
            mean_curve = cff_curve(bin, CFFSet.from_array(ensemble_mean(ens)))
            tru_curve = cff_curve(bin, truth)
            m_dvcs_rows.append({
                "set_id": ens.set_id, "model_class": ens.model_class,
                "m_dvcs": m_dvcs(mean_curve, tru_curve),
            })

    with open(eval_dir / "error_report.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["set_id", "model_class", "target", "accuracy",
                         "precision", "algorithmic", "methodological"])
        for row in reports:
            writer.writerow([
                row["set_id"], row["model_class"], row["target"],
                "" if row["accuracy"] is None else _fmt(row["accuracy"]),
                "" if row["precision"] is None else _fmt(row["precision"]),
                "" if row["algorithmic"] is None else _fmt(row["algorithmic"]),
                "" if row["methodological"] is None else _fmt(row["methodological"]),
            ])
    _json_dump({"schema_version": 1, "rows": reports}, eval_dir / "error_report.json")

    summary = {"schema_version": 1, "models": {}}
    for model_class in sorted({e.model_class for e in ensembles}):
        model_ens = [e for e in ensembles if e.model_class == model_class]
        entry = {
            "n_bins": len(model_ens),
            "excluded_replicas": int(sum(e.excluded_count for e in model_ens)),
        }
        if truths:
            usable = [e for e in model_ens if e.set_id in truths]
            try:
                entry["m_chi2"] = m_chi2(usable, [truths[e.set_id] for e in usable])
            except ZeroSigmaError:
                entry["m_chi2"] = None
            dvals = [r["m_dvcs"] for r in m_dvcs_rows if r["model_class"] == model_class]
            entry["mean_m_dvcs"] = float(np.mean(dvals)) if dvals else None
        summary["models"][model_class] = entry
    if m_dvcs_rows:
        summary["m_dvcs_rows"] = m_dvcs_rows
    _json_dump(summary, eval_dir / "summary.json")
    print(f"evaluated {len(ensembles)} ensembles; wrote {eval_dir}/error_report.csv")
    for model_class, entry in summary["models"].items():
        extras = ", ".join(f"{k}={v}" for k, v in entry.items() if k != "n_bins")
        print(f"  {model_class}: {entry['n_bins']} bins, {extras}")
    return EXIT_OK


# ----------------------------------------------------------------------------
# qualify
# ----------------------------------------------------------------------------

def _recommendation(score: float, margin: float) -> str:
    if score > margin:
        return "qdnn"
    if score < -margin:
        return "cdnn"
    return "tie"


def cmd_qualify(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(cfg)
    bins, _ = _load_data_bins(cfg, args)
    qual_dir = out / "qualify"
    qual_dir.mkdir(parents=True, exist_ok=True)
    margin = cfg["qualify"]["decision_margin"]
    s = cfg["qualify"]["noise_scale"]

    truths = _load_truth_cffs(out)
    ensembles = []
    fits_path = out / "fits" / "fit_records.json"
    if fits_path.exists():
        ensembles = load_ensembles_json(fits_path)
    ens_by_key = {(e.set_id, e.model_class): e for e in ensembles}

    rows = []
    pairs = []
    counts = {"qdnn": 0, "cdnn": 0, "tie": 0, "degenerate": 0}
    for bin in bins:
        try:
            feats = qualifier_features(bin, s)
        except DegenerateDataError:
            counts["degenerate"] += 1
            rows.append({"set_id": bin.set_id, "eps_bar_s": None,
                         "nonlinearity": None, "score": None,
                         "recommendation": "degenerate", "measured_xi": None})
            continue
        rec = _recommendation(feats.score, margin)
        counts[rec] += 1
        measured = None
        truth = truths.get(bin.set_id) if truths else None
        cdnn_ens = ens_by_key.get((bin.set_id, "cdnn"))
        qdnn_ens = (ens_by_key.get((bin.set_id, "fqdnn"))
                    or ens_by_key.get((bin.set_id, "bqdnn")))
        if truth is not None and cdnn_ens is not None and qdnn_ens is not None:
            tru_curve = cff_curve(bin, truth)
            m_c = m_dvcs(cff_curve(bin, CFFSet.from_array(ensemble_mean(cdnn_ens))),
                         tru_curve)
            m_q = m_dvcs(cff_curve(bin, CFFSet.from_array(ensemble_mean(qdnn_ens))),
                         tru_curve)
            if m_q > 0:
                measured = quantum_outperformance(m_c, m_q)
                pairs.append((feats.score, measured))
        rows.append({"set_id": bin.set_id, "eps_bar_s": feats.eps_bar_s,
                     "nonlinearity": feats.nonlinearity, "score": feats.score,
                     "recommendation": rec, "measured_xi": measured})

    with open(qual_dir / "qualifier.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["set_id", "eps_bar_s", "nonlinearity", "score",
                         "recommendation", "measured_xi"])
        for row in rows:
            writer.writerow([
                row["set_id"],
                "" if row["eps_bar_s"] is None else _fmt(row["eps_bar_s"]),
                "" if row["nonlinearity"] is None else _fmt(row["nonlinearity"]),
                "" if row["score"] is None else _fmt(row["score"]),
                row["recommendation"],
                "" if row["measured_xi"] is None else _fmt(row["measured_xi"]),
            ])

    n_rated = max(len(bins) - counts["degenerate"], 1)
    fractions = {key: counts[key] / n_rated for key in ("qdnn", "cdnn", "tie")}
    summary = {"schema_version": 1, "noise_scale": s, "decision_margin": margin,
               "counts": counts, "fractions": fractions}
    if len(pairs) >= 3:
        try:
            slope, intercept, r2 = qualifier_calibration(pairs)
            summary["calibration"] = {"slope": slope, "intercept": intercept,
                                      "r_squared": r2}
        except DegenerateDataError:
            summary["calibration"] = None
    _json_dump(summary, qual_dir / "summary.json")

    print(f"qualified {len(bins)} bins at noise scale {s}: "
          + ", ".join(f"{k}={counts[k]}" for k in ("qdnn", "cdnn", "tie")))
    print("fraction summary: "
          + ", ".join(f"{k}={fractions[k]:.1%}" for k in ("qdnn", "cdnn", "tie")))
    return EXIT_OK


# ----------------------------------------------------------------------------
# fit-global
# ----------------------------------------------------------------------------

def _pick_ensemble(per_model: dict, recommendation: str):
    if recommendation == "qdnn":
        for key in ("fqdnn", "bqdnn", "cdnn"):
            if key in per_model:
                return per_model[key]
    if recommendation == "cdnn" and "cdnn" in per_model:
        return per_model["cdnn"]
    # tie or missing recommendation: keep the ensemble with the smaller
    # median replica loss
    return min(per_model.values(),
               key=lambda e: float(np.median(e.losses[~e.excluded])))


def _load_recommendations(out: Path):
    path = out / "qualify" / "qualifier.csv"
    if not path.exists():
        return {}
    recs = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            recs[row["set_id"]] = row["recommendation"]
    return recs


def cmd_fit_global(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(cfg)
    ensembles = _load_fits(out)
    bins, _ = _load_data_bins(cfg, args)
    bins_by_id = {b.set_id: b for b in bins}
    recs = _load_recommendations(out)
    global_dir = out / "globalfit"
    global_dir.mkdir(parents=True, exist_ok=True)

    grouped = {}
    for ens in ensembles:
        grouped.setdefault(ens.set_id, {})[ens.model_class] = ens
    extractions = []
    chosen = {}
    for set_id, per_model in grouped.items():
        bin = bins_by_id.get(set_id)
        if bin is None:
            continue
        ens = _pick_ensemble(per_model, recs.get(set_id, "tie"))
        chosen[set_id] = ens.model_class
        extractions.append(LocalExtraction(
            set_id=set_id, xB=bin.xB, t=bin.t, Q2=bin.Q2,
            cffs=ensemble_mean(ens), sigma=precision(ens),
        ))

    g = cfg["globalfit"]
    spec = GlobalNetSpec(batch_norm=bool(g["batch_norm"]), dropout=float(g["dropout"]))
    ensemble = train_global(extractions, spec, n_replicas=g["n_replicas"],
                            seed=cfg["seed"], epochs=g["epochs"], lr=g["lr"])

    def axis(values):
        lo, hi, count = values
        return np.linspace(lo, hi, int(count))

    grid_rows = list(predict_grid(ensemble, axis(g["grid_xB"]), axis(g["grid_t"]),
                                  axis(g["grid_Q2"])))
    with open(global_dir / "surface_grid.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        header = ["xB", "t", "Q2"]
        for name in CFF_NAMES:
            header += [f"{name}_mean", f"{name}_sigma"]
        header.append("extrapolating")
        writer.writerow(header)
        for row in grid_rows:
            out_row = [_fmt(row["xB"]), _fmt(row["t"]), _fmt(row["Q2"])]
            for i in range(4):
                out_row += [_fmt(row["mean"][i]), _fmt(row["sigma"][i])]
            out_row.append(int(row["extrapolating"]))
            writer.writerow(out_row)

    summary = {
        "schema_version": 1,
        "n_extractions": len(extractions),
        "n_replicas": ensemble.n_replicas,
        "excluded_replicas": int(ensemble.excluded.sum()),
        "chosen_models": dict(sorted(chosen.items())),
        "sigma_nonnegative": bool(all(np.all(r["sigma"] >= 0) for r in grid_rows)),
    }
    reference = g["reference_csv"]
    if reference:
        summary["overlay"] = _overlay_report(Path(reference), ensemble)
    _json_dump(summary, global_dir / "summary.json")
    print(f"global fit on {len(extractions)} local extractions, "
          f"{ensemble.n_replicas} replicas; wrote {global_dir}/surface_grid.csv")
    return EXIT_OK


def _overlay_report(reference_path: Path, ensemble):
    """Compare the fitted surfaces against external reference curves.

    Reference CSV schema: target,xB,t,Q2,value with target one of the four
    CFF names.
    """
    if not reference_path.exists():
        raise SchemaError(f"reference file {reference_path} not found")
    from .globalfit import predict_global

    rows = []
    with open(reference_path, newline="") as fh:
        reader = csv.DictReader(fh)
        expected = ["target", "xB", "t", "Q2", "value"]
        if reader.fieldnames != expected:
            raise SchemaError(
                f"{reference_path}: header {reader.fieldnames} != {expected}"
            )
        for i, row in enumerate(reader, start=2):
            target = row["target"]
            if target not in CFF_NAMES:
                raise SchemaError(f"{reference_path}:{i}: unknown target {target!r}")
            xb, t, q2, val = (float(row[k]) for k in ("xB", "t", "Q2", "value"))
            mean, sigma, extrap = predict_global(ensemble, xb, t, q2)
            idx = CFF_NAMES.index(target)
            pull = (mean[idx] - val) / sigma[idx] if sigma[idx] > 0 else None
            rows.append({"target": target, "xB": xb, "t": t, "Q2": q2,
                         "reference": val, "mean": float(mean[idx]),
                         "sigma": float(sigma[idx]), "pull": pull,
                         "extrapolating": extrap})
    pulls = [abs(r["pull"]) for r in rows if r["pull"] is not None]
    return {
        "n_points": len(rows),
        "mean_abs_pull": float(np.mean(pulls)) if pulls else None,
        "within_1sigma": float(np.mean([p <= 1 for p in pulls])) if pulls else None,
        "rows": rows,
    }


# ----------------------------------------------------------------------------
# report
# ----------------------------------------------------------------------------

def cmd_report(args) -> int:
    from . import report as report_mod

    cfg = _load_config(args)
    out = _out_dir(cfg)
    report_dir = out / "report"
    report_dir.mkdir(parents=True, exist_ok=True)
    dpi = cfg["report"]["dpi"]
    written = []

    bins = None
    try:
        bins, _ = _load_data_bins(cfg, args)
    except SchemaError:
        pass
    truths = _load_truth_cffs(out)

    fits_path = out / "fits" / "fit_records.json"
    if bins and fits_path.exists():
        ensembles = load_ensembles_json(fits_path)
        grouped = {}
        for ens in ensembles:
            grouped.setdefault(ens.set_id, {})[ens.model_class] = ens
        grid = np.linspace(7.5, 352.5, 121)
        for bin in bins[: cfg["report"]["max_bins"]]:
            per_model = grouped.get(bin.set_id)
            if not per_model:
                continue
            curves = {}
            for model_class, ens in per_model.items():
                reps = ens.included_cffs()
                stack = np.array([
                    cff_curve(bin, CFFSet.from_array(c))(grid) for c in reps
                ])
                mean = stack.mean(axis=0)
                spread = stack.std(axis=0, ddof=0)
                curves[model_class] = (grid, mean, (mean - spread, mean + spread))
            truth_f = None
            if truths and bin.set_id in truths:
                truth_f = cff_curve(bin, truths[bin.set_id])(bin.phi())
            path = report_dir / f"fit_{_safe_name(bin.set_id)}.png"
            report_mod.save_fit_curve_figure(path, bin, curves, truth_f, dpi=dpi)
            written.append(path)

    qual_path = out / "qualify" / "qualifier.csv"
    if qual_path.exists():
        scores, measured = [], []
        with open(qual_path, newline="") as fh:
            for row in csv.DictReader(fh):
                if row["score"] and row["measured_xi"]:
                    scores.append(float(row["score"]))
                    measured.append(float(row["measured_xi"]))
        if len(scores) >= 3:
            calibration = None
            summary_path = out / "qualify" / "summary.json"
            if summary_path.exists():
                summary = json.loads(summary_path.read_text())
                cal = summary.get("calibration")
                if cal:
                    calibration = (cal["slope"], cal["intercept"], cal["r_squared"])
            path = report_dir / "qualifier_scatter.png"
            report_mod.save_qualifier_figure(path, scores, measured, calibration,
                                             dpi=dpi)
            written.append(path)

    err_path = out / "evaluate" / "error_report.json"
    if err_path.exists():
        rows = json.loads(err_path.read_text())["rows"]
        if rows:
            path = report_dir / "error_summary.png"
            report_mod.save_error_summary_figure(path, rows, dpi=dpi)
            written.append(path)

    grid_path = out / "globalfit" / "surface_grid.csv"
    if grid_path.exists():
        grid_rows = []
        with open(grid_path, newline="") as fh:
            for row in csv.DictReader(fh):
                grid_rows.append({
                    "xB": float(row["xB"]), "t": float(row["t"]),
                    "Q2": float(row["Q2"]),
                    "mean": [float(row[f"{n}_mean"]) for n in CFF_NAMES],
                    "sigma": [float(row[f"{n}_sigma"]) for n in CFF_NAMES],
                })
        for idx, name in enumerate(("ReH", "ReE", "ReHt")):
            path = report_dir / f"surface_{name}.png"
            report_mod.save_surface_figure(path, grid_rows, idx, name, dpi=dpi)
            written.append(path)

    if not written:
        print("nothing to report yet: run generate/fit-local/evaluate/fit-global first")
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


# ----------------------------------------------------------------------------
# config-init
# ----------------------------------------------------------------------------

def cmd_config_init(args) -> int:
    text = config_mod.dump_config_yaml(config_mod.default_config())
    if args.path == "-":
        sys.stdout.write(text)
        return EXIT_OK
    path = Path(args.path)
    if path.exists() and not args.force:
        raise ConfigError(f"{path} exists; pass --force to overwrite")
    path.write_text(text)
    print(f"wrote default configuration to {path}")
    return EXIT_OK


# ----------------------------------------------------------------------------
# entry point
# ----------------------------------------------------------------------------

def build_parser() -> _Parser:
    parser = _Parser(prog="qcffit",
                     description="CFF extraction pipeline: pseudodata, local "
                                 "fits, model selection, global surfaces")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_text, with_data=True):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", "-c", required=True, help="YAML run configuration")
        if with_data:
            p.add_argument("--data", help="override the input cross-section CSV")
        p.set_defaults(fn=fn)
        return p

    add("generate", cmd_generate, "write pseudodata and truth files", with_data=False)
    add("fit-local", cmd_fit_local, "fit replica ensembles per bin and model")
    add("evaluate", cmd_evaluate, "error metrics per bin from the fit records")
    add("qualify", cmd_qualify, "per-bin model recommendations from the selection score")
    add("fit-global", cmd_fit_global, "bootstrap global surfaces from local fits")
    add("report", cmd_report, "render figures next to the delimited outputs")

    p_init = sub.add_parser("config-init", help="print or write the default configuration")
    p_init.add_argument("path", nargs="?", default="-",
                        help="target file, or '-' for stdout")
    p_init.add_argument("--force", action="store_true", help="overwrite existing file")
    p_init.set_defaults(fn=cmd_config_init)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SchemaError, FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except _NUMERIC_ERRORS as exc:
        print(f"numeric failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
