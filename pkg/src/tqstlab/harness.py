"""Experiment orchestration: random-state sweeps, maximally-entangled-state
reconstructions with threshold scans, and report merging.

Every run is driven by one JSON config; all randomness flows from its
seed through documented stream splitting, so identical configs produce
byte-identical output files. Wall-clock timing goes to a separate
``timing.json`` sidecar that is deliberately left out of the manifest so
the stamped outputs stay reproducible.
"""

import csv
import hashlib
import json
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ContractError
from .mesh import load_layout, preset_layout, preset_target
from .metrics import (
    StateRun,
    comparison_table,
    fidelity,
    purity,
    write_comparison_csv,
)
from .noise import (
    NoiseParams,
    NoisyModelSource,
    draw_coupler_overrides,
    noise_params_from_json,
    predicted_density_matrix,
)
from .stategen import DualRailSpec, random_sweep, write_sweep_csv
from .tomo import (
    enumerate_scan_plans,
    estimate_projector_values,
    mle_reconstruct,
    reconstruction_to_json,
    run_qst,
    run_tqst,
)

EXPERIMENTS = ("sweep", "entangled", "scan", "report")

SCAN_COLUMNS = ("t", "N_t", "settings", "F_0t", "P_t", "gini_flag")
FIG3_COLUMNS = ("index", "gini", "F_0t", "F_0m", "F_tm", "Nt_ratio")


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    out_dir: str
    seed: int = 0
    shots: int = 100_000
    n_qubits: int = 2
    preset: str = ""
    n_states: int = 0
    pool: int = 0
    gini_max: float = None
    repeats: int = 1
    noise: dict = None
    coupler_range: tuple = ()
    coupler_seed: int = None
    layout_path: str = ""
    manifests: tuple = ()

    def canonical_json(self):
        doc = {
            "experiment": self.experiment,
            "seed": self.seed,
            "shots": self.shots,
            "n_qubits": self.n_qubits,
            "preset": self.preset,
            "n_states": self.n_states,
            "pool": self.pool,
            "gini_max": self.gini_max,
            "repeats": self.repeats,
            "noise": self.noise,
            "coupler_range": list(self.coupler_range),
            "coupler_seed": self.coupler_seed,
            "layout_path": self.layout_path,
            "manifests": list(self.manifests),
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    def config_hash(self):
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()


def load_config(path, noise_path=None, layout_path=None, out_dir=None, seed=None):
    with open(path) as fh:
        doc = json.load(fh)
    experiment = doc.get("experiment", "")
    if experiment not in EXPERIMENTS:
        raise ContractError(f"unknown experiment {experiment!r}")
    noise_doc = doc.get("noise")
    if noise_path is not None:
        with open(noise_path) as fh:
            noise_doc = json.load(fh)
    coupler_range = ()
    coupler_seed = None
    if noise_doc:
        coupler_range = tuple(noise_doc.pop("coupler_range", ()))
        coupler_seed = noise_doc.pop("coupler_seed", None)
    return ExperimentConfig(
        experiment=experiment,
        out_dir=out_dir if out_dir is not None else doc.get("out_dir", "runs/out"),
        seed=seed if seed is not None else doc.get("seed", 0),
        shots=doc.get("shots", 100_000),
        n_qubits=doc.get("n_qubits", 2),
        preset=doc.get("preset", ""),
        n_states=doc.get("n_states", 0),
        pool=doc.get("pool", 0),
        gini_max=doc.get("gini_max"),
        repeats=doc.get("repeats", 1),
        noise=noise_doc,
        coupler_range=coupler_range,
        coupler_seed=coupler_seed,
        layout_path=layout_path if layout_path is not None else doc.get("layout_path", ""),
        manifests=tuple(doc.get("manifests", ())),
    )


def _resolve_noise(config, layout):
    params = noise_params_from_json(config.noise) if config.noise else NoiseParams.ideal()
    if config.coupler_range:
        lo, hi = config.coupler_range
        seed = config.coupler_seed if config.coupler_seed is not None else config.seed
        overrides = draw_coupler_overrides(layout, lo, hi, seed=seed)
        params = replace(params, coupler_overrides=tuple(sorted(overrides.items())))
    return params


def _state_seed(seed, label):
    digest = hashlib.sha256(f"{seed}|{label}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass(frozen=True)
class StateReconstruction:
    label: str
    layout: object
    source: object
    result_t: object
    result_0: object
    rho_m: np.ndarray
    model_diag: dict


def reconstruct_state(label, layout, n_qubits, params, shots, seed):
    """QST, auto-threshold tQST and the model prediction for one layout.

    The three consumers share one cached model source, so each
    measurement setting is propagated through the noise model once.
    """
    spec = DualRailSpec(n_qubits)
    source = NoisyModelSource(layout, spec, params)
    result_0 = run_qst(source, n_qubits, shots, seed)
    result_t = run_tqst(source, n_qubits, shots, seed)
    rho_m, model_diag = predicted_density_matrix(layout, spec, params, source=source)
    return StateReconstruction(label, layout, source, result_t, result_0, rho_m, model_diag)


def _state_run(rec, gini):
    return StateRun(
        label=rec.label,
        gini=gini,
        rho_0=rec.result_0.rho,
        rho_t=rec.result_t.rho,
        rho_m=rec.rho_m,
        n_t=rec.result_t.plan.n_t,
        n_0=rec.result_0.plan.n_t,
        settings_t=len(rec.result_t.plan.settings),
        settings_0=len(rec.result_0.plan.settings),
    )


def threshold_scan_rows(rec, seed):
    """One row per distinct plan, swept from diagonal-only down to t = 0.

    Reconstructions reuse the full QST count record; F_0t compares each
    plan's reconstruction against the t = 0 one, and the row whose pair
    set matches the auto-threshold plan carries the Gini flag.
    """
    diag = _diag_from_record(rec.result_0)
    rows = []
    for t, plan in enumerate_scan_plans(diag, rec.result_0.plan.n_qubits):
        values, _ = estimate_projector_values(plan, rec.result_0.record)
        rho, _ = mle_reconstruct(plan, values, seed=_state_seed(seed, f"scan|{plan.n_t}"))
        rows.append(
            {
                "t": t,
                "N_t": plan.n_t,
                "settings": len(plan.settings),
                "F_0t": fidelity(rec.result_0.rho, rho),
                "P_t": purity(rho),
                "gini_flag": plan.pairs == rec.result_t.plan.pairs,
            }
        )
    return rows


def _diag_from_record(result):
    zbases = "Z" * result.plan.n_qubits
    sc = result.record.by_bases()[zbases]
    total = sc.counts.sum()
    return sc.counts / total


def _write_scan_csv(rows, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SCAN_COLUMNS)
        for row in rows:
            writer.writerow(
                [
                    repr(row["t"]),
                    row["N_t"],
                    row["settings"],
                    repr(row["F_0t"]),
                    repr(row["P_t"]),
                    int(row["gini_flag"]),
                ]
            )


def _write_json(doc, path):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_matrix_csv(matrix, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in matrix:
            writer.writerow([repr(float(v)) for v in row])


def _sha256(path):
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        digest.update(fh.read())
    return digest.hexdigest()


def _write_manifest(out_dir, config, files, warnings, incomplete=False):
    manifest = {
        "config_hash": config.config_hash(),
        "tool_version": __version__,
        "experiment": config.experiment,
        "files": {name: _sha256(out_dir / name) for name in sorted(files)},
        "warnings": sorted(warnings),
        "incomplete": incomplete,
    }
    _write_json(manifest, out_dir / "manifest.json")
    return manifest


def _collect_warnings(rec):
    out = []
    for result in (rec.result_0, rec.result_t):
        for sc in result.record.settings:
            if sc.meta.get("truncation_warning"):
                out.append(
                    f"{rec.label}: truncated multiphoton mass "
                    f"{sc.meta['truncated_mass']:.2e} above threshold"
                )
                break
    return out


def cmd_sweep(config):
    """Random-state sweep: QST vs auto-threshold tQST vs model per state."""
    if config.n_qubits not in (2, 3):
        raise ContractError("sweep supports n_qubits in {2, 3}")
    if config.n_states < 1:
        raise ContractError("sweep needs n_states >= 1")
    out_dir = _prepare_out_dir(config)
    t0 = time.time()
    sweep = random_sweep(
        config.n_qubits,
        config.n_states,
        config.pool or None,
        config.seed,
        gini_max=config.gini_max,
    )
    files = ["sweep_states.csv"]
    write_sweep_csv(sweep, out_dir / "sweep_states.csv")
    runs, fig3_rows, warnings = [], [], []
    incomplete = False
    try:
        for idx, item in enumerate(sweep.items):
            label = f"state_{idx:03d}"
            params = _resolve_noise(config, item.layout)
            rec = reconstruct_state(
                label,
                item.layout,
                config.n_qubits,
                params,
                config.shots,
                _state_seed(config.seed, label),
            )
            runs.append(_state_run(rec, item.gini))
            warnings.extend(_collect_warnings(rec))
            row = runs[-1]
            fig3_rows.append(
                [
                    idx,
                    repr(item.gini),
                    repr(fidelity(rec.result_0.rho, rec.result_t.rho)),
                    repr(fidelity(rec.result_0.rho, rec.rho_m)),
                    repr(fidelity(rec.result_t.rho, rec.rho_m)),
                    repr(row.n_t / row.n_0),
                ]
            )
    except Exception:
        incomplete = True
        raise
    finally:
        rows = comparison_table(runs)
        write_comparison_csv(rows, out_dir / "comparison.csv")
        with open(out_dir / "fig3.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(FIG3_COLUMNS)
            writer.writerows(fig3_rows)
        files += ["comparison.csv", "fig3.csv"]
        manifest = _write_manifest(out_dir, config, files, warnings, incomplete)
        _write_json({"elapsed_s": time.time() - t0}, out_dir / "timing.json")
    return manifest


def _entangled_layout(config):
    if config.layout_path:
        layout = load_layout(config.layout_path)
        n_qubits = layout.m // 2
        target = None
        label = config.preset or "custom"
    else:
        if not config.preset:
            raise ContractError("entangled/scan runs need a preset or a layout")
        layout = preset_layout(config.preset)
        n_qubits, target = preset_target(config.preset)
        label = config.preset
    return label, layout, n_qubits, target


def cmd_entangled(config):
    """Preset-state reconstruction, Table-1-analog row, and threshold scan."""
    out_dir = _prepare_out_dir(config)
    t0 = time.time()
    label, layout, n_qubits, target = _entangled_layout(config)
    params = _resolve_noise(config, layout)
    rec = reconstruct_state(
        label, layout, n_qubits, params, config.shots, _state_seed(config.seed, label)
    )
    warnings = _collect_warnings(rec)
    files = []
    for name, rho, plan, diag in (
        ("rho_model", rec.rho_m, rec.result_0.plan, rec.model_diag),
        ("rho_qst", rec.result_0.rho, rec.result_0.plan, rec.result_0.diagnostics),
        ("rho_tqst", rec.result_t.rho, rec.result_t.plan, rec.result_t.diagnostics),
    ):
        _write_json(
            reconstruction_to_json(rho, plan, _json_safe(diag)), out_dir / f"{name}.json"
        )
        _write_matrix_csv(rho.real, out_dir / f"{name}_re.csv")
        _write_matrix_csv(rho.imag, out_dir / f"{name}_im.csv")
        files += [f"{name}.json", f"{name}_re.csv", f"{name}_im.csv"]

    ideal_gini = rec.result_t.diagnostics["gini"]
    if target is not None:
        from .tomo import gini_index

        ideal_gini = gini_index(np.abs(target) ** 2)
    rows = comparison_table([_state_run(rec, ideal_gini)])
    write_comparison_csv(rows, out_dir / "table1.csv")
    files.append("table1.csv")

    scan_rows = threshold_scan_rows(rec, config.seed)
    _write_scan_csv(scan_rows, out_dir / "scan.csv")
    files.append("scan.csv")

    if config.repeats > 1:
        spread = _seed_resampled_spread(config, label, layout, n_qubits, params)
        with open(out_dir / "spread.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["label", "metric", "mean", "std", "repeats", "method"])
            writer.writerow(spread)
        files.append("spread.csv")

    manifest = _write_manifest(out_dir, config, files, warnings)
    _write_json({"elapsed_s": time.time() - t0}, out_dir / "timing.json")
    return manifest


def _seed_resampled_spread(config, label, layout, n_qubits, params):
    """F_0t spread across reseeded shot-noise realizations. This is a
    simulation convenience, not the error model of any laboratory data."""
    values = []
    for r in range(config.repeats):
        rec = reconstruct_state(
            label,
            layout,
            n_qubits,
            params,
            config.shots,
            _state_seed(config.seed, f"{label}|repeat{r}"),
        )
        values.append(fidelity(rec.result_0.rho, rec.result_t.rho))
    return [
        label,
        "F_0t",
        repr(float(np.mean(values))),
        repr(float(np.std(values))),
        config.repeats,
        "seed_resampled",
    ]


def cmd_threshold_scan(config):
    """Standalone threshold scan over the plan-changing t values."""
    out_dir = _prepare_out_dir(config)
    t0 = time.time()
    label, layout, n_qubits, _ = _entangled_layout(config)
    params = _resolve_noise(config, layout)
    rec = reconstruct_state(
        label, layout, n_qubits, params, config.shots, _state_seed(config.seed, label)
    )
    scan_rows = threshold_scan_rows(rec, config.seed)
    _write_scan_csv(scan_rows, out_dir / "scan.csv")
    manifest = _write_manifest(out_dir, config, ["scan.csv"], _collect_warnings(rec))
    _write_json({"elapsed_s": time.time() - t0}, out_dir / "timing.json")
    return manifest


def cmd_report(config):
    """Merge previously written manifests into one plot-ready bundle."""
    out_dir = _prepare_out_dir(config)
    if not config.manifests:
        raise ContractError("report needs manifest paths")
    tables = {}
    warnings = []
    sources = []
    for mpath in config.manifests:
        mpath = Path(mpath)
        with open(mpath) as fh:
            manifest = json.load(fh)
        sources.append(str(mpath))
        warnings.extend(manifest.get("warnings", []))
        if manifest.get("incomplete"):
            warnings.append(f"{mpath}: marked incomplete")
        for name, digest in manifest["files"].items():
            fpath = mpath.parent / name
            if not fpath.exists() or _sha256(fpath) != digest:
                raise ContractError(f"stale data: {fpath} does not match its manifest hash")
            if not name.endswith(".csv"):
                continue
            with open(fpath, newline="") as fh:
                reader = list(csv.reader(fh))
            if not reader:
                continue
            header, rows = reader[0], reader[1:]
            entry = tables.setdefault(name, {"header": header, "rows": []})
            if entry["header"] != header:
                raise ContractError(f"conflicting headers for {name}")
            entry["rows"].extend(rows)
    bundle = {"sources": sources, "warnings": warnings, "tables": tables}
    _write_json(bundle, out_dir / "report.json")
    files = ["report.json"]
    if "comparison.csv" in tables or "table1.csv" in tables:
        merged = tables.get("comparison.csv", tables.get("table1.csv"))
        rows = list(merged["rows"])
        if "comparison.csv" in tables and "table1.csv" in tables:
            rows += tables["table1.csv"]["rows"]
        with open(out_dir / "report.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(merged["header"])
            writer.writerows(rows)
        files.append("report.csv")
    return _write_manifest(out_dir, config, files, warnings)


def _json_safe(obj):
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    return obj


def _prepare_out_dir(config):
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    return out_dir


def run_experiment(config):
    if config.experiment == "sweep":
        return cmd_sweep(config)
    if config.experiment == "entangled":
        return cmd_entangled(config)
    if config.experiment == "scan":
        return cmd_threshold_scan(config)
    if config.experiment == "report":
        return cmd_report(config)
    raise ContractError(f"unknown experiment {config.experiment!r}")
