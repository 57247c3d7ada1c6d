"""Command-line front end: generate / train / account / sweep / selftest.

Configuration is a line-oriented ``key = value`` file with ``#`` comments and
dotted section names (``train.eta = 0.01``); unknown keys are errors so typos
cannot silently fall back to defaults. Every subcommand is deterministic
given (config, seed): CSV outputs are byte-identical across repeated runs
and carry a trailing manifest comment with the seed and a config hash.

Exit codes: 0 success, 2 configuration error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import data as data_mod
from .accountant import (
    PrivacyConfig,
    build_ledger,
    composition_baseline,
    contribution_trace,
    epsilon_for_batch_index,
    lsi_log_table,
    per_layer_total,
    total_epsilon,
)
from .network import save_model
from .numerics import derive_seed
from .schedules import LinearDecay, ScheduleError, parse_schedule
from .trainer import TrainConfig, TrainingDiverged, train

__all__ = ["main", "ConfigError", "run_command"]


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def _parse_int_list(text: str) -> list:
    return [int(v) for v in text.split(",") if v.strip()]


def _opt(parser):
    def inner(text: str):
        return None if text.strip() == "" else parser(text)

    return inner


# key -> (parser, default-as-string)
KNOWN_KEYS = {
    "seed": (int, "0"),
    "out.dir": (str, "runs"),
    "data.path": (str, ""),
    "data.n": (int, "6000"),
    "data.dims": (int, "20"),
    "data.classes": (int, "5"),
    "data.train_frac": (float, "0.8"),
    "data.class_sep": (float, "2.0"),
    "data.feature_scale": (float, "1.0"),
    "data.informative": (_opt(int), ""),
    "data.redundant": (_opt(int), ""),
    "model.hidden": (_parse_int_list, "200,200,200,200"),
    "model.rho": (float, "3.0"),
    "model.rho_final": (_opt(float), ""),
    "model.init_sigma2": (float, "0.01"),
    "model.cap_final": (_parse_bool, "true"),
    "train.epochs": (int, "50"),
    "train.batch": (int, "960"),
    "train.eta": (float, "0.01"),
    "train.gamma": (float, "1.0"),
    "train.regularizer": (str, "none"),
    "train.schedule": (str, "constant:0.01"),
    "train.dp": (_parse_bool, "true"),
    "train.final_normalize": (_parse_bool, "true"),
    "privacy.alpha": (float, "100.0"),
    "privacy.l_t": (float, "1.0"),
    "privacy.l_f": (_opt(float), ""),
    "privacy.s_g": (_opt(float), ""),
    "privacy.c0": (_opt(float), ""),
    "account.epochs_grid": (str, "1:30"),
    "account.schedules": (str, "constant:0.01"),
    "account.j0": (str, ""),
    "sweep.epochs_list": (_parse_int_list, "10,20,30,40,50"),
    "sweep.strategies": (str, "constant:0.01 decrease:0.0075,0.0008"),
    "sweep.repeats": (int, "5"),
    "sweep.workers": (int, "1"),
}


def parse_config_text(text: str, source: str = "<config>") -> dict:
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {stripped!r}")
        key, _, value = stripped.partition("=")
        key = key.strip()
        if key not in KNOWN_KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        raw[key] = value.strip()
    return raw


def resolve_config(raw: dict) -> dict:
    resolved = {}
    for key, (parser, default) in KNOWN_KEYS.items():
        text = raw.get(key, default)
        try:
            resolved[key] = parser(text)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {key}: {text!r} ({exc})") from exc
    return resolved


def load_config(path: str | None, overrides, seed: int | None, out: str | None) -> dict:
    raw = {}
    if path:
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        with open(path) as fh:
            raw = parse_config_text(fh.read(), path)
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, _, value = item.partition("=")
        key = key.strip()
        if key not in KNOWN_KEYS:
            raise ConfigError(f"--set: unknown key {key!r}")
        raw[key] = value.strip()
    cfg = resolve_config(raw)
    if seed is not None:
        cfg["seed"] = seed
    if out is not None:
        cfg["out.dir"] = out
    return cfg


# Keys that steer where/how a run executes without affecting its results.
_UNHASHED_KEYS = {"out.dir", "sweep.workers"}


def config_hash(cfg: dict) -> str:
    canon = "\n".join(f"{k}={cfg[k]!r}" for k in sorted(cfg) if k not in _UNHASHED_KEYS)
    return hashlib.blake2s(canon.encode(), digest_size=6).hexdigest()


def manifest_line(cfg: dict) -> str:
    return f"# dpsbcd v1 seed={cfg['seed']} config_hash={config_hash(cfg)}"


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _csv_safe(spec: str) -> str:
    """Schedule specs carry commas; swap them out inside CSV fields."""
    return spec.replace(",", ";")


def write_csv(path, header, rows, manifest: str) -> None:
    lines = [",".join(header)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    lines.append(manifest)
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _out_path(cfg: dict, name: str) -> str:
    os.makedirs(cfg["out.dir"], exist_ok=True)
    return os.path.join(cfg["out.dir"], name)


# ---------------------------------------------------------------------------
# Privacy-config assembly shared by train and sweep
# ---------------------------------------------------------------------------

def _privacy_configs(record, cfg: dict):
    return record.privacy_configs(
        alpha=cfg["privacy.alpha"],
        lip_prox=cfg["privacy.l_t"],
        lip_gradient=cfg["privacy.l_f"],
        grad_sensitivity=cfg["privacy.s_g"],
        c0=cfg["privacy.c0"],
    )


def _ledger_rows(configs):
    """Rows (layer, j0, k, contribution, c_kj, eps_cumulative) per layer."""
    rows = []
    for layer, pc in enumerate(configs):
        ledger = build_ledger(pc)
        table = ledger.lsi_table
        m = pc.batches_per_epoch
        for j0 in range(m):
            running = 0.0
            for k, contribution in enumerate(ledger.contributions[j0]):
                running += float(contribution)
                rows.append(
                    (layer, j0, k, float(contribution), float(table[k, j0]), running)
                )
    return rows


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_generate(cfg: dict, force: bool) -> int:
    path = cfg["data.path"] or _out_path(cfg, "dataset.csv")
    if os.path.exists(path) and not force:
        raise ConfigError(f"{path} exists; pass --force to overwrite")
    ds = data_mod.generate(
        n=cfg["data.n"],
        dims=cfg["data.dims"],
        classes=cfg["data.classes"],
        seed=cfg["seed"],
        train_frac=cfg["data.train_frac"],
        class_sep=cfg["data.class_sep"],
        informative=cfg["data.informative"],
        redundant=cfg["data.redundant"],
        feature_scale=cfg["data.feature_scale"],
    )
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    data_mod.save_csv(ds, path, manifest_comment=manifest_line(cfg))
    manifest_path = path + ".manifest"
    keys = [k for k in sorted(KNOWN_KEYS) if k.startswith("data.") or k == "seed"]
    with open(manifest_path, "w", newline="\n") as fh:
        for key in keys:
            fh.write(f"{key} = {cfg[key]}\n")
    print(f"wrote {path} ({ds.n} rows) and {manifest_path}")
    return 0


def _load_dataset(cfg: dict) -> data_mod.Dataset:
    path = cfg["data.path"] or _out_path(cfg, "dataset.csv")
    if not os.path.exists(path):
        raise ConfigError(f"dataset not found at {path}; run 'dpsbcd generate' first")
    return data_mod.load_csv(path)


def _train_config(cfg: dict) -> TrainConfig:
    try:
        schedule = parse_schedule(cfg["train.schedule"])
    except ScheduleError as exc:
        raise ConfigError(str(exc)) from exc
    return TrainConfig(
        epochs=cfg["train.epochs"],
        batch_size=cfg["train.batch"],
        eta=cfg["train.eta"],
        gamma=cfg["train.gamma"],
        rho=cfg["model.rho"],
        regularizer=cfg["train.regularizer"],
        schedule=schedule,
        seed=cfg["seed"],
        dp_enabled=cfg["train.dp"],
        hidden=tuple(cfg["model.hidden"]),
        init_sigma2=cfg["model.init_sigma2"],
        cap_final=cfg["model.cap_final"],
        rho_final=cfg["model.rho_final"],
        final_normalize=cfg["train.final_normalize"],
        train_frac=cfg["data.train_frac"],
    )


def cmd_train(cfg: dict) -> int:
    ds = _load_dataset(cfg)
    train_cfg = _train_config(cfg)
    try:
        model, trace, record, _ = train(train_cfg, ds)
    except TrainingDiverged as exc:
        print(f"numeric failure: {exc} (last good epoch {exc.last_good_epoch})")
        return 3
    manifest = manifest_line(cfg)
    write_csv(
        _out_path(cfg, "trace.csv"),
        ["epoch", "objective", "train_acc", "test_acc"],
        [
            (k, trace.objective[k], trace.train_acc[k], trace.test_acc[k])
            for k in range(len(trace))
        ],
        manifest,
    )
    save_model(model, _out_path(cfg, "model.bin"))
    accuracy = trace.test_acc[-1] if len(trace) else float("nan")
    if cfg["train.dp"] and train_cfg.epochs >= 1:
        configs = _privacy_configs(record, cfg)
        eps_hidden = per_layer_total(configs)
        eps_comp = float(sum(composition_baseline(pc) for pc in configs))
        write_csv(
            _out_path(cfg, "ledger.csv"),
            ["layer", "j0", "k", "contribution", "c_kj", "eps_cumulative"],
            _ledger_rows(configs),
            manifest,
        )
        print(f"accuracy={accuracy!r} eps_hidden={eps_hidden!r} eps_composition={eps_comp!r}")
    else:
        print(f"accuracy={accuracy!r} eps_hidden=n/a eps_composition=n/a")
    return 0


def _parse_epoch_grid(text: str) -> list:
    text = text.strip()
    if ":" in text:
        lo, _, hi = text.partition(":")
        return list(range(int(lo), int(hi) + 1))
    return _parse_int_list(text)


def _account_config(cfg: dict, schedule, epochs: int) -> PrivacyConfig:
    if cfg["privacy.l_f"] is None:
        raise ConfigError("account requires privacy.l_f (no training run to derive it from)")
    if cfg["privacy.alpha"] <= 1:
        raise ConfigError("privacy.alpha must be > 1")
    n = cfg["data.n"]
    train_size = int(round(cfg["data.train_frac"] * n))
    return PrivacyConfig(
        alpha=cfg["privacy.alpha"],
        grad_sensitivity=cfg["privacy.s_g"] if cfg["privacy.s_g"] is not None else 1.0,
        lip_gradient=cfg["privacy.l_f"],
        eta=cfg["train.eta"],
        batch_size=cfg["train.batch"],
        dataset_size=train_size,
        epochs=epochs,
        schedule=schedule,
        lip_prox=cfg["privacy.l_t"],
        c0=cfg["privacy.c0"] if cfg["privacy.c0"] is not None else 1.0 / cfg["model.init_sigma2"],
        gamma=cfg["train.gamma"],
    )


def cmd_account(cfg: dict) -> int:
    specs = cfg["account.schedules"].split()
    if not specs:
        raise ConfigError("account.schedules is empty")
    try:
        schedules = [(spec, parse_schedule(spec)) for spec in specs]
    except ScheduleError as exc:
        raise ConfigError(str(exc)) from exc
    grid = _parse_epoch_grid(cfg["account.epochs_grid"])
    if not grid or min(grid) < 1:
        raise ConfigError(f"bad account.epochs_grid {cfg['account.epochs_grid']!r}")
    manifest = manifest_line(cfg)
    max_k = max(grid)

    # Epsilon-vs-epochs curves, one column per schedule.
    curves = [
        [total_epsilon(_account_config(cfg, schedule, epochs)) for epochs in grid]
        for _, schedule in schedules
    ]
    header = ["K"] + [_csv_safe(spec) for spec, _ in schedules]
    rows = [
        tuple([grid[i]] + [curves[s][i] for s in range(len(schedules))])
        for i in range(len(grid))
    ]
    write_csv(_out_path(cfg, "eps_curve.csv"), header, rows, manifest)

    # Per-epoch contribution trace of the first schedule at the largest K,
    # ordered by distance from the release point.
    primary = _account_config(cfg, schedules[0][1], max_k)
    m = primary.batches_per_epoch
    if cfg["account.j0"].strip():
        j0_list = _parse_int_list(cfg["account.j0"])
    else:
        j0_list = list(range(m))
    contrib_rows = []
    for j0 in j0_list:
        if not 0 <= j0 < m:
            raise ConfigError(f"account.j0 entry {j0} out of range 0..{m - 1}")
        trace = contribution_trace(primary, j0)
        for age, value in enumerate(trace):
            contrib_rows.append((j0, age, max_k - 1 - age, float(value)))
    write_csv(
        _out_path(cfg, "contributions.csv"),
        ["j0", "epochs_before_release", "epoch", "contribution"],
        contrib_rows,
        manifest,
    )

    # Detailed ledger for the first schedule plus the summary table.
    write_csv(
        _out_path(cfg, "ledger.csv"),
        ["layer", "j0", "k", "contribution", "c_kj", "eps_cumulative"],
        _ledger_rows([primary]),
        manifest,
    )
    summary_rows = []
    for epochs in grid:
        pc = _account_config(cfg, schedules[0][1], epochs)
        summary_rows.append(
            (epochs, cfg["privacy.alpha"], total_epsilon(pc), composition_baseline(pc))
        )
    write_csv(
        _out_path(cfg, "summary.csv"),
        ["K", "alpha", "eps_hidden_state", "eps_composition"],
        summary_rows,
        manifest,
    )
    print(f"accounted {len(schedules)} schedule(s) over K={grid[0]}..{grid[-1]}")
    return 0


def _strategy_schedule(spec: str, epochs: int):
    """Sweep strategies: plain schedule specs plus 'decrease:FINAL,SLOPE',
    which rebuilds the linear decay per cell so it ends at FINAL after the
    cell's epoch count."""
    name, _, rest = spec.partition(":")
    if name.strip().lower() == "decrease":
        final, slope = (float(x) for x in rest.split(","))
        return LinearDecay(final + slope * epochs, slope, min(final, 1e-6))
    return parse_schedule(spec)


def cmd_sweep(cfg: dict) -> int:
    ds = _load_dataset(cfg)
    strategies = cfg["sweep.strategies"].split()
    if not strategies:
        raise ConfigError("sweep.strategies is empty")
    repeats = cfg["sweep.repeats"]
    if repeats < 1:
        raise ConfigError("sweep.repeats must be >= 1")
    epochs_list = cfg["sweep.epochs_list"]
    base_train = _train_config(cfg)

    cells = [(spec, epochs) for spec in strategies for epochs in epochs_list]

    def run_cell(cell):
        spec, epochs = cell
        try:
            schedule = _strategy_schedule(spec, epochs)
        except ScheduleError as exc:
            raise ConfigError(str(exc)) from exc
        accs, eps_h, eps_c = [], [], []
        for r in range(repeats):
            cell_seed = derive_seed(cfg["seed"], "sweep", spec, epochs, r)
            run_cfg = dataclasses.replace(
                base_train, schedule=schedule, epochs=epochs, seed=cell_seed
            )
            _, trace, record, _ = train(run_cfg, ds)
            accs.append(trace.test_acc[-1] if len(trace) else float("nan"))
            if run_cfg.dp_enabled and epochs >= 1:
                configs = _privacy_configs(record, cfg)
                eps_h.append(per_layer_total(configs))
                eps_c.append(float(sum(composition_baseline(pc) for pc in configs)))
        acc_mean = float(np.mean(accs))
        if repeats > 1:
            # Normal-approximation 95% interval half-width.
            ci_text = repr(1.96 * float(np.std(accs, ddof=1)) / math.sqrt(repeats))
        else:
            ci_text = ""
        eps_hidden = repr(float(np.mean(eps_h))) if eps_h else "n/a"
        eps_comp = repr(float(np.mean(eps_c))) if eps_c else "n/a"
        return (epochs, _csv_safe(spec), eps_hidden, eps_comp, repr(acc_mean), ci_text)

    workers = max(1, cfg["sweep.workers"])
    if workers == 1:
        results = [run_cell(cell) for cell in cells]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_cell, cells))

    write_csv(
        _out_path(cfg, "table.csv"),
        ["K", "schedule", "eps_hidden", "eps_composition", "acc_mean", "acc_ci95"],
        results,
        manifest_line(cfg),
    )
    print(f"swept {len(cells)} cells x {repeats} repeats")
    return 0


# ---------------------------------------------------------------------------
# Self-test suites (independent oracles, no test framework needed)
# ---------------------------------------------------------------------------

def _suite_preactivation(corrupt: bool) -> tuple:
    from .network import LipschitzMLP
    from .splitting import SplitState, update_preactivations

    rng = np.random.default_rng(101)
    z = rng.uniform(-3, 3, size=2000)
    a = rng.uniform(0, 3, size=2000)
    model = LipschitzMLP([np.diag(z), np.ones((1, z.size))])
    state = SplitState([np.ones((z.size, 1)), a[:, None]], [np.zeros((z.size, 1))])
    got = update_preactivations(0, model, state)[:, 0]
    if corrupt:
        got = got + 1e-3
    worst = 0.0
    for zi, ai, ui in zip(z, a, got):
        u_neg = min(0.0, zi)
        u_pos = max(0.0, 0.5 * (ai + zi))
        neg_better = ai * ai + (u_neg - zi) ** 2 <= (ai - u_pos) ** 2 + (u_pos - zi) ** 2
        best = u_neg if neg_better else u_pos
        worst = max(worst, abs(ui - best))
    return worst <= 1e-6, f"max |closed form - brute force| = {worst:.2e}"


def _suite_fd_gradient(corrupt: bool) -> tuple:
    from .network import LipschitzMLP
    from .numerics import fd_gradient
    from .splitting import SplitState, lagrangian, weight_gradient

    rng = np.random.default_rng(102)
    worst = 0.0
    for _ in range(20):
        widths = (3, 4, 2)
        weights = [rng.standard_normal((widths[i + 1], widths[i])) for i in range(2)]
        model = LipschitzMLP(weights, [10.0, 10.0])
        state = SplitState(
            [rng.standard_normal((3, 4)), rng.standard_normal((4, 4))],
            [rng.standard_normal((4, 4))],
        )
        targets = rng.standard_normal((2, 4))
        for d in (0, 1):
            analytic = weight_gradient(d, model, state, targets)
            if corrupt:
                analytic = analytic * (1 + 1e-3)

            def objective(theta, d=d):
                probe = model.copy()
                probe.weights[d] = theta
                return lagrangian(probe, state, targets)

            numeric = fd_gradient(objective, model.weights[d], h=1e-5)
            denom = max(np.linalg.norm(analytic), 1e-12)
            worst = max(worst, float(np.linalg.norm(numeric - analytic)) / denom)
    return worst < 1e-5, f"max relative gradient error = {worst:.2e}"


def _suite_spectral(corrupt: bool) -> tuple:
    from .numerics import power_iteration

    rng = np.random.default_rng(103)
    worst = 0.0
    for _ in range(20):
        a = rng.standard_normal((int(rng.integers(5, 40)), int(rng.integers(5, 40))))
        exact = np.linalg.svd(a, compute_uv=False)[0]
        approx = power_iteration(a, max_iters=5000, tol=1e-14)
        if corrupt:
            approx *= 1 + 1e-3
        worst = max(worst, abs(approx - exact) / exact)
    return worst <= 1e-6, f"max relative spectral-norm error = {worst:.2e}"


def _suite_accountant(corrupt: bool) -> tuple:
    rng = np.random.default_rng(104)
    epochs, m = 8, 4
    table = rng.uniform(1e-3, 5e-2, size=(epochs, m))

    @dataclasses.dataclass(frozen=True)
    class Tab:
        values: tuple

        def raw(self, eta, k, j):
            return self.values[k][j]

    cfg = PrivacyConfig(
        alpha=20.0,
        grad_sensitivity=1.3,
        lip_gradient=0.94,
        eta=0.03,
        batch_size=10,
        dataset_size=40,
        epochs=epochs,
        schedule=Tab(tuple(tuple(row) for row in table)),
        c0=50.0,
    )
    flat = [table[k][j] for k in range(epochs) for j in range(m)]
    flat += [flat[-1]] * m
    q2 = (cfg.lip_gradient * cfg.lip_prox) ** 2
    log_c = lsi_log_table(cfg)
    worst = 0.0
    for t in range(1, (epochs + 1) * m + 1):
        w = sum(flat[tp] * q2 ** (t - 1 - tp) for tp in range(t))
        naive = -math.log(2 * cfg.eta * cfg.lip_prox**2 * w)
        worst = max(worst, abs(math.expm1(log_c[t] - naive)))

    j0 = 1
    inv = 1.0 / cfg.lip_prox**2

    def c_at(k, j):
        t = k * m + j
        if t == 0:
            return cfg.c0
        w = sum(flat[tp] * q2 ** (t - 1 - tp) for tp in range(t))
        return 1.0 / (2 * cfg.eta * cfg.lip_prox**2 * w)

    direct = 0.0
    for k in range(epochs):
        inside = c_at(k, j0 + 1) / c_at(epochs, m - 1)
        inside *= (1.0 / q2) ** ((m - 1) * (epochs - k) - j0)
        for l in range(k, epochs + 1):
            inside *= c_at(l, j0 + 1) / c_at(l, j0)
        direct += (
            cfg.alpha
            * cfg.eta
            * cfg.grad_sensitivity**2
            / (4 * cfg.batch_size**2 * table[k][j0])
            * inside ** (-inv)
        )
    eps = epsilon_for_batch_index(cfg, j0)[0]
    if corrupt:
        eps *= 1 + 1e-6
    worst = max(worst, abs(eps / direct - 1.0))
    return worst <= 1e-10, f"max relative accountant error = {worst:.2e}"


def _suite_solver(corrupt: bool) -> tuple:
    from .numerics import solve_spd

    rng = np.random.default_rng(105)
    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(2, 30))
        q, _ = np.linalg.qr(rng.standard_normal((n, n)))
        a = (q * np.exp(rng.uniform(0, 4, size=n))) @ q.T
        b = rng.standard_normal((n, 3))
        x = solve_spd(a, b)
        if corrupt:
            x = x * (1 + 1e-8)
        worst = max(worst, float(np.linalg.norm(a @ x - b) / np.linalg.norm(b)))
    return worst <= 1e-10, f"max relative solve residual = {worst:.2e}"


SELFTEST_SUITES = {
    "preactivation": _suite_preactivation,
    "gradients": _suite_fd_gradient,
    "spectral": _suite_spectral,
    "accountant": _suite_accountant,
    "solver": _suite_solver,
}


def cmd_selftest(corrupt: str | None) -> int:
    if corrupt is not None and corrupt not in SELFTEST_SUITES:
        raise ConfigError(
            f"unknown --corrupt target {corrupt!r}; choose from {sorted(SELFTEST_SUITES)}"
        )
    failures = 0
    for name, suite in SELFTEST_SUITES.items():
        ok, detail = suite(corrupt == name)
        verdict = "pass" if ok else "FAIL"
        print(f"{name}: {verdict} ({detail})")
        failures += 0 if ok else 1
    return 1 if failures else 0


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dpsbcd",
        description="Noisy block coordinate descent for spectrally capped MLPs "
        "with hidden-state Renyi privacy accounting.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("generate", "train", "account", "sweep", "selftest"):
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="key = value config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None, help="output directory")
        if name == "generate":
            p.add_argument("--force", action="store_true")
        if name == "selftest":
            p.add_argument("--corrupt", default=None, help="negative-control hook")
    return parser


def run_command(args) -> int:
    cfg = load_config(args.config, args.set, args.seed, args.out)
    if args.command == "generate":
        return cmd_generate(cfg, args.force)
    if args.command == "train":
        return cmd_train(cfg)
    if args.command == "account":
        return cmd_account(cfg)
    if args.command == "sweep":
        return cmd_sweep(cfg)
    if args.command == "selftest":
        return cmd_selftest(args.corrupt)
    raise ConfigError(f"unknown command {args.command!r}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return run_command(args)
    except TrainingDiverged as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, ScheduleError, ValueError) as exc:
        # Domain modules signal invalid parameters with ValueError.
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
