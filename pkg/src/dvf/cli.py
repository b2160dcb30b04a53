"""``dvf run --config exp.json [overrides]``: training, direct solves, inf-sup and lemma reports."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from dvf import __version__

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4
MODES = ("train", "solve", "infsup", "verify")
# dense eigenvalue work for the loss bounds is skipped above this size
BOUNDS_MAX_DIM = 3000


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    problem: str | None = "laplace"
    nx: int = 10
    ny: int = 10
    epochs: int = 1000
    seed: int = 0
    hidden: list[int] = field(default_factory=lambda: [128, 128])
    lr: float = 0.002
    out: str = "out"
    mode: str = "train"

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> ExperimentConfig:
        d = dict(d)
        if "grid" in d:
            g = d.pop("grid")
            d["nx"], d["ny"] = (g, g) if isinstance(g, int) else g
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        cfg = cls(**d)
        cfg.hidden = list(cfg.hidden)
        return cfg

    @classmethod
    def from_json(cls, text: str) -> ExperimentConfig:
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(d)

    def validate(self) -> None:
        from dvf.problems import PROBLEMS

        if self.problem is not None and not isinstance(self.problem, str):
            raise ConfigError("problem must be a string or null")
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {', '.join(MODES)}")
        for name in ("nx", "ny", "epochs", "seed"):
            if not isinstance(getattr(self, name), int) or isinstance(getattr(self, name), bool):
                raise ConfigError(f"{name} must be an integer")
        if self.nx < 2 or self.ny < 2:
            raise ConfigError("grid needs at least 2 intervals per direction")
        if self.epochs < 0:
            raise ConfigError("epochs must be non-negative")
        if not isinstance(self.hidden, list) or not self.hidden or any(not isinstance(w, int) or w < 1 for w in self.hidden):
            raise ConfigError("hidden must be a non-empty list of positive widths")
        if isinstance(self.lr, bool) or not isinstance(self.lr, (int, float)) or not self.lr > 0:
            raise ConfigError("lr must be positive")
        if self.mode == "infsup":
            if self.problem is not None:
                raise ConfigError("infsup mode takes no problem; set problem to null")
            if self.nx != self.ny:
                raise ConfigError("infsup mode needs a square grid")
            if self.nx < 4:
                raise ConfigError("infsup mode needs N >= 4")
        elif self.mode in ("train", "solve"):
            if self.problem not in PROBLEMS:
                raise ConfigError(f"unknown problem {self.problem!r}; expected one of {', '.join(PROBLEMS)}")
        elif self.problem is not None and self.problem not in PROBLEMS:
            raise ConfigError(f"unknown problem {self.problem!r}")


def _grid(cfg):
    from dvf.grid import Grid

    return Grid(cfg.nx, cfg.ny)


def _constants(sys_, manifest: dict) -> tuple[float, float] | None:
    from dvf.linalg import infsup_constant
    from dvf.loss import stability_constants

    out = None
    if sys_.dim <= BOUNDS_MAX_DIM:
        alpha, mu = stability_constants(sys_)
        manifest["alpha_h"], manifest["mu_h"] = alpha, mu
        out = (alpha, mu)
    else:
        manifest["alpha_h"] = manifest["mu_h"] = None
    if sys_.name != "laplace" and sys_.grid.nx == sys_.grid.ny:
        manifest["beta_h"] = infsup_constant(sys_.grid)
    return out


def _write_report(path, metrics: dict):
    from dvf.io import write_csv

    return write_csv(path, ["metric", "value"], [(k, v) for k, v in metrics.items()])


def run_train(cfg, out: Path, figures: bool, manifest: dict) -> list[Path]:
    from dvf import io
    from dvf.loss import reconstruct
    from dvf.net import TRACE_COLUMNS, AdamaxState, Mlp, save_params, tabulate_dofs, train
    from dvf.problems import build, error_metrics

    sys_ = build(cfg.problem, _grid(cfg))
    net = Mlp((2, *cfg.hidden, sys_.ncomponents), seed=cfg.seed)
    result = train(sys_, net, cfg.epochs, AdamaxState(lr=cfg.lr))
    bounds = _constants(sys_, manifest)
    if result.best_params is not None:
        net.params = result.best_params
    threads = " ".join(f"{k}={v}" for k, v in io.thread_info().items())
    comment = f"activation={net.activation} seed={cfg.seed} threads: {threads}"
    files = [io.write_trace(out / "trace.csv", result.trace, TRACE_COLUMNS, comment)]
    v = reconstruct(sys_, tabulate_dofs(net, sys_.grid))
    files += io.dump_fields(sys_.space, v, out)
    save_params(net, out / "params.bin")
    files.append(out / "params.bin")
    if sys_.reference is not None:
        metrics = error_metrics(sys_, v)
        files.append(_write_report(out / "errors.csv", metrics))
        manifest["errors"] = metrics
    manifest["best_epoch"] = result.best_epoch
    manifest["best_loss"] = result.best_loss if result.trace else None
    if figures:
        from dvf import plotting

        if result.trace:
            files.append(plotting.plot_trace(result.trace, out / "trace.png", bounds))
        files.append(plotting.plot_fields(sys_.space, v, out / "fields.png", f"{cfg.problem}, best epoch"))
    return files


def run_solve(cfg, out: Path, figures: bool, manifest: dict) -> list[Path]:
    from dvf import io
    from dvf.loss import reconstruct
    from dvf.problems import build, error_metrics
    from dvf.spaces import reinsert_dofs

    sys_ = build(cfg.problem, _grid(cfg))
    v = reconstruct(sys_, reinsert_dofs(sys_.v_star, sys_.bc))
    files = io.dump_fields(sys_.space, v, out)
    metrics = error_metrics(sys_, v)
    files.append(_write_report(out / "errors.csv", metrics))
    manifest["errors"] = metrics
    if figures:
        from dvf import plotting

        files.append(plotting.plot_fields(sys_.space, v, out / "fields.png", f"{cfg.problem}, direct solve"))
    return files


def infsup_sizes(n: int) -> list[int]:
    ns = []
    k = 4
    while k <= n:
        ns.append(k)
        k *= 2
    if ns[-1] != n:
        ns.append(n)
    return ns


def run_infsup(cfg, out: Path, figures: bool, manifest: dict) -> list[Path]:
    from dvf.grid import Grid
    from dvf.io import write_csv
    from dvf.linalg import infsup_constant

    ns = infsup_sizes(cfg.nx)
    betas = [infsup_constant(Grid(n)) for n in ns]
    manifest["beta_h"] = dict(zip(map(str, ns), betas))
    files = [write_csv(out / "beta_vs_N.csv", ["N", "h", "beta"], [(n, 1.0 / n, b) for n, b in zip(ns, betas)])]
    if figures:
        from dvf import plotting

        files.append(plotting.plot_beta(ns, betas, out / "beta_vs_N.png"))
    return files


def run_verify(cfg, out: Path, figures: bool, manifest: dict) -> list[Path]:
    from dvf.grid import Grid
    from dvf.io import write_csv
    from dvf.verify import DEFAULT_SIZES, div_image_check, lemma_suite

    sizes = list(DEFAULT_SIZES)
    if (cfg.nx, cfg.ny) not in [(n, n) for n in sizes] and max(cfg.nx, cfg.ny) <= 16:
        sizes.append((cfg.nx, cfg.ny))
    rows = [(r.name, r.grid, r.samples, r.worst, r.tol, "pass" if r.passed else "FAIL") for r in lemma_suite(sizes, seed=cfg.seed)]
    for n in (3, 4, 5, 6):
        rep = div_image_check(Grid(n))
        rows.append(("div_image", rep.grid, rep.target_dim, max(rep.range_in_target, rep.target_in_range), 1e-8, "pass" if rep.passed else "FAIL"))
    if cfg.problem is not None:
        rows += _problem_checks(cfg)
    n_fail = sum(r[-1] == "FAIL" for r in rows)
    manifest["verify_failures"] = n_fail
    return [write_csv(out / "verify_report.csv", ["check", "grid", "samples", "worst", "tol", "status"], rows)]


def _problem_checks(cfg) -> list[tuple]:
    """Gradient and sandwich checks for the configured problem on a small grid."""
    from dvf.grid import Grid
    from dvf.loss import discrete_error, loss_and_gradient, loss_value, stability_constants
    from dvf.problems import build
    from dvf.spaces import reinsert_dofs

    n = min(cfg.nx, cfg.ny, 6)
    sys_ = build(cfg.problem, Grid(n))
    rng = np.random.default_rng(cfg.seed)
    v = rng.standard_normal(sys_.full_dim)
    _, g = loss_and_gradient(sys_, v)
    free = sys_.bc.complement()
    worst = 0.0
    step = 1e-6
    # norm-wise relative error; rounding in the loss swamps tiny components
    scale = np.abs(g).max()
    for k in rng.choice(free, size=min(20, free.size), replace=False):
        e = np.zeros_like(v)
        e[k] = step
        fd = (loss_value(sys_, v + e) - loss_value(sys_, v - e)) / (2 * step)
        worst = max(worst, abs(fd - g[k]) / scale)
    rows = [("loss_gradient_fd", f"{n}x{n}", 20, worst, 1e-6, "pass" if worst <= 1e-6 else "FAIL")]
    alpha, mu = stability_constants(sys_)
    vs = reinsert_dofs(sys_.v_star, sys_.bc)
    bad = 0.0
    for _ in range(100):
        w = vs + rng.standard_normal(sys_.full_dim)
        sq = np.sqrt(loss_value(sys_, w))
        err = discrete_error(sys_, w)
        bad = max(bad, (alpha * err - sq) / sq, (sq - mu * err) / sq)
    rows.append(("sandwich", f"{n}x{n}", 100, max(bad, 0.0), 1e-8, "pass" if bad <= 1e-8 else "FAIL"))
    return rows


RUNNERS = {"train": run_train, "solve": run_solve, "infsup": run_infsup, "verify": run_verify}


def run(cfg: ExperimentConfig, config_bytes: bytes | None = None, figures: bool = True) -> int:
    """Validate, execute and write artifacts; returns the process exit code."""
    from dvf.io import git_blob_sha1, thread_info, write_json
    from dvf.linalg import DenseSizeError, NumericalError

    try:
        cfg.validate()
    except ConfigError as exc:
        _err(f"config error: {exc}")
        return EXIT_CONFIG
    out = Path(cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        _err(f"cannot write to output directory {out}: {exc}")
        return EXIT_IO
    manifest = {
        "dvf_version": __version__,
        "config": asdict(cfg),
        # hash of the config file as given, and of the config after overrides
        "input_sha1": git_blob_sha1(config_bytes) if config_bytes is not None else None,
        "config_sha1": git_blob_sha1(cfg.to_json().encode()),
        "hyperparameters": {
            "optimizer": "adamax",
            "lr": cfg.lr,
            "beta1": 0.9,
            "beta2": 0.999,
            "eps": 1e-8,
            "activation": "tanh",
            "init": "glorot-uniform",
            "hidden": cfg.hidden,
        },
        "threads": thread_info(),
    }
    try:
        files = RUNNERS[cfg.mode](cfg, out, figures, manifest)
        manifest["files"] = sorted(p.name for p in files) + ["manifest.json"]
        write_json(out / "manifest.json", manifest)
    except DenseSizeError as exc:
        _err(f"numerical failure: {exc}")
        return EXIT_NUMERIC
    except NumericalError as exc:
        _err(f"numerical failure: {exc}")
        return EXIT_NUMERIC
    except OSError as exc:
        _err(f"I/O error: {exc}")
        return EXIT_IO
    if cfg.mode == "verify" and manifest.get("verify_failures"):
        _err(f"{manifest['verify_failures']} verification checks failed; see verify_report.csv")
        return EXIT_NUMERIC
    print(f"{cfg.mode} finished; artifacts in {out}")
    return EXIT_OK


def _err(msg: str) -> None:
    print(f"dvf: {msg}", file=sys.stderr)


def _parse_grid(text: str) -> tuple[int, int]:
    try:
        nx, _, ny = text.lower().partition("x")
        return int(nx), int(ny or nx)
    except ValueError:
        raise ConfigError(f"grid must look like NXxNY, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dvf", description=__doc__)
    p.add_argument("--version", action="version", version=f"dvf {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one experiment described by a JSON config")
    r.add_argument("--config", help="JSON config file; flags override its values")
    r.add_argument("--problem", help="laplace, stokes-mms or cavity ('none' for infsup)")
    r.add_argument("--mode", choices=MODES)
    r.add_argument("--grid", help="grid size as NXxNY, or N for a square grid")
    r.add_argument("--epochs", type=int)
    r.add_argument("--seed", type=int)
    r.add_argument("--lr", type=float)
    r.add_argument("--hidden", help="comma-separated hidden widths, e.g. 128,128")
    r.add_argument("--out", help="output directory")
    r.add_argument("--no-figures", action="store_true", help="skip the PNG figures")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    raw = None
    try:
        if args.config:
            try:
                raw = Path(args.config).read_bytes()
            except OSError as exc:
                _err(f"cannot read config: {exc}")
                return EXIT_IO
            try:
                cfg = ExperimentConfig.from_json(raw.decode())
            except UnicodeDecodeError:
                raise ConfigError("config is not UTF-8 text") from None
        else:
            cfg = ExperimentConfig()
        if args.problem is not None:
            cfg.problem = None if args.problem.lower() in ("none", "null") else args.problem
        if args.mode is not None:
            cfg.mode = args.mode
        if args.grid is not None:
            cfg.nx, cfg.ny = _parse_grid(args.grid)
        for name in ("epochs", "seed", "lr", "out"):
            if getattr(args, name) is not None:
                setattr(cfg, name, getattr(args, name))
        if args.hidden is not None:
            try:
                cfg.hidden = [int(w) for w in args.hidden.split(",")]
            except ValueError:
                raise ConfigError(f"hidden must be comma-separated integers, got {args.hidden!r}") from None
    except (ConfigError, TypeError) as exc:
        _err(f"config error: {exc}")
        return EXIT_CONFIG
    return run(cfg, raw, figures=not args.no_figures)


if __name__ == "__main__":
    sys.exit(main())
