"""Multi-session experiment runner: config, per-session seeds, artifacts, aggregation."""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .adversary import AttackModel
from .errors import ConfigError, QbcError
from .keys import KeyRegistry
from .scheme_dc import DcSessionConfig, run_dc_session
from .scheme_es import EsSessionConfig, run_es_session
from .scheme_qe import QeSessionConfig, run_qe_session
from .session import SUMMARY_FIELDS, SessionReport, bits_to_hex, hex_to_bits, session_rng

log = logging.getLogger(__name__)

SCHEMES = ("es", "dc", "qe")


@dataclass
class RunConfig:
    scheme: str = "es"
    r: int = 2
    n_states: int = 16
    secret: str = "01"
    payload: str = "0xA5"
    subset: tuple[int, ...] | None = None
    attack: dict = field(default_factory=dict)
    sessions: int = 1
    seed: int = 0
    out: str = "qbc-out"
    registry: str | None = None
    sample_fraction: float = 0.25
    return_fraction: float = 0.25
    decoy_rate: float = 0.2
    abort_threshold: float = 0.0
    impostors: tuple[int, ...] = ()
    workers: int = 1
    base_dir: str = "."

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.sessions < 1:
            raise ConfigError("sessions must be positive")
        if self.workers < 1:
            raise ConfigError("workers must be positive")
        self.impostors = tuple(self.impostors)
        if self.subset is not None:
            self.subset = tuple(self.subset)
        self.attack_model()
        self.session_config()

    @classmethod
    def from_file(cls, path, **overrides) -> "RunConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
        except OSError as exc:
            raise ConfigError(f"{path}: {exc.strerror}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}:1: run config must be a JSON object")
        known = set(cls.__dataclass_fields__)
        text = path.read_text().splitlines()
        for key in data:
            if key not in known:
                line = next((n for n, l in enumerate(text, 1) if f'"{key}"' in l), 1)
                raise ConfigError(f"{path}:{line}: unknown field {key!r}")
        data.setdefault("base_dir", str(path.parent))
        data.update({k: v for k, v in overrides.items() if v is not None})
        try:
            return cls(**data)
        except ConfigError as exc:
            bad = next((k for k in data if f"{k}" in str(exc)), None)
            line = next((n for n, l in enumerate(text, 1) if bad and f'"{bad}"' in l), None)
            raise ConfigError(f"{path}:{line}: {exc}" if line else f"{path}: {exc}") from exc
        except TypeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc

    def attack_model(self) -> AttackModel:
        return AttackModel.from_dict(self.attack, Path(self.base_dir))

    def session_config(self):
        if self.scheme == "es":
            return EsSessionConfig(self.r, self.n_states, self.sample_fraction, self.abort_threshold,
                                   hex_to_bits(self.secret), None, self.impostors)
        if self.scheme == "dc":
            return DcSessionConfig(self.r, self.n_states, self.sample_fraction, self.return_fraction,
                                   self.abort_threshold, hex_to_bits(self.secret), None,
                                   self.impostors)
        subset = self.subset or tuple(range(1, self.r + 1))
        return QeSessionConfig(self.r, subset, self.payload, self.n_states, self.sample_fraction,
                               self.decoy_rate, self.abort_threshold, self.abort_threshold,
                               seed=None, impostors=self.impostors)


@dataclass
class SampleStats:
    samples: int = 0
    errors: int = 0

    @property
    def rate(self) -> float:
        return self.errors / self.samples if self.samples else 0.0


def wilson_interval(successes: int, n: int, z: float = 1.96) -> tuple[float, float]:
    if n == 0:
        return (0.0, 1.0)
    p = successes / n
    denom = 1 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return (max(0.0, centre - half), min(1.0, centre + half))


@dataclass
class AggregateReport:
    scheme: str
    attack: str
    sessions_run: int = 0
    aborts: int = 0
    decoded: int = 0
    decode_successes: int = 0
    mismatch_sum: float = 0.0
    sample_stats: dict = field(default_factory=lambda: defaultdict(SampleStats))
    violations: list[str] = field(default_factory=list)

    def add(self, index: int, rep: SessionReport, honest: bool) -> None:
        self.sessions_run += 1
        self.aborts += rep.aborted
        self.mismatch_sum += rep.mismatch_rate
        if rep.decode_ok is not None:
            self.decoded += 1
            self.decode_successes += rep.decode_ok
        for s in rep.samples:
            key = (s.stage, "".join(map(str, s.key_bits)), s.basis)
            self.sample_stats[key].samples += 1
            self.sample_stats[key].errors += s.error
        if honest and (rep.aborted or not rep.decode_ok):
            self.violations.append(
                f"session {index}: honest run {'aborted at ' + str(rep.aborted_at) if rep.aborted else 'decoded wrongly'}"
            )

    @property
    def mean_mismatch_rate(self) -> float:
        return self.mismatch_sum / self.sessions_run if self.sessions_run else 0.0

    @property
    def decode_success_fraction(self) -> float | None:
        return self.decode_successes / self.decoded if self.decoded else None

    @property
    def detection_probability(self) -> float:
        return self.aborts / self.sessions_run if self.sessions_run else 0.0

    @property
    def detection_interval(self) -> tuple[float, float]:
        return wilson_interval(self.aborts, self.sessions_run)

    def check_consistency(self) -> None:
        for name in ("detection_probability", "mean_mismatch_rate"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                self.violations.append(f"{name}={v} outside [0, 1]")
        if self.decoded + self.aborts != self.sessions_run:
            self.violations.append(
                f"counts inconsistent: {self.decoded} decoded + {self.aborts} aborted "
                f"!= {self.sessions_run} run")

    def to_dict(self) -> dict:
        lo, hi = self.detection_interval
        return {
            "scheme": self.scheme,
            "attack": self.attack,
            "sessions_run": self.sessions_run,
            "aborts": self.aborts,
            "mean_mismatch_rate": self.mean_mismatch_rate,
            "decode_success_fraction": self.decode_success_fraction,
            "detection_probability": self.detection_probability,
            "detection_ci95": [lo, hi],
            "sample_error_rates": {
                "/".join(k): {"samples": v.samples, "errors": v.errors, "rate": v.rate}
                for k, v in sorted(self.sample_stats.items())
            },
            "violations": list(self.violations),
        }

    def summary_text(self) -> str:
        lo, hi = self.detection_interval
        frac = self.decode_success_fraction
        lines = [
            f"scheme={self.scheme} attack={self.attack}",
            f"sessions={self.sessions_run} aborts={self.aborts} "
            f"detection={self.detection_probability:.4f} (95% CI {lo:.4f}-{hi:.4f})",
            f"mean mismatch rate={self.mean_mismatch_rate:.4f} "
            f"decode success={'n/a' if frac is None else f'{frac:.4f}'}",
        ]
        for (stage, keys, basis), v in sorted(self.sample_stats.items()):
            lines.append(f"  {stage:6} key={keys or '-':4} basis={basis:3} "
                         f"samples={v.samples:6} error rate={v.rate:.4f}")
        for v in self.violations:
            lines.append(f"INVARIANT VIOLATION: {v}")
        return "\n".join(lines)


def _run_one(args) -> tuple[int, SessionReport]:
    index, cfg, keys = args
    rng = session_rng(cfg.seed, index)
    scfg = cfg.session_config()
    attack = cfg.attack_model()
    if cfg.scheme == "es":
        rep = run_es_session(scfg, keys, attack, rng)
    elif cfg.scheme == "dc":
        rep = run_dc_session(scfg, keys, attack, rng)
    else:
        rep = run_qe_session(scfg, keys, attack, rng)
    return index, rep


def _registry_keys(cfg: RunConfig, registry: KeyRegistry) -> list:
    """Derive every session's keys up front, in session order, so workers stay deterministic."""
    scfg = cfg.session_config()
    users = [f"Alice_{j}" for j in range(1, cfg.r + 1)]
    needed = users + (["group"] if cfg.scheme == "es" else [])
    missing = [n for n in needed if n not in registry]
    if missing:
        raise ConfigError(f"registry lacks identities: {', '.join(missing)}")
    out = []
    for _ in range(cfg.sessions):
        if cfg.scheme == "es":
            out.append(registry.stretch("group", scfg.gk_len))
        else:
            length = scfg.n_states if cfg.scheme == "dc" else scfg.ak_len
            out.append({j: registry.stretch(f"Alice_{j}", length) for j in range(1, cfg.r + 1)})
    return out


def run(cfg: RunConfig, write: bool = True, commit_counters: bool = False):
    """Run every session; returns (AggregateReport, reports sorted by session index)."""
    attack = cfg.attack_model()
    honest = attack.kind == "none" and not cfg.impostors
    keys = [None] * cfg.sessions
    registry = None
    if cfg.registry:
        registry = KeyRegistry.load(Path(cfg.base_dir) / cfg.registry
                                    if not Path(cfg.registry).is_absolute() else cfg.registry)
        keys = _registry_keys(cfg, registry)
    jobs = [(i, cfg, keys[i]) for i in range(cfg.sessions)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_run_one, jobs, chunksize=max(1, cfg.sessions // (4 * cfg.workers))))
    else:
        results = [_run_one(j) for j in jobs]
    results.sort(key=lambda t: t[0])

    agg = AggregateReport(cfg.scheme, attack.describe())
    for i, rep in results:
        agg.add(i, rep, honest)
    agg.check_consistency()
    reports = [rep for _, rep in results]
    if write:
        write_artifacts(Path(cfg.out), reports, agg, cfg)
    if registry is not None and commit_counters:
        registry.save(Path(cfg.base_dir) / cfg.registry
                      if not Path(cfg.registry).is_absolute() else cfg.registry)
    return agg, reports


def summary_csv(reports: list[SessionReport]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=SUMMARY_FIELDS, lineterminator="\n")
    writer.writeheader()
    for i, rep in enumerate(reports):
        writer.writerow(rep.summary_row(i))
    return buf.getvalue()


def write_artifacts(out: Path, reports: list[SessionReport], agg: AggregateReport,
                    cfg: RunConfig) -> None:
    try:
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "transcripts.jsonl", "w") as fh:
            for i, rep in enumerate(reports):
                fh.write(rep.transcript.to_jsonl(session=i))
        (out / "summary.csv").write_text(summary_csv(reports))
        report = agg.to_dict()
        report["config"] = {k: v for k, v in asdict(cfg).items() if k != "base_dir"}
        if cfg.scheme == "qe":
            report["decoded_payloads"] = sorted({
                bits_to_hex(v) for rep in reports for v in rep.decoded.values() if v})
        (out / "report.json").write_text(json.dumps(report, indent=2, default=str) + "\n")
    except OSError as exc:
        raise QbcError(f"cannot write artifacts to {out}: {exc}") from exc
