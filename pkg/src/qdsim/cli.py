"""Command-line batch runner.

Subcommands ``dialogue``, ``attack``, ``verify`` and ``report``. A JSON
config file (``--config``) supplies defaults and explicit flags override it.
Config keys mirror the long flag names with dashes as underscores, plus
``attack_params`` (an object passed to the attack constructor).

Seeding: round/trial ``t`` draws from ``SeedSequence([seed, t])``; key
sharing for a dialogue campaign uses counter 0 and round ``t`` uses ``t + 1``.
The seed comes from ``--seed``, then ``QDSIM_SEED``, then 0.

Exit codes: 0 success, 1 config error, 2 identity-suite failure, 3 I/O error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time
import warnings
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .adversary import AttackKind, DetectionStats, detection_oracle, make_attack, run_attacked_round
from .analysis import (
    EFFICIENCY_MODES,
    EXTERNAL_REFERENCE_ETA,
    disclose_initial_states,
    efficiency,
    identity_failures,
    identity_suite,
    mixedness_check,
    transcript_leakage,
)
from .logical import Encoding
from .noise import NoiseModel
from .protocol import KeyRegister, MessagePair, ProtocolConfig, run_dialogue, share_key, trial_rng

EXIT_OK, EXIT_CONFIG, EXIT_IDENTITY, EXIT_IO = 0, 1, 2, 3
CSV_SCHEMA_VERSION = "1"


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    encoding: str = "dp"
    n: int = 16
    delta1: int = 16
    decoys: int = 16
    theta_key: float = math.pi / 8
    noise: str | None = None
    noise_law: str = "uniform"
    attack: str = "none"
    attack_params: dict[str, Any] = field(default_factory=dict)
    trials: int = 1
    seed: int = 0
    format: str = "json"
    out: str | None = None
    introspect: bool = False
    transcript: str | None = None

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.format not in ("json", "csv"):
            raise ConfigError(f"unknown format {self.format!r}")
        try:
            AttackKind(self.attack)
        except ValueError:
            raise ConfigError(f"unknown attack {self.attack!r}") from None

    def make_attack(self):
        if self.attack == "none":
            return None
        try:
            return make_attack(self.attack, **self.attack_params)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad attack_params for {self.attack}: {exc}") from None

    def protocol(self) -> ProtocolConfig:
        try:
            enc = Encoding(self.encoding)
            noise = None
            if self.noise is not None or self.noise_law != "uniform":
                kind = self.noise or ("dephasing" if enc is Encoding.DP else "rotation")
                noise = NoiseModel(kind, self.noise_law)
            return ProtocolConfig(
                encoding=enc, n=self.n, delta1=self.delta1, decoy_count=self.decoys,
                theta_key=self.theta_key, noise=noise, seed=self.seed,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def public(self) -> dict[str, Any]:
        d = asdict(self)
        for k in ("out", "format", "transcript"):
            d.pop(k)
        return d


# -- argument handling ------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("run configuration")
    g.add_argument("--config", help="JSON file with defaults for any option below")
    g.add_argument("--encoding", choices=[e.value for e in Encoding])
    g.add_argument("--n", type=int, help="message length (and key pairs)")
    g.add_argument("--delta1", type=int, help="sampling-check size during key sharing")
    g.add_argument("--decoys", type=int, help="decoy logical qubits per flight")
    g.add_argument("--theta-key", type=float, help="key rotation angle in radians")
    g.add_argument("--noise", choices=["dephasing", "rotation", "ideal"])
    g.add_argument("--noise-law", help="uniform | fixed:<rad> | list:<a>,<b>,...")
    g.add_argument("--attack", choices=[a.value for a in AttackKind])
    g.add_argument("--trials", type=int)
    g.add_argument("--seed", type=int)
    g.add_argument("--format", choices=["json", "csv"])
    g.add_argument("--out", help="output file (default stdout)")
    g.add_argument("--introspect", action="store_true", default=None,
                   help="record ciphertext reduced states and report their mixedness")

    p = argparse.ArgumentParser(prog="qdsim", description="Quantum dialogue simulator over collective-noise channels.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("dialogue", parents=[common], help="run seeded dialogue rounds with key reuse")
    sub.add_parser("attack", parents=[common], help="estimate attack detection against the exact oracle")
    sub.add_parser("verify", parents=[common], help="run the algebraic identity suite")
    rep = sub.add_parser("report", parents=[common], help="efficiency and leakage reports")
    rep.add_argument("--transcript", help="transcript JSON to analyse (default: synthesize one)")
    return p


def resolve_config(ns: argparse.Namespace, env: dict[str, str] | None = None) -> RunConfig:
    env = os.environ if env is None else env
    values: dict[str, Any] = {}
    if ns.config:
        try:
            loaded = json.loads(Path(ns.config).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from None
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a JSON object")
        known = {f.name for f in fields(RunConfig)}
        unknown = set(loaded) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        values.update(loaded)
    for f in fields(RunConfig):
        v = getattr(ns, f.name, None)
        if v is not None:
            values[f.name] = v
    if "seed" not in values and env.get("QDSIM_SEED"):
        try:
            values["seed"] = int(env["QDSIM_SEED"])
        except ValueError:
            raise ConfigError(f"QDSIM_SEED must be an integer, got {env['QDSIM_SEED']!r}") from None
    try:
        return RunConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


# -- output -------------------------------------------------------------------------


def dump_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def dump_csv(header: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["schema_version", *header])
    for row in rows:
        w.writerow([CSV_SCHEMA_VERSION, *row])
    return buf.getvalue()


def emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


# -- subcommands ----------------------------------------------------------------------


def cmd_dialogue(rc: RunConfig) -> int:
    cfg = rc.protocol()
    t0 = time.perf_counter()
    key, share_tr = share_key(cfg, trial_rng(rc.seed, 0))
    reshares = 0
    rounds, qubit_rows = [], []
    for t in range(rc.trials):
        rng = trial_rng(rc.seed, t + 1)
        if key is None:
            key, _ = share_key(cfg, rng)
            reshares += 1
            if key is None:
                rounds.append({"trial": t, "aborted": True, "stage": "key_share"})
                continue
        msgs = MessagePair.random(cfg.n, rng)
        attack = rc.make_attack()
        res, tr, key = run_dialogue(cfg, msgs, key, rng, adversary=attack, introspect=rc.introspect)
        row: dict[str, Any] = {"trial": t, "aborted": res.aborted, "stage": res.stage}
        if res.aborted:
            key = None  # photons stayed bound to the pairs; start over
        else:
            a_ok = [int(x == y) for x, y in zip(res.alice_decoded, msgs.k)]
            b_ok = [int(x == y) for x, y in zip(res.bob_decoded, msgs.j)]
            row.update(
                alice_accuracy=sum(a_ok) / cfg.n,
                bob_accuracy=sum(b_ok) / cfg.n,
                key_fidelity_min=float(key.fidelities().min()),
            )
            for i in range(cfg.n):
                qubit_rows.append([t, i, msgs.j[i], msgs.k[i], res.bob_decoded[i], res.alice_decoded[i],
                                   int(a_ok[i] and b_ok[i])])
        if rc.introspect and res.ciphertext_states:
            row["ciphertext_mixedness"] = mixedness_check(res.ciphertext_states, cfg.encoding)
        rounds.append(row)
    elapsed = time.perf_counter() - t0
    print(f"dialogue: {rc.trials} rounds in {elapsed:.2f}s", file=sys.stderr)

    if rc.format == "csv":
        header = ["trial", "qubit", "j", "k", "bob_decoded_j", "alice_decoded_k", "correct"]
        emit(dump_csv(header, qubit_rows), rc.out)
        return EXIT_OK
    ok = [r for r in rounds if not r["aborted"]]
    summary = {
        "rounds": len(rounds),
        "aborted": len(rounds) - len(ok),
        "key_reshares": reshares + (1 if share_tr.aborted else 0),
        "decode_accuracy": (sum(r["alice_accuracy"] + r["bob_accuracy"] for r in ok) / (2 * len(ok))) if ok else None,
    }
    emit(dump_json({"config": rc.public(), "summary": summary, "rounds": rounds}), rc.out)
    return EXIT_OK


def cmd_attack(rc: RunConfig) -> int:
    cfg = rc.protocol()
    policy = rc.attack_params.get("policy", "random")
    rc.make_attack()  # validate parameters before the campaign
    t0 = time.perf_counter()
    flags = []
    for t in range(rc.trials):
        attack = rc.make_attack() or make_attack("none")
        aborted, _ = run_attacked_round(cfg, attack, trial_rng(rc.seed, t))
        flags.append(int(aborted))
    print(f"attack: {rc.trials} trials in {time.perf_counter() - t0:.2f}s", file=sys.stderr)
    stats = DetectionStats.from_counts(sum(flags), rc.trials)
    oracle = detection_oracle(cfg, rc.attack, policy)
    if rc.format == "csv":
        emit(dump_csv(["trial", "detected", "oracle"], [[t, f, oracle] for t, f in enumerate(flags)]), rc.out)
        return EXIT_OK
    emit(dump_json({
        "config": rc.public(),
        "trials": stats.trials,
        "detected": stats.detected,
        "rate": stats.rate,
        "wilson_95": list(stats.wilson_interval),
        "oracle": oracle,
        "oracle_in_interval": stats.contains(oracle),
    }), rc.out)
    return EXIT_OK


def cmd_verify(rc: RunConfig, encodings: Sequence[str]) -> int:
    """Pass table on stderr, machine-readable table on stdout or ``--out``."""
    rows = identity_suite(encodings, rng=np.random.default_rng(rc.seed))
    failed = identity_failures(rows)
    width = max(len(r.name) for r in rows)
    for r in rows:
        status = "PASS" if r.passed else ("NOTE" if r.informational else "FAIL")
        extra = f"  ({r.note})" if r.note else ""
        print(f"{status}  {r.name:<{width}}  max_err={r.max_error:.2e}{extra}", file=sys.stderr)
    if rc.format == "csv":
        emit(dump_csv(["name", "encoding", "max_error", "passed", "informational"],
                      [[r.name, r.encoding, r.max_error, r.passed, r.informational] for r in rows]), rc.out)
    else:
        emit(dump_json({"identities": [r.as_dict() for r in rows], "all_passed": not failed}), rc.out)
    return EXIT_IDENTITY if failed else EXIT_OK


def _load_public_view(path: str) -> list[dict[str, Any]]:
    data = json.loads(Path(path).read_text())
    events = data["events"] if isinstance(data, dict) else data
    if not isinstance(events, list):
        raise ConfigError("transcript must be a list of events or an object with 'events'")
    return events


def cmd_report(rc: RunConfig) -> int:
    eff = [efficiency(m).as_dict() for m in EFFICIENCY_MODES]
    leakage: dict[str, Any] = {}
    if rc.transcript:
        try:
            view = _load_public_view(rc.transcript)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"transcript is not valid JSON: {exc}") from None
        leakage["supplied"] = transcript_leakage(view).as_dict()
    else:
        cfg = rc.protocol()
        rng = trial_rng(rc.seed, 0)
        key, _ = share_key(cfg, rng)
        if key is None:
            key = KeyRegister.ideal(cfg.encoding, cfg.n)
        res, tr, _ = run_dialogue(cfg, MessagePair.random(cfg.n, rng), key, rng)
        view = tr.public_view()
        leakage["honest"] = transcript_leakage(view).as_dict()
        if res.m_record is not None:
            leakage["public_m_counterfactual"] = transcript_leakage(
                disclose_initial_states(view, res.m_record)).as_dict()
    if rc.format == "csv":
        rows = [[e["mode"], e["b_s"], e["q_t"], e["b_t"], e["eta"], e["eta_float"]] for e in eff]
        rows += [[name, "", "", "", "", v] for name, v in sorted(EXTERNAL_REFERENCE_ETA.items())]
        emit(dump_csv(["mode", "b_s", "q_t", "b_t", "eta", "eta_float"], rows), rc.out)
        return EXIT_OK
    emit(dump_json({
        "efficiency": eff,
        "external_reference_eta": EXTERNAL_REFERENCE_ETA,
        "leakage": leakage,
    }), rc.out)
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            rc = resolve_config(ns)
            if ns.command == "dialogue":
                return cmd_dialogue(rc)
            if ns.command == "attack":
                return cmd_attack(rc)
            if ns.command == "verify":
                encs = [ns.encoding] if ns.encoding else ["dp", "r"]
                return cmd_verify(rc, encs)
            return cmd_report(rc)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
