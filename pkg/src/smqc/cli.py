"""Command-line harness.

Exit codes: 0 success, 2 parse/validation error, 3 protocol error,
4 property failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import adversary, circuit, commitment, protocol, qsim, verify
from .qsim import StateVector

EXIT_OK, EXIT_INVALID, EXIT_PROTOCOL, EXIT_PROPERTY = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


def _gate(name: str) -> np.ndarray:
    try:
        return qsim.GATES[name.lower()]
    except KeyError:
        raise ConfigError(f"unknown gate {name!r} (choose from {', '.join(qsim.GATES)})") from None


def parse_party_state(spec: str) -> StateVector:
    """``|+>,|0>`` (one named ket per qubit) or ``amp:0.6,0.8j`` (full amplitude list)."""
    spec = spec.strip()
    if spec.startswith("amp:"):
        try:
            amps = [complex(tok.replace(" ", "")) for tok in spec[4:].split(",")]
            return StateVector(amps)
        except (ValueError, qsim.QuantumStateError) as exc:
            raise ConfigError(f"bad amplitude list {spec!r}: {exc}") from None
    try:
        return qsim.product_state(*(qsim.ket(tok) for tok in spec.split(",")))
    except qsim.QuantumStateError as exc:
        raise ConfigError(str(exc)) from None


def parse_inputs(items: list[str], ownership: circuit.OwnershipMap) -> dict[int, StateVector]:
    out = {}
    for item in items or []:
        party, _, spec = item.partition("=")
        try:
            p = int(party)
        except ValueError:
            raise ConfigError(f"bad --inputs entry {item!r}; expected <party>=<state>") from None
        if not 0 <= p < ownership.party_count:
            raise ConfigError(f"--inputs names unknown party {p}")
        state = parse_party_state(spec)
        size = ownership.input_sizes[p]
        if state.num_qubits != size:
            raise ConfigError(f"party {p} owns {size} qubit(s) but --inputs gives {state.num_qubits}")
        out[p] = state
    return out


def parse_strategy(spec: str):
    name, _, params = spec.partition(":")
    name = name.strip().lower()
    if name in ("honest", ""):
        return adversary.Honest()
    if name in ("passive", "passive-recorder"):
        return adversary.PassiveRecorder()
    if name in ("bitflip", "bit-flip"):
        return adversary.BitFlip(params or None)
    if name == "rotated-basis":
        return adversary.RotatedBasis(_gate(params or "h"))
    if name == "chi-corruption":
        gate, _, target = params.partition(",")
        try:
            return adversary.ChiCorruption(_gate(gate or "z"), int(target) if target else None)
        except adversary.NotClifford as exc:
            raise ConfigError(f"{gate}: not Clifford ({exc})") from None
    raise ConfigError(f"unknown strategy {name!r}")


def parse_strategies(items: list[str], ownership) -> dict:
    out = {}
    for item in items or []:
        party, _, spec = item.partition("=")
        try:
            p = int(party)
        except ValueError:
            raise ConfigError(f"bad --strategy entry {item!r}; expected <party>=<name>[:<params>]") from None
        if not 0 <= p < ownership.party_count:
            raise ConfigError(f"--strategy names unknown party {p}")
        out[p] = parse_strategy(spec)
    return out


def _load(path: str):
    text = Path(path).read_text(encoding="utf-8")
    ops, own = circuit.parse_circuit(text)
    return ops, own, circuit.build_schedule(ops, own)


def _dump(path: Path, obj):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def cmd_schedule(args) -> int:
    _, _, sched = _load(args.circuit)
    print(sched.describe())
    return EXIT_OK


def _measurements(branch) -> list[tuple[int, ...]]:
    return [b for b in branch if b and not isinstance(b[0], qsim.BellOutcome)]


def cmd_run(args) -> int:
    ops, own, sched = _load(args.circuit)
    inputs = parse_inputs(args.inputs, own)
    strategies = parse_strategies(args.strategy, own)
    mode = args.mode
    if mode == "auto":
        mode = "exhaustive" if sched.nl_cnot_count <= args.exhaustive_threshold else "sampled"
    joint = protocol.assemble_input(own, inputs)
    results = protocol.run_smqc(
        sched, joint, strategies=strategies, mode=mode, seed=args.seed, backend=args.backend
    )
    flat = list(sched.flatten())
    predicted = adversary.predicted_circuit(flat, own, strategies) if strategies else flat
    honest_dev = pred_dev = 0.0
    table = []
    for res in results:
        forced = _measurements(res.branch)
        ref, _ = circuit.oracle_simulate(flat, joint, forced)
        honest_dev = max(honest_dev, 1 - qsim.overlap(res.state, ref))
        if predicted is not None:
            pref, _ = circuit.oracle_simulate(predicted, joint, forced)
            pred_dev = max(pred_dev, 1 - qsim.overlap(res.state, pref))
        if forced:
            table.append({"bits": [list(b) for b in forced], "probability": res.measurement_probability})

    out = Path(args.out)
    _dump(out / "transcript.json", results[0].transcript.to_records())
    active = any(getattr(s, "active", False) for s in strategies.values())
    report = {
        "circuit": str(args.circuit),
        "mode": mode,
        "backend": args.backend,
        "seed": args.seed,
        "strategies": sorted(args.strategy or []),
        "nl_cnot_rounds": sched.nl_cnot_count,
        "branches": len(results),
        "oracle_overlap_min": 1 - honest_dev,
        "predicted_overlap_min": None if predicted is None else 1 - pred_dev,
    }
    if table:
        report["outcomes"] = table
    _dump(out / "report.json", report)

    print(f"{sched.nl_cnot_count} NL-CNOT rounds, {len(results)} branch(es), mode={mode}, backend={args.backend}")
    print(f"overlap vs oracle (min over branches): {1 - honest_dev:.12f}")
    if active:
        if predicted is None:
            print("attack effect is branch dependent; no closed-form prediction")
        else:
            print(f"overlap vs attack prediction (min over branches): {1 - pred_dev:.12f}")
    for row in table[:16]:
        print(f"  outcome {row['bits']}  p={row['probability']:.4f}")
    target_dev = pred_dev if active and predicted is not None else honest_dev
    return EXIT_OK if active and predicted is None or target_dev <= 1e-9 else EXIT_PROPERTY


def cmd_attack(args) -> int:
    rng = np.random.default_rng(args.seed)
    reports = []
    if args.strategy == "prop1":
        rows = []
        for _ in range(args.trials):
            phi, phi_p = qsim.random_state(rng), qsim.random_state(rng)
            _, _, d = adversary.prop1_check(phi, phi_p, args.sign)
            u1 = adversary.recover_u1(phi, phi_p, args.sign)
            rows.append((d, max(0.0, 1 - adversary.verify_u1(phi, phi_p, u1, args.sign))))
        control = adversary.prop1_check(qsim.ket("0"), qsim.ket("+"), target=qsim.ket("0"))[2]
        print(f"{'trial':>5}  {'trace distance':>15}  {'U1 deviation':>13}")
        for i, (d, u) in enumerate(rows):
            print(f"{i:5d}  {d:15.3e}  {u:13.3e}")
        max_d = max(r[0] for r in rows)
        max_u = max(r[1] for r in rows)
        ok = max_d <= 1e-10 and max_u <= 1e-10 and control > 0.1
        print(f"max distance {max_d:.3e}; max U1 deviation {max_u:.3e}; negative control |0> target: {control:.3f}")
        reports.append(
            adversary.AttackReport(
                "prop1", {"sign": args.sign}, len(rows), max(max_d, max_u), ok,
                {"negative_control_distance": control},
            )
        )
    else:
        for _ in range(args.trials):
            inputs = (qsim.random_state(rng), qsim.random_state(rng))
            if args.strategy == "rotated-basis":
                _, rep = adversary.run_rotated_basis_attack(_gate(args.u), inputs, side=args.side)
            elif args.strategy == "bitflip":
                _, rep = adversary.run_bit_flip_attack(inputs, side=args.side)
            else:
                try:
                    adversary.ChiCorruption(_gate(args.c), args.target)
                except adversary.NotClifford:
                    print(f"chi-corruption rejected: {args.c} is not Clifford", file=sys.stderr)
                    return EXIT_INVALID
                _, rep = adversary.run_chi_corruption(_gate(args.c), args.target, inputs)
            reports.append(rep)
        ok = all(r.verdict for r in reports)
    summary = {
        "strategy": reports[0].strategy,
        "params": reports[0].params,
        "branches_checked": sum(r.branches_checked for r in reports),
        "max_deviation": max(r.max_deviation for r in reports),
        "verdict": "PASS" if ok else "FAIL",
        "trials": [r.to_dict() for r in reports],
    }
    _dump(Path(args.out) / f"attack_{args.strategy}.json", summary)
    print(f"{args.strategy}: {summary['branches_checked']} branches, max deviation "
          f"{summary['max_deviation']:.3e} -> {summary['verdict']}")
    return EXIT_OK if ok else EXIT_PROPERTY


def cmd_verify(args) -> int:
    results = verify.run_all(args.seed, inject_fault=args.inject_fault)
    print(f"{'suite':<12} {'checks':>7}  result")
    for r in results:
        print(f"{r.name:<12} {r.checks:>7}  {'PASS' if r.passed else 'FAIL'}")
    _dump(Path(args.out) / "verify.json", verify.report_dict(args.seed, results))
    return EXIT_OK if all(r.passed for r in results) else EXIT_PROPERTY


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="smqc", description="Secure multiparty quantum computation simulator")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("schedule", help="print the LQC / NL-CNOT round structure of a circuit")
    p.add_argument("circuit")
    p.set_defaults(func=cmd_schedule)

    p = sub.add_parser("run", help="execute a circuit among the parties and compare with the oracle")
    p.add_argument("--circuit", required=True)
    p.add_argument("--inputs", action="append", metavar="P=STATE",
                   help="per-party input, e.g. '0=|+>,|0>' or '1=amp:0.6,0.8j'")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", choices=["auto", "sampled", "exhaustive"], default="auto")
    p.add_argument("--exhaustive-threshold", type=int, default=3,
                   help="auto mode enumerates all branches up to this many NL-CNOT rounds")
    p.add_argument("--backend", choices=["peer", "ttp"], default="peer")
    p.add_argument("--strategy", action="append", metavar="P=NAME[:PARAMS]")
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("attack", help="branch-exhaustive demo of one attack")
    p.add_argument("strategy", choices=["rotated-basis", "bitflip", "chi-corruption", "prop1"])
    p.add_argument("--u", default="h", help="rotation gate for rotated-basis")
    p.add_argument("--c", default="z", help="corruption gate for chi-corruption")
    p.add_argument("--target", type=int, choices=[2, 3], default=3)
    p.add_argument("--side", choices=["alice", "bob"], default="alice")
    p.add_argument("--sign", choices=["+", "-"], default="+")
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("verify", help="run the built-in property suites")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out", default="out")
    p.add_argument("--inject-fault", action="store_true", help="disable NL-CNOT corrections (negative control)")
    p.set_defaults(func=cmd_verify)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except circuit.InvalidCircuit as exc:
        for rej in exc.rejections:
            print(f"error: {rej}", file=sys.stderr)
        return EXIT_INVALID
    except (circuit.CircuitSyntaxError, ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (commitment.SwapError, qsim.QuantumStateError) as exc:
        print(f"protocol error: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
