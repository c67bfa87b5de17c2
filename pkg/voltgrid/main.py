"""
Main entry point for VoltGrid.
This script orchestrates feeder loading, scenario generation, episodes and
their outputs, and provides the command-line interface.
"""
import os
import sys
import json
import shutil
import logging
import argparse
from datetime import datetime
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from voltgrid.config import (
    ARTIFACT_VERSION,
    DEFAULT_PRESET,
    HYPERPARAMETER_PRESETS,
    LOG_FILE_NAME,
    LOG_FORMAT,
    LOG_LEVEL,
    RUNS_DIR,
)
from voltgrid.analysis.oracle import oracle_costs
from voltgrid.analysis.summary import summarize
from voltgrid.drl.actions import action_from_bits
from voltgrid.drl.checkpoint import load_checkpoint, save_checkpoint
from voltgrid.exceptions import (
    AgentDivergenceError,
    ChainSpecError,
    FeederFormatError,
    FeederValidationError,
    PowerFlowError,
    ProfileFormatError,
    ProfileValidationError,
    SlotSolveError,
    SolverError,
    TraceError,
    VoltGridError,
)
from voltgrid.feeder.bundled import BUNDLED_FEEDERS, bundled_feeder
from voltgrid.feeder.feeder_model import FeederModel, load_feeder
from voltgrid.feeder.profiles import (
    ScenarioProfile,
    default_chain_spec,
    load_chain_spec,
    load_profiles,
    synth_markov_profile,
    validate_profile,
)
from voltgrid.sim.compare import compare_policies
from voltgrid.sim.simulator import POLICIES, RunConfig, RunTrace, run_episode
from voltgrid.sim.traces import write_traces

logger = logging.getLogger("voltgrid")

MANIFEST_FILE = "manifest.json"
CHECKPOINT_FILE = "checkpoint.json"
ORACLE_FILE = "oracle.csv"

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_SOLVER = 4

INPUT_ERRORS = (
    FeederFormatError,
    FeederValidationError,
    ProfileFormatError,
    ProfileValidationError,
    ChainSpecError,
    TraceError,
    OSError,
)
SOLVER_ERRORS = (PowerFlowError, SolverError, SlotSolveError, AgentDivergenceError)


class UsageError(Exception):
    """Invalid combination of command-line flags."""


def configure_logging(out_dir: Optional[str] = None):
    """Stream logs to stderr, and to voltgrid.log inside out_dir when given."""
    handlers: List[logging.Handler] = [logging.StreamHandler()]
    if out_dir:
        handlers.insert(0, logging.FileHandler(os.path.join(out_dir, LOG_FILE_NAME)))
    logging.basicConfig(
        level=getattr(logging, LOG_LEVEL, logging.INFO),
        format=LOG_FORMAT,
        handlers=handlers,
        force=True,
    )


def error_line(error: BaseException) -> str:
    message = " ".join(str(error).split())
    return f"voltgrid: error: {type(error).__name__}: {message}"


class VoltGrid:
    """
    Main class for VoltGrid experiments.
    Resolves feeders and scenarios and writes every output of a command
    into one directory.
    """

    def __init__(self, out_dir: Optional[str] = None, force: bool = False):
        """
        Initialize VoltGrid.

        Args:
            out_dir: Output directory; must not exist unless force is set
            force: Replace an existing output directory
        """
        self.out_dir = out_dir
        if out_dir:
            if os.path.exists(out_dir):
                if not force:
                    raise FileExistsError(f"output directory {out_dir} exists; pass --force to replace it")
                shutil.rmtree(out_dir)
            os.makedirs(out_dir)
        configure_logging(out_dir)
        logger.info(f"Initializing VoltGrid {ARTIFACT_VERSION}" + (f" with output in {out_dir}" if out_dir else ""))

    def load_model(self, feeder: str) -> FeederModel:
        """
        Load a feeder file, or build a bundled feeder by name.

        Raises:
            FileNotFoundError: If feeder is neither a file nor a bundled name
        """
        if os.path.isfile(feeder):
            return load_feeder(feeder)
        if feeder in BUNDLED_FEEDERS:
            return bundled_feeder(feeder)
        raise FileNotFoundError(f"feeder '{feeder}' is neither a file nor one of {sorted(BUNDLED_FEEDERS)}")

    def load_profile(
        self,
        model: FeederModel,
        profiles: Optional[str],
        synth: Optional[str],
        n_intervals: int,
        slots_per_interval: int,
        seed: int
    ) -> ScenarioProfile:
        """
        Read a profile CSV or synthesize a Markov scenario.

        Args:
            model: Feeder
            profiles: Profile CSV path
            synth: Chain-spec JSON path or 'default'
            n_intervals: Profile intervals required (bootstrap included)
            slots_per_interval: Slots per interval
            seed: Scenario seed
        """
        if profiles:
            logger.info(f"Loading profiles from {profiles}")
            return load_profiles(profiles, model, slots_per_interval=slots_per_interval)
        if synth == "default":
            spec = default_chain_spec(model, n_intervals, slots_per_interval)
        else:
            spec = load_chain_spec(synth, n_intervals, slots_per_interval)
        logger.info(f"Synthesizing {n_intervals} intervals of Markov scenario with seed {seed}")
        return synth_markov_profile(model, seed, spec)

    def path(self, *parts: str) -> str:
        return os.path.join(self.out_dir, *parts)

    def write_manifest(self, command: str, invocation: Dict[str, Any], configs: Sequence[RunConfig]):
        manifest = {
            "version": ARTIFACT_VERSION,
            "command": command,
            "created": datetime.now().isoformat(timespec="seconds"),
            "invocation": invocation,
            "configs": [config.to_dict() for config in configs],
        }
        with open(self.path(MANIFEST_FILE), "w") as f:
            json.dump(manifest, f, indent=2)
        logger.info(f"Saved manifest to {self.path(MANIFEST_FILE)}")

    def run(self, invocation: Dict[str, Any], config: RunConfig) -> RunTrace:
        """
        Run one policy and write traces, checkpoint and manifest.

        Args:
            invocation: feeder, profiles, synth and checkpoint arguments
            config: Episode settings
        """
        model = self.load_model(invocation["feeder"])
        agent, start_tau = None, 1
        if invocation.get("checkpoint"):
            if config.policy != "drlcap":
                raise UsageError("--checkpoint applies to the drlcap policy only")
            agent, last_tau = load_checkpoint(invocation["checkpoint"])
            start_tau = last_tau + 1
        profile = self.load_profile(
            model, invocation.get("profiles"), invocation.get("synth"),
            start_tau + config.n_intervals, config.slots_per_interval, config.seed,
        )
        self.write_manifest("run", invocation, [config])
        try:
            trace = run_episode(model, profile, config, agent=agent, start_tau=start_tau)
        except VoltGridError as e:
            partial = getattr(e, "trace", None)
            if partial is not None:
                write_traces(partial, self.out_dir)
            raise
        write_traces(trace, self.out_dir)
        self.save_agent(trace, self.path(CHECKPOINT_FILE))
        return trace

    def save_agent(self, trace: RunTrace, path: str):
        if trace.agent is not None and trace.n_intervals:
            save_checkpoint(trace.agent, trace.taus[-1], path)

    def compare(self, invocation: Dict[str, Any], configs: Sequence[RunConfig], workers: int = 1):
        """Run several policies on one scenario; one subdirectory per policy."""
        model = self.load_model(invocation["feeder"])
        base = configs[0]
        profile = self.load_profile(
            model, invocation.get("profiles"), invocation.get("synth"),
            base.n_intervals + 1, base.slots_per_interval, base.seed,
        )
        self.write_manifest("compare", invocation, configs)
        report = compare_policies(model, profile, configs, max_workers=workers)
        for label, trace in report.traces.items():
            write_traces(trace, self.path(label))
            self.save_agent(trace, self.path(label, CHECKPOINT_FILE))
        report.curves.to_csv(self.path("curves.csv"))
        report.envelopes.to_csv(self.path("envelopes.csv"), index=False)
        return report

    def validate(self, feeder: str, profiles: Optional[str] = None) -> Dict[str, Any]:
        """Load and validate a feeder, and optionally a profile against it."""
        model = self.load_model(feeder)
        result = {
            "feeder": feeder,
            "buses": model.n_buses,
            "capacitors": model.n_caps,
            "inverters": int(np.count_nonzero(model.q_max > 0)),
        }
        if profiles:
            profile = load_profiles(profiles, model)
            validate_profile(profile, model)
            result["intervals"] = profile.n_intervals
            result["slots_per_interval"] = profile.slots_per_interval
        logger.info(f"Validated {feeder}: {result}")
        return result

    def oracle(self, invocation: Dict[str, Any], config: RunConfig):
        """Write the per-interval best-commitment table."""
        model = self.load_model(invocation["feeder"])
        profile = self.load_profile(
            model, invocation.get("profiles"), invocation.get("synth"),
            config.n_intervals + 1, config.slots_per_interval, config.seed,
        )
        self.write_manifest("oracle", invocation, [config])
        table = oracle_costs(model, profile, config.n_intervals, physics=config.physics)
        table.to_csv(self.path(ORACLE_FILE), index=False)
        logger.info(f"Saved oracle table to {self.path(ORACLE_FILE)}")
        return table


class VoltGridParser(argparse.ArgumentParser):
    """Argument parser whose errors are single machine-parsable lines."""

    def error(self, message):
        self.exit(EXIT_USAGE, error_line(UsageError(message)) + "\n")


def _add_scenario_flags(parser: argparse.ArgumentParser, feeder_required: bool = True):
    parser.add_argument('--feeder', type=str, required=feeder_required, help='Feeder JSON file or bundled name (sce47, ieee123)')
    source = parser.add_mutually_exclusive_group()
    source.add_argument('--profiles', type=str, help='Profile CSV file')
    source.add_argument('--synth', type=str, help="Markov chain-spec JSON file, or 'default'")
    parser.add_argument('--out', type=str, help='Output directory (default: a timestamped directory under VOLTGRID_RUNS_DIR)')
    parser.add_argument('--force', action='store_true', help='Replace an existing output directory')
    parser.add_argument('--preset', type=str, choices=sorted(HYPERPARAMETER_PRESETS), help='Hyperparameter preset')
    parser.add_argument('--physics', type=str, choices=['linear', 'socp'], help='Fast-timescale physics model')
    parser.add_argument('--intervals', type=int, help='Number of intervals')
    parser.add_argument('--slots-per-interval', type=int, help='Slots per interval')
    parser.add_argument('--gamma', type=float, help='Discount factor')
    parser.add_argument('--replay', type=int, help='Replay buffer size R')
    parser.add_argument('--batch', type=int, help='Mini-batch size M')
    parser.add_argument('--target-sync', type=int, help='Target network sync period B')
    parser.add_argument('--hyper-k', type=int, help='Number of hyper sub-networks K')
    parser.add_argument('--lr', type=float, help='Learning rate')
    parser.add_argument('--seed', type=int, help='Random seed')
    parser.add_argument('--fixcap-pattern', type=str, help='Capacitor bits for fixcap, capacitor 1 first')
    parser.add_argument('--epsilon', type=float, help='Constant exploration probability')
    parser.add_argument('--hidden', type=str, help='Comma-separated hidden layer sizes')
    parser.add_argument('--cost-scale', type=float, help='Cost normalization of the learning targets')


def build_parser() -> VoltGridParser:
    parser = VoltGridParser(prog='voltgrid', description='VoltGrid - two-timescale voltage regulation')
    sub = parser.add_subparsers(dest='command', parser_class=VoltGridParser)
    sub.required = True

    run = sub.add_parser('run', help='Run one policy')
    _add_scenario_flags(run, feeder_required=False)
    run.add_argument('--policy', type=str, choices=POLICIES, help='Capacitor policy')
    run.add_argument('--checkpoint', type=str, help='Resume a drlcap agent from this checkpoint')
    run.add_argument('--manifest', type=str, help='Re-run the invocation recorded in a manifest')

    compare = sub.add_parser('compare', help='Run several policies on one scenario')
    _add_scenario_flags(compare)
    compare.add_argument('--policies', type=str, default=','.join(POLICIES), help='Comma-separated policies')
    compare.add_argument('--workers', type=int, default=1, help='Episodes run concurrently')

    validate = sub.add_parser('validate', help='Validate a feeder (and profile)')
    validate.add_argument('--feeder', type=str, required=True, help='Feeder JSON file or bundled name')
    validate.add_argument('--profiles', type=str, help='Profile CSV file')

    oracle = sub.add_parser('oracle', help='Enumerate capacitor commitments per interval')
    _add_scenario_flags(oracle)
    oracle.add_argument('--enumerate-actions', action='store_true', help='Enumerate all 2^N_a commitments')

    summary = sub.add_parser('summarize', help='Summarize a trace directory')
    summary.add_argument('--traces', type=str, required=True, help='Directory written by run or compare')
    summary.add_argument('--last-slots', type=int, default=100, help='Slots in the voltage envelope')
    return parser


def resolve_config(args: argparse.Namespace, model_hint: Optional[str], policy: str) -> RunConfig:
    """Map flags onto a RunConfig over the preset defaults."""
    preset = args.preset or (model_hint if model_hint in HYPERPARAMETER_PRESETS else DEFAULT_PRESET)
    pattern = None
    if args.fixcap_pattern:
        if set(args.fixcap_pattern) - {"0", "1"}:
            raise UsageError(f"--fixcap-pattern must be a bit string, got '{args.fixcap_pattern}'")
        pattern = tuple(int(bit) for bit in args.fixcap_pattern)
    hidden = None
    if args.hidden:
        try:
            hidden = tuple(int(size) for size in args.hidden.split(","))
        except ValueError:
            raise UsageError(f"--hidden must be comma-separated integers, got '{args.hidden}'")
    return RunConfig.from_preset(
        preset,
        policy=policy,
        physics=args.physics,
        gamma=args.gamma,
        R=args.replay,
        M=args.batch,
        B=args.target_sync,
        K=args.hyper_k,
        beta=args.lr,
        seed=args.seed,
        n_intervals=args.intervals,
        slots_per_interval=args.slots_per_interval,
        fixcap_pattern=pattern,
        cost_scale=args.cost_scale,
        epsilon_override=args.epsilon,
        hidden=hidden,
    )


def _invocation(args: argparse.Namespace) -> Dict[str, Any]:
    if not args.profiles and not args.synth:
        raise UsageError("one of --profiles or --synth is required")
    return {
        "feeder": args.feeder,
        "profiles": args.profiles,
        "synth": args.synth,
        "checkpoint": getattr(args, "checkpoint", None),
    }


def _check_config(config: RunConfig, model: FeederModel):
    try:
        config.validate(model)
    except ValueError as e:
        raise UsageError(str(e)) from e


def default_out_dir(command: str) -> str:
    """Timestamped output directory under RUNS_DIR."""
    return os.path.join(RUNS_DIR, f"{command}_{datetime.now().strftime('%Y%m%d_%H%M%S')}")


def _dispatch(args: argparse.Namespace) -> int:
    if args.command == 'summarize':
        configure_logging()
        result = summarize(args.traces, n_slots=args.last_slots)
        print(json.dumps({"ordering": result["ordering"]}))
        return EXIT_OK

    if args.command == 'validate':
        vg = VoltGrid()
        print(json.dumps(vg.validate(args.feeder, args.profiles)))
        return EXIT_OK

    if args.command in ('run', 'compare', 'oracle') and not args.out:
        args.out = default_out_dir(args.command)

    if args.command == 'run' and args.manifest:
        with open(args.manifest, 'r') as f:
            manifest = json.load(f)
        if manifest.get("command") != "run":
            raise UsageError(f"manifest {args.manifest} does not record a run")
        invocation = manifest["invocation"]
        config = RunConfig.from_dict(manifest["configs"][0])
        vg = VoltGrid(args.out, force=args.force)
        _check_config(config, vg.load_model(invocation["feeder"]))
        _finish_run(vg, invocation, config)
        return EXIT_OK

    if args.command == 'run' and not args.feeder:
        raise UsageError("--feeder is required unless --manifest is given")

    invocation = _invocation(args)
    if args.command == 'oracle' and not args.enumerate_actions:
        raise UsageError("oracle requires --enumerate-actions")

    vg = VoltGrid(args.out, force=args.force)
    model = vg.load_model(args.feeder)
    if args.fixcap_pattern:
        try:
            action_from_bits(args.fixcap_pattern, model.n_caps)
        except ValueError as e:
            raise UsageError(str(e)) from e

    if args.command == 'run':
        config = resolve_config(args, args.feeder, args.policy or "drlcap")
        _check_config(config, model)
        _finish_run(vg, invocation, config)
    elif args.command == 'compare':
        policies = [policy.strip() for policy in args.policies.split(",") if policy.strip()]
        configs = [resolve_config(args, args.feeder, policy) for policy in policies]
        for config in configs:
            _check_config(config, model)
        report = vg.compare(invocation, configs, workers=args.workers)
        print(json.dumps({"ordering": report.ordering}))
    elif args.command == 'oracle':
        config = resolve_config(args, args.feeder, "fixcap")
        _check_config(config, model)
        vg.oracle(invocation, config)
    return EXIT_OK


def _finish_run(vg: VoltGrid, invocation: Dict[str, Any], config: RunConfig):
    trace = vg.run(invocation, config)
    final = trace.time_avg_cost()[-1] if trace.n_intervals else float("nan")
    print(json.dumps({"policy": trace.label, "intervals": trace.n_intervals, "final_time_avg_cost": final}))


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Main entry point for VoltGrid.

    Returns:
        Exit code: 0 success, 2 bad flags, 3 input errors, 4 solver or agent failure
    """
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _dispatch(args)
    except UsageError as e:
        print(error_line(e), file=sys.stderr)
        return EXIT_USAGE
    except INPUT_ERRORS as e:
        print(error_line(e), file=sys.stderr)
        return EXIT_INPUT
    except SOLVER_ERRORS as e:
        print(error_line(e), file=sys.stderr)
        return EXIT_SOLVER
    except VoltGridError as e:
        print(error_line(e), file=sys.stderr)
        return EXIT_SOLVER
    except (ValueError, KeyError) as e:
        print(error_line(e), file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
