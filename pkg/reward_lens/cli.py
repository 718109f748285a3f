"""
Command-line entry point: ``reward-lens <command> ...``.

Results go to stdout as JSON (or to the files named by ``--out``), logs and
diagnostics to stderr. Exit status is 0 on success, 1 on a usage error and 2
when an input file is missing or malformed.
"""

import argparse
import json
import logging
import sys
from typing import Any, Callable, Dict, NoReturn, Optional, Sequence, Tuple

import uvicorn

from reward_lens.audit import (
    compute_saliency,
    grids_from_body,
    scenario_payload,
    transition_from_frames,
)
from reward_lens.config import DEFAULT_BIND, DEFAULT_PORT, configure_logging, resolve_path
from reward_lens.counterfactual import (
    FIXTURES,
    load_fixture,
    load_scenario,
    reward_timeseries,
    write_timeseries_csv,
)
from reward_lens.errors import FormatError, RewardLensError, UsageError
from reward_lens.gridworld import (
    DEFAULT_EPISODE_CAP,
    ENV_NAMES,
    EnvSpec,
    generate_dataset,
    load_dataset,
    save_dataset,
)
from reward_lens.interpret import (
    DEFAULT_SIGMA_BLUR,
    DEFAULT_SIGMA_MASK,
    DEFAULT_STRIDE,
    OcclusionConfig,
    write_saliency,
)
from reward_lens.policy_eval import (
    DEFAULT_EVAL_EPISODES,
    DEFAULT_GAMMA,
    ModelReward,
    RewardSource,
    ScaledReward,
    TrueReward,
    enumerate_states,
    evaluate_policy,
    evaluate_random_policy,
    load_policy,
    save_policy,
    transfer_experiment,
    value_iteration,
)
from reward_lens.reward_learning import (
    DEFAULT_BATCH_SIZE,
    DEFAULT_EPOCHS,
    DEFAULT_HIDDEN,
    DEFAULT_POSITIVE_FRACTION,
    DEFAULT_VALIDATION_FRACTION,
    TrainConfig,
    checkpoint_id,
    load_checkpoint,
    make_quirk_oracle,
    make_score_oracle,
    save_checkpoint,
    train_reward_model,
)
from reward_lens.service import ServiceState, create_app
from reward_lens.tensor_core import DEFAULT_LEARNING_RATE, RewardNet

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2

ORACLES: Dict[str, Callable[[], RewardNet]] = {
    "quirk": make_quirk_oracle,
    "score": make_score_oracle,
}


class _ArgumentParser(argparse.ArgumentParser):
    """Reports bad arguments as a UsageError instead of exiting with status 2."""

    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _emit(payload: Any) -> None:
    print(json.dumps(payload, indent=2, ensure_ascii=False))


def _write_json(payload: Any, path: Optional[str]) -> None:
    if path is None:
        _emit(payload)
        return
    resolve_path(path).write_text(json.dumps(payload, indent=2), encoding="utf-8")


def _read_json(path: str, what: str) -> Any:
    resolved = resolve_path(path)
    try:
        return json.loads(resolved.read_text(encoding="utf-8"))
    except OSError as e:
        raise FormatError(f"cannot read {what} {resolved}: {e.strerror}", field="path") from e
    except json.JSONDecodeError as e:
        raise FormatError(f"{what} {resolved} is not valid JSON ({e.msg})") from e


def _load_model(path: str) -> Tuple[RewardNet, str]:
    net = load_checkpoint(resolve_path(path))
    return net, checkpoint_id(net)


def _hidden(value: str) -> Tuple[int, ...]:
    try:
        return tuple(int(width) for width in value.split(",") if width.strip())
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated widths, got {value!r}") from e


# ===========================================
# COMMANDS
# ===========================================


def cmd_gen_data(args: argparse.Namespace) -> int:
    spec = EnvSpec(args.env, args.cap)
    transitions = generate_dataset(spec, args.episodes, args.seed)
    save_dataset(resolve_path(args.out), transitions)
    _emit({"env": spec.name, "episodes": args.episodes, "transitions": len(transitions)})
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    config = TrainConfig(
        hidden=args.hidden,
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.lr,
        positive_fraction=args.positive_fraction,
        seed=args.seed,
        validation_fraction=args.validation_fraction,
    )
    dataset = load_dataset(resolve_path(args.data))
    net, report = train_reward_model(dataset, config)
    save_checkpoint(net, resolve_path(args.out))
    payload: Dict[str, Any] = dict(report.to_dict())
    payload["checkpoint"] = checkpoint_id(net)
    _write_json(payload, args.report)
    return EXIT_OK


def cmd_oracle(args: argparse.Namespace) -> int:
    net = ORACLES[args.kind]()
    save_checkpoint(net, resolve_path(args.out))
    _emit({"kind": args.kind, "checkpoint": checkpoint_id(net)})
    return EXIT_OK


def cmd_saliency(args: argparse.Namespace) -> int:
    net, checkpoint = _load_model(args.model)
    s, s_prime = grids_from_body(_read_json(args.transition, "transition"))
    t = transition_from_frames(s, s_prime)
    if args.method == "grad":
        pair = compute_saliency(net, t, "gradient", signed=args.signed)
    else:
        cfg = OcclusionConfig(args.sigma_blur, args.sigma_mask, args.stride, args.difference)
        pair = compute_saliency(net, t, "occlusion", cfg)
    paths = write_saliency(pair, resolve_path(args.out_prefix), checkpoint)
    _emit({"mass_ratio": pair.mass_ratio, "files": [str(p) for p in paths]})
    return EXIT_OK


def cmd_counterfactual(args: argparse.Namespace) -> int:
    net, checkpoint = _load_model(args.model)
    if args.fixture is not None:
        sc = load_fixture(args.fixture)
    else:
        sc = load_scenario(resolve_path(args.scenario))
    _emit(scenario_payload(net, checkpoint, sc))
    return EXIT_OK


def cmd_timeseries(args: argparse.Namespace) -> int:
    net, _ = _load_model(args.model)
    points = reward_timeseries(net, EnvSpec(args.env), args.seed)
    write_timeseries_csv(points, resolve_path(args.out))
    _emit({"env": args.env, "seed": args.seed, "steps": len(points)})
    return EXIT_OK


def cmd_plan(args: argparse.Namespace) -> int:
    source: RewardSource
    if args.model is None:
        source = TrueReward()
    else:
        net, checkpoint = _load_model(args.model)
        source = ModelReward(net, checkpoint)
    if args.scale is not None:
        if not args.scale > 0:
            raise UsageError(f"--scale must be positive, got {args.scale}")
        source = ScaledReward(source, args.scale)
    space = enumerate_states(EnvSpec(args.env))
    policy = value_iteration(space, source, args.gamma)
    save_policy(policy, resolve_path(args.out))
    _emit(
        {
            "env": args.env,
            "reward_source": policy.reward_source,
            "states": len(space),
            "sweeps": policy.iterations,
        }
    )
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    spec = EnvSpec(args.env)
    if args.random:
        result = evaluate_random_policy(spec, args.episodes, args.seed)
        source = "random"
    else:
        policy = load_policy(resolve_path(args.policy))
        result = evaluate_policy(policy, spec, args.episodes, args.seed)
        source = policy.reward_source
    payload: Dict[str, Any] = dict(result.to_dict())
    payload["env"] = spec.name
    payload["policy"] = source
    _emit(payload)
    return EXIT_OK


def cmd_transfer(args: argparse.Namespace) -> int:
    net, _ = _load_model(args.model)
    report = transfer_experiment(
        net,
        EnvSpec(args.train_env),
        EnvSpec(args.eval_env),
        episodes=args.episodes,
        seed=args.seed,
        gamma=args.gamma,
    )
    _write_json(report.to_dict(), args.out)
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    state = ServiceState()
    if args.model is not None:
        state.load(args.model)
    ui_dir = resolve_path(args.ui_dir) if args.ui_dir is not None else None
    app = create_app(state, ui_dir=ui_dir)
    logger.info("serving on http://%s:%d", args.bind, args.port)
    log_level = "info" if args.verbose else "warning"
    uvicorn.run(app, host=args.bind, port=args.port, log_level=log_level)
    return EXIT_OK


# ===========================================
# PARSER
# ===========================================


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(
        prog="reward-lens", description="Train and audit gridworld reward models."
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    commands = parser.add_subparsers(dest="command", metavar="<command>", required=True)

    p = commands.add_parser("gen-data", help="write expert transitions as JSON Lines")
    p.add_argument("--env", choices=ENV_NAMES, required=True)
    p.add_argument("--episodes", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cap", type=int, default=DEFAULT_EPISODE_CAP, help="episode step cap")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_gen_data)

    p = commands.add_parser("train", help="fit a reward model to a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--report", help="write the training report here instead of stdout")
    p.add_argument("--hidden", type=_hidden, default=DEFAULT_HIDDEN, help="e.g. 64,64")
    p.add_argument("--epochs", type=int, default=DEFAULT_EPOCHS)
    p.add_argument("--batch-size", type=int, default=DEFAULT_BATCH_SIZE)
    p.add_argument("--lr", type=float, default=DEFAULT_LEARNING_RATE)
    p.add_argument("--positive-fraction", type=float, default=DEFAULT_POSITIVE_FRACTION)
    p.add_argument("--validation-fraction", type=float, default=DEFAULT_VALIDATION_FRACTION)
    p.add_argument("--seed", type=int, default=1)
    p.set_defaults(handler=cmd_train)

    p = commands.add_parser("oracle", help="write a hand-built reward model")
    p.add_argument("--kind", choices=sorted(ORACLES), required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_oracle)

    p = commands.add_parser("saliency", help="saliency maps for one transition")
    methods = p.add_subparsers(dest="method", metavar="<method>", required=True)
    for name, help_text in (("grad", "gradient magnitude"), ("occlude", "Gaussian-blur occlusion")):
        m = methods.add_parser(name, help=help_text)
        m.add_argument("--model", required=True)
        m.add_argument("--transition", required=True, help='JSON with "s" and "sp" grids')
        m.add_argument("--out-prefix", required=True)
        if name == "grad":
            m.add_argument("--signed", action="store_true", help="keep the gradient sign")
        else:
            m.add_argument("--sigma-blur", type=float, default=DEFAULT_SIGMA_BLUR)
            m.add_argument("--sigma-mask", type=float, default=DEFAULT_SIGMA_MASK)
            m.add_argument("--stride", type=int, default=DEFAULT_STRIDE)
            m.add_argument("--difference", choices=("absolute", "squared"), default="absolute")
        m.set_defaults(handler=cmd_saliency)

    p = commands.add_parser("counterfactual", help="run a counterfactual scenario")
    p.add_argument("--model", required=True)
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--scenario", help="scenario JSON file")
    source.add_argument("--fixture", choices=FIXTURES, help="shipped scenario")
    p.set_defaults(handler=cmd_counterfactual)

    p = commands.add_parser("timeseries", help="predicted vs. true reward over one episode")
    p.add_argument("--model", required=True)
    p.add_argument("--env", choices=ENV_NAMES, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="CSV path")
    p.set_defaults(handler=cmd_timeseries)

    p = commands.add_parser("plan", help="value iteration under the true or a learned reward")
    p.add_argument("--env", choices=ENV_NAMES, required=True)
    p.add_argument("--model", help="plan under this checkpoint instead of the true reward")
    p.add_argument("--scale", type=float, help="multiply the reward by this positive factor")
    p.add_argument("--gamma", type=float, default=DEFAULT_GAMMA)
    p.add_argument("--out", required=True, help="policy path")
    p.set_defaults(handler=cmd_plan)

    p = commands.add_parser("eval", help="true return of a policy")
    p.add_argument("--env", choices=ENV_NAMES, required=True)
    policy = p.add_mutually_exclusive_group(required=True)
    policy.add_argument("--policy", help="policy file written by plan")
    policy.add_argument("--random", action="store_true", help="uniformly random actions")
    p.add_argument("--episodes", type=int, default=DEFAULT_EVAL_EPISODES)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(handler=cmd_eval)

    p = commands.add_parser("transfer", help="move a reward model to another environment")
    p.add_argument("--model", required=True)
    p.add_argument("--train-env", choices=ENV_NAMES, required=True)
    p.add_argument("--eval-env", choices=ENV_NAMES, required=True)
    p.add_argument("--episodes", type=int, default=DEFAULT_EVAL_EPISODES)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--gamma", type=float, default=DEFAULT_GAMMA)
    p.add_argument("--out", help="write the report here instead of stdout")
    p.set_defaults(handler=cmd_transfer)

    p = commands.add_parser("serve", help="HTTP service for the audit console")
    p.add_argument("--port", type=int, default=DEFAULT_PORT)
    p.add_argument("--bind", default=DEFAULT_BIND)
    p.add_argument("--model", help="checkpoint to load at startup")
    p.add_argument("--ui-dir", help="built audit console to serve at /")
    p.set_defaults(handler=cmd_serve)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run one command and return its exit status."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        configure_logging(args.verbose)
        handler: Callable[[argparse.Namespace], int] = args.handler
        return handler(args)
    except FormatError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except OSError as e:
        print(f"error: {e.filename}: {e.strerror}", file=sys.stderr)
        return EXIT_DATA
    except RewardLensError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
