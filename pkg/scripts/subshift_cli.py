import argparse
import logging
import os
import sys
from pathlib import Path

# ensure project root on sys.path
_ROOT = Path(__file__).resolve().parents[1]
if str(_ROOT) not in sys.path:
    sys.path.insert(0, str(_ROOT))

from infra.errors import ConfigError, classify_exit
from infra.observability import set_trace_root
from modules.experiment.config import load_config
from modules.experiment.pipeline import cmd_evaluate, cmd_report, cmd_run, cmd_select, cmd_synth
from tools.fs import create_run_folder, ensure_dir

logger = logging.getLogger("subshift")

COMMANDS = ("synth", "run", "select", "evaluate", "report")


def _jobs(value) -> int:
    if value is not None:
        return max(1, int(value))
    env = os.getenv("SUBSHIFT_JOBS", "1") or "1"
    try:
        return max(1, int(env))
    except ValueError:
        raise ConfigError("bad_jobs", f"SUBSHIFT_JOBS={env!r} is not an integer")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(description="ERM and group DRO under subpopulation shift")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="Experiment config (.toml or .json); required except for report")
    ap.add_argument("--out", help="Output directory (default: output.dir from the config, else output/<config name>)")
    ap.add_argument("--resume", action="store_true", help="Continue a sweep in an existing output directory")
    ap.add_argument("--jobs", type=int, default=None, help="Worker threads (default: $SUBSHIFT_JOBS or 1)")
    return ap


def run(argv=None) -> int:
    """Parse arguments, dispatch one command; returns the process exit code."""
    args = build_parser().parse_args(argv)
    try:
        jobs = _jobs(args.jobs)
        if args.command == "report":
            if not args.out:
                if not args.config:
                    raise ConfigError("missing_out", "report needs --out or --config")
                cfg = load_config(args.config)
                out = cfg.output_dir or create_run_folder(args.config)
            else:
                out = args.out
            set_trace_root(out)
            paths = cmd_report(out)
            logger.info("report: %s, %s", paths["html"], paths["pdf"])
            return 0

        if not args.config:
            raise ConfigError("missing_config", f"{args.command} needs --config")
        cfg = load_config(args.config)
        out = ensure_dir(args.out or cfg.output_dir or create_run_folder(args.config))
        set_trace_root(out)
        logger.info("%s: output in %s (jobs=%d)", args.command, out, jobs)
        if args.command == "synth":
            cmd_synth(cfg, out)
        elif args.command == "run":
            summary = cmd_run(cfg, out, resume=args.resume, jobs=jobs)
            logger.info("run: %d records", summary["runs"])
        elif args.command == "select":
            for p in cmd_select(cfg, out):
                logger.info("selection: %s", p)
        elif args.command == "evaluate":
            for p in cmd_evaluate(cfg, out, jobs=jobs):
                logger.info("report: %s", p)
        return 0
    except Exception as e:
        logger.error("%s failed: %s", args.command, e)
        return classify_exit(e)


def main():
    """CLI entry: configure console logging and exit with the command's code."""
    logging.basicConfig(format="[%(asctime)s] %(levelname)s %(threadName)s: %(message)s", level=logging.INFO)
    sys.exit(run())


if __name__ == "__main__":
    main()
