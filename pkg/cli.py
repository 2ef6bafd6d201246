import json
import logging
import sys
from pathlib import Path

from dotenv import load_dotenv
from pydantic import ValidationError

import config as settings
from db import RecordDatabase
from errors import AnalysisError, PhysicalConstraintError, SolverError
from experiments import run_scenario, write_outputs
from run_config import RunConfig, load_config

# Load environment variables from .env file
load_dotenv()

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_SCHEMA = 2
EXIT_PHYSICAL = 3
EXIT_SOLVER = 4

# name -> (result reproduced, required keys, what is measured)
SCENARIO_HELP = {
    "classical": ("Lemma 2.1", "potential, packets, T", "classical flow with action and energy drift"),
    "gaussian": ("Lemma 4.3", "potential, packets[1], lam, T", "Gaussian closure against the envelope PDE, Gausson equilibrium"),
    "single": ("Theorem 1.2", "potential, packets[1], lam, eps, T", "single-packet approximation error in the moving frame"),
    "superpose": ("Theorem 1.3", "potential, packets[2], lam, eps, T, lab", "two-packet superposition error and interaction term"),
    "sweep": ("Proposition 1.1", "potential, packets, lam, eps_list, T, error_kind", "error curves and slope fits in eps"),
    "crossing": ("Proposition 6.1", "potential, packets[2], eps_list, gamma, T", "measure of the times two paths come within eps^gamma"),
}


def list_scenarios() -> str:
    lines = ["Scenarios:"]
    for name, (result, keys, measured) in SCENARIO_HELP.items():
        lines.append(f"  {name} ({result})")
        lines.append(f"      measures: {measured}")
        lines.append(f"      requires: {keys}")
    return "\n".join(lines)


def _read_config(path: str) -> RunConfig | None:
    try:
        return load_config(path)
    except (ValidationError, json.JSONDecodeError) as e:
        logger.error(f"Invalid config {path}: {e}")
        print(f"❌ Invalid config {path}:\n{e}")
    except OSError as e:
        logger.error(f"Cannot read config {path}: {e}")
        print(f"❌ Cannot read config {path}: {e}")
    return None


def run_config(path: str) -> int:
    """Validate, run and report one experiment; returns the exit status."""
    config = _read_config(path)
    if config is None:
        return EXIT_SCHEMA

    try:
        result = run_scenario(config)
    except PhysicalConstraintError as e:
        logger.error(f"Physical constraint violated: {e}")
        print(f"❌ {type(e).__name__}: {e}")
        return EXIT_PHYSICAL
    except (SolverError, AnalysisError) as e:
        logger.error(f"Run aborted: {e}")
        print(f"❌ {type(e).__name__}: {e}")
        return EXIT_SOLVER

    directory = write_outputs(result, config, Path(settings.output_root(config.output_dir)) / config.name)
    if settings.ENABLE_RESULTS_DB:
        database = RecordDatabase(settings.RESULTS_DB_PATH)
        run_id = database.save_run(
            config.name, config.scenario, directory, result.records, result.fits, result.passed,
            config.model_dump(mode="json"),
        )
        logger.info(f"Stored run {run_id} in {settings.RESULTS_DB_PATH}")

    for fit in result.fits:
        print(f"  slope[{fit.path}] = {fit.slope:.3f} (R² = {fit.r_squared:.3f}, {fit.points} points)")
    for check in result.checks:
        mark = "✓" if check.passed else "✗"
        print(f"  {mark} {check.name}: {check.value:.3e} {check.bound}")
    status = "passed" if result.passed else "FAILED"
    print(f"{'✅' if result.passed else '❌'} {config.name}: {len(result.checks)} checks {status}; reports in {directory}")
    return EXIT_OK


def cmd_run():
    if len(sys.argv) < 3:
        print("Usage: lognls-cli run <config.json>")
        sys.exit(EXIT_USAGE)
    sys.exit(run_config(sys.argv[2]))


def cmd_validate():
    """Schema and physical checks only; nothing is computed."""
    if len(sys.argv) < 3:
        print("Usage: lognls-cli validate <config.json>")
        sys.exit(EXIT_USAGE)
    config = _read_config(sys.argv[2])
    if config is None:
        sys.exit(EXIT_SCHEMA)
    try:
        config.check_physical()
    except PhysicalConstraintError as e:
        print(f"❌ {type(e).__name__}: {e}")
        sys.exit(EXIT_PHYSICAL)
    print(f"✅ {config.name}: scenario '{config.scenario}' is valid")


def cmd_list():
    print(list_scenarios())


def cmd_help():
    """Show help message."""
    print("Usage: lognls-cli [command]")
    print("\nCommands:")
    print("  run <config>       Run one experiment and write its reports")
    print("  validate <config>  Check a config without running it")
    print("  list               List scenarios and the results they reproduce")
    print("  help               Show this help message")
    print("\nExit codes: 2 invalid config, 3 physical constraint violated, 4 solver or analysis abort")


def main():
    """CLI entry point for lognls-cli command."""
    if len(sys.argv) < 2:
        cmd_help()
        return

    command = sys.argv[1]

    logging.basicConfig(
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        level=getattr(logging, settings.LOG_LEVEL, logging.INFO)
    )

    if command == "run":
        cmd_run()
    elif command == "validate":
        cmd_validate()
    elif command == "list":
        cmd_list()
    elif command == "help":
        cmd_help()
    else:
        print(f"Unknown command: {command}")
        print("Run 'lognls-cli help' for usage information")
        sys.exit(EXIT_USAGE)

if __name__ == "__main__":
    main()
