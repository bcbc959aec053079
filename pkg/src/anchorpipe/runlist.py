from __future__ import annotations
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Sequence
import yaml

from .errors import ConfigError
from .logging import _print


def job_argv(job: Mapping[str, Any], index: int) -> List[str]:
    """{command, args: {flag: value}} → argv; True becomes a bare flag, False/None are dropped."""
    if not isinstance(job, Mapping) or not job.get("command"):
        raise ConfigError(f"runlist job {index} needs a 'command'", code="E105")
    argv = [str(job["command"])]
    args = job.get("args") or {}
    if not isinstance(args, Mapping):
        raise ConfigError(f"runlist job {index}: 'args' must be a mapping", code="E105")
    for key, value in args.items():
        flag = "--" + str(key).replace("_", "-")
        if value is True:
            argv.append(flag)
        elif value is False or value is None:
            continue
        else:
            argv += [flag, str(value)]
    return argv


def load_runlist(runlist_path: Path) -> Dict[str, Any]:
    if not runlist_path.exists():
        raise ConfigError(f"runlist not found: {runlist_path}", code="E104")
    data = yaml.safe_load(runlist_path.read_text(encoding="utf-8")) or {}
    if not isinstance(data, dict) or not isinstance(data.get("jobs", []), list):
        raise ConfigError(f"runlist {runlist_path} must hold a 'jobs' list", code="E105")
    return data


def run_from_runlist(runlist_path: Path, dispatch: Callable[[Sequence[str]], int], quiet: bool = False) -> int:
    data = load_runlist(runlist_path)
    jobs = data.get("jobs", [])
    stop_on_error = bool(data.get("stop_on_error", False))
    argvs = [job_argv(j, i) for i, j in enumerate(jobs)]
    exit_code = 0
    for i, argv in enumerate(argvs):
        if quiet and "--quiet" not in argv:
            argv = argv + ["--quiet"]
        _print(f"\n=== RUN {i + 1}/{len(argvs)}: {argv[0]} ===", quiet)
        rc = dispatch(argv)
        if rc and not exit_code:
            exit_code = rc
        if rc and stop_on_error:
            break
    return exit_code
