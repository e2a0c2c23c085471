# Utilities to call in multiple files
import concurrent.futures
import hashlib
import json
import os
import sys
from pathlib import Path
from typing import Callable, Iterable

from charset_normalizer import from_path


class ConsoleColors:
    RESET = "\x1b[0m"  # Reset all formatting
    MANDATORY = "\x1b[1;31m"  # Set style to bold, red foreground.
    WARNING = "\x1b[1;33m"  # Set style to bold, yellow foreground.
    INFO = "\x1b[92m"  # Set style to light green foreground.
    DEBUG = "\x1b[90m"  # Set style to grey foreground.


def get_version() -> str:
    """
    Resolve tool version for manifests and the CLI banner.

    Order:
      1) env RELEASE_VERSION (set by CI)
      2) version.txt next to the repository root
      3) 'dev' for local runs
    """
    env_ver = os.getenv("RELEASE_VERSION")
    if env_ver:
        # Strip optional build metadata (e.g. 2025.10.09.0955+g67b92ee -> 2025.10.09.0955)
        base = env_ver.strip().split("+", 1)[0]
        if base:
            return base

    try:
        vf = Path(__file__).resolve().parent.parent / "version.txt"
        if vf.is_file():
            txt = read_file(vf).strip().split("+", 1)[0]
            if txt:
                return txt
    except Exception:
        pass

    return "dev"


def log(message, log_file=None, when="", severity=""):
    if when != "":
        message = f"[{when}] {message}"
    if severity != "":
        # Color highlighting based on severity level
        if severity.upper() == "MANDATORY" or severity.upper() == "ERROR":
            colored_severity = (
                f"{ConsoleColors.MANDATORY}[{severity}]{ConsoleColors.RESET}"
            )
        elif severity.upper() == "WARNING":
            colored_severity = (
                f"{ConsoleColors.WARNING}[{severity}]{ConsoleColors.RESET}"
            )
        elif severity.upper() == "INFO":
            colored_severity = f"{ConsoleColors.INFO}[{severity}]{ConsoleColors.RESET}"
        elif severity.upper() == "DEBUG":
            colored_severity = f"{ConsoleColors.DEBUG}[{severity}]{ConsoleColors.RESET}"
        else:
            colored_severity = f"[{severity}]"

        # For console with color
        console_message = f"{colored_severity} {message}"
        # For file without color
        file_message = f"[{severity}] {message}"
    else:
        console_message = message
        file_message = message

    print(
        f"\n{console_message}",
        file=(sys.stderr if severity.upper() == "ERROR" else sys.stdout),
    )
    if log_file:
        log_file.write(file_message + "\n")  # Write to file without colors
        log_file.flush()  # Ensure data is written immediately


def calculate_file_hash(file_path):
    """
    Calculates the hash (MD5) of a file for comparison purposes.
    """
    md5 = hashlib.md5()
    with open(file_path, "rb") as f:
        while chunk := f.read(4096):
            md5.update(chunk)
    return md5.hexdigest()


def calculate_key_hash(payload) -> str:
    """
    MD5 of a JSON-serializable payload, keys sorted so equal payloads hash equal.
    """
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.md5(text.encode("utf-8")).hexdigest()


def run_parallel(
    process_function: Callable,
    items: Iterable,
    *args,
    max_workers: int | None = None,
):
    """
    Runs a function over items in parallel and returns the results in item order.

    Args:
        process_function (callable): The function to apply on each item.
        items (iterable): Work items, passed as the first argument.
        *args: Additional arguments to pass to the process_function.
        max_workers (int): Thread count; None lets the executor decide, 1 runs inline.

    Returns:
        list: One result per item, in the order the items were given.
    """
    items = list(items)
    if max_workers == 1 or len(items) <= 1:
        return [process_function(item, *args) for item in items]

    with concurrent.futures.ThreadPoolExecutor(max_workers=max_workers) as executor:
        return list(executor.map(lambda item: process_function(item, *args), items))


def load_file_info(folder, filename):
    """Named JSON data file under `folder`; {} when it is missing or unreadable."""
    root_path = Path(__file__).resolve().parent.parent
    file_path = root_path / folder / f"{filename}.json"
    try:
        return json.loads(read_file(file_path))
    except (OSError, ValueError) as e:
        log(f"Error loading JSON file '{file_path}': {type(e).__name__}: {e}", when="data", severity="WARNING")
        return {}


def read_file(file: Path):
    try:
        return file.read_text(encoding="utf-8")
    except UnicodeDecodeError:
        result = from_path(file).best()
        if result:
            return file.read_text(encoding=result.encoding, errors="ignore")
    return ""
