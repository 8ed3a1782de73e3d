# -*- coding: utf-8 -*-
"""
covfactor — exact factorized eigenstates of quadratic spin Hamiltonians

Entry point: `python main.py <command> [options]`. Commands check product
states against a Hamiltonian, solve for every compatible field and coupling,
and cross-check the claims by exact diagonalization.
"""

import sys
from pathlib import Path

from src.logger import get_logger

VERSION = (Path(__file__).parent / "VERSION").read_text(encoding="utf-8").strip()

logger = get_logger(__name__)


# ================================================
# SAFE IMPORT + ERROR HANDLING
# ================================================
try:
    from src.cli import main as cli_main
except ImportError as e:
    logger.error("covfactor could not be loaded. Ensure all files in 'src/' exist and requirements are installed.")
    logger.exception(e)
    sys.exit(1)


# ================================================
# BANNER (stderr, interactive terminals only)
# ================================================
def print_banner():
    if not sys.stderr.isatty():
        return
    try:
        print(f"""
╔══════════════════════════════════════════════╗
║   COVFACTOR  ·  covariance factorization     ║
║   version {VERSION:<35}║
╚══════════════════════════════════════════════╝""", file=sys.stderr)
    except UnicodeEncodeError:
        print("=" * 48 + f"\n   COVFACTOR {VERSION}\n" + "=" * 48, file=sys.stderr)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    if "--version" in argv:
        print(VERSION)
        return 0
    print_banner()
    try:
        return cli_main(argv)
    except KeyboardInterrupt:
        logger.warning("interrupted by user")
        return 130


if __name__ == '__main__':
    sys.exit(main())
