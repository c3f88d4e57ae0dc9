"""``python -m losml``: thread limits are applied before numpy loads."""

import os
import sys


def main(argv=None) -> int:
    threads = os.environ.get("LOSML_THREADS")
    if threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, threads)
    from .cli import main as cli_main

    return cli_main(argv)


if __name__ == "__main__":
    sys.exit(main())
