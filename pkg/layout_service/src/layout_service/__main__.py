"""Run the service: `layout-service [--host H] [--port P]`.

Backend selection via environment: LAYOUT_STUB_FIXTURE for stub mode,
LAYOUT_MODEL_PATH (+ LAYOUT_CLASS_NAMES, LAYOUT_CLASS_MAP) for model mode.
"""

import argparse
import logging

import uvicorn

from layout_service.app import create_app


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8192)
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    uvicorn.run(create_app(), host=args.host, port=args.port, log_level="warning")


if __name__ == "__main__":
    main()
