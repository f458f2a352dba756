"""Entry point: read env config, build the app, serve it."""

from __future__ import annotations

import logging
import sys

import uvicorn

from .config import SidecarConfig, SidecarConfigError
from .service import create_app


def main() -> None:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        config = SidecarConfig.from_env()
    except SidecarConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        raise SystemExit(2)
    app = create_app(config)
    uvicorn.run(app, host="0.0.0.0", port=config.port)


if __name__ == "__main__":
    main()
