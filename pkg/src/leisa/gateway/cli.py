"""Entry point for the gateway server process."""

from __future__ import annotations

import argparse
import logging
import signal
import sys

from .app import GatewayApp, GatewayServer
from .config import load_config


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="leisa-gateway",
        description="Livestock event sharing gateway: registry, routing, validator and broker behind one HTTP surface.",
    )
    parser.add_argument("--config", help="path to a JSON config file")
    parser.add_argument("--listen", help="host:port to listen on")
    parser.add_argument("--storage", help="storage root directory")
    parser.add_argument("--schemas", help="directory of extra <eventType>.json schema files")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    args = parser.parse_args(argv)

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    overrides: dict = {}
    if args.listen:
        host, _, port = args.listen.rpartition(":")
        overrides["listen_host"] = host or "127.0.0.1"
        overrides["listen_port"] = int(port)
    if args.storage:
        overrides["storage_root"] = args.storage
    if args.schemas:
        overrides["schema_dir"] = args.schemas

    config = load_config(args.config, overrides=overrides)
    app = GatewayApp(config)
    server = GatewayServer(app)

    def shutdown(signum, frame):
        logging.getLogger(__name__).info("shutting down")
        server.shutdown()

    signal.signal(signal.SIGTERM, shutdown)
    signal.signal(signal.SIGINT, shutdown)

    print(f"leisa-gateway listening on {config.listen_host}:{server.port}", flush=True)
    try:
        server.serve_forever()
    finally:
        server.server_close()
        app.close()
    return 0


if __name__ == "__main__":
    sys.exit(main())
