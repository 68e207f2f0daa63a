"""Launch flags mirroring BridgeConfig."""
from __future__ import annotations

import argparse
import logging
import sys

from .config import (DEFAULT_MODEL, DEFAULT_SIMILARITY_MODEL, TOY_MODEL,
                     BridgeConfig)
from .errors import BridgeConfigError
from .server import serve


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="diffusion-bridge",
        description="Serve a rectified-flow model over the velocity wire protocol.")
    parser.add_argument("--model", default=DEFAULT_MODEL,
                        help=f"checkpoint identifier, or '{TOY_MODEL}' for the "
                             f"deterministic CPU flow (default: {DEFAULT_MODEL})")
    parser.add_argument("--device", default="auto", choices=("auto", "cpu", "cuda"),
                        help="compute device (default: auto)")
    parser.add_argument("--latent-shape", default=None, metavar="D[,D...]",
                        help="advertised latent shape; must match the model")
    parser.add_argument("--similarity-model", default=DEFAULT_SIMILARITY_MODEL,
                        help=f"CLIP checkpoint for similarity scoring "
                             f"(default: {DEFAULT_SIMILARITY_MODEL})")
    parser.add_argument("--host", default="127.0.0.1", help="bind address")
    parser.add_argument("--port", type=int, default=8601, help="bind port")
    return parser


def config_from_args(args: argparse.Namespace) -> BridgeConfig:
    shape = None
    if args.latent_shape:
        try:
            shape = tuple(int(v) for v in args.latent_shape.split(","))
        except ValueError as exc:
            raise BridgeConfigError(f"latent shape must be integers: {exc}") from exc
    return BridgeConfig(model=args.model, device=args.device, latent_shape=shape,
                        similarity_model=args.similarity_model, host=args.host,
                        port=args.port)


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        config = config_from_args(args)
    except BridgeConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    serve(config)
    return 0


if __name__ == "__main__":
    sys.exit(main())
