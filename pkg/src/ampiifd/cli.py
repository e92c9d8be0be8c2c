"""Command-line interface: ``ampiifd register <ref> <sen> [options]``."""
from __future__ import annotations

import argparse
import logging
import sys

from .config import config_keys, parse_config
from .errors import ConfigError, ImageIOError, NoModelError, StageError
from .pipeline import run_register

EXIT_OK, EXIT_NO_MODEL, EXIT_INPUT, EXIT_CONFIG = 0, 2, 3, 4

log = logging.getLogger("ampiifd")

# keys that have a dedicated flag instead of the generic per-key override
_DEDICATED = {"model_kind", "output_dir", "ransac_seed", "debug_dumps", "strict_paper"}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ampiifd",
                                     description="Multimodal image registration with AM-PIIFD features.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    reg = sub.add_parser("register", help="register a sensed image onto a reference image")
    reg.add_argument("ref", help="reference image")
    reg.add_argument("sen", help="sensed image")
    reg.add_argument("--gt", help="ground truth: transform file or control-point list")
    reg.add_argument("--model", dest="model_kind", choices=("similarity", "affine", "projective"))
    reg.add_argument("--out", dest="output_dir", help="output directory")
    reg.add_argument("--config", help="plain-text 'key = value' config file")
    reg.add_argument("--seed", dest="ransac_seed", type=int, help="RANSAC seed")
    reg.add_argument("--debug-dumps", dest="debug_dumps", action="store_const", const=True,
                     help="also write scale-space levels, keypoints and descriptors")
    reg.add_argument("--strict-paper", dest="strict_paper", action="store_const", const=True,
                     help="disable the ratio test and descriptor clamping")
    tun = reg.add_argument_group("tuning overrides (any config key)")
    for key in sorted(config_keys()):
        if key not in _DEDICATED:
            # values stay strings; the config layer converts and validates them
            tun.add_argument("--" + key.replace("_", "-"), dest=key, metavar="VALUE")
    return parser


def _register(ns) -> int:
    overrides = {k: v for k, v in vars(ns).items()
                 if k not in ("command", "ref", "sen", "gt", "config", "verbose") and v is not None}
    try:
        config = parse_config(overrides, ns.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"input error: cannot read config file: {exc}", file=sys.stderr)
        return EXIT_INPUT
    try:
        report = run_register(ns.ref, ns.sen, config, ns.gt)
    except NoModelError as exc:
        print(f"no model: {exc}", file=sys.stderr)
        return EXIT_NO_MODEL
    except StageError as exc:
        # the message carries the stage name; every stage failure traces back to the inputs
        print(f"input error in stage {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ImageIOError, OSError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    msg = f"{report.n_ransac} matches, model {report.model_kind}, RMSE {report.rmse_px:.3f} px"
    if report.cmr is not None:
        msg += f", CMR {report.cmr:.3f}"
    if report.unreliable:
        msg += " (unreliable)"
    print(msg)
    return EXIT_OK


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if ns.command == "register":
        return _register(ns)
    return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
