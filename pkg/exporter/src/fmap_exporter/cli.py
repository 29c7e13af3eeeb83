"""Exporter command line: export activations for a sequence, list layers."""

from __future__ import annotations

import argparse
import sys

from .errors import ExportConfigError, ExportDataError
from .export import ExportConfig, export_sequence
from .models import REGISTRY, list_layers


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="fmap-export")
    sub = parser.add_subparsers(required=True)

    p_exp = sub.add_parser("export", help="export one sequence to FMAP files")
    p_exp.add_argument("--seq", required=True, help="sequence directory")
    p_exp.add_argument("--model", default="densenet201+fcn8s",
                       help="backbone id, optionally '+fcn8s' (default)")
    p_exp.add_argument("--layers", default="L3", choices=("L1", "L2", "L3", "L4"))
    p_exp.add_argument("--out", required=True)
    p_exp.add_argument("--patch-size", type=int, default=224)
    p_exp.add_argument("--weights", default="pretrained",
                       choices=("pretrained", "random"))
    p_exp.add_argument("--fcn-weights", default=None,
                       help="state-dict file for the segmentation head")
    p_exp.set_defaults(func=cmd_export)

    p_list = sub.add_parser("list-layers", help="print exportable layer names")
    p_list.add_argument("--model", required=True, choices=sorted(REGISTRY))
    p_list.add_argument("--weights", default="random",
                        choices=("pretrained", "random"))
    p_list.set_defaults(func=cmd_list)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ExportConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ExportDataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


def cmd_export(args) -> int:
    model = args.model
    include_fcn = model.endswith("+fcn8s")
    if include_fcn:
        model = model[: -len("+fcn8s")]
    cfg = ExportConfig(model_id=model, level=args.layers,
                       include_fcn=include_fcn, patch_size=args.patch_size,
                       weights=args.weights, fcn_weights_file=args.fcn_weights)
    manifest = export_sequence(args.seq, args.out, cfg)
    for block in manifest["blocks"]:
        print(f"{block['name']}: {block['channels']} channels on "
              f"{block['grid'][0]}x{block['grid'][1]}")
    print(f"wrote {manifest['frames']} frames to {manifest['outputs']['directory']}")
    return 0


def cmd_list(args) -> int:
    for name, shape in list_layers(args.model, weights=args.weights):
        print(f"{name}  {'x'.join(str(v) for v in shape)}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
