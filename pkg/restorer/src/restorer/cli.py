"""restorer CLI: train a restoration model or serve exchange requests.

`restorer serve --request ...` follows the backend contract of the
producer pipeline: exit 0 with the output raster written on success,
nonzero with an error JSON on stderr otherwise (exit 4 for protocol or
model errors).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .serve import ServeError, serve_batch, serve_request
from .tgr import TgrError


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = argparse.ArgumentParser(prog="restorer")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train on a pipeline-emitted dataset")
    p.add_argument("dataset", help="directory of scene subdirectories")
    p.add_argument("--checkpoint", required=True, help="output checkpoint path")
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sigma-name", default="integrals/sigma_2d.tgr")

    p = sub.add_parser("serve", help="answer one exchange request (or a batch)")
    p.add_argument("--request", default=None, help="path to request.json")
    p.add_argument("--batch", default=None, help="directory of request dirs")
    p.add_argument("--checkpoint", required=True)

    args = parser.parse_args(argv)

    if args.command == "train":
        from .train import TrainConfig, TrainingError, train

        try:
            history = train(
                args.dataset,
                args.checkpoint,
                TrainConfig(
                    epochs=args.epochs,
                    batch_size=args.batch_size,
                    seed=args.seed,
                    sigma_name=args.sigma_name,
                ),
            )
        except TrainingError as exc:
            json.dump({"error": str(exc)}, sys.stderr)
            sys.stderr.write("\n")
            return 4
        json.dump(
            {
                "checkpoint": args.checkpoint,
                "epochs": len(history["val_rmse_c"]),
                "best_val_rmse_c": history["best_val_rmse_c"],
            },
            sys.stdout,
        )
        sys.stdout.write("\n")
        return 0

    # serve
    if (args.request is None) == (args.batch is None):
        json.dump({"error": "give exactly one of --request / --batch"}, sys.stderr)
        sys.stderr.write("\n")
        return 2
    try:
        if args.request:
            out = serve_request(args.request, checkpoint=args.checkpoint)
            json.dump({"output": str(out)}, sys.stdout)
        else:
            outs = serve_batch(args.batch, checkpoint=args.checkpoint)
            json.dump({"outputs": [str(o) for o in outs]}, sys.stdout)
        sys.stdout.write("\n")
        return 0
    except (ServeError, TgrError, FileNotFoundError, ValueError) as exc:
        json.dump({"error": str(exc)}, sys.stderr)
        sys.stderr.write("\n")
        return 4


if __name__ == "__main__":
    sys.exit(main())
