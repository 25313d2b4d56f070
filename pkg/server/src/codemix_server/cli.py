"""Run the server: codemix-server --port 8008 --loss-model builtin:overlap"""

import argparse
import sys

import uvicorn

from .app import ServerConfig, create_app
from .models import ModelError


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8008)
    parser.add_argument(
        "--loss-model",
        dest="loss_model",
        default="builtin:overlap",
        help="builtin:overlap, builtin:window-qa, or hub:<model-name>",
    )
    parser.add_argument(
        "--loss-task",
        dest="loss_task",
        default="classification",
        choices=["classification", "span_qa"],
    )
    parser.add_argument("--max-batch", dest="max_batch", type=int, default=128)
    parser.add_argument(
        "--return-probs",
        dest="return_probs",
        action="store_true",
        help="attach the model's probability vector to every record",
    )
    args = parser.parse_args(argv)
    try:
        config = ServerConfig(
            loss_model=args.loss_model,
            loss_task=args.loss_task,
            max_batch=args.max_batch,
            return_probs=args.return_probs,
            host=args.host,
            port=args.port,
        )
        app = create_app(config)
    except (ModelError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    uvicorn.run(app, host=config.host, port=config.port, log_level="warning")
    return 0


if __name__ == "__main__":
    sys.exit(main())
