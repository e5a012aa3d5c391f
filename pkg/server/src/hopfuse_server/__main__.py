"""Run the model server: ``python -m hopfuse_server --config serve.json``."""

import argparse

import uvicorn

from .app import ServeConfig, create_app


def main() -> None:
    parser = argparse.ArgumentParser(description="hopfuse model server")
    parser.add_argument("--config", required=True, help="ServeConfig JSON file")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8000)
    args = parser.parse_args()
    app = create_app(ServeConfig.from_file(args.config))
    uvicorn.run(app, host=args.host, port=args.port)


if __name__ == "__main__":
    main()
