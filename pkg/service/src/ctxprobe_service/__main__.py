"""Serve a pretrained masked LM behind the scoring protocol.

    ctxprobe-service --model bert-large-cased --vocab vocab.txt --port 8811
"""

from __future__ import annotations

import argparse
import logging


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--model", required=True,
                        help="model name or local path (BERT-style for NSP support)")
    parser.add_argument("--vocab", required=True,
                        help="unified candidate vocabulary, one token per line")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8811)
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--no-nsp", action="store_true",
                        help="load a plain masked-LM head (nsp_prob will be null)")
    args = parser.parse_args(argv)

    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")

    with open(args.vocab, encoding="utf-8") as fh:
        vocab_tokens = [line.rstrip("\n") for line in fh if line.strip()]

    from .app import create_app
    from .model import ModelSession

    def factory():
        return ModelSession.from_pretrained(
            args.model, vocab_tokens, device=args.device, nsp=not args.no_nsp
        )

    import uvicorn

    uvicorn.run(create_app(session_factory=factory), host=args.host, port=args.port)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
