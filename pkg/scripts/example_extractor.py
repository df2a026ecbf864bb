#!/usr/bin/env python3
"""Minimal external embedding extractor speaking the exchange protocol.

Called as  example_extractor.py REQUEST OUTPUT  where REQUEST is a TSV of
``utterance_id<TAB>wav_path`` lines. Writes one ``<id> <dim> v1 ... vD`` line
per utterance to OUTPUT. Swap the body of ``embed`` for a real network.

Config snippet:
  "embedding": {"source": "external",
                "command": "python3 scripts/example_extractor.py {request} {output}",
                "exchange_dir": "runs/exchange", "dim": 64}
"""

import sys

import numpy as np

from poiaudio.audio_io import load_wav
from poiaudio.frontend import FrontendConfig, log_mel


def embed(path):
    # mean log-mel spectrum, a deliberately weak speaker descriptor
    return log_mel(load_wav(path), FrontendConfig(n_mels=64)).values.mean(axis=0)


def main(request, output):
    with open(request, encoding="utf-8") as fh, open(output, "w", encoding="utf-8") as out:
        for line in fh:
            if not line.strip():
                continue
            uid, path = line.rstrip("\n").split("\t")
            v = embed(path)
            out.write(f"{uid} {v.size} " + " ".join(repr(float(x)) for x in v) + "\n")


if __name__ == "__main__":
    if len(sys.argv) != 3:
        sys.exit(__doc__)
    main(sys.argv[1], sys.argv[2])
