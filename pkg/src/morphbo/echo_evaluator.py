"""Test-double evaluator: scores each design by its first weight.

Run as ``python -m morphbo.echo_evaluator [--shuffle N] [--skip ID ...]
[--garble ID ...] [--die-after N]``.

``--shuffle N`` buffers requests in groups of ``N`` and answers each group
in reverse order. ``--skip`` never answers the listed ids and ``--garble``
answers them with a malformed line. ``--die-after N`` exits after reading
``N`` requests without answering the last one.
"""

import argparse
import json
import sys


def _answer(req, garble):
    if req["id"] in garble:
        return '{"id": ' + str(req["id"]) + ', "objective": '
    return json.dumps({"id": req["id"], "objective": float(req["weights"][0]), "valid": True})


def main(argv=None):
    ap = argparse.ArgumentParser(prog="morphbo.echo_evaluator")
    ap.add_argument("--shuffle", type=int, default=1)
    ap.add_argument("--skip", type=int, nargs="*", default=[])
    ap.add_argument("--garble", type=int, nargs="*", default=[])
    ap.add_argument("--die-after", type=int, default=None)
    args = ap.parse_args(argv)
    skip, garble = set(args.skip), set(args.garble)
    buf, seen = [], 0
    for line in sys.stdin:
        if not line.strip():
            continue
        req = json.loads(line)
        seen += 1
        if args.die_after is not None and seen >= args.die_after:
            return 3
        if req["id"] in skip:
            continue
        buf.append(req)
        if len(buf) >= args.shuffle:
            for r in reversed(buf):
                print(_answer(r, garble), flush=True)
            buf = []
    for r in reversed(buf):
        print(_answer(r, garble), flush=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
