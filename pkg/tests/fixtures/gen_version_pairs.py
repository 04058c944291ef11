"""Regenerate tests/data/version_pairs.tsv using the system dpkg as the oracle.

Run once on a host with dpkg; the output is committed and tests read it
offline. Columns: left, right, expected ordering (-1/0/1).
"""

import random
import subprocess
import sys
from pathlib import Path

ALNUM = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789"
HANDPICKED = [
    ("1.0", "1.0"), ("1.0~rc1", "1.0"), ("1:0.9", "2.0"), ("1.0~beta", "1.0"),
    ("1.0", "1.0-0"), ("1.0", "1.00"), ("1.0~~", "1.0~"), ("1.0~", "1.0"),
    ("1.0a", "1.0"), ("1.0+b1", "1.0"), ("1.0-1", "1.0-1+b1"), ("1.0-1~bpo1", "1.0-1"),
    ("3.0.4-1", "3.3"), ("3.3.2-1", "3.3"), ("1.1.34", "1.1.35"), ("2:1.0", "1:9.9"),
    ("0:1.0", "1.0"), ("1.10", "1.9"), ("1.001", "1.1"), ("a", "b"), ("1.0.", "1.0"),
    ("1.0+", "1.0."), ("1.0a", "1.0+"), ("1.0~a", "1.0~b"), ("10", "9"), ("1.2.3", "1.2.3~dfsg"),
]


def rand_part(rng, first_alnum=True, allow_hyphen=False, charset="upstream"):
    n = rng.randint(1, 4)
    out = []
    for k in range(n):
        kind = rng.random()
        if kind < 0.55:
            out.append(str(rng.choice([0, 1, 2, 3, 9, 10, 11, 99, 100, 2020, 123456])))
        elif kind < 0.8:
            out.append("".join(rng.choice("abcxyzABZ") for _ in range(rng.randint(1, 3))))
        else:
            out.append("0" * rng.randint(1, 2) + str(rng.randint(0, 9)))
        if k < n - 1:
            seps = ".+~" + ("-" if allow_hyphen else "")
            out.append(rng.choice(seps) * (2 if rng.random() < 0.05 else 1))
    if rng.random() < 0.1:
        out.append(rng.choice(["~", "+", ".", "~~"]))
    s = "".join(out)
    if first_alnum and not s[0].isalnum():
        s = "0" + s
    return s


def rand_version(rng):
    v = rand_part(rng, allow_hyphen=rng.random() < 0.1)
    rev = rng.random() < 0.6
    if "-" in v and not rev:
        rev = True
    if rev:
        r = rand_part(rng, first_alnum=False).replace("-", "")
        if not r:
            r = "1"
        v = f"{v}-{r}"
    if rng.random() < 0.2:
        v = f"{rng.choice([0, 1, 2, 10])}:{v}"
    return v


def mutate(rng, v):
    ops = [
        lambda s: s + "~" + rng.choice(["rc1", "beta", "1"]),
        lambda s: s + "+" + rng.choice(["b1", "dfsg", "1"]),
        lambda s: s + "." + str(rng.randint(0, 3)),
        lambda s: s.replace("1", "01", 1),
        lambda s: s[:-1] + rng.choice("0123456789abz") if len(s) > 1 and s[-2] not in "-:" else s,
        lambda s: ("1:" + s) if ":" not in s else s,
        lambda s: s,
    ]
    return rng.choice(ops)(v)


def dpkg_order(a, b):
    def rel(op):
        return subprocess.run(["dpkg", "--compare-versions", a, op, b], capture_output=True).returncode == 0
    if rel("eq"):
        return 0
    return -1 if rel("lt") else 1


def valid(v):
    r = subprocess.run(["dpkg", "--compare-versions", v, "eq", v], capture_output=True, text=True)
    return r.returncode == 0 and not r.stderr


def main(out):
    rng = random.Random(20240601)
    pairs = list(HANDPICKED)
    while len(pairs) < 620:
        a = rand_version(rng)
        b = mutate(rng, a) if rng.random() < 0.5 else rand_version(rng)
        if valid(a) and valid(b):
            pairs.append((a, b))
    with open(out, "w") as fh:
        fh.write("# left\tright\texpected (dpkg --compare-versions)\n")
        for a, b in pairs:
            fh.write(f"{a}\t{b}\t{dpkg_order(a, b)}\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else Path(__file__).parents[1] / "data" / "version_pairs.tsv")
