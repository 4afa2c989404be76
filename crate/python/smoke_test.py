"""Smoke test for the pyslantkit extension.

Install first:  pip install --no-build-isolation ./crates/slantkit-py
Run:            python3 python/smoke_test.py
"""

import json
import math
import sys

import pyslantkit as sk


def main() -> int:
    ids = sk.gallery_list()
    assert ids == ["ex1", "ex3", "ex4", "ex5", "ex8", "ex9"], ids

    spec = sk.gallery_spec("ex1", k=3, epsilon=-1)
    assert len(sk.spec_digest(spec)) == 64

    ok, text = sk.run_command(spec, "classify", trials=8)
    report = json.loads(text)
    assert ok, "ex1 classification failed"
    cls = report["classification"]
    assert "k-slant" in cls["labels"], cls["labels"]
    # closed form for the j-th proper component: arccos((j^2-1)/(j^2+1))
    by_name = {c["name"]: c for c in cls["components"]}
    for j in (1, 2, 3):
        comp = by_name[f"D{j}"]
        want = math.acos((j * j - 1) / (j * j + 1))
        assert all(abs(t - want) < 1e-10 for t in comp["theta"]), (j, comp["theta"], want)

    ok, text = sk.run_command(sk.gallery_spec("ex3"), "dual", trials=8)
    assert ok and json.loads(text)["dual"]["roundtrip"]["passed"]

    bad = json.loads(spec)
    bad["epsilon"] = 0
    try:
        sk.run_command(json.dumps(bad), "validate")
    except ValueError as e:
        assert "epsilon" in str(e)
    else:
        raise AssertionError("epsilon = 0 accepted")

    a = sk.run_command(spec, "identities", trials=5)[1]
    b = sk.run_command(spec, "identities", trials=5)[1]
    assert a == b, "report not deterministic"

    print(f"pyslantkit {sk.__version__}: smoke test ok")
    return 0


if __name__ == "__main__":
    sys.exit(main())
