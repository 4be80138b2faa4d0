"""Smoke test for the mbansec_py extension.

Build and install it first:
    pip install --no-build-isolation -e crates/py
"""

import mbansec_py as m


def main():
    vectors = m.run_vectors()
    assert vectors and all(ok for _, ok in vectors), vectors

    for proto in ["I", "II", "III", "IV", "V"]:
        r = m.handshake(proto, seed=1)
        assert r["messages"] == 3 and r["mk_match"], (proto, r)
        assert r["mutually_authenticated"] == (proto != "II"), (proto, r)

    sim = m.Simulator("lcp", profile="hardened", seed=7)
    sim.run(100)
    assert sim.now == 100
    assert sim.observe("state:0x0001") == "Connected"
    assert sim.delivered() > 0
    again = m.Simulator("lcp", profile="hardened", seed=7)
    again.run(100)
    assert again.trace_csv() == sim.trace_csv()
    try:
        sim.observe("state:0x0999")
    except KeyError:
        pass
    else:
        raise AssertionError("unknown node should raise KeyError")

    base = m.attack("pancreas", "replay", profile="baseline")
    hard = m.attack("pancreas", "replay", profile="hardened")
    assert base["success_rate"] == 1.0 and hard["success_rate"] == 0.0, (base, hard)

    verdicts = dict((spec, status) for spec, status, _ in m.fulfillment("baseline"))
    assert len(verdicts) == 26 and verdicts["U1.3"] == "NotSatisfied"
    assert m.coverage_gaps(["UC1", "UC2", "UC3"]) == []

    raw = m.encode_plain_frame(1, 0xFF01, "data", 5, b"hello")
    f = m.decode_frame(raw)
    assert f["payload"] == b"hello"
    assert f["sender"] == 1 and f["seq"] == 5

    code, out, _ = m.run_cli(["vectors"])
    assert code == 0 and "PASS" in out
    code, _, err = m.run_cli(["nonsense"])
    assert code == 1 and "Usage" in err

    print("smoke test ok")


if __name__ == "__main__":
    main()
