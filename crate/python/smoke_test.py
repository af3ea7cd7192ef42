"""Smoke test for the nrlat extension module.

Build and install first:  pip install --no-build-isolation ./crates/py   (or: maturin develop -m crates/py/Cargo.toml)
"""

import math
import sys

import nrlat


def close(a, b, tol=1e-9):
    return math.isclose(a, b, rel_tol=0, abs_tol=tol)


def main():
    assert close(nrlat.slot_duration(1), 0.5)
    assert nrlat.total_rbs(20, 30) == 51
    assert nrlat.total_rbs(20, 60) == 24

    num = nrlat.Numerology(60)
    assert num.symbols_per_slot == 12, num
    assert close(num.slot_ms, 0.25)

    t1, t2 = nrlat.processing_times(1, 2)
    assert t1 > 0 and t2 > 0

    m = nrlat.mcs_from_cqi(15, "LEP")
    assert m["modulation_order"] == 8
    assert nrlat.transport_block_size(15, 1, 13) > 0
    assert nrlat.rbs_for_packet(300, 15, 13) <= nrlat.rbs_for_packet(300, 5, 13)

    grid = nrlat.SlotGrid(30, 20, "UL")
    first, _ = grid.allocate(1, 4, 13, 0.0)
    second, wait = grid.allocate(2, 4, 13, 0.0)
    assert first["slot"] == second["slot"] == 0
    assert second["first_rb"] == 4 and wait == 0.0

    q = nrlat.DciQueue(2)
    for i in range(3):
        q.enqueue(i, 0.0)
    assert q.serve(0.0) == [0, 1]
    assert q.serve(0.5) == [2]

    assert close(nrlat.reliability_bound(0.1, "harq3"), 0.9999)
    assert nrlat.sr_wait(0.0, 100, 0.5) == 0.0

    cfg = nrlat.Config(density=10, horizon_ms=1000, warmup_ms=100, max_replications=10)
    cfg.validate()
    report = nrlat.run(cfg, seed=7)
    assert report["delivered"] > 0
    assert 1.0 < report["mean_l_radio_ms"] < 2.5, report["mean_l_radio_ms"]
    check = nrlat.check_requirement(report, "LLoA")
    assert check["pass"], check

    try:
        nrlat.Config(no_such_key=1)
    except ValueError:
        pass
    else:
        raise AssertionError("unknown key accepted")

    print(f"nrlat smoke test ok: mean l_radio {report['mean_l_radio_ms']:.3f} ms, "
          f"p90 {report['p90_ms']:.3f} ms over {report['replications']} replications")
    return 0


if __name__ == "__main__":
    sys.exit(main())
