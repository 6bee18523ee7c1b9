"""CANDLE on 128 servers with four links each, across link speeds and fabrics.

The fat-tree gets whatever per-link speed costs no more than the direct
build; the ideal switch gets all four links' worth on one port.
"""

from cotopo.costmodel import cost_equivalent_fattree_bandwidth, cost_sweep
from cotopo.scenarios import evaluate
from cotopo.workload import load_preset

job = load_preset("candle")
print(f"{'B':>5} {'direct':>10} {'ideal':>10} {'fat-tree':>10}  B'")
for B in (10, 25, 40, 100, 200):
    t = {a: evaluate(a, job, 4, B, search=False).iteration_time_us / 1e3
         for a in ("direct_connect", "ideal_switch", "fat_tree")}
    bp = cost_equivalent_fattree_bandwidth(128, 4, B)
    print(f"{B:5d} {t['direct_connect']:10.1f} {t['ideal_switch']:10.1f} "
          f"{t['fat_tree']:10.1f}  {bp:g}")

# what each fabric costs relative to the patch-panel build
print("\ncost ratios at B = 100 Gbps, d = 4")
for r in cost_sweep([128, 256, 512, 1024], 4, 100):
    print(f"  n={r['n']:5d}  ocs/pp={r['ocs_over_patch_panel']:.2f}  "
          f"ideal/pp={r['ideal_over_patch_panel']:.2f}")
