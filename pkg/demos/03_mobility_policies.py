"""Community mobility trace and the three placement policies.

Run: python3 demos/03_mobility_policies.py
"""

from softcache.catalog import (make_popularity_proportional_U, make_random_U, make_zipf_catalog,
                               proportional_L_prime)
from softcache.contact import (MobilityConfig, estimate_lambda, generate_tvcm_trace,
                               home_time_fraction, tvcm_paths)
from softcache.placement import AccessModel
from softcache.protocol import compare_modes

# 60 users in a 1 km square with three home communities and 25 cells of
# 100 m range, over one day.
config = MobilityConfig()
trace = generate_tvcm_trace(config)
_, paths = tvcm_paths(config)
lam = estimate_lambda(trace)
print(f"{len(trace) // 2} contacts; time at home {home_time_fraction(paths, config, 5.0):.3f}; "
      f"mean meeting rate {lam:.3e}/s (one meeting per cell every {1 / lam / 60:.0f} min)")

cat = make_zipf_catalog(1000, 2.0, seed=1)
model = AccessModel(lam, 300.0)
graphs = {
    'random': make_random_U(cat, 5, seed=3),
    'proportional': make_popularity_proportional_U(cat, proportional_L_prime(cat, 5), seed=3),
}
for name, U in graphs.items():
    cmp_ = compare_modes(trace, cat, U, model, M=25, C=5, ttl=300.0, seeds=range(4),
                         modes=('none', 'sch1'), policies=('base', 'sch1'))
    print(f"\n{name} relation graph, 5 related contents per content, 5 slots per cell")
    for r in sorted(cmp_.summary, key=lambda r: (r['policy'], r['mode'])):
        print(f"  placement {r['policy']:4s} access {r['mode']:4s} hit ratio "
              f"{r['hit_ratio']:.4f} +/- {r['hit_ratio_se']:.4f}")
