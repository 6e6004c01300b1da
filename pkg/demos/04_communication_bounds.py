"""Per-round payloads and minimum distribution-time lower bounds.

A central server must move K model copies through one link per phase;
sharded aggregation moves (K-1)/A of a compressed model per aggregator in
parallel.  At 20 MB/s links the gap spans three orders of magnitude on a
billion-parameter model.
"""

from erisfl.commodel import (
    NetworkProfile,
    SizeModel,
    dist_time,
    payload_bits,
    rate_from_megabytes_per_s,
    upload_bits,
)

rate = rate_from_megabytes_per_s(20)


def fmt_bytes(bits):
    size = bits / 8
    for unit in ("B", "KB", "MB", "GB"):
        if size < 1000:
            return f"{size:.4g} {unit}"
        size /= 1000
    return f"{size:.4g} TB"


print("K=10 clients, n=1.3e9 parameters, 20 MB/s everywhere\n")
K, n = 10, 1_300_000_000
prof = NetworkProfile.homogeneous(rate, K)
rows = [
    SizeModel("fedavg", n),
    SizeModel("shatter", n, r=3),
    SizeModel("priprune", n, p=0.1),
    SizeModel("soteriafl", n, omega=19.0),
    SizeModel("eris", n, omega=99.0),
]
print(f"{'method':12s} {'upload/client':>14s} {'min dist. time':>15s}")
for sm in rows:
    t = dist_time(sm, K, K, prof)
    print(f"{sm.method:12s} {fmt_bytes(upload_bits(sm, K)):>14s} {t:>13.4g} s")

print("\nmore aggregators, faster rounds (n=1e8, omega=19, K=50):")
K, n = 50, 100_000_000
prof = NetworkProfile.homogeneous(rate, K)
sm = SizeModel("eris", n, omega=19.0)
for A in (1, 2, 5, 10, 25, 50):
    print(f"  A={A:2d}: {dist_time(sm, K, A, prof):8.3f} s")
print(f"  (central baseline: {dist_time(SizeModel('fedavg', n), K, K, prof):8.3f} s "
      f"for {fmt_bytes(payload_bits(SizeModel('fedavg', n)))})")
