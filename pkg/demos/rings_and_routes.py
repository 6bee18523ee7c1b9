"""Regular rings, geometric stride picks and chord routing on a 16-server group."""

from cotopo.permutations import select_permutations, totient_perms
from cotopo.routing import coin_change_routes, expand_route
from cotopo.topology import Topology, diameter, mean_path_length

# every stride co-prime with the group size orders the servers into one ring
ps = totient_perms(12, 12)
print("strides for 12 servers:", list(ps.strides))

# with four ports to spare, keep strides spaced roughly geometrically
ps16 = totient_perms(16, 16)
trace = []
chosen = select_permutations(16, 4, ps16, trace)
print("chosen strides:", chosen)
for target, got in trace:
    print(f"  wanted ~{target:g}, took {got}")

# the union of the chosen rings is a circulant graph
topo = Topology.circulant(16, chosen)
print("diameter", diameter(topo), "mean hops", round(mean_path_length(topo), 3))

# routes are sums of strides: fewest coins reaching each offset
routes = coin_change_routes(16, chosen)
for offset in (2, 7, 14):
    print(f"offset {offset:2d}: strides {routes[offset]} ->",
          expand_route(0, offset, routes[offset], 16))
