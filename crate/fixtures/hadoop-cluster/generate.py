"""Regenerates the hadoop-cluster fixture: python3 generate.py"""
import json, os
out = os.path.dirname(os.path.abspath(__file__))

servers = [f"s{i}" for i in range(1, 9)]
nodes = [{"id": "gw0", "kind": "gateway", "labels": []},
         {"id": "core1", "kind": "core_switch", "labels": []},
         {"id": "agg1", "kind": "aggregation_switch", "labels": []},
         {"id": "agg2", "kind": "aggregation_switch", "labels": []},
         {"id": "edge1", "kind": "edge_switch", "labels": ["rack=1"]},
         {"id": "edge2", "kind": "edge_switch", "labels": ["rack=2"]}]
for i, s in enumerate(servers, 1):
    rack = 1 if i <= 4 else 2
    role = "namenode" if i in (1, 5) else "datanode"
    nodes.append({"id": s, "kind": "server", "labels": [f"rack={rack}", f"role={role}"]})
# redundant aggregation: every edge switch is dual-homed
links = [("gw0", "core1"), ("core1", "agg1"), ("core1", "agg2"),
         ("agg1", "edge1"), ("agg1", "edge2"), ("agg2", "edge1"), ("agg2", "edge2")]
links += [("edge1", s) for s in servers[:4]] + [("edge2", s) for s in servers[4:]]
json.dump({"nodes": nodes, "links": [{"a": a, "b": b} for a, b in links]},
          open(f"{out}/topology.json", "w"), indent=2)

# ---- logs
nn_libs = ["commons-collections", "hadoop-common", "protobuf-java"]
dn_libs = ["hadoop-common", "protobuf-java"]
sw_libs = ["netstack"]
main = {"s1": "hadoop-namenode", "s5": "hadoop-namenode", "core1": "ios-xr",
        "agg1": "ios-xe", "agg2": "ios-xe", "edge1": "nx-os", "edge2": "nx-os"}
libs = {"s1": nn_libs, "s5": nn_libs, "core1": sw_libs, "agg1": sw_libs, "agg2": sw_libs,
        "edge1": sw_libs, "edge2": sw_libs}
for s in servers:
    if s not in main:
        main[s] = "hadoop-datanode"
        libs[s] = dn_libs
events = []
for h in sorted(main):
    for i in range(20):
        t = 1_000_000 + i * 1000
        order = libs[h] if i % 2 == 0 else list(reversed(libs[h]))
        for k, c in enumerate(order):
            events.append((t + 10 * k, h, c))
        events.append((t + 100, h, main[h]))
    # rare maintenance noise, below default support
    events.append((1_000_000 + 5 * 1000 + 500, h, "sshd"))
events.sort()
with open(f"{out}/events.csv", "w") as f:
    f.write("timestamp_ms,node,component\n")
    for t, h, c in events:
        f.write(f"{t},{h},{c}\n")

# ---- flows
ip = {s: f"10.0.1.{i}" for i, s in enumerate(servers, 1)}
ip.update({"core1": "10.0.0.1", "agg1": "10.0.0.2", "agg2": "10.0.0.5",
           "edge1": "10.0.0.3", "edge2": "10.0.0.4", "gw0": "10.0.0.254"})
client = "203.0.113.10"
hosts = {v: k for k, v in ip.items()}
hosts[client] = "gw0"
json.dump(dict(sorted(hosts.items())), open(f"{out}/hosts.json", "w"), indent=2)

DNS = (ip["core1"], 53, "UDP")
flows = []
port = [40000]
def flow(src, dst_ip, dst_port, proto, start, end):
    port[0] += 1
    flows.append((ip.get(src, src), port[0], dst_ip, dst_port, proto, start, end))

def nn_request(nn, caller, start):
    """inbound request to a namenode: reverse DNS, then (s1 only) sync to standby"""
    end = start + 60
    flow(caller, ip[nn], 8020, "TCP", start, end)
    flow(nn, *DNS, start + 2, start + 4)
    if nn == "s1":
        flow("s1", ip["s5"], 8020, "TCP", start + 10, start + 40)
        flow("s5", *DNS, start + 12, start + 14)
    return end

t = 2_000_000
for session in range(10):
    # client metadata call to the active namenode
    flow(client, ip["s1"], 8020, "TCP", t, t + 200)
    flow("s1", *DNS, t + 5, t + 8)
    flow("s1", ip["s5"], 8020, "TCP", t + 20, t + 60)
    flow("s5", *DNS, t + 22, t + 24)
    t += 1000
    for dn in [s for s in servers if main[s] == "hadoop-datanode"]:
        # client block write: datanode resolves, reports to both namenodes
        start = t
        flow(client, ip[dn], 50010, "TCP", start, start + 400)
        flow(dn, *DNS, start + 5, start + 8)
        nn_request("s1", dn, start + 20)
        flow(dn, ip["s5"], 8020, "TCP", start + 200, start + 240)
        flow("s5", *DNS, start + 202, start + 204)
        t += 1000
with open(f"{out}/flows.csv", "w") as f:
    f.write("src_ip,src_port,dst_ip,dst_port,proto,start_ms,end_ms\n")
    for r in flows:
        f.write(",".join(map(str, r)) + "\n")

endpoints = [{"ip": ip["s1"], "port": 8020, "proto": "TCP", "host": "s1", "component": "hadoop-namenode"},
             {"ip": ip["s5"], "port": 8020, "proto": "TCP", "host": "s5", "component": "hadoop-namenode"},
             {"ip": ip["core1"], "port": 53, "proto": "UDP", "host": "core1", "component": "ios-xr"}]
for s in servers:
    if main[s] == "hadoop-datanode":
        endpoints.append({"ip": ip[s], "port": 50010, "proto": "TCP", "host": s, "component": "hadoop-datanode"})
json.dump(endpoints, open(f"{out}/endpoints.json", "w"), indent=2)

vulns = [
    ("CVE-2016-1392", 7.4, ["ios xr"], "Core switch operating system flaw (fixture)."),
    ("CVE-2015-7430", 8.4, ["hadoop namenode"], "Hadoop name node flaw (fixture)."),
    ("CVE-2015-4279", 7.8, ["ios xe"], "Aggregation switch operating system flaw (fixture)."),
    ("CVE-2015-6355", 5.0, ["nx-os"], "Edge switch operating system flaw (fixture)."),
    ("CVE-2015-1776", 6.3, ["hadoop datanode"], "Hadoop data node flaw (fixture)."),
    ("CVE-2015-6420", 7.5, ["commons collections"], "Shared collections library flaw (fixture)."),
    ("CVE-2016-2170", 9.8, ["commons collections"], "Shared collections library flaw (fixture)."),
    ("CVE-2017-0001", 6.0, ["postgresql"], "Not deployed in this cluster (fixture)."),
]
json.dump([{"id": i, "summary": s, "products": p, "base_score": b} for i, b, p, s in vulns],
          open(f"{out}/vulndb.json", "w"), indent=2)

config = {
    "topology": "topology.json",
    "events": "events.csv",
    "flows": "flows.csv",
    "hosts": "hosts.json",
    "endpoints": "endpoints.json",
    "vulndb": "vulndb.json",
    "simulate": True,
    "gateway": "gw0",
}
json.dump(config, open(f"{out}/pipeline.json", "w"), indent=2)
print(len(events), "events", len(flows), "flows")
