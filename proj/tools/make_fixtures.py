#!/usr/bin/env python3
"""Regenerates the JSON fixtures under fixtures/ (deterministic)."""
import json
import pathlib
import random

OUT = pathlib.Path(__file__).resolve().parent.parent / "fixtures"
KJAM = 0.7  # veh/m, multi-lane; keeps diagram capacity above the scenario capacities


def link(a, b, length, vf, w, k=KJAM):
    return {"id": f"{a}-{b}", "from": a, "to": b, "length_m": length, "vf_mps": vf, "w_mps": w, "kjam_veh_per_m": k}


def demand(steps, seed):
    half = steps // 2
    return {"segments": [
        {"steps": half, "uniform": [4000, 4100], "seed": seed},
        {"steps": steps - half, "uniform": [4000, 5000], "seed": seed + 1},
    ]}


def capacity(mean, seed, jitter=0.02):
    return {"uniform": [1 - jitter, 1 + jitter], "seed": seed, "scale": mean}


def scenario(net, steps, means, stochastic, seed=100):
    """means: link id -> veh/s; stochastic: link id -> per-realization factors."""
    reals = []
    for r in range(3):
        cap = {}
        for i, l in enumerate(net["links"]):
            m = means[l["id"]] * stochastic.get(l["id"], [1, 1, 1])[r]
            cap[l["id"]] = capacity(m, seed + 97 * r + i)
        reals.append({"prob": 1 / 3, "demand": demand(steps, seed + 1000 + 10 * r), "capacity": cap})
    return {"dt_s": 1.0, "steps": steps, "realizations": reals}


def write(name, doc):
    (OUT / name).write_text(json.dumps(doc, indent=1) + "\n")


def twolinks():
    net = {"nodes": [1, 2, 3], "origin": 1, "destination": 3,
           "links": [link(1, 2, 860, 10, 5), link(2, 3, 1220, 20, 10)]}
    means = {"1-2": 2.0, "2-3": 1.0}
    return net, scenario(net, 600, means, {"2-3": [1, 0.5, 0.25]})


def diamond():
    spec = [(1, 2, 860, 10, 5), (2, 3, 1220, 15, 10), (2, 4, 1360, 20, 10), (3, 5, 1220, 10, 5),
            (4, 5, 610, 15, 7.5), (5, 6, 610, 20, 10), (6, 7, 610, 20, 10)]
    net = {"nodes": list(range(1, 8)), "origin": 1, "destination": 7, "links": [link(*s) for s in spec]}
    means = {l["id"]: 2.0 for l in net["links"]}
    means["2-3"] = 1.0
    means["4-5"] = 0.7
    return net, scenario(net, 600, means, {"2-3": [1, 0.5, 0.25]})


def sf_links(offset, rng):
    """Ladder variant: origin, diverge, two rails of 11 nodes joined by 10 rungs, merge, destination."""
    o, s = 1 + offset, 2 + offset
    top = [3 + offset + i for i in range(11)]
    bot = [14 + offset + i for i in range(11)]
    e, d = 25 + offset, 26 + offset

    def rl(a, b, lo, hi):
        return link(a, b, rng.choice(range(lo, hi + 1, 15)), 15, 7.5)

    links = [rl(o, s, 150, 150), rl(s, top[0], 150, 300), rl(s, bot[0], 150, 300)]
    for rail in (top, bot):
        links += [rl(rail[i], rail[i + 1], 150, 300) for i in range(10)]
    for i in range(1, 11):
        a, b = (top[i], bot[i]) if i % 2 else (bot[i], top[i])
        links.append(rl(a, b, 150, 225))
    links += [rl(top[10], e, 150, 300), rl(bot[10], e, 150, 300), rl(e, d, 150, 150)]
    return list(range(o, d + 1)), links


def sf_scenario(net, steps, seed):
    rng = random.Random(seed)
    means, stochastic = {}, {}
    for l in net["links"]:
        means[l["id"]] = rng.choice([1.6, 1.8, 2.0, 2.2])
    rails = [l["id"] for l in net["links"] if l["from"] != net["origin"] and l["to"] != net["destination"]]
    for lid in rng.sample(rails, 4):
        stochastic[lid] = [1, 0.5, 0.25]
    return scenario(net, steps, means, stochastic, seed)


def sf(steps=200):
    nodes, links = sf_links(0, random.Random(7))
    net = {"nodes": nodes, "origin": 1, "destination": 26, "links": links}
    return net, sf_scenario(net, steps, 300)


def twosf(steps=200):
    n1, l1 = sf_links(0, random.Random(7))
    n2, l2 = sf_links(26, random.Random(8))
    net = {"nodes": n1 + n2, "origin": 1, "destination": 52,
           "links": l1 + [link(26, 27, 150, 15, 7.5)] + l2}
    return net, sf_scenario(net, steps, 400)


def table1():
    times = [
        {"a": [1, 4, 6, 5], "b": [3, 4, 3, 9], "c": [1, 5, 7, 2]},
        {"a": [2, 2, 3, 8], "b": [1, 3, 6, 2], "c": [5, 2, 4, 1]},
    ]
    net = {"nodes": [1, 2, 3], "origin": 1, "destination": 3,
           "links": [{"id": "a", "from": 1, "to": 2}, {"id": "b", "from": 2, "to": 3}, {"id": "c", "from": 2, "to": 3}]}
    return {"network": net, "dt_s": 1.0, "steps": 4,
            "realizations": [{"prob": 0.5, "times": t} for t in times]}


def main():
    OUT.mkdir(exist_ok=True)
    for name, (net, sc) in {"twolinks": twolinks(), "diamond": diamond(), "sf": sf(), "twosf": twosf()}.items():
        write(f"{name}.network.json", net)
        write(f"{name}.scenario.json", sc)
    write("sf600.scenario.json", sf(600)[1])
    write("twosf600.scenario.json", twosf(600)[1])
    write("table1.ttd.json", table1())


if __name__ == "__main__":
    main()
