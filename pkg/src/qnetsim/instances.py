"""Built-in network instances.

The criss-cross configuration ships verbatim (it is the one instance with
fully published parameters).  Every other topology is structurally
faithful but its rates are placeholders chosen for stability; those
instances are smoke-test material, not quantitative targets, and say so
in their ``notes``.
"""

from __future__ import annotations

import functools
from importlib import resources

from .config import EnvConfig, config_from_mapping, loads_config

PLACEHOLDER_NOTE = (
    "placeholder rates chosen for stability (load < 1); topology faithful, "
    "rates not calibrated"
)

SENTINEL = 1e-6  # arrival rate standing in for "no external arrivals"

HOSPITAL_WARD_BEDS = [60, 55, 50, 48, 45, 45, 44, 40, 40, 35, 35]  # sums to 497
HOSPITAL_WARD_SPECIALTIES = [
    [0], [1], [2], [3], [4], [5], [6], [7], [0, 1], [2, 3], [6, 7],
]
HYPER_SERVICE = {"weights": [0.9, 0.1], "means": [0.5, 5.5]}  # scv 5.5


def criss_cross_bh() -> EnvConfig:
    text = resources.files("qnetsim").joinpath("configs/criss_cross_bh.yaml").read_text()
    return loads_config(text)


def _delta_rows(m: int, targets: dict[int, int]) -> list[list[int]]:
    rows = []
    for i in range(m):
        row = [0] * m
        row[i] = -1
        if i in targets:
            row[targets[i]] = 1
        rows.append(row)
    return rows


def _arrival_rows(m: int, live: set[int]) -> list[list[int]]:
    rows = []
    for i in range(m):
        row = [0] * m
        if i in live:
            row[i] = 1
        rows.append(row)
    return rows


def _base(name, network, mu, lam, targets, live_arrivals, h=None, **extra) -> EnvConfig:
    m = len(network[0])
    doc = {
        "name": name,
        "lam_type": "constant",
        "lam_params": {"val": lam},
        "network": network,
        "mu": mu,
        "h": h if h is not None else [1] * m,
        "init_queues": [0] * m,
        "queue_event_options": _arrival_rows(m, live_arrivals) + _delta_rows(m, targets),
        "notes": PLACEHOLDER_NOTE,
    }
    doc.update(extra)
    return config_from_mapping(doc)


def n_model() -> EnvConfig:
    # Two classes, two servers; server 2 can help with class 1.
    network = [[1, 0], [1, 1]]
    mu = [[1.0, 0.0], [1.0, 2.0]]
    return _base("n_model", network, mu, [1.17, 0.36], targets={},
                 live_arrivals={0, 1})


def reentrant(l_stages: int, hyper: bool = False) -> EnvConfig:
    """Three-pass reentrant line: class k is processed at station k mod L."""
    if l_stages < 2:
        raise ValueError("reentrant lines need at least 2 stations")
    m = 3 * l_stages
    network = [[1 if i % l_stages == j else 0 for i in range(m)] for j in range(l_stages)]
    mu = [[float(b) for b in row] for row in network]
    lam = [0.25] + [SENTINEL] * (m - 1)
    targets = {i: i + 1 for i in range(m - 1)}
    extra = {}
    name = f"reentrant_{l_stages}"
    if hyper:
        name = f"reentrant_hyper_{l_stages}"
        extra = {"service_type": "hyperexponential", "service_params": HYPER_SERVICE}
    return _base(name, network, mu, lam, targets, live_arrivals={0}, **extra)


def reentrant_2(l_stages: int, hyper: bool = False) -> EnvConfig:
    """Block variant: station s hosts classes 3s..3s+2; one stream re-enters.

    Stream A runs the slot-0 classes down the line, re-enters on slot 1 and
    runs down again; stream B runs the slot-2 classes once.
    """
    if l_stages < 2:
        raise ValueError("reentrant lines need at least 2 stations")
    m = 3 * l_stages
    network = [[1 if i // 3 == j else 0 for i in range(m)] for j in range(l_stages)]
    mu = [[float(b) for b in row] for row in network]
    lam = [SENTINEL] * m
    lam[0] = 0.25
    lam[2] = 0.25
    targets = {}
    for i in range(m):
        station, slot = divmod(i, 3)
        if station < l_stages - 1:
            targets[i] = i + 3
        elif slot == 0:
            targets[i] = 1  # last slot-0 class re-enters as the first slot-1 class
    extra = {}
    name = f"reentrant_2_{l_stages}"
    if hyper:
        name = f"reentrant_2_hyper_{l_stages}"
        extra = {"service_type": "hyperexponential", "service_params": HYPER_SERVICE}
    return _base(name, network, mu, lam, targets, live_arrivals={0, 2}, **extra)


def five_by_five() -> EnvConfig:
    """Skill-based parallel servers with a cyclic daily demand profile."""
    m = 5
    network = [[0] * m for _ in range(m)]
    mu = [[0.0] * m for _ in range(m)]
    for i in range(m):
        network[i][i] = 1
        mu[i][i] = 1.5
        network[(i + 1) % m][i] = 1
        mu[(i + 1) % m][i] = 1.0
    doc = {
        "name": "five_by_five",
        "lam_type": "time_varying",
        "lam_params": {
            "breaks": [5.0, 10.0],
            "rates": [[0.5, 0.9]] * m,
        },
        "network": network,
        "mu": mu,
        "h": [1] * m,
        "init_queues": [0] * m,
        "queue_event_options": _arrival_rows(m, set(range(m))) + _delta_rows(m, {}),
        "notes": PLACEHOLDER_NOTE,
    }
    return config_from_mapping(doc)


def input_switch() -> EnvConfig:
    """Crossbar input queues: three ports, two virtual output queues each."""
    m, n = 6, 3
    network = [[1 if i // 2 == j else 0 for i in range(m)] for j in range(n)]
    mu = [[float(b) for b in row] for row in network]
    return _base("input_switch", network, mu, [0.4] * m, targets={},
                 live_arrivals=set(range(m)))


def hospital_shape() -> EnvConfig:
    """Focused-care ward network: 8 specialties, 11 ward pools, 497 beds."""
    m, n = 8, len(HOSPITAL_WARD_BEDS)
    network = [[0] * m for _ in range(n)]
    mu = [[0.0] * m for _ in range(n)]
    for j, specs in enumerate(HOSPITAL_WARD_SPECIALTIES):
        for i in specs:
            network[j][i] = 1
            mu[j][i] = 0.25
    lam = [9.0, 8.0, 7.5, 7.0, 6.5, 6.5, 6.5, 6.0]
    return _base(
        "hospital_shape", network, mu, lam, targets={},
        live_arrivals=set(range(m)), pool_sizes=HOSPITAL_WARD_BEDS,
    )


@functools.cache
def builtin_instances() -> dict[str, EnvConfig]:
    """Registry of all shipped instances, keyed by name."""
    configs = [criss_cross_bh(), n_model(), five_by_five(), input_switch(),
               hospital_shape()]
    for l_stages in range(2, 11):
        configs.append(reentrant(l_stages))
        configs.append(reentrant(l_stages, hyper=True))
        configs.append(reentrant_2(l_stages))
        configs.append(reentrant_2(l_stages, hyper=True))
    return {cfg.name: cfg for cfg in configs}


def get_instance(name: str) -> EnvConfig:
    registry = builtin_instances()
    if name not in registry:
        known = ", ".join(sorted(registry))
        raise KeyError(f"unknown instance {name!r}; known: {known}")
    return registry[name]
