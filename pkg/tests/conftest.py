"""Shared scenario builders for the test-suite."""

from __future__ import annotations

import random
import textwrap

import pytest

from pentestsim.harness import fixture_path
from pentestsim.network import Address, Machine, Network, Service
from pentestsim.scenario import load_scenario

# Two subnets in a chain, one machine each, one deterministic service.
TWO_MACHINE_DOC = """
subnets: [1, 1]
topology:
  - [1, 1, 0]
  - [1, 1, 1]
  - [0, 1, 1]
sensitive_machines:
  - [2, 0, 10]
services: [s]
service_exploits:
  s: [1.0, 1]
machine_configurations:
  1,0: [s]
  2,0: [s]
firewalls:
  0,1: [s]
  1,0: []
  1,2: [s]
  2,1: []
"""

# Two subnets, three machines, two deterministic services; theoretical max 8.
THREE_MACHINE_DOC = """
subnets: [1, 2]
topology:
  - [1, 1, 0]
  - [1, 1, 1]
  - [0, 1, 1]
sensitive_machines:
  - [2, 1, 10]
services: [a, b]
service_exploits:
  a: [1.0, 1]
  b: [1.0, 1]
machine_configurations:
  1,0: [a]
  2,0: [b]
  2,1: [a, b]
firewalls:
  0,1: [a]
  1,0: []
  1,2: [b]
  2,1: [a, b]
"""

# A single public sensitive machine: the optimal episode is one exploit (return 9).
ONE_MACHINE_DOC = """
subnets: [1]
topology:
  - [1, 1]
  - [1, 1]
sensitive_machines:
  - [1, 0, 10]
services: [s]
service_exploits:
  s: [1.0, 1]
machine_configurations:
  1,0: [s]
firewalls:
  0,1: [s]
  1,0: [s]
"""

# Five subnets, 11 machines: subnet 1 is public, subnets 1-3 form a triangle and
# subnets 4 and 5 hang off subnet 3.  Sensitive machines are (2,0) and (5,0).
FIVE_SUBNET_DOC = """
subnets: [3, 2, 3, 2, 1]
topology:
  - [1, 1, 0, 0, 0, 0]
  - [1, 1, 1, 1, 0, 0]
  - [0, 1, 1, 1, 0, 0]
  - [0, 1, 1, 1, 1, 1]
  - [0, 0, 0, 1, 1, 0]
  - [0, 0, 0, 1, 0, 1]
sensitive_machines:
  - [2, 0, 10]
  - [5, 0, 10]
services: [ftp, ssh, http]
service_exploits:
  ftp: [0.8, 3]
  ssh: [0.5, 2]
  http: [0.2, 1]
machine_configurations:
  1,0: [ftp, ssh, http]
  1,1: [ftp, ssh]
  1,2: [http]
  2,0: [ssh]
  2,1: [ftp, http]
  3,0: [ssh, http]
  3,1: [ssh]
  3,2: [ftp]
  4,0: [ftp]
  4,1: [ssh, ftp]
  5,0: [ftp, http]
firewalls:
  0,1: [ftp, ssh, http]
  1,0: [ftp, ssh, http]
  1,2: [ssh]
  2,1: [ftp, ssh, http]
  1,3: [ssh]
  3,1: [ftp, http]
  2,3: [ssh, http]
  3,2: [ssh]
  3,4: [ftp, ssh, http]
  4,3: [ftp, ssh, http]
  3,5: [ftp, http]
  5,3: [ftp, ssh, http]
"""


def bare_network(num_machines, num_services, public=True):
    services = [Service(f"s{j}") for j in range(num_services)]
    machines = [
        Machine(Address(1, i), 10.0 if i == 0 else 0.0, {s.id: True for s in services})
        for i in range(num_machines)
    ]
    link = 1 if public else 0
    return Network([num_machines], [[1, link], [link, 1]], machines, services,
                   {(0, 1): [s.id for s in services], (1, 0): []} if public else {})


def two_machine_variants():
    """The 2-subnet, 2-machine, 1-service deterministic network plus firewall and
    topology variants (loaded without the solvability check)."""
    base = load_scenario(TWO_MACHINE_DOC)
    yield base
    svc = base.services
    machines = base.machines
    # both subnets public, second subnet's inbound rule closed
    yield Network([1, 1], [[1, 1, 1], [1, 1, 1], [1, 1, 1]], machines, svc,
                  {(0, 1): ["s"], (1, 0): [], (0, 2): [], (2, 0): [], (1, 2): ["s"], (2, 1): ["s"]})
    # link 1 -> 2 blocked
    yield Network([1, 1], [[1, 1, 0], [1, 1, 1], [0, 1, 1]], machines, svc,
                  {(0, 1): ["s"], (1, 0): [], (1, 2): [], (2, 1): []})
    # first machine runs nothing
    m0 = Machine(Address(1, 0), 0.0, {"s": False})
    yield Network([1, 1], base.topology, [m0, machines[1]], svc, dict(base.firewall))


def make_doc(text: str) -> str:
    return textwrap.dedent(text)


@pytest.fixture
def two_machine_net():
    return load_scenario(TWO_MACHINE_DOC)


@pytest.fixture
def three_machine_net():
    return load_scenario(THREE_MACHINE_DOC)


@pytest.fixture
def one_machine_net():
    return load_scenario(ONE_MACHINE_DOC)


@pytest.fixture
def five_subnet_net():
    return load_scenario(FIVE_SUBNET_DOC)


@pytest.fixture
def standard_net():
    return load_scenario(fixture_path("standard").read_text())


@pytest.fixture
def rng():
    return random.Random(12345)
