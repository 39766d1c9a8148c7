"""Service composition for UAV swarm connectivity.

Drones serve ground devices and relay traffic to gateway drones. This package
composes per-drone services into end-to-end forwarding plans (direct,
clustered, parallel), scores them with a two-class priority M/G/1 model,
repairs unstable or slow plans, and checks the analytics against a
discrete-event simulator.
"""

__version__ = "0.1.0"
