"""Software-only OT security testbed.

A small virtual factory (four production cells), its PLCs, and the Modbus/TCP
traffic between them, all simulated on a discrete tick clock over an emulated
switched network.  Attack tooling (SYN flood, write forgery, in-path frame
rewriting, TCP reconnaissance) runs against the same fabric, every frame is
captured pcap-style, and a k-means traffic monitor scores the capture for
anomalies.  The orchestrator ties the pieces into reproducible scenarios.
"""

__version__ = "0.1.0"

__all__ = ["__version__"]
