"""
DID Link: TLS 1.3 authentication with DID-bearing self-issued certificates,
a post-handshake identification sub-layer for SD-JWT credentials, a simulated
verifiable data registry and a benchmark harness.
"""

__version__ = "1.0.0"
