"""TLS 1.3 channel with DID-bearing certificates."""

from .session import ClientConfig, DidLinkServer, Role, SecureSession, ServerConfig, accept, connect
from .verify import PeerAuthMode, PeerAuthResult, ResolutionMode, verify_peer
