"""Miniature 5G control plane: one OS process per network function."""
from .config import ALL_NFS, DEFAULT_WORK_UNITS, NfConfig, NfKind, default_topology, load_topology, ue_id
from .deploy import Core, CoreError, NfHandle, free_ports, start_nf
from .flows import FlowResult, Outcome, pdu_session_flow, registration_flow
from .frame import Frame, FrameError

__all__ = [
    "ALL_NFS", "DEFAULT_WORK_UNITS", "NfConfig", "NfKind", "default_topology", "load_topology", "ue_id",
    "Core", "CoreError", "NfHandle", "free_ports", "start_nf",
    "FlowResult", "Outcome", "pdu_session_flow", "registration_flow",
    "Frame", "FrameError",
]
