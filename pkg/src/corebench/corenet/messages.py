"""Message types of the structural registration and PDU-session flows."""
from __future__ import annotations

# registration: UE -> AMF -> AUSF -> UDM -> UDR and back
REGISTRATION_REQUEST = "REGISTRATION_REQUEST"
REGISTRATION_ACCEPT = "REGISTRATION_ACCEPT"
REGISTRATION_REJECT = "REGISTRATION_REJECT"
AUTH_REQUEST = "AUTH_REQUEST"
AUTH_REPLY = "AUTH_REPLY"
AUTH_REJECT = "AUTH_REJECT"
AUTH_DATA_GET = "AUTH_DATA_GET"
AUTH_DATA_REPLY = "AUTH_DATA_REPLY"
AUTH_DATA_REJECT = "AUTH_DATA_REJECT"
SUBSCRIBER_GET = "SUBSCRIBER_GET"
SUBSCRIBER_REPLY = "SUBSCRIBER_REPLY"
SUBSCRIBER_NOT_FOUND = "SUBSCRIBER_NOT_FOUND"

# PDU session: UE -> AMF -> SMF -> {UDM, PCF, UPF}
PDU_SESSION_REQUEST = "PDU_SESSION_REQUEST"
PDU_SESSION_ACCEPT = "PDU_SESSION_ACCEPT"
PDU_SESSION_REJECT = "PDU_SESSION_REJECT"
CREATE_SM_CONTEXT = "CREATE_SM_CONTEXT"
CREATE_SM_CONTEXT_REPLY = "CREATE_SM_CONTEXT_REPLY"
CREATE_SM_CONTEXT_REJECT = "CREATE_SM_CONTEXT_REJECT"
SM_DATA_GET = "SM_DATA_GET"
SM_DATA_REPLY = "SM_DATA_REPLY"
POLICY_GET = "POLICY_GET"
POLICY_REPLY = "POLICY_REPLY"
TUNNEL_SETUP = "TUNNEL_SETUP"
TUNNEL_SETUP_REPLY = "TUNNEL_SETUP_REPLY"

# services of NFs that sit off the measured critical path
SLICE_SELECT = "SLICE_SELECT"
SLICE_SELECT_REPLY = "SLICE_SELECT_REPLY"
CHARGING_DATA = "CHARGING_DATA"
CHARGING_DATA_REPLY = "CHARGING_DATA_REPLY"

# NRF
NF_REGISTER = "NF_REGISTER"
NF_REGISTER_ACK = "NF_REGISTER_ACK"
NF_DISCOVER = "NF_DISCOVER"
NF_DISCOVER_REPLY = "NF_DISCOVER_REPLY"

# control plane of the harness itself
PING = "PING"
PONG = "PONG"
STATS = "STATS"
STATS_REPLY = "STATS_REPLY"
STRESS_START = "STRESS_START"
STRESS_STOP = "STRESS_STOP"
STRESS_ACK = "STRESS_ACK"
CAPTURE_START = "CAPTURE_START"
CAPTURE_STOP = "CAPTURE_STOP"
CAPTURE_ACK = "CAPTURE_ACK"
PROVISION = "PROVISION"
PROVISION_ACK = "PROVISION_ACK"
SHUTDOWN = "SHUTDOWN"
SHUTDOWN_ACK = "SHUTDOWN_ACK"

CONTROL_TYPES = frozenset({
    NF_REGISTER, NF_DISCOVER, PING, STATS, STRESS_START, STRESS_STOP,
    CAPTURE_START, CAPTURE_STOP, PROVISION, SHUTDOWN,
})

# who sends each service request; used to label captured frames
REQUEST_SOURCE = {
    REGISTRATION_REQUEST: "UE",
    PDU_SESSION_REQUEST: "UE",
    AUTH_REQUEST: "AMF",
    CREATE_SM_CONTEXT: "AMF",
    SLICE_SELECT: "AMF",
    AUTH_DATA_GET: "AUSF",
    SUBSCRIBER_GET: "UDM",
    SM_DATA_GET: "SMF",
    POLICY_GET: "SMF",
    TUNNEL_SETUP: "SMF",
    CHARGING_DATA: "SMF",
}
