"""A miniature service-oriented runtime.

Services are behaviours (activity trees) run by engines that create,
route, and execute sessions identified by correlation sets, deployed
behind ports speaking a framed JSON protocol, and composed in containers
by embedding, redirecting, and aggregation.
"""

from .behaviour import BehaviourDef, parse_behaviour
from .composition import (
    Container, ServiceDef, load_container, merge_interfaces, parse_service,
    serialize_service,
)
from .correlation import (
    CorrelationConfig, CorrelationFunction, Message, bind_correlation,
    correlates, select_session,
)
from .engine import Engine, RoutingOutcome
from .errors import Fault, OrchestraError
from .interpreter import Completion, SessionContext, run_session
from .state import EMPTY, State, UNDEFINED

__all__ = [
    "BehaviourDef", "Completion", "Container", "CorrelationConfig",
    "CorrelationFunction", "EMPTY", "Engine", "Fault", "Message",
    "OrchestraError", "RoutingOutcome", "ServiceDef", "SessionContext",
    "State", "UNDEFINED", "bind_correlation", "correlates", "load_container",
    "merge_interfaces", "parse_behaviour", "parse_service", "run_session",
    "select_session", "serialize_service",
]
