from .base import MarginalReport, OracleModel
from .io import dump_oracle, load_oracle
from .markov import MarkovOracle, markov_conditionals
from .profiles import ProfileOracle, build_profile_oracle
from .remote import PROTOCOL_HEADER, PROTOCOL_VERSION, RemoteOracle
from .tabular import TabularJointOracle
from .template import (
    Slot,
    TemplateOracle,
    build_template_oracle,
    filler,
    fixed,
    tied,
)

__all__ = [
    "MarginalReport",
    "OracleModel",
    "TabularJointOracle",
    "MarkovOracle",
    "markov_conditionals",
    "ProfileOracle",
    "build_profile_oracle",
    "TemplateOracle",
    "build_template_oracle",
    "Slot",
    "fixed",
    "tied",
    "filler",
    "RemoteOracle",
    "PROTOCOL_VERSION",
    "PROTOCOL_HEADER",
    "load_oracle",
    "dump_oracle",
]
