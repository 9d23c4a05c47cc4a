"""DG simulation of LWR traffic flow on road networks."""

from .fundamental import (DiagramKind, DiagramParams, DomainError, FundamentalDiagram,
                          critical_density, q_e, q_e_prime, v_e)
from .network import (FluxStrategy, Inflow, Junction, JunctionEnd, LightSchedule, Network,
                      Outflow, Phase, Road, effective_matrix, validate)
from .simulation import BoundaryDatum, NumericsConfig, SimulationAbort, Simulator, run
from .scenario import Scenario, load_scenario, parse_scenario

__version__ = "0.1.0"
