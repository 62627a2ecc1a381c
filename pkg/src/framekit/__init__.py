"""framekit: an embeddable, network-distributable knowledge-based-system toolkit.

Frame knowledge representation with production rules, backward/forward
chaining with pluggable conflict resolution, a textual knowledge language,
XML interchange, a wire protocol for distributed frame hierarchies, tabular
data sources, an HTTP consultation service and a CLI.

Quick start:

    >>> import framekit
    >>> world = framekit.load_world('frame A { slot x: integer default 3; }')
    >>> session = framekit.InferenceSession(world)
    >>> session.infer("A", "x").value.payload
    3
"""

from .engine import (
    ConflictResolver,
    InferenceSession,
    Outcome,
    Question,
    TraceEvent,
    register_resolver,
    rule_complexity,
    select_actions,
)
from .errors import FramekitError
from .fmdl import Diagnostic, SourceSpan, format_world, parse, tokenize, try_parse, validate
from .interchange import (
    merge_rules,
    snapshot_load,
    snapshot_save,
    world_from_xml,
    world_to_xml,
)
from .model import (
    Action,
    FrameDef,
    FrameWorld,
    Rule,
    SlotDef,
    WorldBuild,
    add_frame,
    ancestry,
    check_constraints,
    freeze_world,
    slot_lookup,
)
from .tables import ExternalObjectAdapter, bind_table, generate_frame, query_value
from .values import UNKNOWN, Kind, Value, make_value

__version__ = "0.1.0"


def load_world(source: str, file: str = "<fmdl>", base_dir=None) -> FrameWorld:
    """Parse source text (or an interchange XML document) into a frozen world."""
    if source.lstrip().startswith("<"):
        world = world_from_xml(source)
    else:
        world = freeze_world(parse(source, file))
    world.base_dir = base_dir
    return world
