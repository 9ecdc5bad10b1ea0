"""Dynamic dataflow runtime: actors on OS threads joined by blocking FIFO channels."""
from .channel import (
    Channel,
    ChannelError,
    EndOfStream,
    RegionHandle,
    capacity_bytes,
    capacity_tokens,
    memory_bytes,
    read_region,
    write_region,
)
from .model import (
    Actor,
    ActorKind,
    ActorSpec,
    ChannelSpec,
    NetworkError,
    NetworkGraph,
    PortSpec,
    RateError,
    Violation,
    build_network,
    control_dispatch,
    controlport,
    inport,
    outport,
    validate,
)
from .runtime import ActorFault, ExecutionConfig, RunStats, Runtime, bulk_kernel_adapter, run, tokenwise

__version__ = "0.1.0"
