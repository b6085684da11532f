"""dappbench: a desk-scale closed-loop latency bench for O-RAN dApps.

The loop under test is the real-time dApp cycle: collect an I/Q slot
(E3 indication or direct eCPRI capture), process it, create a control,
deliver it, all against a 10 ms class deadline. Transports stand in for
the deployment scenarios (bare-metal, co-located and separated
containers, smart-NIC datapath), and a simulated RAN provides the slots
and applies the controls.
"""

import os as _os

# Workloads are single-threaded by design; capping the BLAS pools keeps
# CPU accounting honest in the contention experiments. Must happen before
# NumPy loads its backend.
for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    _os.environ.setdefault(_var, "1")

from .iq import FixedPointIQ, IQBuffer, OutOfRangeError, energy, from_fixed_point, to_fixed_point
from .workloads import (
    ChannelChange,
    ChannelHint,
    ControlDecision,
    DappKind,
    EbsConfig,
    FcnModel,
    FftConfig,
    Verdict,
    WorkloadParams,
    XceptionLiteModel,
    ebs_decide,
    fcn_infer,
    fft_decide,
    fft_transform,
    preprocess,
    xception_lite_infer,
)
from .runtime import (
    InstanceSpec,
    PhaseLatencyRecord,
    ResourceSample,
    SimSettings,
    WorkerTask,
    run_closed_loop,
    sample_resources,
    spawn_instances,
)
from .scenario import Scenario, load_scenario, parse_scenario, serialize_scenario
from .stats import SummaryStats, cdf_points, compare, summarize
from .experiment import run_experiment

__version__ = "0.1.0"

__all__ = [
    "FixedPointIQ", "IQBuffer", "OutOfRangeError", "energy", "from_fixed_point", "to_fixed_point",
    "ChannelChange", "ChannelHint", "ControlDecision", "DappKind", "EbsConfig", "FcnModel",
    "FftConfig", "Verdict", "WorkloadParams", "XceptionLiteModel", "ebs_decide", "fcn_infer",
    "fft_decide", "fft_transform", "preprocess", "xception_lite_infer",
    "InstanceSpec", "PhaseLatencyRecord", "ResourceSample", "SimSettings", "WorkerTask",
    "run_closed_loop", "sample_resources", "spawn_instances",
    "Scenario", "load_scenario", "parse_scenario", "serialize_scenario",
    "SummaryStats", "cdf_points", "compare", "summarize", "run_experiment",
]
