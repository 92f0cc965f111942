import sys

import numpy as np
import pytest

from sinklab.model import Constant, ExpDecay, InverseTime, Linear, ModelParams

# reference parameter set used across the suite
REF_PARAMS = ModelParams(D=1.0, omega=1.0, sigma=-1)
REF_X0 = 0.5
REF_LAWS = {
    "constant": Constant(0.5),
    "linear": Linear(0.5),
    "inverse": InverseTime(0.3, t_on=0.01),
    "expdecay": ExpDecay(0.5, 1.0),
}

# Volterra oracle (product integration, h = 2e-3 on [0, 25]) at the reference
# parameters: P(0,t) at t = 0.5, 1, 2 and its numeric Laplace transform at s = 1, 2.
VOLTERRA_ORIGIN = {
    "constant": ([0.3989423871870737, 0.26500355651355273, 0.1505687218160436],
                 [0.3283299773139375, 0.2021767813506443]),
    "linear": ([0.548571720859732, 0.3532953928960413, 0.13247730420301151],
               [0.4059913687245646, 0.25320319519403156]),
    "inverse": ([0.24474748265013782, 0.2031326127963844, 0.1686017282875783],
                [0.2169252459383909, 0.11739874929338945]),
    "expdecay": ([0.45115923844841643, 0.36357140790074494, 0.3137301351745165],
                 [0.41138384313528226, 0.22566979865578204]),
}


@pytest.fixture
def ref_params():
    return REF_PARAMS


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
