import sys

import pytest

from airtraj import ims
from airtraj.pca_routes import fit_route_model
from airtraj.synthetic import default_spec, generate_synthetic
from airtraj.trajdata import resample


@pytest.fixture(scope="session")
def corpus():
    return generate_synthetic(default_spec(), 0)


@pytest.fixture(scope="session")
def route_model(corpus):
    return fit_route_model(corpus)


@pytest.fixture(scope="session")
def knowledge_base(corpus, route_model):
    by_id = {f.flight_id: f for f in corpus}
    nominal = [resample(by_id[i]) for i in route_model.nominal_ids]
    return ims.train(ims.fragments_from(nominal, route_model.norm), route_model.norm)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
