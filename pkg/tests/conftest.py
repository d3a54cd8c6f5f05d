import pytest

from vbx.jets import load_system
from vbx.laplace import linearize

CUBIC_DOC = {
    "n": 3,
    "f12": "u1*u2*(2*u+1)/(u*(u+1))",
    "f13": "u1*u3/(u+1)",
    "f23": "u2*u3/u",
    "box": {"u": [-2, 2, 0, -1]},
}

KT_DOC = {
    "n": 3,
    "f12": "-(u1+u2+u+1)",
    "f13": "-(u1+u3+u+1)",
    "f23": "-(u2+u3+u+1)",
}

LIOUVILLE_DOC = {"n": 2, "f12": "exp(u)"}

KT01_DOC = {
    "n": 3,
    "f12": "x1/(x2*(x2-x1))*u1 + x2/(x1*(x1-x2))*u2",
    "f13": "x1/(x3*(x3-x1))*u1 + x3/(x1*(x1-x3))*u3",
    "f23": "x2/(x3*(x3-x2))*u2 + x3/(x2*(x2-x3))*u3",
    "box": {"x1": [1, 2], "x2": [3, 4], "x3": [5, 6]},
}


@pytest.fixture(scope="session")
def cubic():
    return load_system(CUBIC_DOC)


@pytest.fixture(scope="session")
def kt():
    return load_system(KT_DOC)


@pytest.fixture(scope="session")
def liouville():
    return load_system(LIOUVILLE_DOC)


@pytest.fixture(scope="session")
def kt01():
    return load_system(KT01_DOC)


@pytest.fixture(scope="session")
def cubic_lin(cubic):
    return linearize(cubic)


@pytest.fixture(scope="session")
def kt_lin(kt):
    return linearize(kt)


@pytest.fixture(scope="session")
def liouville_lin(liouville):
    return linearize(liouville)


@pytest.fixture(scope="session")
def kt01_lin(kt01):
    return linearize(kt01)


@pytest.fixture(scope="session")
def kt_coframe(kt_lin):
    from vbx.coframe import build_coframe

    return build_coframe(kt_lin, 4)


@pytest.fixture(scope="session")
def cubic_coframe(cubic_lin):
    from vbx.coframe import build_coframe

    return build_coframe(cubic_lin, 4)
