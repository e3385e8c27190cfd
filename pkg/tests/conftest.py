import pytest

from htnsim.model import model_from_arrays


def cstar():
    """Reference config: N=2, lambda=(.5,.5), mu=(1,1), h(x)=x, r=(1, .6), exponential arrivals."""
    return model_from_arrays([0.5, 0.5], [1.0, 1.0], [1.0, 0.6])


@pytest.fixture(scope="session")
def model():
    return cstar()


def raw_class(lam=0.5, mu=1.0, r=1.0, lam_hat=0.0, hazard=None, ia=None):
    return {
        "lambda": lam,
        "lambda_hat": lam_hat,
        "mu": mu,
        "r": r,
        "hazard": hazard or {"family": "linear", "params": {"a": 1.0}},
        "ia_dist": ia or {"kind": "exponential"},
    }


def raw_config(*classes):
    return {"schema_version": 1, "classes": list(classes)}
