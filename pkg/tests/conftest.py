import pytest

from omada import backends, data, manifold


@pytest.fixture(params=backends.available_backends())
def backend(request):
    """Run a test once per available kernel backend."""
    with backends.use_backend(request.param):
        yield request.param


@pytest.fixture(scope="session")
def toy_model():
    """Trained manifold model on the separable reference mixture.

    Trained once per session; tests must treat it as read-only.
    """
    spec = data.reference_mixture_spec(seed=0)
    x, y, meta = data.gen_dataset(spec)
    gm, lc, history = manifold.train_generative(x, y, manifold.GenTrainConfig(seed=0))
    return {"spec": spec, "data": x, "labels": y, "meta": meta,
            "gm": gm, "lc": lc, "history": history}
