import pytest

from fracmap import FractionalParams


def test_derived_quantities():
    pr = FractionalParams(s=0.5, p=2.0, n=2, N=3)
    assert pr.sp == 1.0
    assert pr.sp_minus_n == -1.0


@pytest.mark.parametrize("kwargs", [
    dict(s=0.0, p=2.0, n=1, N=2),
    dict(s=1.0, p=2.0, n=1, N=2),
    dict(s=0.5, p=1.0, n=1, N=2),
    dict(s=0.5, p=2.0, n=0, N=2),
    dict(s=0.5, p=2.0, n=4, N=2),
    dict(s=0.5, p=2.0, n=1, N=1),
])
def test_rejects_out_of_range(kwargs):
    with pytest.raises(ValueError):
        FractionalParams(**kwargs)


def test_operator_range_guard():
    FractionalParams(s=0.5, p=2.0, n=1, N=2).require_operator_range()
    with pytest.raises(ValueError):
        FractionalParams(s=0.5, p=1.5, n=1, N=2).require_operator_range()


def test_frozen():
    pr = FractionalParams(s=0.5, p=2.0, n=1, N=2)
    with pytest.raises(Exception):
        pr.s = 0.7
