import pytest

from camvitals.geometry import Rect, validate_rect


def test_rect_derived_edges():
    r = Rect(3, 4, 10, 20)
    assert r.right == 13
    assert r.bottom == 24
    assert r.area == 200


def test_inside_checks_all_edges():
    assert Rect(0, 0, 4, 4).inside(4, 4)
    assert not Rect(1, 0, 4, 4).inside(4, 4)
    assert not Rect(0, 1, 4, 4).inside(4, 4)
    assert not Rect(-1, 0, 4, 4).inside(10, 10)


def test_validate_rect_accepts_and_returns():
    r = Rect(2, 2, 3, 3)
    assert validate_rect(r, 10, 10, "roi") is r


@pytest.mark.parametrize("r", [
    Rect(0, 0, 0, 5),
    Rect(0, 0, 5, 0),
    Rect(8, 0, 5, 5),
    Rect(0, 8, 5, 5),
    Rect(-1, 0, 5, 5),
])
def test_validate_rect_rejects_degenerate_or_outside(r):
    with pytest.raises(ValueError):
        validate_rect(r, 10, 10, "roi")
