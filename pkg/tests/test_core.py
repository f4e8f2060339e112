import pytest

from veremi_bench.core import (
    ATTACK_TYPES,
    AttackerType,
    Vec3,
    attacker_type,
    density_class,
    euclidean_distance,
    is_malicious_label,
)


@pytest.mark.parametrize("a,b,expected", [
    ((0, 0, 0), (300, 400, 0), 500.0),
    ((5, 5, 5), (5, 5, 5), 0.0),
    ((1, 2, 3), (4, 6, 3), 5.0),
])
def test_euclidean_distance(a, b, expected):
    assert euclidean_distance(Vec3(*a), Vec3(*b)) == expected


def test_distance_symmetric_and_uses_z():
    a, b = Vec3(1.5, -2.0, 7.0), Vec3(-3.0, 4.0, 1.0)
    assert euclidean_distance(a, b) == euclidean_distance(b, a)
    assert euclidean_distance(Vec3(0, 0, 0), Vec3(0, 0, 2)) == 2.0


def test_vec3_arithmetic():
    v = Vec3(1.0, 2.0) + Vec3(0.5, -1.0, 3.0)
    assert v == Vec3(1.5, 1.0, 3.0)
    assert (v - v).norm() == 0.0
    assert Vec3(3, 4).norm() == 5.0


@pytest.mark.parametrize("code,expected", [(0, False), (16, True), (2, True), (1, True),
                                           (4, True), (8, True)])
def test_malicious_label(code, expected):
    assert is_malicious_label(AttackerType(code)) is expected


def test_attacker_codes():
    assert [int(t) for t in ATTACK_TYPES] == [1, 2, 4, 8, 16]
    with pytest.raises(ValueError):
        attacker_type(3)


def test_density_bands():
    assert (density_class("low").min_vehicles, density_class("low").max_vehicles) == (35, 39)
    assert (density_class("medium").min_vehicles, density_class("medium").max_vehicles) == (97, 108)
    assert (density_class("high").min_vehicles, density_class("high").max_vehicles) == (180, 220)
    with pytest.raises(ValueError):
        density_class("extreme")
