#!/usr/bin/env python3
"""Hand evaluation of the LoS and mirror-path golden values.

Written independently of the Rust implementation; the numbers it prints are
frozen into tests/channel_golden.rs.
"""
import math


def norm(v):
    return math.sqrt(sum(c * c for c in v))


def sub(a, b):
    return tuple(x - y for x, y in zip(a, b))


def dot(a, b):
    return sum(x * y for x, y in zip(a, b))


def lambertian_order(semi_angle_deg):
    return -math.log(2.0) / math.log(math.cos(math.radians(semi_angle_deg)))


def los(ap, ap_normal, user, user_normal, area, n):
    d = sub(user, ap)
    dist = norm(d)
    cos_a = dot(d, ap_normal) / dist
    cos_d = dot(sub(ap, user), user_normal) / dist
    return (n + 1) * area * cos_a ** n * cos_d / (2 * math.pi * dist ** 2)


def irs(ap, ap_normal, mirror, user, user_normal, area, mirror_area, rho, n):
    d_ml = sub(mirror, ap)
    d_km = sub(mirror, user)  # ray arriving at the receiver, seen from the receiver
    cos_a = dot(d_ml, ap_normal) / norm(d_ml)
    cos_b = dot(d_km, user_normal) / norm(d_km)
    total = norm(d_ml) + norm(d_km)
    return (n + 1) * rho * area * mirror_area * cos_a ** n * cos_b / (2 * math.pi * total ** 2), cos_a, cos_b, norm(d_ml), norm(d_km)


if __name__ == "__main__":
    n60 = lambertian_order(60.0)
    print(f"lambertian_order(60)  = {n60!r}")
    print(f"lambertian_order(30)  = {lambertian_order(30.0)!r}")
    print(f"lambertian_order(45)  = {lambertian_order(45.0)!r}")
    down = (0.0, 0.0, -1.0)
    up = (0.0, 0.0, 1.0)
    h = los((2.5, 2.5, 3.0), down, (2.5, 2.5, 1.0), up, 20e-6, 1.0)
    print(f"los on-axis           = {h!r}")
    g, ca, cb, dml, dkm = irs((2.5, 2.5, 3.0), down, (2.5, 0.0, 1.5), (2.5, 2.0, 1.0), up,
                              20e-6, 0.25 * 0.10, 0.95, 1.0)
    print(f"irs worked case       = {g!r}")
    print(f"  cos_alpha={ca:.5f} cos_beta={cb:.5f} D_ml={dml:.5f} D_km={dkm:.5f}")
    print(f"  beta (deg)          = {math.degrees(math.acos(cb))!r}")
    print(f"cos_angle example     = {1.5 / math.hypot(2.5, 1.5)!r}")
    # state encoding K=5, L=4: next_user=2, loads=(1,1,0,0)
    print(f"encode example        = {2 * 6 ** 4 + 1 * 6 ** 0 + 1 * 6 ** 1}")
