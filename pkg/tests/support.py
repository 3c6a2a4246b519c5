"""Shared helpers for the test suite: instance generators and file builders."""

import json

import numpy as np

from ehrelay import ChannelParams, HarvestEvent, HarvestProfile


def make_profile(times, e1, e2, horizon):
    events = tuple(HarvestEvent(t, a, b) for t, a, b in zip(times, e1, e2))
    return HarvestProfile(events=events, horizon=float(horizon))


def random_instance(rng, k, a_low_frac=0.15):
    """General random instance: K+1 events, first-event energies positive,
    later events occasionally zero for one node, b = 1."""
    if rng.random() < a_low_frac:
        a = rng.uniform(0.5, 0.999)
    else:
        a = rng.uniform(1.05, 2.8)
    ch = ChannelParams(a=a, b=1.0, noise=rng.uniform(0.5, 2.0))
    tinc = rng.uniform(0.5, 3.0, size=k + 1)
    times = np.concatenate([[0.0], np.cumsum(tinc[:-1])]) if k > 0 else np.array([0.0])
    horizon = float(times[-1] + rng.uniform(0.5, 3.0))
    e1 = rng.uniform(0.5, 8.0, size=k + 1)
    e2 = rng.uniform(0.5, 8.0, size=k + 1)
    for i in range(1, k + 1):
        if rng.random() < 0.25:
            e1[i] = 0.0
        if rng.random() < 0.25:
            e2[i] = 0.0
    return ch, make_profile(times, e1, e2, horizon)


def random_proportional_instance(rng, k, gamma):
    a = rng.uniform(1.05, 2.8)
    ch = ChannelParams(a=a, b=1.0, noise=rng.uniform(0.5, 2.0))
    tinc = rng.uniform(0.5, 3.0, size=k + 1)
    times = np.concatenate([[0.0], np.cumsum(tinc[:-1])]) if k > 0 else np.array([0.0])
    horizon = float(times[-1] + rng.uniform(0.5, 3.0))
    e1 = rng.uniform(0.5, 8.0, size=k + 1)
    if k > 0 and rng.random() < 0.2:
        e1[int(rng.integers(1, k + 1))] = 0.0
    e2 = gamma * e1
    return ch, make_profile(times, e1, e2, horizon)


def worked_proportional():
    """The staircase worked instance: t={0,2,4}, T=6, E1=[2,8,2], gamma=0.5."""
    ch = ChannelParams(a=2.0, b=1.0, noise=1.0)
    prof = make_profile([0.0, 2.0, 4.0], [2.0, 8.0, 2.0], [1.0, 4.0, 1.0], 6.0)
    return ch, prof


def write_problem(path, ch, profile):
    data = {
        "channel": {"a": ch.a, "b": ch.b, "noise": ch.noise},
        "horizon": profile.horizon,
        "events": [{"t": ev.t, "e_source": ev.e_source, "e_relay": ev.e_relay}
                   for ev in profile.events],
    }
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2)
    return str(path)
