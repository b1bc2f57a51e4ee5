"""Unit conversions shared by every module.

Public interfaces take dBm, dBm/Hz, kHz, ms and km; computations run in
watts, W/Hz, Hz and seconds.
"""

import numpy as np


def db_to_linear(db):
    return np.power(10.0, np.asarray(db, dtype=float) / 10.0)


def linear_to_db(x):
    return 10.0 * np.log10(np.asarray(x, dtype=float))


def dbm_to_watt(dbm):
    return db_to_linear(dbm) * 1e-3


def khz_to_hz(khz):
    return np.asarray(khz, dtype=float) * 1e3


def hz_to_khz(hz):
    return np.asarray(hz, dtype=float) * 1e-3


def ms_to_s(ms):
    return np.asarray(ms, dtype=float) * 1e-3


def s_to_ms(s):
    return np.asarray(s, dtype=float) * 1e3
