"""Shipped run presets.

``wristband-1d-spin`` is the strip with constant opposite wall pulls and a
closed-form stationary law to compare against; the two 2-d spin presets
reproduce the qualitative concentration patterns (mass near one point, mass
near the coordinate axes).  ``spindrift dump-preset NAME`` prints the text.
"""

from .errors import ConfigError

PRESETS = {
    "wristband-1d-spin": """\
# Periodic strip, scalar spin pulled to +1 at the top wall and -1 at the
# bottom; constant tangential drift on the top wall.  The (y, s) histogram
# is compared against the closed-form stationary density.
[domain]
type = wristband
period = 6.283185307179586
half_width = 1.0

[fields]
g_top = const:1.0
g_bottom = const:-1.0
alpha = 1.0
tau = const:1.0
tau_walls = top

[sim]
dt = 1e-4
horizon = 1e4
seed = 1
chains = 8
burn_in = 1e3
record_stride = 1

[analysis]
histogram = y s1
bins = 20 20
eps_grid = 0.05 0.1 0.2 0.4
compare_density = on
density_top = 1.0
density_bottom = 1.0
""",
    "point-concentration": """\
# 2-d spin: the top wall pulls toward (1/2, 0) everywhere, the bottom wall
# toward half the unit direction of the wall coordinate; the spin marginal
# piles up near the point (1/2, 0).
[domain]
type = wristband

[fields]
g_top = const:0.5 const:0.0
g_bottom = cos:0.5 sin:0.5
alpha = 1.0
tau = parabolic:1.0
tau_walls = both

[sim]
dt = 1e-4
horizon = 4e3
seed = 7
chains = 1
burn_in = 4e2
record_stride = 100

[analysis]
histogram = s1 s2
bins = 48 48
range1 = -0.6 0.6
range2 = -0.6 0.6
""",
    "axes-concentration": """\
# 2-d spin: the top wall changes only the second spin component, the bottom
# wall only the first; the spin marginal concentrates near the axes.
[domain]
type = wristband

[fields]
g_top = const:0.0 sin:1.0
g_bottom = cos:1.0 const:0.0
alpha = 1.0
tau = parabolic:1.0
tau_walls = both

[sim]
dt = 1e-4
horizon = 4e3
seed = 7
chains = 1
burn_in = 4e2
record_stride = 100

[analysis]
histogram = s1 s2
bins = 48 48
range1 = -1.1 1.1
range2 = -1.1 1.1
""",
}


def preset_text(name: str) -> str:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(
            f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}"
        ) from None
