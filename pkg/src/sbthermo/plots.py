"""Plot-script emission for a finished run directory.

The scripts are plain matplotlib programs that read the run's tables; the
package itself does not import matplotlib.
"""
from __future__ import annotations

from pathlib import Path

from .runner import TABLE_SCHEMAS, read_table

_PRELUDE = '''import numpy as np
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

HERE = __file__.rsplit("/", 1)[0] if "/" in __file__ else "."


def load(name, columns):
    data = np.loadtxt(f"{HERE}/{name}", comments="#", ndmin=2)
    return {c: data[:, i] for i, c in enumerate(columns)}

'''

_SCRIPTS = {
    "plot_ks.py": '''ks = load("ks.dat", {ks})
fig, ax = plt.subplots(figsize=(6, 4))
for key, label in [("K00_re", "Re K_00"), ("K01_re", "Re K_01"), ("K01_im", "Im K_01")]:
    ax.plot(ks["time"], ks[key], label=label)
ax.set_xlabel("t omega_c")
ax.set_ylabel("K_S elements / omega_c")
ax.legend()
fig.tight_layout()
fig.savefig(f"{{HERE}}/ks.png", dpi=150)
''',
    "plot_work_heat.py": '''th = load("thermo.dat", {thermo})
fig, ax = plt.subplots(figsize=(6, 4))
ax.plot(th["time"], th["W_S"], label="W_S")
ax.plot(th["time"], th["Q_S"], label="Q_S")
ax.plot(th["time"], th["Q_w"], "--", label="Q_w")
ax.set_xlabel("t omega_c")
ax.set_ylabel("energy / omega_c")
ax.legend()
fig.tight_layout()
fig.savefig(f"{{HERE}}/work_heat.png", dpi=150)
''',
    "plot_entropy_production.py": '''th = load("thermo.dat", {thermo})
fig, ax = plt.subplots(figsize=(6, 4))
ax.plot(th["time"], th["sigma_S"], label="sigma_S")
ax.plot(th["time"], th["sigma_w"], "--", label="sigma_w")
ax.set_xlabel("t omega_c")
ax.set_ylabel("entropy production rate / omega_c")
ax.legend()
fig.tight_layout()
fig.savefig(f"{{HERE}}/entropy_production.png", dpi=150)
''',
}


def emit_plots(directory) -> list[Path]:
    """Write the three plot scripts into ``directory`` and return their paths.

    Raises ``FileNotFoundError`` listing missing tables and ``ValueError`` if
    a table header does not match the documented column schema.
    """
    directory = Path(directory)
    needed = ("ks.dat", "thermo.dat")
    missing = [name for name in needed if not (directory / name).is_file()]
    if missing:
        raise FileNotFoundError(f"{directory}: missing tables {', '.join(missing)}")
    columns = {}
    for name in needed:
        found, _ = read_table(directory / name)
        expected = list(TABLE_SCHEMAS[name][0])
        if found != expected:
            raise ValueError(f"{directory / name}: columns {found} do not match {expected}")
        columns[name.split(".")[0]] = expected
    written = []
    for filename, body in _SCRIPTS.items():
        path = directory / filename
        path.write_text(_PRELUDE + body.format(ks=columns["ks"], thermo=columns["thermo"]))
        written.append(path)
    return written
