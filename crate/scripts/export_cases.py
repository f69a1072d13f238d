"""Write the bundled Matpower case files from the PYPOWER copies of the
standard test cases (case14, case30, case118)."""

import sys
from pathlib import Path

from pypower.api import case14, case30, case118


def fmt_row(row):
    return "\t" + "\t".join(repr(float(v)).rstrip("0").rstrip(".") if float(v) != int(v) else str(int(v)) for v in row) + ";"


def write_case(name, ppc, out):
    lines = [
        f"function mpc = {name}",
        f"%{name.upper()}  Power flow data, exported from PYPOWER.",
        "",
        "mpc.version = '2';",
        "",
        "%% system MVA base",
        f"mpc.baseMVA = {ppc['baseMVA']:g};",
        "",
        "%% bus data",
        "%\tbus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin",
        "mpc.bus = [",
    ]
    lines += [fmt_row(r) for r in ppc["bus"][:, :13]]
    lines += [
        "];",
        "",
        "%% generator data",
        "%\tbus\tPg\tQg\tQmax\tQmin\tVg\tmBase\tstatus\tPmax\tPmin",
        "mpc.gen = [",
    ]
    lines += [fmt_row(r) for r in ppc["gen"][:, :10]]
    lines += [
        "];",
        "",
        "%% branch data",
        "%\tfbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\tangle\tstatus\tangmin\tangmax",
        "mpc.branch = [",
    ]
    lines += [fmt_row(r) for r in ppc["branch"][:, :13]]
    lines += ["];", ""]
    (out / f"{name}.m").write_text("\n".join(lines))


if __name__ == "__main__":
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("crates/core/data")
    for name, f in (("case14", case14), ("case30", case30), ("case118", case118)):
        write_case(name, f(), out)
