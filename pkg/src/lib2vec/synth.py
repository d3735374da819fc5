"""Synthetic Liberty libraries for demos, tests and CI.

The generated tables follow a simple RC-style model so that electrical
relationships (drive strength, stack depth, pin position) are visible in the
response vectors. Names follow the ASAP7 convention so the default cell-type
rules apply unchanged.
"""

from __future__ import annotations

import numpy as np

# type -> (output pin, function, input pins)
CATALOG = {
    "INV": ("Y", "!A", ("A",)),
    "BUF": ("Y", "A", ("A",)),
    "AND2": ("Y", "(A * B)", ("A", "B")),
    "AND3": ("Y", "(A * B * C)", ("A", "B", "C")),
    "AND4": ("Y", "(A * B * C * D)", ("A", "B", "C", "D")),
    "NAND2": ("Y", "!(A * B)", ("A", "B")),
    "NAND3": ("Y", "!(A * B * C)", ("A", "B", "C")),
    "NAND4": ("Y", "!(A * B * C * D)", ("A", "B", "C", "D")),
    "OR2": ("Y", "(A + B)", ("A", "B")),
    "OR3": ("Y", "(A + B + C)", ("A", "B", "C")),
    "OR4": ("Y", "(A + B + C + D)", ("A", "B", "C", "D")),
    "NOR2": ("Y", "!(A + B)", ("A", "B")),
    "NOR3": ("Y", "!(A + B + C)", ("A", "B", "C")),
    "NOR4": ("Y", "!(A + B + C + D)", ("A", "B", "C", "D")),
    "XOR2": ("Y", "(A ^ B)", ("A", "B")),
    "XNOR2": ("Y", "!(A ^ B)", ("A", "B")),
    "MAJ": ("Y", "(A * B) + (A * C) + (B * C)", ("A", "B", "C")),
    "MAJI": ("Y", "!((A * B) + (A * C) + (B * C))", ("A", "B", "C")),
    "AO21": ("Y", "(A1 * A2) + B", ("A1", "A2", "B")),
    "AOI21": ("Y", "!((A1 * A2) + B)", ("A1", "A2", "B")),
    "OA21": ("Y", "(A1 + A2) * B", ("A1", "A2", "B")),
    "OAI21": ("Y", "!((A1 + A2) * B)", ("A1", "A2", "B")),
    "AO22": ("Y", "(A1 * A2) + (B1 * B2)", ("A1", "A2", "B1", "B2")),
    "AOI22": ("Y", "!((A1 * A2) + (B1 * B2))", ("A1", "A2", "B1", "B2")),
    "OA22": ("Y", "(A1 + A2) * (B1 + B2)", ("A1", "A2", "B1", "B2")),
    "OAI22": ("Y", "!((A1 + A2) * (B1 + B2))", ("A1", "A2", "B1", "B2")),
    "AO211": ("Y", "(A1 * A2) + B + C", ("A1", "A2", "B", "C")),
    "AOI211": ("Y", "!((A1 * A2) + B + C)", ("A1", "A2", "B", "C")),
    "OA211": ("Y", "(A1 + A2) * B * C", ("A1", "A2", "B", "C")),
    "OAI211": ("Y", "!((A1 + A2) * B * C)", ("A1", "A2", "B", "C")),
    "A2O1A1I": ("Y", "!(((A1 * A2) + B) * C)", ("A1", "A2", "B", "C")),
    "O2A1O1I": ("Y", "!(((A1 + A2) * B) + C)", ("A1", "A2", "B", "C")),
}

TOY_TYPES = {
    "INV": ("1", "2", "3", "4", "8"),
    "BUF": ("2", "4", "8"),
    "AND2": ("1", "2"),
    "NAND2": ("1", "2"),
    "OR2": ("1", "2"),
    "NOR2": ("1", "2"),
    "XOR2": ("1", "2"),
    "XNOR2": ("1", "2"),
}

SLEW_INDEX = (5.0, 10.0, 20.0, 40.0, 80.0, 160.0, 320.0)
LOAD_INDEX = (0.72, 1.44, 2.88, 5.76, 11.52, 23.04, 46.08)


def _strength_value(s: str) -> float:
    return float("0." + s[1:]) if s.startswith("p") else float(s)


def _default_strengths(ctype: str) -> tuple:
    if ctype in ("INV", "BUF"):
        return ("p33", "1", "2", "3", "4", "8")
    if ctype.startswith(("AND", "OR", "NAND", "NOR")) and len(ctype) <= 5:
        return ("p5", "1", "2")
    return ("p33", "1")


def _fmt(values) -> str:
    return ", ".join(f"{v:.6g}" for v in values)


def _table(kind: str, template: str, idx1, idx2, grid) -> list:
    lines = [f"        {kind} ({template}) {{",
             f'          index_1 ("{_fmt(idx1)}");',
             f'          index_2 ("{_fmt(idx2)}");',
             "          values ( \\"]
    rows = [f'            "{_fmt(row)}"' for row in grid]
    lines.append(", \\\n".join(rows) + " \\")
    lines.append("          );")
    lines.append("        }")
    return lines


def _arc_tables(ctype: str, fanin: int, pin_pos: int, drive: float, rng) -> dict:
    """RC-flavoured delay/transition/power surfaces for one arc."""
    s = np.array(SLEW_INDEX)[:, None]
    load = np.array(LOAD_INDEX)[None, :] * max(drive, 0.5)
    inverting = ctype.startswith(("INV", "NAND", "NOR")) or ctype.endswith("I")
    stages = 1 if inverting else 2
    stack = 1.0 + 0.35 * (fanin - 1)
    r_up = (1.6 if "NOR" in ctype or ctype.startswith("O") else 1.0) * stack / drive
    r_dn = (1.6 if "NAND" in ctype or ctype.startswith("A") else 1.0) * stack / drive
    base = 6.0 * stages + 2.5 * pin_pos + (4.0 if "X" in ctype else 0.0)
    jitter = lambda: 1.0 + 0.03 * rng.standard_normal()
    out = {}
    for name, r, k in (("rise", r_up, 1.0), ("fall", r_dn, 0.85)):
        delay = (base * k + 0.18 * s + 2.1 * r * load + 0.9 * np.sqrt(s * r * load)) * jitter()
        trans = (3.0 * k + 0.05 * s + 3.6 * r * load + 0.4 * np.sqrt(s * load)) * jitter()
        power = (0.25 * drive * stages * (1.0 + 0.004 * s) + 0.01 * load / drive + 0.05 * fanin) * jitter()
        out[name] = (delay, trans, power)
    return out, np.array(SLEW_INDEX), np.array(LOAD_INDEX) * max(drive, 0.5)


def _cell_lines(cname: str, ctype: str, rng) -> list:
    drive = _strength_value(cname[len(ctype) + 1:].split("_")[0])
    out_pin, func, pins = CATALOG[ctype]
    lines = [f"  cell ({cname}) {{", f"    area : {0.05 * (len(pins) + drive):.4f};"]
    for p in pins:
        lines += [f"    pin ({p}) {{", "      direction : input;",
                  f"      capacitance : {0.5 + 0.1 * drive:.4f};", "    }"]
    lines += [f"    pin ({out_pin}) {{", "      direction : output;", f'      function : "{func}";']
    for pos, p in enumerate(pins):
        tabs, idx1, idx2 = _arc_tables(ctype, len(pins), pos, drive, rng)
        lines += ["      timing () {", f'        related_pin : "{p}";', "        timing_type : combinational;"]
        lines += _table("cell_rise", "delay_template_7x7", idx1, idx2, tabs["rise"][0])
        lines += _table("rise_transition", "delay_template_7x7", idx1, idx2, tabs["rise"][1])
        lines += _table("cell_fall", "delay_template_7x7", idx1, idx2, tabs["fall"][0])
        lines += _table("fall_transition", "delay_template_7x7", idx1, idx2, tabs["fall"][1])
        lines.append("      }")
        lines += ["      internal_power () {", f'        related_pin : "{p}";']
        lines += _table("rise_power", "power_template_7x7", idx1, idx2, tabs["rise"][2])
        lines += _table("fall_power", "power_template_7x7", idx1, idx2, tabs["fall"][2])
        lines.append("      }")
    lines += ["    }", "  }"]
    return lines


_HEADER = """\
/* synthetic library generated by lib2vec.synth */
library ({name}) {{
  delay_model : table_lookup;
  time_unit : "1ps";
  capacitive_load_unit (1, ff);
  lu_table_template (delay_template_7x7) {{
    variable_1 : input_net_transition;
    variable_2 : total_output_net_capacitance;
    index_1 ("{slews}");
    index_2 ("{loads}");
  }}
  power_lut_template (power_template_7x7) {{
    variable_1 : input_transition_time;
    variable_2 : total_output_net_capacitance;
    index_1 ("{slews}");
    index_2 ("{loads}");
  }}
"""

_EXTRA_CELLS = """\
  cell (DFFHQNx1_ASAP7_75t_R) {
    area : 0.29;
    ff (IQN, IQNN) {
      clocked_on : "CLK";
      next_state : "!D";
    }
    pin (CLK) { direction : input; capacitance : 0.6; clock : true; }
    pin (D) { direction : input; capacitance : 0.55; }
    pin (QN) {
      direction : output;
      function : "IQN";
      timing () {
        related_pin : "CLK";
        timing_type : rising_edge;
        cell_rise (delay_template_7x7) { values ("%(r)s"); }
      }
    }
  }
  cell (HAxp5_ASAP7_75t_R) {
    area : 0.15;
    pin (A) { direction : input; capacitance : 0.6; }
    pin (B) { direction : input; capacitance : 0.6; }
    pin (CON) { direction : output; function : "!(A * B)"; }
    pin (SN) { direction : output; function : "!(A ^ B)"; }
  }
"""


def library_text(types: dict, name: str = "synth", seed: int = 0, extras: bool = False) -> str:
    """Liberty source for ``types`` (type -> strength suffixes, e.g. ``("p5", "1")``)."""
    rng = np.random.default_rng(seed)
    parts = [_HEADER.format(name=name, slews=_fmt(SLEW_INDEX), loads=_fmt(LOAD_INDEX))]
    names = sorted(f"{t}x{s}_ASAP7_75t_R" for t, ss in types.items() for s in ss)
    for cname in names:
        ctype = next(t for t in sorted(types, key=len, reverse=True) if cname.startswith(t + "x"))
        parts.append("\n".join(_cell_lines(cname, ctype, rng)) + "\n")
    if extras:
        row = ", ".join(["20.0"] * len(LOAD_INDEX))
        parts.append(_EXTRA_CELLS % {"r": '", "'.join([row] * len(SLEW_INDEX))})
    parts.append("}\n")
    return "".join(parts)


def toy_library_text(seed: int = 0) -> str:
    """8 types / 20 cells: INV, BUF and the six two-input gates."""
    return library_text(TOY_TYPES, name="toy", seed=seed)


def demo_library_text(seed: int = 0, extras: bool = True) -> str:
    """Every catalog type at a few drive strengths, plus a flop and a two-output cell."""
    types = {t: _default_strengths(t) for t in CATALOG}
    return library_text(types, name="demo", seed=seed, extras=extras)
