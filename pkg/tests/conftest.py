import functools

import pytest

from lib2vec import liberty, synth, testgen


@functools.lru_cache(maxsize=None)
def _toy():
    return liberty.parse_liberty(synth.toy_library_text(0))


@functools.lru_cache(maxsize=None)
def _demo():
    return liberty.parse_liberty(synth.demo_library_text(0))


@pytest.fixture
def toy_lib():
    return _toy()


@pytest.fixture
def demo_lib():
    return _demo()


@pytest.fixture
def demo_grid(demo_lib):
    return testgen.build_condition_grid(demo_lib, 16, 16)


MINI_LIB = """\
/* two cells, one template */
library (mini) {
  time_unit : "1ps" ;
  capacitive_load_unit (1, ff) ;
  lu_table_template (tmpl) {
    variable_1 : input_net_transition ;
    variable_2 : total_output_net_capacitance ;
    index_1 ("1, 2") ;
    index_2 ("10, 20") ;
  }
  cell (INVx1_ASAP7_75t_R) {
    area : 1.0 ;
    pin (A) { direction : input ; capacitance : 0.5 ; }
    pin (Y) {
      direction : output ;
      function : "!A" ;
      timing () {
        related_pin : "A" ;
        timing_type : combinational ;
        cell_rise (tmpl) { values ("1, 2", \\
                                   "3, 4") ; }
        cell_fall (tmpl) { values ("1, 2", "3, 4") ; }
        rise_transition (tmpl) { values ("1, 2", "3, 4") ; }
        fall_transition (tmpl) { values ("1, 2", "3, 4") ; }
      }
      internal_power () {
        related_pin : "A" ;
        rise_power (tmpl) { values ("1, 2", "3, 4") ; }
        fall_power (tmpl) { values ("1, 2", "3, 4") ; }
      }
    }
  }
  cell (NAND2x1_ASAP7_75t_R) {
    pin (A) { direction : input ; }
    pin (B) { direction : input ; }
    pin (Y) { direction : output ; function : "!(A B)" ; }
  }
}
"""


@pytest.fixture
def mini_text():
    return MINI_LIB


# one verdict line per acceptance criterion, printed after the run
ACCEPTANCE: dict = {}


@pytest.fixture
def verdict():
    def record(number: int, ok, detail: str) -> None:
        status = "SKIP" if ok is None else ("PASS" if ok else "FAIL")
        ACCEPTANCE[number] = f"criterion {number}: {status} {detail}"
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
