use std::ffi::CString;
use std::sync::Once;

use pyo3::prelude::*;
use pyo3::types::PyDict;

use bicwg::bicwg as module;

/// Runs `code` in an embedded interpreter with the extension registered as
/// `bicwg`.
fn python(code: &str) {
    static INIT: Once = Once::new();
    // must happen before the interpreter starts
    INIT.call_once(|| pyo3::append_to_inittab!(module));
    Python::attach(|py| {
        let globals = PyDict::new(py);
        let code = CString::new(format!("import bicwg\n{code}")).unwrap();
        if let Err(e) = py.run(&code, Some(&globals), None) {
            let tb = e.traceback(py).and_then(|t| t.format().ok()).unwrap_or_default();
            panic!("{tb}{e}");
        }
    });
}

#[test]
fn module_exposes_version_and_types() {
    python(
        r#"
assert bicwg.__version__
for name in ["Geometry", "Solver", "Pole", "Bic", "EffectiveModel", "Survival",
             "locate_poles", "track_poles", "find_bic", "survival", "to_ev", "from_ev"]:
    assert hasattr(bicwg, name), name
"#,
    );
}

#[test]
fn geometry_validation_raises_value_error() {
    python(
        r#"
g = bicwg.Geometry(distance=5.6)
assert g.cavity_count == 2 and g.distance == 5.6
for bad in [dict(cavity_count=3), dict(distance=-1.0), dict(cavity_width=0.5)]:
    try:
        bicwg.Geometry(**bad)
    except ValueError:
        pass
    else:
        raise AssertionError(bad)
try:
    bicwg.Solver(g).transmission(complex(30.0, 0.0), sheet="third")
except ValueError:
    pass
else:
    raise AssertionError("unknown sheet accepted")
"#,
    );
}

#[test]
fn scattering_is_unitary_and_lead_transparent() {
    python(
        r#"
s = bicwg.Solver(bicwg.Geometry(distance=5.6))
for e in [12.0, 25.0, 32.5]:
    r, t = s.scattering(e)
    assert abs(abs(r)**2 + abs(t)**2 - 1) < 1e-8, e
lead = bicwg.Solver(bicwg.Geometry(cavity_count=0))
assert all(abs(x - 1) < 1e-12 for x in lead.transmission_scan([12.0, 30.0]))
"#,
    );
}

#[test]
fn unit_conversion_round_trips() {
    python(
        r#"
e = bicwg.from_ev(0.25)
assert abs(bicwg.to_ev(e) - 0.25) < 1e-12
assert abs(bicwg.to_ev(1.0) - 7.619964e-3) < 1e-8
"#,
    );
}

#[test]
fn single_cavity_pole_and_zero_coupling_model() {
    python(
        r#"
import math
single = bicwg.Geometry(cavity_count=1)
e_c = single.cavity_energy(2, 3)
poles = bicwg.locate_poles(single, e_c - 1.5, e_c + 1.5, -1.6)
assert len(poles) == 1
assert abs(poles[0].z - complex(poles[0].energy, -poles[0].gamma)) < 1e-12
free = bicwg.EffectiveModel(e_c, 0.0, 40.0)
assert free.pole("plus", 6.0) == complex(e_c, 0.0)
try:
    free.pole("sideways", 6.0)
except ValueError:
    pass
else:
    raise AssertionError("unknown level accepted")
"#,
    );
}
