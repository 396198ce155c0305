//! The `list-models` table.

use std::fmt::Write;

use grw_core::presets::catalog;

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

fn endpoint(x: f64) -> String {
    if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{x}")
    }
}

/// One block per preset.
pub fn render() -> grw_core::Result<String> {
    let mut s = String::new();
    for p in catalog() {
        let h = p.hypotheses()?;
        let [n0, n1] = p.fiber.resolution;
        let _ = writeln!(s, "{}", p.name);
        let _ = writeln!(s, "  model:       {}", p.summary);
        let _ = writeln!(s, "  fiber:       {:?} {n0}x{n1}, K = {}", p.fiber.kind, p.kf());
        let _ = writeln!(
            s,
            "  window:      ({}, {})",
            endpoint(p.window.lower()),
            endpoint(p.window.upper())
        );
        let _ = writeln!(
            s,
            "  conditions:  NCC {}  TCC {}  ubiquitous {}  (log f)'' <= 0 {}",
            yes_no(h.ncc.holds),
            yes_no(h.tcc.holds),
            yes_no(h.ubiquitous.holds),
            yes_no(h.log_concave.holds)
        );
        let _ = writeln!(s, "  note:        {}", h.annotation);
        s.push('\n');
    }
    Ok(s)
}
