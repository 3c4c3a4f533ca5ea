use polyfund::multiview::{format_sig, EvaluationReport};

const HEADERS: [&str; 8] = [
    "e_Init 8pt",
    "e_Init Gp",
    "e_BA 8pt",
    "e_BA Gp",
    "Iter 8pt",
    "Iter Gp",
    "Time 8pt",
    "Time Gp",
];

/// Human-readable one-row table. Missing methods (not run or failed) and
/// disabled timings show as `-`.
pub fn render_table(
    label: &str,
    eight: Option<&EvaluationReport>,
    global: Option<&EvaluationReport>,
    timing: bool,
) -> String {
    let err = |r: Option<&EvaluationReport>, f: fn(&EvaluationReport) -> f64| {
        r.map_or_else(|| "-".to_string(), |r| format_sig(f(r), 6))
    };
    let iters = |r: Option<&EvaluationReport>| r.map_or_else(|| "-".to_string(), |r| r.iterations.to_string());
    let time = |r: Option<&EvaluationReport>| match r {
        Some(r) if timing => format_sig(r.time_s, 3),
        _ => "-".to_string(),
    };
    let cells = [
        err(eight, |r| r.e_init),
        err(global, |r| r.e_init),
        err(eight, |r| r.e_ba),
        err(global, |r| r.e_ba),
        iters(eight),
        iters(global),
        time(eight),
        time(global),
    ];
    let lw = label.len().max(4);
    let widths: Vec<usize> = HEADERS.iter().zip(&cells).map(|(h, c)| h.len().max(c.len())).collect();
    let mut out = format!("{:<lw$}", "Data");
    for (h, w) in HEADERS.iter().zip(&widths) {
        out.push_str(&format!("  {h:>w$}"));
    }
    out.push('\n');
    out.push_str(&format!("{label:<lw$}"));
    for (c, w) in cells.iter().zip(&widths) {
        out.push_str(&format!("  {c:>w$}"));
    }
    out.push('\n');
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use polyfund::multiview::Method;

    #[test]
    fn missing_method_renders_dashes() {
        let r = EvaluationReport {
            method: Method::EightPoint,
            e_init: 0.5,
            e_ba: 0.25,
            iterations: 3,
            time_s: 0.001,
        };
        let t = render_table("x", Some(&r), None, true);
        let rows: Vec<&str> = t.lines().collect();
        assert_eq!(rows.len(), 2);
        let fields: Vec<&str> = rows[1].split_whitespace().collect();
        assert_eq!(fields, ["x", "0.5", "-", "0.25", "-", "3", "-", "0.001", "-"]);
    }
}
