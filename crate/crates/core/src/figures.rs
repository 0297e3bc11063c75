//! Static SVG bar charts of relative-bias ratios.
//!
//! One chart per model: for every parameter, bars show
//! |RBias(estimator) / RBias(sqri)| on a log scale; bars above the unit line
//! mean the SQRI-GMM estimator had the smaller relative bias.

use crate::sim::McReport;

const BAR_COLORS: [&str; 5] = ["#4878a8", "#e49444", "#d1605e", "#85b6b2", "#6a9f58"];

/// Render the bias-ratio chart for one model; `None` when the report lacks
/// an SQRI row to compare against.
pub fn bias_ratio_svg(report: &McReport, model: &str) -> Option<String> {
    let params: Vec<&str> = {
        let mut seen = Vec::new();
        for r in report.rows.iter().filter(|r| r.model == model) {
            if !seen.contains(&r.parameter) {
                seen.push(r.parameter);
            }
        }
        seen
    };
    if params.is_empty() {
        return None;
    }
    let estimators: Vec<&str> = {
        let mut seen = Vec::new();
        for r in report.rows.iter().filter(|r| r.model == model) {
            if r.estimator != "sqri" && !seen.contains(&r.estimator) {
                seen.push(r.estimator);
            }
        }
        seen
    };
    if estimators.is_empty() {
        return None;
    }
    report.row(model, "sqri", params[0])?;

    let ratios: Vec<Vec<f64>> = params
        .iter()
        .map(|p| {
            let sqri = report.row(model, "sqri", p).map(|r| r.rbias_x100)?;
            let row: Vec<f64> = estimators
                .iter()
                .map(|e| {
                    let other = report
                        .row(model, e, p)
                        .map(|r| r.rbias_x100)
                        .unwrap_or(f64::NAN);
                    (other / sqri).abs()
                })
                .collect();
            Some(row)
        })
        .collect::<Option<_>>()?;

    // log10 scale clamped to [0.01, 100]
    let y_of = |ratio: f64| -> f64 {
        let r = ratio.clamp(0.01, 100.0);
        // map log10 in [-2, 2] onto [bottom, top]
        let frac = (r.log10() + 2.0) / 4.0;
        240.0 - 200.0 * frac
    };

    let group_w = 110.0;
    let bar_w = group_w / (estimators.len() as f64 + 1.0);
    let width = 70.0 + group_w * params.len() as f64;
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0}\" height=\"300\" \
         viewBox=\"0 0 {:.0} 300\">\n",
        width, width
    ));
    svg.push_str(&format!(
        "<text x=\"{:.0}\" y=\"16\" font-size=\"13\" text-anchor=\"middle\">\
         |RBias ratio| vs sqri, model {model}</text>\n",
        width / 2.0
    ));
    // axis and reference lines at 0.01, 0.1, 1, 10, 100
    for (val, label) in [
        (0.01, "0.01"),
        (0.1, "0.1"),
        (1.0, "1"),
        (10.0, "10"),
        (100.0, "100"),
    ] {
        let y = y_of(val);
        let stroke = if val == 1.0 { "#222222" } else { "#cccccc" };
        svg.push_str(&format!(
            "<line x1=\"50\" y1=\"{y:.1}\" x2=\"{:.0}\" y2=\"{y:.1}\" stroke=\"{stroke}\" \
             stroke-width=\"1\"/>\n",
            width - 10.0
        ));
        svg.push_str(&format!(
            "<text x=\"44\" y=\"{:.1}\" font-size=\"10\" text-anchor=\"end\">{label}</text>\n",
            y + 3.0
        ));
    }
    for (pi, p) in params.iter().enumerate() {
        let x0 = 60.0 + group_w * pi as f64;
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"262\" font-size=\"11\" text-anchor=\"middle\">{p}</text>\n",
            x0 + group_w / 2.0 - bar_w / 2.0
        ));
        for (ei, _) in estimators.iter().enumerate() {
            let ratio = ratios[pi][ei];
            if !ratio.is_finite() {
                continue;
            }
            let x = x0 + bar_w * ei as f64;
            let y = y_of(ratio);
            let color = BAR_COLORS[ei % BAR_COLORS.len()];
            svg.push_str(&format!(
                "<rect x=\"{x:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{:.1}\" \
                 fill=\"{color}\"/>\n",
                y.min(y_of(0.01)),
                bar_w * 0.85,
                (y_of(0.01) - y).abs().max(0.5),
            ));
        }
    }
    // legend
    for (ei, e) in estimators.iter().enumerate() {
        let x = 60.0 + 90.0 * ei as f64;
        let color = BAR_COLORS[ei % BAR_COLORS.len()];
        svg.push_str(&format!(
            "<rect x=\"{x:.1}\" y=\"275\" width=\"10\" height=\"10\" fill=\"{color}\"/>\n"
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"284\" font-size=\"10\">{e}</text>\n",
            x + 14.0
        ));
    }
    svg.push_str("</svg>\n");
    Some(svg)
}
