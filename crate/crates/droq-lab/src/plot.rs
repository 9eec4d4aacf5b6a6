//! Minimal hand-written SVG line charts: two stacked panels with average
//! return and average bias against environment steps. The CSV is the
//! authoritative output; these plots are a quick visual check.

use crate::metrics::MetricsRecord;

const WIDTH: f64 = 800.0;
const PANEL_HEIGHT: f64 = 260.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 30.0;
const PANEL_GAP: f64 = 50.0;

struct Panel<'a> {
    title: &'a str,
    color: &'a str,
    points: Vec<(f64, f64)>,
}

fn fmt(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else if v.abs() >= 1000.0 || v.abs() < 0.01 {
        format!("{v:.3e}")
    } else {
        format!("{v:.3}")
    }
}

fn render_panel(svg: &mut String, panel: &Panel, top: f64) {
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = PANEL_HEIGHT - 40.0;
    let (mut x_min, mut x_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y_min, mut y_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in &panel.points {
        x_min = x_min.min(x);
        x_max = x_max.max(x);
        y_min = y_min.min(y);
        y_max = y_max.max(y);
    }
    if !x_min.is_finite() {
        x_min = 0.0;
        x_max = 1.0;
        y_min = 0.0;
        y_max = 1.0;
    }
    if (x_max - x_min).abs() < 1e-12 {
        x_max = x_min + 1.0;
    }
    if (y_max - y_min).abs() < 1e-12 {
        y_max = y_min + 1.0;
    }
    let sx = |x: f64| MARGIN_LEFT + (x - x_min) / (x_max - x_min) * plot_w;
    let sy = |y: f64| top + plot_h - (y - y_min) / (y_max - y_min) * plot_h;

    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"14\" font-family=\"sans-serif\">{}</text>\n",
        MARGIN_LEFT,
        top - 8.0,
        panel.title
    ));
    // axes
    svg.push_str(&format!(
        "<rect x=\"{MARGIN_LEFT}\" y=\"{top}\" width=\"{plot_w}\" height=\"{plot_h}\" \
         fill=\"none\" stroke=\"#888\" stroke-width=\"1\"/>\n"
    ));
    // min/max labels
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"11\" font-family=\"sans-serif\" text-anchor=\"end\">{}</text>\n",
        MARGIN_LEFT - 4.0,
        top + 10.0,
        fmt(y_max)
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"11\" font-family=\"sans-serif\" text-anchor=\"end\">{}</text>\n",
        MARGIN_LEFT - 4.0,
        top + plot_h,
        fmt(y_min)
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"11\" font-family=\"sans-serif\">{}</text>\n",
        MARGIN_LEFT,
        top + plot_h + 16.0,
        fmt(x_min)
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"11\" font-family=\"sans-serif\" text-anchor=\"end\">{}</text>\n",
        MARGIN_LEFT + plot_w,
        top + plot_h + 16.0,
        fmt(x_max)
    ));
    if panel.points.len() == 1 {
        let (x, y) = panel.points[0];
        svg.push_str(&format!(
            "<circle cx=\"{}\" cy=\"{}\" r=\"3\" fill=\"{}\"/>\n",
            sx(x),
            sy(y),
            panel.color
        ));
        return;
    }
    let pts: Vec<String> = panel
        .points
        .iter()
        .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
        .collect();
    svg.push_str(&format!(
        "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"/>\n",
        pts.join(" "),
        panel.color
    ));
}

/// Two-panel chart (return, average bias) over env steps.
pub fn render_curves(records: &[MetricsRecord]) -> String {
    let total_h = MARGIN_TOP + 2.0 * PANEL_HEIGHT + PANEL_GAP;
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{total_h}\" \
         viewBox=\"0 0 {WIDTH} {total_h}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    );
    let return_panel = Panel {
        title: "average return vs env steps",
        color: "#1f77b4",
        points: records
            .iter()
            .map(|r| (r.env_step as f64, r.avg_return))
            .collect(),
    };
    let bias_panel = Panel {
        title: "average normalized Q bias vs env steps",
        color: "#d62728",
        points: records
            .iter()
            .map(|r| (r.env_step as f64, r.avg_bias))
            .collect(),
    };
    render_panel(&mut svg, &return_panel, MARGIN_TOP);
    render_panel(&mut svg, &bias_panel, MARGIN_TOP + PANEL_HEIGHT + PANEL_GAP);
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(step: u64, ret: f64, bias: f64) -> MetricsRecord {
        MetricsRecord {
            env_step: step,
            avg_return: ret,
            avg_bias: bias,
            std_bias: 0.0,
            q_loss_mean: 0.0,
            q_loss_std: 0.0,
            q_grad_mean: 0.0,
            q_grad_std: 0.0,
            wall_ms_per_loop: 0.0,
            wall_ms_per_qupdate: 0.0,
            param_count: 0,
        }
    }

    #[test]
    fn renders_two_polylines() {
        let records = vec![rec(1000, -1200.0, 0.5), rec(2000, -800.0, 0.3), rec(3000, -400.0, 0.2)];
        let svg = render_curves(&records);
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("average return"));
        assert!(svg.ends_with("</svg>\n"));
    }

    #[test]
    fn deterministic_output() {
        let records = vec![rec(1000, -1.0, 0.1), rec(2000, -2.0, 0.2)];
        assert_eq!(render_curves(&records), render_curves(&records));
    }

    #[test]
    fn single_record_renders_points() {
        let svg = render_curves(&[rec(1000, -5.0, 1.0)]);
        assert_eq!(svg.matches("<circle").count(), 2);
    }
}
