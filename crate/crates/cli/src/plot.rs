use plotters::prelude::*;

use crate::CliError;

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Clone, Copy, PartialEq)]
pub enum Style {
    Lines,
    Points,
}

pub struct Figure<'a> {
    pub title: &'a str,
    pub x_label: &'a str,
    pub y_label: &'a str,
    pub style: Style,
    pub log_y: bool,
}

fn bounds(series: &[Series], log_y: bool) -> Option<((f64, f64), (f64, f64))> {
    let pts = || series.iter().flat_map(|s| s.points.iter()).filter(|p| p.0.is_finite() && p.1.is_finite());
    let pts_y = || pts().filter(|p| !log_y || p.1 > 0.0);
    let (x0, x1) = pts().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)));
    let (y0, y1) = pts_y().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.1), b.max(p.1)));
    if !(x0.is_finite() && y0.is_finite()) {
        return None;
    }
    let pad = |lo: f64, hi: f64| {
        let w = if hi > lo { 0.05 * (hi - lo) } else { 0.5 * lo.abs().max(1.0) };
        (lo - w, hi + w)
    };
    let y = if log_y { (y0 / 2.0, y1 * 2.0) } else { pad(y0, y1) };
    Some((pad(x0, x1), y))
}

/// Renders `series` to an SVG string.
pub fn render(fig: &Figure, series: &[Series]) -> Result<String, CliError> {
    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, (800, 560)).into_drawing_area();
        root.fill(&WHITE).map_err(plot_err)?;
        let Some(((x0, x1), (y0, y1))) = bounds(series, fig.log_y) else {
            root.titled(&format!("{} (no data)", fig.title), ("sans-serif", 20)).map_err(plot_err)?;
            root.present().map_err(plot_err)?;
            drop(root);
            return Ok(svg);
        };
        let mut builder = ChartBuilder::on(&root);
        builder
            .caption(fig.title, ("sans-serif", 20))
            .margin(12)
            .x_label_area_size(40)
            .y_label_area_size(70);
        let palette = |i: usize| Palette99::pick(i).to_rgba();
        macro_rules! draw {
            ($chart:expr) => {{
                let mut chart = $chart;
                chart
                    .configure_mesh()
                    .x_desc(fig.x_label)
                    .y_desc(fig.y_label)
                    .light_line_style(WHITE)
                    .draw()
                    .map_err(plot_err)?;
                for (i, s) in series.iter().enumerate() {
                    let color = palette(i);
                    let pts = s.points.iter().copied().filter(|p| p.0.is_finite() && p.1.is_finite() && (!fig.log_y || p.1 > 0.0));
                    let anno = match fig.style {
                        Style::Lines => chart.draw_series(LineSeries::new(pts, color.stroke_width(1))),
                        Style::Points => chart.draw_series(pts.map(|p| Circle::new(p, 2, color.filled()))),
                    }
                    .map_err(plot_err)?;
                    anno.label(s.label.clone())
                        .legend(move |(x, y)| Rectangle::new([(x, y - 4), (x + 12, y + 4)], color.filled()));
                }
                if series.len() > 1 {
                    chart
                        .configure_series_labels()
                        .background_style(WHITE.mix(0.8))
                        .border_style(BLACK)
                        .draw()
                        .map_err(plot_err)?;
                }
            }};
        }
        if fig.log_y {
            draw!(builder.build_cartesian_2d(x0..x1, (y0..y1).log_scale()).map_err(plot_err)?);
        } else {
            draw!(builder.build_cartesian_2d(x0..x1, y0..y1).map_err(plot_err)?);
        }
        root.present().map_err(plot_err)?;
    }
    Ok(svg)
}

fn plot_err(e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("plot: {e}"))
}
