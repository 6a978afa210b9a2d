//! Static SVG plots of 2-D datasets with rule rectangles or ensemble
//! threshold grids.

use crate::data::{Dataset, Targets};
use crate::ensemble::{TreeEnsemble, TreeNode};
use crate::error::{Error, Result};
use crate::rules::RuleSet;

pub const WIDTH: f64 = 640.0;
pub const HEIGHT: f64 = 640.0;
pub const MARGIN: f64 = 50.0;

const CLASS_COLORS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

/// Data-space bounding box of the plot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlotBounds {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl PlotBounds {
    /// Tight bounds of a 2-feature dataset (degenerate spans get padded).
    pub fn from_data(data: &Dataset) -> Result<PlotBounds> {
        if data.n_features() != 2 {
            return Err(Error::Invalid(format!(
                "2-D plot requires exactly 2 features, got {}",
                data.n_features()
            )));
        }
        let mut b = PlotBounds {
            x_min: f64::INFINITY,
            x_max: f64::NEG_INFINITY,
            y_min: f64::INFINITY,
            y_max: f64::NEG_INFINITY,
        };
        for row in &data.x {
            b.x_min = b.x_min.min(row[0]);
            b.x_max = b.x_max.max(row[0]);
            b.y_min = b.y_min.min(row[1]);
            b.y_max = b.y_max.max(row[1]);
        }
        if b.x_max - b.x_min <= 0.0 {
            b.x_min -= 0.5;
            b.x_max += 0.5;
        }
        if b.y_max - b.y_min <= 0.0 {
            b.y_min -= 0.5;
            b.y_max += 0.5;
        }
        Ok(b)
    }

    /// Maps a data-space point to pixel coordinates (y axis flipped).
    pub fn to_px(&self, x: f64, y: f64) -> (f64, f64) {
        let iw = WIDTH - 2.0 * MARGIN;
        let ih = HEIGHT - 2.0 * MARGIN;
        (
            MARGIN + (x - self.x_min) / (self.x_max - self.x_min) * iw,
            MARGIN + (self.y_max - y) / (self.y_max - self.y_min) * ih,
        )
    }
}

fn svg_header(out: &mut String) {
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    out.push_str(&format!(
        "<rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"#ffffff\"/>\n"
    ));
}

fn point_color(data: &Dataset, i: usize, value_range: (f64, f64)) -> String {
    match &data.targets {
        Targets::Classification { labels, .. } => {
            CLASS_COLORS[labels[i] % CLASS_COLORS.len()].to_string()
        }
        Targets::Regression(ys) => {
            let (lo, hi) = value_range;
            let t = if hi > lo { (ys[i] - lo) / (hi - lo) } else { 0.5 };
            // Blue at the low end, red at the high end.
            let r = (33.0 + t * (178.0 - 33.0)) as u8;
            let g = (102.0 + t * (24.0 - 102.0)) as u8;
            let b = (172.0 + t * (43.0 - 172.0)) as u8;
            format!("#{r:02x}{g:02x}{b:02x}")
        }
    }
}

fn scatter(out: &mut String, data: &Dataset, bounds: &PlotBounds) {
    let value_range = match &data.targets {
        Targets::Regression(ys) => {
            let lo = ys.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (lo, hi)
        }
        Targets::Classification { .. } => (0.0, 1.0),
    };
    out.push_str("<g>\n");
    for (i, row) in data.x.iter().enumerate() {
        let (px, py) = bounds.to_px(row[0], row[1]);
        out.push_str(&format!(
            "<circle cx=\"{px}\" cy=\"{py}\" r=\"2.5\" fill=\"{}\" fill-opacity=\"0.65\"/>\n",
            point_color(data, i, value_range)
        ));
    }
    out.push_str("</g>\n");
}

/// Scatter plot of a 2-D dataset with one rectangle per rule, intervals
/// clipped to the data's bounding box.
pub fn svg_rules_plot(data: &Dataset, ruleset: &RuleSet) -> Result<String> {
    let bounds = PlotBounds::from_data(data)?;
    let mut out = String::new();
    svg_header(&mut out);
    scatter(&mut out, data, &bounds);
    out.push_str("<g>\n");
    for rule in &ruleset.rules {
        let mut lo = [bounds.x_min, bounds.y_min];
        let mut hi = [bounds.x_max, bounds.y_max];
        for iv in &rule.intervals {
            if iv.feature > 1 {
                continue;
            }
            if let Some(l) = iv.lower {
                lo[iv.feature] = lo[iv.feature].max(l);
            }
            if let Some(u) = iv.upper {
                hi[iv.feature] = hi[iv.feature].min(u);
            }
        }
        if lo[0] >= hi[0] || lo[1] >= hi[1] {
            continue; // empty after clipping
        }
        let (px, py) = bounds.to_px(lo[0], hi[1]);
        let (qx, qy) = bounds.to_px(hi[0], lo[1]);
        out.push_str(&format!(
            "<rect x=\"{px}\" y=\"{py}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#000000\" stroke-width=\"2\"/>\n",
            qx - px,
            qy - py
        ));
    }
    out.push_str("</g>\n</svg>\n");
    Ok(out)
}

/// Scatter plot with the split thresholds of the first `n_trees` trees drawn
/// as grid lines (the ensemble's cell boundaries at reduced tree count).
pub fn svg_ensemble_plot(data: &Dataset, ensemble: &TreeEnsemble, n_trees: usize) -> Result<String> {
    if ensemble.n_features != 2 {
        return Err(Error::Invalid(format!(
            "2-D plot requires a 2-feature ensemble, got {}",
            ensemble.n_features
        )));
    }
    let bounds = PlotBounds::from_data(data)?;
    let mut out = String::new();
    svg_header(&mut out);
    scatter(&mut out, data, &bounds);
    out.push_str("<g>\n");
    for wt in ensemble.trees.iter().take(n_trees) {
        for node in &wt.tree.nodes {
            if let TreeNode::Internal {
                feature, threshold, ..
            } = node
            {
                match feature {
                    0 if (bounds.x_min..=bounds.x_max).contains(threshold) => {
                        let (px, _) = bounds.to_px(*threshold, bounds.y_min);
                        let (_, top) = bounds.to_px(bounds.x_min, bounds.y_max);
                        let (_, bot) = bounds.to_px(bounds.x_min, bounds.y_min);
                        out.push_str(&format!(
                            "<line x1=\"{px}\" y1=\"{top}\" x2=\"{px}\" y2=\"{bot}\" stroke=\"#555555\" stroke-width=\"0.5\"/>\n"
                        ));
                    }
                    1 if (bounds.y_min..=bounds.y_max).contains(threshold) => {
                        let (_, py) = bounds.to_px(bounds.x_min, *threshold);
                        let (left, _) = bounds.to_px(bounds.x_min, bounds.y_min);
                        let (right, _) = bounds.to_px(bounds.x_max, bounds.y_min);
                        out.push_str(&format!(
                            "<line x1=\"{left}\" y1=\"{py}\" x2=\"{right}\" y2=\"{py}\" stroke=\"#555555\" stroke-width=\"0.5\"/>\n"
                        ));
                    }
                    _ => {}
                }
            }
        }
    }
    out.push_str("</g>\n</svg>\n");
    Ok(out)
}
