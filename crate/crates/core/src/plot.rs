//! Static SVG diagnostics: per-component dot plots and the weighted scatter
//! for two covariates.

use std::fmt::Write as _;
use std::path::Path;

use crate::data::{AdVector, IpdMatrix};
use crate::error::{Error, Result};
use crate::fit::MaicFit;
use crate::pca::PcaProjection;

const STRIP_HEIGHT: f64 = 60.0;
const WIDTH: f64 = 640.0;
const MARGIN: f64 = 70.0;
const LABELLED: usize = 5;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn triangle(cx: f64, cy: f64, r: f64) -> String {
    format!(
        "{:.2},{:.2} {:.2},{:.2} {:.2},{:.2}",
        cx,
        cy - r,
        cx - r * 0.866,
        cy + r * 0.5,
        cx + r * 0.866,
        cy + r * 0.5
    )
}

/// Linear map from `[lo, hi]` onto `[a, b]`, padded by 5% of the span.
struct Axis {
    lo: f64,
    hi: f64,
    a: f64,
    b: f64,
}

impl Axis {
    fn new(values: impl IntoIterator<Item = f64>, a: f64, b: f64) -> Self {
        let (mut lo, mut hi) = values
            .into_iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
        let span = hi - lo;
        let pad = if span > 0.0 { 0.05 * span } else { lo.abs().max(1.0) * 0.5 };
        lo -= pad;
        hi += pad;
        Axis { lo, hi, a, b }
    }

    fn map(&self, v: f64) -> f64 {
        self.a + (v - self.lo) / (self.hi - self.lo) * (self.b - self.a)
    }
}

fn write_svg(path: &Path, body: &str) -> Result<()> {
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

/// One horizontal strip per component: patient scores as open circles, the
/// aggregate score as a filled triangle, and a dashed line at zero.
pub fn pc_dotplot_svg(projection: &PcaProjection) -> String {
    let p = projection.p();
    let height = STRIP_HEIGHT * p as f64 + 40.0;
    let axis = Axis::new(
        projection
            .ipd_scores
            .iter()
            .flatten()
            .chain(projection.ad_scores.iter())
            .copied()
            .chain([0.0]),
        MARGIN,
        WIDTH - 20.0,
    );
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}">"#
    );
    let _ = writeln!(
        s,
        r#"<style>.ipd{{fill:none;stroke:#555}} .ad{{fill:#1f5fbf}} .outside .ad{{fill:#c62828}} .outside text{{fill:#c62828;font-weight:bold}}</style>"#
    );
    let zero = axis.map(0.0);
    let _ = writeln!(
        s,
        r##"<line x1="{zero:.2}" y1="10" x2="{zero:.2}" y2="{:.2}" stroke="#999" stroke-dasharray="4 3"/>"##,
        height - 20.0
    );
    for k in 0..p {
        let y = 30.0 + STRIP_HEIGHT * k as f64;
        let outside = projection.ad_outside.contains(&(k + 1));
        let class = if outside { "pc-strip outside" } else { "pc-strip" };
        let _ = writeln!(s, r#"<g class="{class}" data-pc="{}">"#, k + 1);
        let _ = writeln!(
            s,
            r#"<text x="8" y="{:.2}" font-size="12">PC{} ({:.2})</text>"#,
            y + 4.0,
            k + 1,
            projection.eigenvalues[k]
        );
        for score in &projection.ipd_scores[k] {
            let _ = writeln!(s, r#"<circle class="ipd" cx="{:.2}" cy="{y:.2}" r="3"/>"#, axis.map(*score));
        }
        let _ = writeln!(
            s,
            r#"<polygon class="ad" points="{}"/>"#,
            triangle(axis.map(projection.ad_scores[k]), y, 6.0)
        );
        let _ = writeln!(s, "</g>");
    }
    s.push_str("</svg>\n");
    s
}

pub fn render_pc_dotplot(projection: &PcaProjection, path: impl AsRef<Path>) -> Result<()> {
    write_svg(path.as_ref(), &pc_dotplot_svg(projection))
}

/// Patients ordered by descending weight (ties by index).
fn weight_ranking(weights: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));
    order
}

/// Scatter of the two covariates with circle area proportional to weight.
/// The five largest weights are labelled 1-5 by rank.
pub fn scatter_with_weights_svg(ipd: &IpdMatrix, ad: &AdVector, fit: &MaicFit) -> Result<String> {
    if ipd.p() != 2 {
        return Err(Error::PlotDimension(ipd.p()));
    }
    if fit.weights.len() != ipd.n() || ad.len() != 2 {
        return Err(Error::DimensionMismatch {
            what: "weights",
            expected: ipd.n(),
            found: fit.weights.len(),
        });
    }
    let y = ipd.values();
    let mean = ipd.means();
    let size = 480.0;
    let ax = Axis::new(y.row(0).iter().copied().chain([ad.values()[0]]), MARGIN, size - 20.0);
    let ay = Axis::new(y.row(1).iter().copied().chain([ad.values()[1]]), size - MARGIN, 20.0);
    let wmax = fit.weights.iter().copied().fold(0.0, f64::max);
    let rmax = 12.0;
    let radius = |w: f64| if wmax > 0.0 { rmax * (w / wmax).sqrt() } else { 0.0 };

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">"#
    );
    let names = ipd.covariate_names();
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="middle">{}</text>"#,
        size / 2.0,
        size - 20.0,
        escape(&names[0])
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" font-size="12" transform="rotate(-90 16 {:.2})" text-anchor="middle">{}</text>"#,
        size / 2.0,
        size / 2.0,
        escape(&names[1])
    );
    for (i, w) in fit.weights.iter().enumerate() {
        let _ = writeln!(
            s,
            r##"<circle class="patient" data-patient="{}" cx="{:.2}" cy="{:.2}" r="{:.4}" fill="none" stroke="#555"/>"##,
            i + 1,
            ax.map(y[(0, i)]),
            ay.map(y[(1, i)]),
            radius(*w)
        );
    }
    for (rank, &i) in weight_ranking(&fit.weights).iter().take(LABELLED).enumerate() {
        let _ = writeln!(
            s,
            r#"<text class="rank" data-patient="{}" x="{:.2}" y="{:.2}" font-size="11">{}</text>"#,
            i + 1,
            ax.map(y[(0, i)]) + radius(fit.weights[i]) + 2.0,
            ay.map(y[(1, i)]) - 2.0,
            rank + 1
        );
    }
    let _ = writeln!(
        s,
        r##"<circle class="ipd-mean" cx="{:.2}" cy="{:.2}" r="4" fill="#333"/>"##,
        ax.map(mean[0]),
        ay.map(mean[1])
    );
    let _ = writeln!(
        s,
        r##"<polygon class="ad" points="{}" fill="#1f5fbf"/>"##,
        triangle(ax.map(ad.values()[0]), ay.map(ad.values()[1]), 7.0)
    );
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn render_scatter_with_weights(
    ipd: &IpdMatrix,
    ad: &AdVector,
    fit: &MaicFit,
    path: impl AsRef<Path>,
) -> Result<()> {
    write_svg(path.as_ref(), &scatter_with_weights_svg(ipd, ad, fit)?)
}
