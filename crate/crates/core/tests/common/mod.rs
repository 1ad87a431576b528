//! Independent oracles and random instance generators shared by the
//! integration and acceptance tests.
#![allow(dead_code)]

use maicfeas::data::{AdVector, IpdMatrix};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

/// `(d1, d2, x, P(F <= x))`, evaluated to 40 significant digits.
pub const F_CHECKPOINTS: [(f64, f64, f64, f64); 20] = [
    (1.0, 1.0, 1.0, 0.5),
    (1.0, 5.0, 4.060419947, 0.90000000000405037341),
    (2.0, 10.0, 4.102821015, 0.94999999999641865523),
    (2.0, 10.0, 7.559432158, 0.99000000000179983992),
    (3.0, 7.0, 4.3468314, 0.95000000000228457663),
    (3.0, 97.0, 2.69839754, 0.95000000002906022529),
    (3.0, 97.0, 0.7942368626, 0.49999999999146229857),
    (4.0, 20.0, 3.514695162, 0.97499999999328168639),
    (5.0, 5.0, 0.2896047324, 0.099999999987105132306),
    (5.0, 50.0, 4.90134819, 0.99900000000025146634),
    (9.0, 141.0, 1.946863252, 0.94999999997957035754),
    (9.0, 141.0, 0.2280551933, 0.0099999999946797521565),
    (2.0, 98.0, 10.13283939, 0.99989999999989003048),
    (1.0, 99.0, 3.937116911, 0.95000000000105879089),
    (8.0, 142.0, 0.9223735056, 0.50000000002257273861),
    (6.0, 12.0, 1.528613673, 0.74999999991220254851),
    (10.0, 3.0, 8.785524711, 0.9500000000037199746),
    (1.0, 2.0, 998.5002501, 0.99899999999997493748),
    (7.0, 200.0, 0.3074587987, 0.050000000013094678063),
    (2.0, 4.0, 0.3094010768, 0.25000000002695305949),
];

pub type Point = (f64, f64);

/// Twice the signed area of `(a, b, c)`; positive for a left turn.
pub fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)
}

/// Jarvis march. Returns hull vertices counter-clockwise, dropping collinear points.
pub fn gift_wrap(points: &[Point]) -> Vec<Point> {
    let start = (0..points.len())
        .min_by(|&i, &j| points[i].partial_cmp(&points[j]).unwrap())
        .unwrap();
    let mut hull = Vec::new();
    let mut current = start;
    loop {
        hull.push(points[current]);
        let mut next = (current + 1) % points.len();
        for k in 0..points.len() {
            if k == current {
                continue;
            }
            let o = orient(points[current], points[next], points[k]);
            let farther = || {
                let d = |p: Point| (p.0 - points[current].0).powi(2) + (p.1 - points[current].1).powi(2);
                d(points[k]) > d(points[next])
            };
            if o < 0.0 || (o == 0.0 && farther()) {
                next = k;
            }
        }
        current = next;
        if current == start || hull.len() > points.len() {
            break;
        }
    }
    hull
}

/// Distance from `q` to the polygon boundary.
fn boundary_distance(poly: &[Point], q: Point) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..poly.len() {
        let (a, b) = (poly[i], poly[(i + 1) % poly.len()]);
        let (dx, dy) = (b.0 - a.0, b.1 - a.1);
        let len2 = dx * dx + dy * dy;
        let t = if len2 > 0.0 {
            (((q.0 - a.0) * dx + (q.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let (px, py) = (a.0 + t * dx, a.1 + t * dy);
        best = best.min(((q.0 - px).powi(2) + (q.1 - py).powi(2)).sqrt());
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Membership {
    Inside,
    Outside,
    /// Within `tol` of the boundary; either verdict is acceptable.
    Ambiguous,
}

/// Point-in-convex-polygon by orientation tests against every hull edge.
pub fn polygon_membership(points: &[Point], q: Point, tol: f64) -> Membership {
    let hull = gift_wrap(points);
    if hull.len() < 3 {
        return if boundary_distance(&hull, q) <= tol {
            Membership::Ambiguous
        } else {
            Membership::Outside
        };
    }
    if boundary_distance(&hull, q) <= tol {
        return Membership::Ambiguous;
    }
    let inside = (0..hull.len()).all(|i| orient(hull[i], hull[(i + 1) % hull.len()], q) > 0.0);
    if inside {
        Membership::Inside
    } else {
        Membership::Outside
    }
}

/// `ln Γ` by the Stirling series after shifting the argument above 10.
pub fn stirling_ln_gamma(x: f64) -> f64 {
    let mut shift = 0.0;
    let mut z = x;
    while z < 10.0 {
        shift += z.ln();
        z += 1.0;
    }
    let z2 = z * z;
    let series = 1.0 / (12.0 * z) - 1.0 / (360.0 * z * z2) + 1.0 / (1260.0 * z2 * z2 * z)
        - 1.0 / (1680.0 * z2 * z2 * z2 * z)
        + 1.0 / (1188.0 * z2 * z2 * z2 * z2 * z);
    (z - 0.5) * z.ln() - z + 0.5 * (2.0 * std::f64::consts::PI).ln() + series - shift
}

/// `I_x(a, b)` from the same continued fraction as the library but evaluated
/// bottom-up at a fixed depth (no Lentz recursion, no convergence test).
pub fn beta_reg_backward(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    if x > (a + 1.0) / (a + b + 2.0) {
        return 1.0 - beta_reg_backward(b, a, 1.0 - x);
    }
    const DEPTH: usize = 2000;
    let coef = |k: usize| -> f64 {
        let m = (k / 2) as f64;
        if k % 2 == 0 {
            m * (b - m) * x / ((a + 2.0 * m - 1.0) * (a + 2.0 * m))
        } else {
            -(a + m) * (a + b + m) * x / ((a + 2.0 * m) * (a + 2.0 * m + 1.0))
        }
    };
    let mut tail = 1.0;
    for k in (1..=DEPTH).rev() {
        tail = 1.0 + coef(k) / tail;
    }
    let ln_front =
        a * x.ln() + b * (1.0 - x).ln() - (stirling_ln_gamma(a) + stirling_ln_gamma(b) - stirling_ln_gamma(a + b));
    ln_front.exp() / (a * tail)
}

pub fn f_cdf_oracle(x: f64, d1: f64, d2: f64) -> f64 {
    beta_reg_backward(d1 / 2.0, d2 / 2.0, d1 * x / (d1 * x + d2))
}

/// Central differences of `f` at `x` with step `h` per coordinate.
pub fn central_gradient(f: impl Fn(&DVector<f64>) -> f64, x: &DVector<f64>, h: f64) -> DVector<f64> {
    DVector::from_fn(x.len(), |j, _| {
        let mut up = x.clone();
        let mut down = x.clone();
        up[j] += h;
        down[j] -= h;
        (f(&up) - f(&down)) / (2.0 * h)
    })
}

pub fn names(p: usize) -> Vec<String> {
    (0..p).map(|j| format!("x{}", j + 1)).collect()
}

pub fn ipd_from(values: DMatrix<f64>) -> IpdMatrix {
    let p = values.nrows();
    IpdMatrix::new(values, names(p)).unwrap()
}

pub fn normal_cloud(rng: &mut ChaCha8Rng, p: usize, n: usize) -> IpdMatrix {
    ipd_from(DMatrix::from_fn(p, n, |_, _| rng.sample(StandardNormal)))
}

/// Bivariate normal with unit variances and correlation `rho`, scaled per axis.
pub fn correlated_cloud(rng: &mut ChaCha8Rng, n: usize, rho: f64, scale: (f64, f64)) -> IpdMatrix {
    let z = Normal::new(0.0, 1.0).unwrap();
    let mut m = DMatrix::zeros(2, n);
    for i in 0..n {
        let a: f64 = z.sample(rng);
        let b: f64 = z.sample(rng);
        m[(0, i)] = scale.0 * a;
        m[(1, i)] = scale.1 * (rho * a + (1.0 - rho * rho).sqrt() * b);
    }
    ipd_from(m)
}

/// Binary covariates with per-covariate prevalence drawn from [0.2, 0.8].
pub fn binary_cloud(rng: &mut ChaCha8Rng, p: usize, n: usize) -> IpdMatrix {
    let prevalence: Vec<f64> = (0..p).map(|_| rng.random_range(0.2..0.8)).collect();
    ipd_from(DMatrix::from_fn(p, n, |j, _| {
        if rng.random::<f64>() < prevalence[j] {
            1.0
        } else {
            0.0
        }
    }))
}

/// Aggregate means equal to a strictly positive random reweighting of the
/// patients, hence in the relative interior of their hull.
pub fn interior_target(rng: &mut ChaCha8Rng, ipd: &IpdMatrix, spread: f64) -> AdVector {
    let w: Vec<f64> = (0..ipd.n())
        .map(|_| (spread * rng.sample::<f64, _>(StandardNormal)).exp())
        .collect();
    let total: f64 = w.iter().sum();
    let x = ipd.values() * DVector::from_vec(w) / total;
    AdVector::for_ipd(ipd, x.as_slice(), None).unwrap()
}

/// `max_j |sum_i w_i y_ij / sum_i w_i - x_j|` on the raw scale.
pub fn raw_moment_residual(ipd: &IpdMatrix, ad: &AdVector, w: &[f64]) -> f64 {
    let total: f64 = w.iter().sum();
    let m = ipd.values() * DVector::from_column_slice(w) / total;
    (m - ad.values()).amax()
}

/// Feasibility invariants of a convex weight vector on standardized residuals.
pub fn convex_violation(ipd: &IpdMatrix, ad: &AdVector, w: &[f64]) -> (f64, f64, f64) {
    let sds = ipd.sample_sds().map(|s| if s > 0.0 { s } else { 1.0 });
    let m = ipd.values() * DVector::from_column_slice(w);
    let residual = (m - ad.values()).component_div(&sds).amax();
    let min = w.iter().copied().fold(f64::INFINITY, f64::min);
    let sum: f64 = w.iter().sum();
    (residual, min, (sum - 1.0).abs())
}

/// Kolmogorov-Smirnov distance of a sample from Uniform(0, 1).
pub fn ks_uniform(sample: &[f64]) -> f64 {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &u)| ((i as f64 + 1.0) / n - u).max(u - i as f64 / n))
        .fold(0.0, f64::max)
}

/// Spearman correlation with average ranks, written independently of the library.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            for &k in &idx[i..=j] {
                r[k] = (i + j) as f64 / 2.0 + 1.0;
            }
            i = j + 1;
        }
        r
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}
