//! Single- and double-layer operators of the 2D Laplacian on polygonal
//! boundaries, `G(z) = -(1/2π) log|z|`.
//!
//! All segment integrals of the kernel are evaluated from closed-form
//! primitives. Matrix entries need one more integration over the test
//! segment, done by Gauss–Legendre on pieces that are geometrically graded
//! toward the source segment.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::BemError;
use crate::mesh::{cross, dist, dot, sub, BoundaryMesh, Point};
use crate::quadrature::gauss;

const INV_2PI: f64 = 0.5 / PI;

/// Piecewise constant density, one value per boundary segment.
pub type P0Density = Vec<f64>;

/// Continuous piecewise polynomial of degree 1 or 2 on the boundary.
///
/// `values[i]` is the value at boundary vertex `i` (start of segment `i`);
/// for degree 2, `values[n + i]` is the value at the midpoint of segment `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceFn {
    pub degree: usize,
    pub values: Vec<f64>,
}

impl TraceFn {
    pub fn zeros(boundary: &BoundaryMesh, degree: usize) -> Self {
        Self {
            degree,
            values: vec![0.0; boundary.len() * degree],
        }
    }

    pub fn constant(boundary: &BoundaryMesh, degree: usize, c: f64) -> Self {
        Self {
            degree,
            values: vec![c; boundary.len() * degree],
        }
    }

    /// Nodal interpolant of `f`.
    pub fn interpolate(boundary: &BoundaryMesh, degree: usize, f: impl Fn(Point) -> f64) -> Self {
        let n = boundary.len();
        let mut values: Vec<f64> = boundary.points.iter().map(|&p| f(p)).collect();
        if degree == 2 {
            values.extend((0..n).map(|i| f(boundary.point_at(i, 0.5))));
        }
        Self { degree, values }
    }

    /// Value at local parameter `xi` of segment `i`; `next` is the successor segment.
    #[inline]
    pub fn eval(&self, i: usize, next: usize, xi: f64) -> f64 {
        let (a, b) = (self.values[i], self.values[next]);
        match self.degree {
            1 => a + xi * (b - a),
            _ => {
                let m = self.values[self.values.len() / 2 + i];
                a * (1.0 - xi) * (1.0 - 2.0 * xi)
                    + m * 4.0 * xi * (1.0 - xi)
                    + b * xi * (2.0 * xi - 1.0)
            }
        }
    }

    /// Derivative with respect to `xi` (multiply by `1/L` for arclength).
    #[inline]
    pub fn deriv(&self, i: usize, next: usize, xi: f64) -> f64 {
        let (a, b) = (self.values[i], self.values[next]);
        match self.degree {
            1 => b - a,
            _ => {
                let m = self.values[self.values.len() / 2 + i];
                a * (4.0 * xi - 3.0) + m * (4.0 - 8.0 * xi) + b * (4.0 * xi - 1.0)
            }
        }
    }
}

/// Local coordinates of `x` relative to segment `[a, b]`: returns
/// `(L, u1, u2, eta)` with `u1 = -s`, `u2 = L - s`, `s` the tangential and
/// `eta` the signed normal coordinate (normal `(t_y, -t_x)`).
#[inline]
fn local(a: Point, b: Point, x: Point) -> (f64, f64, f64, f64) {
    let d = sub(b, a);
    let l = d[0].hypot(d[1]);
    let t = [d[0] / l, d[1] / l];
    let p = sub(x, a);
    let s = dot(p, t);
    let eta = p[0] * t[1] - p[1] * t[0];
    (l, -s, l - s, eta)
}

#[inline]
fn xlog(u: f64, r2: f64) -> f64 {
    if r2 == 0.0 {
        0.0
    } else {
        u * r2.ln()
    }
}

/// `∫_[a,b] log|x - y| ds_y` for any point `x` (weakly singular on the segment).
pub fn slp_segment(a: Point, b: Point, x: Point) -> f64 {
    let (l, u1, u2, eta) = local(a, b, x);
    let e2 = eta * eta;
    let r1 = u1 * u1 + e2;
    let r2 = u2 * u2 + e2;
    let logs = if r1.min(r2) > 4.0 * l * l {
        // Far from the segment: avoid cancellation between the two logs.
        l * r2.ln() - u1 * (-(l * (u1 + u2)) / r2).ln_1p()
    } else {
        xlog(u2, r2) - xlog(u1, r1)
    };
    0.5 * logs - l + eta * (eta * l).atan2(u1 * u2 + e2)
}

/// Signed angle subtended by `[a, b]` at `x` and `log(r2/r1)`.
#[inline]
fn angle_log(l: f64, u1: f64, u2: f64, eta: f64) -> (f64, f64) {
    let e2 = eta * eta;
    let r1 = u1 * u1 + e2;
    let r2 = u2 * u2 + e2;
    let theta = (eta * l).atan2(u1 * u2 + e2);
    let lg = if r1.min(r2) > 4.0 * l * l {
        0.5 * ((l * (u1 + u2)) / r1).ln_1p()
    } else {
        0.5 * (r2 / r1).ln()
    };
    (theta, lg)
}

/// `(K̃_F g)(x) = ∫_F ∂_{n(y)} G(x - y) g(y) ds_y` for `g` linear from `ga`
/// at `a` to `gb` at `b`, `x` off the segment.
pub fn dlp_segment(a: Point, b: Point, ga: f64, gb: f64, x: Point) -> f64 {
    let (l, u1, u2, eta) = local(a, b, x);
    let (theta, lg) = angle_log(l, u1, u2, eta);
    let s = -u1;
    // On the carrier line `η log(r2/r1)` vanishes, also at the endpoints.
    let elg = if eta == 0.0 { 0.0 } else { eta * lg };
    INV_2PI * (ga * theta + (gb - ga) / l * (s * theta + elg))
}

#[inline]
fn cplx(p: Point) -> Complex64 {
    Complex64::new(p[0], p[1])
}

/// `Log((z - a)/(z - b))` computed without branch problems.
#[inline]
fn log_ratio(a: Point, b: Point, x: Point) -> Complex64 {
    let p = sub(x, a);
    let q = sub(x, b);
    let r1 = dot(p, p);
    let r2 = dot(q, q);
    let d = sub(b, a);
    let l2 = dot(d, d);
    let re = if r1.min(r2) > 4.0 * l2 {
        0.5 * (dot(d, [p[0] + q[0], p[1] + q[1]]) / r2).ln_1p()
    } else {
        0.5 * (r1 / r2).ln()
    };
    Complex64::new(re, cross(q, p).atan2(dot(p, q)))
}

/// Gradient of `x ↦ ∫_[a,b] log|x - y| ds_y`, `x` off the segment.
pub fn slp_segment_grad(a: Point, b: Point, x: Point) -> Point {
    let d = sub(b, a);
    let l = d[0].hypot(d[1]);
    let tc = Complex64::new(d[0] / l, -d[1] / l);
    let f = log_ratio(a, b, x) * tc;
    [f.re, -f.im]
}

/// Gradient of [`dlp_segment`] in `x`.
pub fn dlp_segment_grad(a: Point, b: Point, ga: f64, gb: f64, x: Point) -> Point {
    let d = sub(b, a);
    let l = d[0].hypot(d[1]);
    let t = Complex64::new(d[0] / l, d[1] / l);
    let z = cplx(x);
    let za = z - cplx(a);
    let zb = z - cplx(b);
    let lam = log_ratio(a, b, x);
    let dlam = za.inv() - zb.inv();
    let tinv = t.conj();
    let psi_d = ga * dlam * tinv + (gb - ga) / l * tinv * tinv * (lam + za * dlam);
    let h = Complex64::new(0.0, -INV_2PI) * t * psi_d;
    [h.re, -h.im]
}

/// Distance between two segments (zero if they touch).
pub(crate) fn segment_distance(a: Point, b: Point, c: Point, d: Point) -> f64 {
    let pd = |p: Point, a: Point, b: Point| -> f64 {
        let ab = sub(b, a);
        let t = (dot(sub(p, a), ab) / dot(ab, ab)).clamp(0.0, 1.0);
        dist(p, [a[0] + t * ab[0], a[1] + t * ab[1]])
    };
    pd(a, c, d)
        .min(pd(b, c, d))
        .min(pd(c, a, b))
        .min(pd(d, a, b))
}

/// Gauss order for a piece of length `len` at distance `d` from the source.
#[inline]
fn order_for(len: f64, d: f64) -> usize {
    let delta = 2.0 * d / len;
    let rho = 1.0 + delta + (delta * (2.0 + delta)).sqrt();
    let n = (34.6 / (2.0 * rho.ln())).ceil() as usize + 1;
    n.clamp(3, 16)
}

/// `∫_[p,q] f(x) ds_x` where `f` is smooth except on the segment `[c, d]`:
/// the outer segment is split until each piece is no longer than its
/// distance to `[c, d]`, pieces touching `[c, d]` are graded geometrically.
fn outer_integral(p: Point, q: Point, c: Point, d: Point, f: &impl Fn(Point) -> f64) -> f64 {
    let len = dist(p, q);
    let mut total = 0.0;
    // Work list of parameter intervals on [0, 1].
    let mut stack = vec![(0.0f64, 1.0f64, 0u32)];
    while let Some((t0, t1, depth)) = stack.pop() {
        let x0 = lerp(p, q, t0);
        let x1 = lerp(p, q, t1);
        let plen = len * (t1 - t0);
        let dd = segment_distance(x0, x1, c, d);
        if plen > dd && depth < 36 {
            let tm = 0.5 * (t0 + t1);
            stack.push((tm, t1, depth + 1));
            stack.push((t0, tm, depth + 1));
            continue;
        }
        let n = if dd == 0.0 { 16 } else { order_for(plen, dd) };
        let r = gauss(n);
        let mut s = 0.0;
        for (xi, w) in r.nodes.iter().zip(&r.weights) {
            s += w * f(lerp(x0, x1, *xi));
        }
        total += s * plen;
    }
    total
}

#[inline]
pub(crate) fn lerp(a: Point, b: Point, t: f64) -> Point {
    [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
}

/// `∫_F ∫_F' log|x - y|` for segments sharing the endpoint `v`, with far
/// endpoints `pa` (on F) and `pb` (on F'). Exact by the dilation identity
/// `a ∂_a I + b ∂_b I = 2 I + a b`.
fn log_adjacent(v: Point, pa: Point, pb: Point) -> f64 {
    let a = dist(v, pa);
    let b = dist(v, pb);
    0.5 * (a * slp_segment(v, pb, pa) + b * slp_segment(v, pa, pb) - a * b)
}

/// Galerkin entry `-(1/2π) ∫_F ∫_F' log|x - y|` of segments `i` and `j`.
pub fn galerkin_entry(bnd: &BoundaryMesh, succ: &[usize], i: usize, j: usize) -> f64 {
    let (a, b) = (bnd.points[i], bnd.points[succ[i]]);
    if i == j {
        let l = bnd.length[i];
        return -INV_2PI * l * l * (l.ln() - 1.5);
    }
    let (c, d) = (bnd.points[j], bnd.points[succ[j]]);
    let v = if succ[i] == j {
        Some((b, a, d))
    } else if succ[j] == i {
        Some((a, b, c))
    } else {
        None
    };
    if let Some((v, pa, pb)) = v {
        return -INV_2PI * log_adjacent(v, pa, pb);
    }
    // Outer integration over the shorter segment.
    let (p, q, c, d) = if bnd.length[i] <= bnd.length[j] {
        (a, b, c, d)
    } else {
        (c, d, a, b)
    };
    -INV_2PI * outer_integral(p, q, c, d, &|x| slp_segment(c, d, x))
}

/// Check the geometric preconditions shared by all assembly routines.
pub fn check_boundary(bnd: &BoundaryMesh) -> Result<(), BemError> {
    if let Some(i) = bnd.length.iter().position(|&l| !(l > 0.0)) {
        return Err(BemError::DegenerateSegment(i));
    }
    let diam = bnd.diameter();
    if diam >= 1.0 {
        return Err(BemError::DiameterTooLarge(diam));
    }
    Ok(())
}

/// Dense symmetric Galerkin matrix of the single-layer operator for P0.
pub fn assemble_slp_galerkin(bnd: &BoundaryMesh) -> Result<faer::Mat<f64>, BemError> {
    check_boundary(bnd)?;
    let n = bnd.len();
    let succ = bnd.successors();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| (i..n).map(|j| galerkin_entry(bnd, &succ, i, j)).collect())
        .collect();
    let mut m = faer::Mat::<f64>::zeros(n, n);
    for (i, row) in rows.iter().enumerate() {
        for (k, &v) in row.iter().enumerate() {
            m[(i, i + k)] = v;
            m[(i + k, i)] = v;
        }
    }
    Ok(m)
}

/// Dense collocation matrix `(V χ_F')(x_F)` at segment midpoints.
pub fn assemble_slp_collocation(bnd: &BoundaryMesh) -> Result<faer::Mat<f64>, BemError> {
    check_boundary(bnd)?;
    let n = bnd.len();
    let succ = bnd.successors();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let x = lerp(bnd.points[i], bnd.points[succ[i]], 0.5);
            (0..n)
                .map(|j| -INV_2PI * slp_segment(bnd.points[j], bnd.points[succ[j]], x))
                .collect()
        })
        .collect();
    Ok(faer::Mat::from_fn(n, n, |i, j| rows[i][j]))
}

/// Galerkin right-hand side `⟨(K + 1/2) g_h, χ_F⟩` for a degree-1 trace `g_h`.
pub fn assemble_direct_rhs(bnd: &BoundaryMesh, g: &TraceFn) -> Result<Vec<f64>, BemError> {
    check_boundary(bnd)?;
    assert_eq!(g.degree, 1, "direct right-hand side needs a degree-1 trace");
    let n = bnd.len();
    let succ = bnd.successors();
    let gv = &g.values;
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let (a, b) = (bnd.points[i], bnd.points[succ[i]]);
            let mut s = 0.0;
            for j in 0..n {
                if j == i {
                    // Principal value of the own contribution vanishes.
                    continue;
                }
                let (c, d) = (bnd.points[j], bnd.points[succ[j]]);
                let (gc, gd) = (gv[j], gv[succ[j]]);
                s += outer_integral(a, b, c, d, &|x| dlp_segment(c, d, gc, gd, x));
            }
            s + 0.25 * bnd.length[i] * (gv[i] + gv[succ[i]])
        })
        .collect())
}

/// The potential `u_h = Ṽφ_h - K̃g_h` induced by boundary densities.
#[derive(Debug, Clone)]
pub struct PotentialField {
    pub boundary: BoundaryMesh,
    /// Single-layer density φ_h.
    pub slp: P0Density,
    /// Optional double-layer density g_h (degree 1).
    pub dlp: Option<TraceFn>,
}

/// A point on Γ given by segment index and local parameter in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryPoint {
    pub segment: usize,
    pub xi: f64,
}

impl PotentialField {
    pub fn single_layer(boundary: BoundaryMesh, phi: P0Density) -> Self {
        Self {
            boundary,
            slp: phi,
            dlp: None,
        }
    }

    /// Locate `x` on Γ (within a relative tolerance of the local segment length).
    pub fn locate(&self, x: Point) -> Option<BoundaryPoint> {
        let b = &self.boundary;
        let succ = b.successors();
        for i in 0..b.len() {
            let (l, u1, _, eta) = local(b.points[i], b.points[succ[i]], x);
            let s = -u1;
            if eta.abs() <= 1e-13 * l && s >= -1e-13 * l && s <= l * (1.0 + 1e-13) {
                return Some(BoundaryPoint {
                    segment: i,
                    xi: (s / l).clamp(0.0, 1.0),
                });
            }
        }
        None
    }

    /// `u_h(x)` by direct summation of the closed forms. For points on Γ the
    /// trace from the computational domain is returned.
    pub fn eval_value(&self, x: Point) -> f64 {
        if self.dlp.is_some() {
            if let Some(bp) = self.locate(x) {
                return self.eval_trace(bp);
            }
        }
        let b = &self.boundary;
        let succ = b.successors();
        let mut v = 0.0;
        for i in 0..b.len() {
            let (a, c) = (b.points[i], b.points[succ[i]]);
            if self.slp[i] != 0.0 {
                v -= INV_2PI * self.slp[i] * slp_segment(a, c, x);
            }
            if let Some(g) = &self.dlp {
                v -= dlp_segment(a, c, g.values[i], g.values[succ[i]], x);
            }
        }
        v
    }

    /// `∇u_h(x)` by direct summation; fails on Γ.
    pub fn eval_gradient(&self, x: Point) -> Result<Point, BemError> {
        if self.locate(x).is_some() {
            return Err(BemError::GradientOnBoundary(x[0], x[1]));
        }
        let b = &self.boundary;
        let succ = b.successors();
        let mut g = [0.0, 0.0];
        for i in 0..b.len() {
            let (a, c) = (b.points[i], b.points[succ[i]]);
            let s = slp_segment_grad(a, c, x);
            g[0] -= INV_2PI * self.slp[i] * s[0];
            g[1] -= INV_2PI * self.slp[i] * s[1];
            if let Some(t) = &self.dlp {
                let d = dlp_segment_grad(a, c, t.values[i], t.values[succ[i]], x);
                g[0] -= d[0];
                g[1] -= d[1];
            }
        }
        Ok(g)
    }

    /// Trace of `u_h` on Γ from the computational domain,
    /// `Vφ_h + (1/2 - K) g_h`.
    pub fn eval_trace(&self, bp: BoundaryPoint) -> f64 {
        let b = &self.boundary;
        let succ = b.successors();
        let x = b.point_at(bp.segment, bp.xi);
        let mut v = 0.0;
        for i in 0..b.len() {
            if self.slp[i] != 0.0 {
                v -= INV_2PI * self.slp[i] * slp_segment(b.points[i], b.points[succ[i]], x);
            }
        }
        if let Some(g) = &self.dlp {
            v -= dlp_on_boundary(b, &succ, g, bp);
            let i = bp.segment;
            v += 0.5 * g.eval(i, succ[i], bp.xi);
        }
        v
    }
}

/// Direct value `K g_h` at a boundary point without the jump term: the own
/// segment contributes nothing, a neighbour sharing the point contributes its
/// limit along the own segment.
pub(crate) fn dlp_on_boundary(
    b: &BoundaryMesh,
    succ: &[usize],
    g: &TraceFn,
    bp: BoundaryPoint,
) -> f64 {
    let mut v = 0.0;
    for j in 0..b.len() {
        v += dlp_boundary_term(b, succ, g, bp, j);
    }
    v
}

/// Contribution of segment `j` to `K g_h` at the boundary point `bp`.
#[inline]
pub(crate) fn dlp_boundary_term(
    b: &BoundaryMesh,
    succ: &[usize],
    g: &TraceFn,
    bp: BoundaryPoint,
    j: usize,
) -> f64 {
    let i = bp.segment;
    if j == i {
        return 0.0;
    }
    let (c, d) = (b.points[j], b.points[succ[j]]);
    let (gc, gd) = (g.values[j], g.values[succ[j]]);
    let t = b.tangent[i];
    let tj = b.tangent[j];
    // Limits at the shared vertex, approached along segment i.
    if bp.xi == 0.0 && succ[j] == i {
        // x is the end of j; direction into segment i is +t.
        let th = cross(t, tj).atan2(dot(t, tj));
        return INV_2PI * gd * th;
    }
    if bp.xi == 1.0 && succ[i] == j {
        // x is the start of j; direction into segment i is -t.
        let th = cross(tj, t).atan2(dot(tj, t));
        return INV_2PI * gc * th;
    }
    let x = b.point_at(i, bp.xi);
    dlp_segment(c, d, gc, gd, x)
}
