//! Batched evaluation of a [`PotentialField`] by a cluster tree with complex
//! multipole expansions. Nearby segments are always summed with the exact
//! closed forms, so accuracy is limited only by the expansion truncation.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::bem_kernels::{
    dlp_boundary_term, dlp_segment, dlp_segment_grad, slp_segment, slp_segment_grad, BoundaryPoint,
    PotentialField,
};
use crate::mesh::Point;
use crate::quadrature::gauss;

const INV_2PI: f64 = 0.5 / std::f64::consts::PI;
const ORDER: usize = 40;
const MAC: f64 = 0.5;
const LEAF: usize = 12;

#[derive(Debug, Clone)]
struct Node {
    lo: usize,
    hi: usize,
    center: Complex64,
    radius: f64,
    children: Option<(usize, usize)>,
    /// Total single-layer charge.
    charge: f64,
    /// Scaled coefficients of `(R/(z-c))^k`, `k = 1..=ORDER`.
    coeff: Vec<Complex64>,
}

/// Cluster tree over the boundary segments of a potential field.
#[derive(Debug, Clone)]
pub struct Treecode<'a> {
    field: &'a PotentialField,
    succ: Vec<usize>,
    nodes: Vec<Node>,
}

impl<'a> Treecode<'a> {
    pub fn new(field: &'a PotentialField) -> Self {
        let succ = field.boundary.successors();
        let mut t = Self {
            field,
            succ,
            nodes: Vec::new(),
        };
        let n = field.boundary.len();
        if n > 0 {
            t.build(0, n);
        }
        t
    }

    fn build(&mut self, lo: usize, hi: usize) -> usize {
        let b = &self.field.boundary;
        let (mut xmin, mut xmax, mut ymin, mut ymax) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for i in lo..hi {
            for p in [b.points[i], b.points[self.succ[i]]] {
                xmin = xmin.min(p[0]);
                xmax = xmax.max(p[0]);
                ymin = ymin.min(p[1]);
                ymax = ymax.max(p[1]);
            }
        }
        let c = [0.5 * (xmin + xmax), 0.5 * (ymin + ymax)];
        let mut radius: f64 = 0.0;
        for i in lo..hi {
            for p in [b.points[i], b.points[self.succ[i]]] {
                radius = radius.max((p[0] - c[0]).hypot(p[1] - c[1]));
            }
        }
        let id = self.nodes.len();
        let (charge, coeff) = self.moments(lo, hi, c, radius);
        self.nodes.push(Node {
            lo,
            hi,
            center: Complex64::new(c[0], c[1]),
            radius,
            children: None,
            charge,
            coeff,
        });
        if hi - lo > LEAF {
            let mid = lo + (hi - lo) / 2;
            let l = self.build(lo, mid);
            let r = self.build(mid, hi);
            self.nodes[id].children = Some((l, r));
        }
        id
    }

    fn moments(&self, lo: usize, hi: usize, c: Point, radius: f64) -> (f64, Vec<Complex64>) {
        let b = &self.field.boundary;
        let rule = gauss(ORDER / 2 + 2);
        let r = radius.max(f64::MIN_POSITIVE);
        let cc = Complex64::new(c[0], c[1]);
        let mut charge = 0.0;
        // a[k] = Σ φ ∫ w^k, bb[k] = Σ N ∫ g w^k with w = (y - c)/R.
        let mut a = vec![Complex64::new(0.0, 0.0); ORDER + 1];
        let mut bb = vec![Complex64::new(0.0, 0.0); ORDER + 1];
        for i in lo..hi {
            let (p, q) = (b.points[i], b.points[self.succ[i]]);
            let l = b.length[i];
            let phi = self.field.slp[i];
            charge += phi * l;
            let nrm = Complex64::new(b.normal[i][0], b.normal[i][1]);
            let (ga, gb) = match &self.field.dlp {
                Some(g) => (g.values[i], g.values[self.succ[i]]),
                None => (0.0, 0.0),
            };
            for (xi, w) in rule.nodes.iter().zip(&rule.weights) {
                let y = Complex64::new(p[0] + xi * (q[0] - p[0]), p[1] + xi * (q[1] - p[1]));
                let wz = (y - cc) / r;
                let gw = ga + xi * (gb - ga);
                let wl = w * l;
                let mut pw = Complex64::new(1.0, 0.0);
                for k in 0..=ORDER {
                    a[k] += pw * (phi * wl);
                    if self.field.dlp.is_some() {
                        bb[k] += pw * nrm * (gw * wl);
                    }
                    pw *= wz;
                }
            }
        }
        let coeff = (1..=ORDER)
            .map(|k| bb[k - 1] / r - a[k] / k as f64)
            .collect();
        (charge, coeff)
    }

    /// Expansion value and derivative of `W` with `u = Re W`.
    #[inline]
    fn far(&self, node: &Node, z: Complex64) -> (Complex64, Complex64) {
        let dz = z - node.center;
        let w = node.radius / dz;
        // Horner for Σ m_k w^k and Σ k m_k w^k.
        let mut s = Complex64::new(0.0, 0.0);
        let mut ds = Complex64::new(0.0, 0.0);
        for k in (1..=ORDER).rev() {
            s = (s + node.coeff[k - 1]) * w;
            ds = (ds + node.coeff[k - 1] * k as f64) * w;
        }
        let val = -INV_2PI * (node.charge * dz.ln() + s);
        let der = -INV_2PI * (node.charge - ds) / dz;
        (val, der)
    }

    #[inline]
    fn is_far(node: &Node, z: Complex64) -> bool {
        (z - node.center).norm() * MAC > node.radius
    }

    /// `u_h(x)` and `∇u_h(x)` for a point off Γ.
    pub fn value_grad(&self, x: Point) -> (f64, Point) {
        let z = Complex64::new(x[0], x[1]);
        let b = &self.field.boundary;
        let mut val = 0.0;
        let mut grad = [0.0, 0.0];
        let mut acc = Complex64::new(0.0, 0.0);
        let mut dacc = Complex64::new(0.0, 0.0);
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            if Self::is_far(node, z) {
                let (v, d) = self.far(node, z);
                acc += v;
                dacc += d;
                continue;
            }
            if let Some((l, r)) = node.children {
                stack.push(r);
                stack.push(l);
                continue;
            }
            for i in node.lo..node.hi {
                let (p, q) = (b.points[i], b.points[self.succ[i]]);
                let phi = self.field.slp[i];
                if phi != 0.0 {
                    val -= INV_2PI * phi * slp_segment(p, q, x);
                    let g = slp_segment_grad(p, q, x);
                    grad[0] -= INV_2PI * phi * g[0];
                    grad[1] -= INV_2PI * phi * g[1];
                }
                if let Some(t) = &self.field.dlp {
                    let (ga, gb) = (t.values[i], t.values[self.succ[i]]);
                    val -= dlp_segment(p, q, ga, gb, x);
                    let g = dlp_segment_grad(p, q, ga, gb, x);
                    grad[0] -= g[0];
                    grad[1] -= g[1];
                }
            }
        }
        (val + acc.re, [grad[0] + dacc.re, grad[1] - dacc.im])
    }

    /// Trace of `u_h` from the computational domain at a boundary point.
    pub fn trace(&self, bp: BoundaryPoint) -> f64 {
        let b = &self.field.boundary;
        let x = b.point_at(bp.segment, bp.xi);
        let z = Complex64::new(x[0], x[1]);
        let mut val = 0.0;
        let mut acc = Complex64::new(0.0, 0.0);
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            if Self::is_far(node, z) {
                acc += self.far(node, z).0;
                continue;
            }
            if let Some((l, r)) = node.children {
                stack.push(r);
                stack.push(l);
                continue;
            }
            for i in node.lo..node.hi {
                let phi = self.field.slp[i];
                if phi != 0.0 {
                    val -= INV_2PI * phi * slp_segment(b.points[i], b.points[self.succ[i]], x);
                }
                if let Some(t) = &self.field.dlp {
                    val -= dlp_boundary_term(b, &self.succ, t, bp, i);
                }
            }
        }
        if let Some(t) = &self.field.dlp {
            val += 0.5 * t.eval(bp.segment, self.succ[bp.segment], bp.xi);
        }
        val + acc.re
    }

    /// Values and gradients at many interior points.
    pub fn value_grad_many(&self, xs: &[Point]) -> Vec<(f64, Point)> {
        xs.par_iter().map(|&x| self.value_grad(x)).collect()
    }

    /// Traces at many boundary points.
    pub fn trace_many(&self, bps: &[BoundaryPoint]) -> Vec<f64> {
        bps.par_iter().map(|&bp| self.trace(bp)).collect()
    }
}
