//! Boundary residual processing: per-segment interpolation `q` of
//! `g - u_h|_Γ`, the L2(Γ) projection `J_h` onto continuous piecewise
//! polynomials, and the data oscillations.

use faer::sparse::{SparseColMat, Triplet};

use crate::bem_kernels::{BoundaryPoint, PotentialField, TraceFn};
use crate::error::FemError;
use crate::mesh::{BoundaryMesh, LayerMesh, Point};
use crate::quadrature::{cgl_nodes, gauss};
use crate::treecode::Treecode;

/// Discontinuous piecewise polynomial on the boundary: monomial coefficients
/// in the local parameter `xi ∈ [0, 1]`, one row of `degree + 1` per segment.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryPoly {
    pub degree: usize,
    pub coeffs: Vec<f64>,
}

impl BoundaryPoly {
    pub fn row(&self, i: usize) -> &[f64] {
        let k = self.degree + 1;
        &self.coeffs[i * k..(i + 1) * k]
    }

    #[inline]
    pub fn eval(&self, i: usize, xi: f64) -> f64 {
        self.row(i).iter().rev().fold(0.0, |acc, c| acc * xi + c)
    }

    /// Derivative with respect to `xi`.
    #[inline]
    pub fn deriv(&self, i: usize, xi: f64) -> f64 {
        let r = self.row(i);
        let mut acc = 0.0;
        for k in (1..r.len()).rev() {
            acc = acc * xi + k as f64 * r[k];
        }
        acc
    }

    pub fn len(&self) -> usize {
        self.coeffs.len() / (self.degree + 1)
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Interpolate nodal values given at the CGL nodes of every segment.
    pub fn from_cgl_values(degree: usize, values: &[f64]) -> Self {
        Self::from_values(&cgl_nodes(degree), values)
    }

    /// Interpolate values given at the same local `nodes` on every segment.
    pub fn from_values(nodes: &[f64], values: &[f64]) -> Self {
        let k = nodes.len();
        let degree = k - 1;
        let inv = vandermonde_inverse(nodes);
        let mut coeffs = vec![0.0; values.len()];
        for (row, vals) in coeffs.chunks_mut(k).zip(values.chunks(k)) {
            for (r, c) in row.iter_mut().enumerate() {
                *c = (0..k).map(|j| inv[r][j] * vals[j]).sum();
            }
        }
        Self { degree, coeffs }
    }

    /// Interpolant of a function of the boundary position.
    pub fn interpolate(bnd: &BoundaryMesh, degree: usize, f: impl Fn(Point) -> f64) -> Self {
        let nodes = cgl_nodes(degree);
        let values: Vec<f64> = (0..bnd.len())
            .flat_map(|i| nodes.iter().map(move |&xi| (i, xi)))
            .map(|(i, xi)| f(bnd.point_at(i, xi)))
            .collect();
        Self::from_cgl_values(degree, &values)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            degree: self.degree,
            coeffs: self.coeffs.iter().map(|v| c * v).collect(),
        }
    }
}

/// Inverse of the Vandermonde matrix `V[j][r] = x_j^r` (small, by Gauss–Jordan).
fn vandermonde_inverse(x: &[f64]) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut a: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut row: Vec<f64> = (0..n).map(|r| x[j].powi(r as i32)).collect();
            row.extend((0..n).map(|c| if c == j { 1.0 } else { 0.0 }));
            row
        })
        .collect();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&p, &q| a[p][col].abs().total_cmp(&a[q][col].abs()))
            .unwrap();
        a.swap(col, piv);
        let d = a[col][col];
        for v in a[col].iter_mut() {
            *v /= d;
        }
        for r in 0..n {
            if r != col {
                let f = a[r][col];
                if f != 0.0 {
                    for c in 0..2 * n {
                        a[r][c] -= f * a[col][c];
                    }
                }
            }
        }
    }
    // a = [I | V^{-1}] where V maps coefficients to values: coeffs = V^{-1} values.
    a.into_iter().map(|row| row[n..].to_vec()).collect()
}

/// Interpolation nodes for the residual on each segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NodeFamily {
    /// Interior Gauss–Legendre nodes; the segment means of `q` are then the
    /// Gauss quadrature of the residual means.
    #[default]
    GaussLegendre,
    /// Chebyshev–Gauss–Lobatto nodes including both endpoints.
    ChebyshevLobatto,
}

impl NodeFamily {
    pub fn nodes(self, degree: usize) -> Vec<f64> {
        match self {
            NodeFamily::GaussLegendre => gauss(degree + 1).nodes.clone(),
            NodeFamily::ChebyshevLobatto => cgl_nodes(degree),
        }
    }
}

/// Interpolate `g - u_h|_Γ` at `degree + 1` nodes per segment.
pub fn interpolate_residual(
    bnd: &BoundaryMesh,
    g: &(dyn Fn(Point) -> f64 + Sync),
    field: &PotentialField,
    degree: usize,
    family: NodeFamily,
) -> BoundaryPoly {
    let nodes = family.nodes(degree);
    let bps: Vec<BoundaryPoint> = (0..bnd.len())
        .flat_map(|i| {
            nodes
                .iter()
                .map(move |&xi| BoundaryPoint { segment: i, xi })
        })
        .collect();
    let tree = Treecode::new(field);
    let u = tree.trace_many(&bps);
    let values: Vec<f64> = bps
        .iter()
        .zip(&u)
        .map(|(bp, uh)| g(bnd.point_at(bp.segment, bp.xi)) - uh)
        .collect();
    BoundaryPoly::from_values(&nodes, &values)
}

/// Local basis of `S^p` on one segment at `xi`: values for the nodes
/// (start, end[, midpoint]).
#[inline]
fn local_basis(p: usize, xi: f64) -> [f64; 3] {
    match p {
        1 => [1.0 - xi, xi, 0.0],
        _ => [
            (1.0 - xi) * (1.0 - 2.0 * xi),
            xi * (2.0 * xi - 1.0),
            4.0 * xi * (1.0 - xi),
        ],
    }
}

/// Global node numbers (start, end[, midpoint]) of segment `i` in `S^p`.
#[inline]
fn local_nodes(n: usize, succ: &[usize], i: usize) -> [usize; 3] {
    [i, succ[i], n + i]
}

/// L2(Γ) projection onto `S^p` of a function given per segment and local
/// parameter, with an `order`-point Gauss rule per segment.
pub fn project_with(
    bnd: &BoundaryMesh,
    p: usize,
    order: usize,
    f: impl Fn(usize, f64) -> f64,
) -> Result<TraceFn, FemError> {
    assert!(p == 1 || p == 2, "projection degree must be 1 or 2");
    let n = bnd.len();
    let succ = bnd.successors();
    let m = n * p;
    let k = p + 1;
    let rule = gauss(order);
    let mut trip = Vec::with_capacity(n * k * k);
    let mut rhs = vec![0.0; m];
    // Exact mass matrix from a rule of sufficient order.
    let mrule = gauss(3);
    for i in 0..n {
        let l = bnd.length[i];
        let nodes = local_nodes(n, &succ, i);
        for (xi, w) in mrule.nodes.iter().zip(&mrule.weights) {
            let phi = local_basis(p, *xi);
            for a in 0..k {
                for b in 0..k {
                    trip.push(Triplet::new(nodes[a], nodes[b], w * l * phi[a] * phi[b]));
                }
            }
        }
        for (xi, w) in rule.nodes.iter().zip(&rule.weights) {
            let phi = local_basis(p, *xi);
            let v = f(i, *xi);
            for a in 0..k {
                rhs[nodes[a]] += w * l * phi[a] * v;
            }
        }
    }
    let mass = SparseColMat::<usize, f64>::try_new_from_triplets(m, m, &trip)
        .map_err(|e| FemError::Factorization(format!("{e:?}")))?;
    let llt = mass
        .sp_cholesky(faer::Side::Lower)
        .map_err(|e| FemError::Factorization(format!("{e:?}")))?;
    let b = faer::Mat::<f64>::from_fn(m, 1, |r, _| rhs[r]);
    let x = faer::linalg::solvers::Solve::solve(&llt, &b);
    Ok(TraceFn {
        degree: p,
        values: (0..m).map(|r| x[(r, 0)]).collect(),
    })
}

/// `J_h q`: projection of a boundary polynomial, exact quadrature.
pub fn project_l2(bnd: &BoundaryMesh, q: &BoundaryPoly, p: usize) -> Result<TraceFn, FemError> {
    let order = (q.degree + p) / 2 + 1;
    project_with(bnd, p, order, |i, xi| q.eval(i, xi))
}

/// `J_h g` for a function of the boundary position (16-point Gauss per segment).
pub fn project_fn(
    bnd: &BoundaryMesh,
    p: usize,
    g: &dyn Fn(Point) -> f64,
) -> Result<TraceFn, FemError> {
    project_with(bnd, p, 16, |i, xi| g(bnd.point_at(i, xi)))
}

/// Data oscillations `diam(F) ‖∂_t (q - J_h q)‖²_{L2(F)}`.
#[derive(Debug, Clone)]
pub struct OscillationResult {
    pub per_segment: Vec<f64>,
    /// Aggregated onto the layer elements (local layer numbering).
    pub per_element: Vec<f64>,
    pub total_sq: f64,
}

/// Per-segment oscillations only.
pub fn segment_oscillations(bnd: &BoundaryMesh, q: &BoundaryPoly, jq: &TraceFn) -> Vec<f64> {
    let succ = bnd.successors();
    let rule = gauss(q.degree.max(jq.degree));
    (0..bnd.len())
        .map(|i| {
            // diam(F) * ∫ (d/ds)^2 ds = ∫_0^1 (d/dξ)^2 dξ on a straight segment.
            rule.integrate(0.0, 1.0, |xi| {
                let d = q.deriv(i, xi) - jq.deriv(i, succ[i], xi);
                d * d
            })
        })
        .collect()
}

pub fn oscillations(
    bnd: &BoundaryMesh,
    q: &BoundaryPoly,
    jq: &TraceFn,
    layer: &LayerMesh,
) -> OscillationResult {
    let per_segment = segment_oscillations(bnd, q, jq);
    let mut per_element = vec![0.0; layer.num_elements()];
    for (i, &v) in per_segment.iter().enumerate() {
        per_element[layer.segment_element[i]] += v;
    }
    let total_sq = per_segment.iter().sum();
    OscillationResult {
        per_segment,
        per_element,
        total_sq,
    }
}

/// `⟨q - J_h q, ψ⟩` for all basis functions ψ of `S^p`.
pub fn orthogonality_residual(bnd: &BoundaryMesh, q: &BoundaryPoly, jq: &TraceFn) -> Vec<f64> {
    let n = bnd.len();
    let p = jq.degree;
    let succ = bnd.successors();
    let rule = gauss((q.degree + p) / 2 + 1);
    let mut r = vec![0.0; n * p];
    for i in 0..n {
        let l = bnd.length[i];
        let nodes = local_nodes(n, &succ, i);
        for (xi, w) in rule.nodes.iter().zip(&rule.weights) {
            let phi = local_basis(p, *xi);
            let d = q.eval(i, *xi) - jq.eval(i, succ[i], *xi);
            for a in 0..=p {
                r[nodes[a]] += w * l * phi[a] * d;
            }
        }
    }
    r
}

/// `‖q - v‖_{L2(Γ)}` for a trace `v`.
pub fn l2_distance(bnd: &BoundaryMesh, q: &BoundaryPoly, v: &TraceFn) -> f64 {
    let succ = bnd.successors();
    let rule = gauss(q.degree.max(v.degree) + 1);
    (0..bnd.len())
        .map(|i| {
            bnd.length[i]
                * rule.integrate(0.0, 1.0, |xi| {
                    let d = q.eval(i, xi) - v.eval(i, succ[i], xi);
                    d * d
                })
        })
        .sum::<f64>()
        .sqrt()
}

/// A trace viewed as a boundary polynomial of degree `p`.
pub fn trace_as_poly(bnd: &BoundaryMesh, v: &TraceFn) -> BoundaryPoly {
    let succ = bnd.successors();
    let nodes = cgl_nodes(v.degree);
    let values: Vec<f64> = (0..bnd.len())
        .flat_map(|i| nodes.iter().map(move |&xi| (i, xi)))
        .map(|(i, xi)| v.eval(i, succ[i], xi))
        .collect();
    BoundaryPoly::from_cgl_values(v.degree, &values)
}
