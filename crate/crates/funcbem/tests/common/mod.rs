//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use funcbem::bem_kernels::{galerkin_entry, PotentialField, TraceFn};
use funcbem::bem_solve::{solve, BemConfig, Discretization, Formulation};
use funcbem::boundary_trace::*;
use funcbem::experiments::Example;
use funcbem::fem_estimators::*;
use funcbem::mesh::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub const INV_2PI: f64 = 0.5 / std::f64::consts::PI;

/// Tanh-sinh nodes and weights on `[0, 1]`: positions stored as distances
/// from the nearer endpoint so that endpoint singularities stay resolved.
pub struct TanhSinh {
    /// `(distance from endpoint, weight, at right end)`.
    nodes: Vec<(f64, f64, bool)>,
}

impl TanhSinh {
    pub fn new(h: f64, tmax: f64) -> Self {
        let hp = 0.5 * std::f64::consts::PI;
        let mut nodes = Vec::new();
        let n = (tmax / h) as i64;
        for j in -n..=n {
            let t = j as f64 * h;
            let s = hp * t.sinh();
            // x in (-1, 1); 1 - |x| = 2 / (1 + e^{2|s|}).
            let dist = 1.0 / (1.0 + (2.0 * s.abs()).exp());
            let w = 0.5 * h * hp * t.cosh() / s.cosh().powi(2);
            if dist > 0.0 && w > 0.0 {
                nodes.push((dist, w, s > 0.0));
            }
        }
        Self { nodes }
    }

    pub fn integrate(&self, f: &impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
        let l = b - a;
        self.nodes
            .iter()
            .map(|&(d, w, right)| {
                let x = if right { b - l * d } else { a + l * d };
                w * f(x)
            })
            .sum::<f64>()
            * l
    }

    /// Composite rule on `pieces` equal subintervals.
    pub fn composite(&self, f: &impl Fn(f64) -> f64, a: f64, b: f64, pieces: usize) -> f64 {
        let h = (b - a) / pieces as f64;
        (0..pieces)
            .map(|k| self.integrate(f, a + k as f64 * h, a + (k + 1) as f64 * h))
            .sum()
    }
}

pub fn rule() -> TanhSinh {
    TanhSinh::new(1.0 / 32.0, 3.5)
}

pub fn fine_rule() -> TanhSinh {
    TanhSinh::new(1.0 / 64.0, 4.0)
}

pub fn lerp(a: Point, b: Point, t: f64) -> Point {
    [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
}

/// `-(1/2π) ∫_[a,b] ∫_[c,d] log|x - y|` by nested composite tanh-sinh; the
/// inner integral is split at the foot point of `x` when the segments coincide.
pub fn oracle_entry(a: Point, b: Point, c: Point, d: Point, same: bool) -> f64 {
    let ts = rule();
    let la = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
    let lc = ((d[0] - c[0]).powi(2) + (d[1] - c[1]).powi(2)).sqrt();
    let inner = |s: f64| {
        let x = lerp(a, b, s);
        let k = |t: f64| {
            let y = lerp(c, d, t);
            ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2)).sqrt().ln()
        };
        if same {
            ts.integrate(&k, 0.0, s) + ts.integrate(&k, s, 1.0)
        } else {
            ts.composite(&k, 0.0, 1.0, 4)
        }
    };
    -INV_2PI * la * lc * ts.composite(&inner, 0.0, 1.0, 4)
}

/// Single-segment integral split at the foot point of `x`.
pub fn split_at_foot(k: &impl Fn(f64) -> f64, a: Point, b: Point, x: Point) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1]];
    let t = (((x[0] - a[0]) * d[0] + (x[1] - a[1]) * d[1]) / (d[0] * d[0] + d[1] * d[1]))
        .clamp(0.0, 1.0);
    let ts = fine_rule();
    let mut s = 0.0;
    if t > 0.0 {
        s += ts.composite(k, 0.0, t, 8);
    }
    if t < 1.0 {
        s += ts.composite(k, t, 1.0, 8);
    }
    s
}

/// L-shape boundary after six rounds of random bisection.
pub fn random_boundary(seed: u64) -> BoundaryMesh {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut m = initial_mesh(Domain::LShape);
    for _ in 0..6 {
        let n = m.num_elements();
        let marked: Vec<usize> = (0..5).map(|_| rng.gen_range(0..n)).collect();
        m = refine_nvb(&m, &marked);
    }
    gamma_boundary(&m, Domain::LShape).unwrap()
}

pub fn distance_to_boundary(b: &BoundaryMesh, x: Point) -> f64 {
    (0..b.len())
        .map(|i| {
            let (p, q) = b.endpoints(i);
            let d = [q[0] - p[0], q[1] - p[1]];
            let t = (((x[0] - p[0]) * d[0] + (x[1] - p[1]) * d[1]) / (d[0] * d[0] + d[1] * d[1]))
                .clamp(0.0, 1.0);
            let y = lerp(p, q, t);
            (x[0] - y[0]).hypot(x[1] - y[1])
        })
        .fold(f64::MAX, f64::min)
}

/// Worst relative deviation from the quadrature oracle over `count` random
/// Galerkin entries, split into (non-adjacent, adjacent or diagonal).
pub fn galerkin_oracle_deviation(count: usize) -> (f64, f64) {
    let b = random_boundary(3);
    let succ = b.successors();
    let n = b.len();
    let mut rng = StdRng::seed_from_u64(5);
    let (mut far, mut near) = (0.0f64, 0.0f64);
    for k in 0..count {
        let i = rng.gen_range(0..n);
        let j = match k % 4 {
            0 => i,
            1 => succ[i],
            _ => rng.gen_range(0..n),
        };
        let adjacent = i == j || succ[i] == j || succ[j] == i;
        let v = galerkin_entry(&b, &succ, i, j);
        let o = oracle_entry(
            b.points[i],
            b.points[succ[i]],
            b.points[j],
            b.points[succ[j]],
            i == j,
        );
        let rel = (v - o).abs() / o.abs();
        if adjacent {
            near = near.max(rel);
        } else {
            far = far.max(rel);
        }
    }
    (far, near)
}

/// A density and boundary datum on a refined L-shape, both layers active.
pub fn test_field() -> PotentialField {
    let b = random_boundary(1);
    let n = b.len();
    let phi = (0..n).map(|i| (0.7 * i as f64).cos()).collect();
    let g = TraceFn::interpolate(&b, 1, |p| (2.0 * p[0]).sin() + p[1] * p[1]);
    PotentialField {
        boundary: b,
        slp: phi,
        dlp: Some(g),
    }
}

/// Worst relative deviation of `eval_gradient` from central differences at
/// `count` interior points at least 0.02 away from Γ.
pub fn gradient_fd_deviation(count: usize) -> f64 {
    let f = test_field();
    let mut rng = StdRng::seed_from_u64(2);
    let mut checked = 0;
    let mut worst = 0.0f64;
    while checked < count {
        let x: Point = [rng.gen_range(0.03..0.47), rng.gen_range(0.03..0.47)];
        if !Domain::LShape.contains(x) || distance_to_boundary(&f.boundary, x) < 0.02 {
            continue;
        }
        let h = 1e-5;
        let fd = [
            (f.eval_value([x[0] + h, x[1]]) - f.eval_value([x[0] - h, x[1]])) / (2.0 * h),
            (f.eval_value([x[0], x[1] + h]) - f.eval_value([x[0], x[1] - h])) / (2.0 * h),
        ];
        let g = f.eval_gradient(x).unwrap();
        let scale = g[0].hypot(g[1]).max(1e-3);
        worst = worst.max((g[0] - fd[0]).hypot(g[1] - fd[1]) / scale);
        checked += 1;
    }
    worst
}

pub fn random_mesh(seed: u64, domain: Domain, steps: usize, per_step: usize) -> TriMesh {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut m = initial_mesh(domain);
    for _ in 0..steps {
        let n = m.num_elements();
        let marked: Vec<usize> = (0..per_step).map(|_| rng.gen_range(0..n)).collect();
        m = refine_nvb(&m, &marked);
    }
    m
}

/// Elements sharing a vertex with an element that has a vertex on Γ.
pub fn brute_force_patch(mesh: &TriMesh, bnd: &BoundaryMesh) -> Vec<usize> {
    let on: BTreeSet<usize> = bnd.mesh_vertex.iter().copied().collect();
    let seeds: Vec<usize> = (0..mesh.num_elements())
        .filter(|&e| mesh.elements[e].iter().any(|v| on.contains(v)))
        .collect();
    let seed_vertices: BTreeSet<usize> = seeds.iter().flat_map(|&e| mesh.elements[e]).collect();
    (0..mesh.num_elements())
        .filter(|&e| mesh.elements[e].iter().any(|v| seed_vertices.contains(v)))
        .collect()
}

/// Smallest cardinality of a subset reaching `θ Σ w`, and the largest
/// sum attained by subsets of that cardinality.
pub fn exhaustive_doerfler(weights: &[f64], theta: f64) -> (usize, f64) {
    let total: f64 = weights.iter().sum();
    let mut best = (usize::MAX, 0.0f64);
    for mask in 0u32..(1 << weights.len()) {
        let k = mask.count_ones() as usize;
        if k > best.0 {
            continue;
        }
        let s: f64 = (0..weights.len())
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| weights[i])
            .sum();
        if s >= theta * total * (1.0 - 1e-14) {
            if k < best.0 {
                best = (k, s);
            } else {
                best.1 = best.1.max(s);
            }
        }
    }
    best
}

/// Random weight vectors of length ≤ 12 with zeros and repeated values.
pub fn random_weights(rng: &mut StdRng) -> (Vec<f64>, f64) {
    let n = rng.gen_range(1..=12);
    let weights = (0..n)
        .map(|_| match rng.gen_range(0..6) {
            0 => 0.0,
            1 => 0.25,
            _ => rng.gen_range(0.01..1.0f64).powi(3),
        })
        .collect();
    let theta = if rng.gen_bool(0.25) {
        1.0
    } else {
        rng.gen_range(0.05..1.0)
    };
    (weights, theta)
}

/// Whether `marked` is a minimal Dörfler set of maximal weight.
pub fn doerfler_agrees(weights: &[f64], theta: f64, marked: &[usize]) -> bool {
    let total: f64 = weights.iter().sum();
    if total == 0.0 {
        return marked.is_empty();
    }
    let (k, s) = exhaustive_doerfler(weights, theta);
    let ms: f64 = marked.iter().map(|&i| weights[i]).sum();
    let distinct: BTreeSet<usize> = marked.iter().copied().collect();
    marked.len() == k && distinct.len() == k && (ms - s).abs() <= 1e-12 * total
}

pub fn random_poly(bnd: &BoundaryMesh, degree: usize, seed: u64) -> BoundaryPoly {
    let mut rng = StdRng::seed_from_u64(seed);
    let values: Vec<f64> = (0..bnd.len() * (degree + 1))
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect();
    BoundaryPoly::from_cgl_values(degree, &values)
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Residual of a BEM solution, its projection and all three layer estimators.
pub struct Pipeline {
    pub layer: LayerMesh,
    pub maj: MajorantResult,
    pub min: MinorantResult,
    pub curl: CurlMinorantResult,
}

pub fn pipeline(example: Example, mesh: &TriMesh, p: usize) -> Pipeline {
    let problem = example.problem();
    let b = gamma_boundary(mesh, problem.domain).unwrap();
    let layer = extract_layer(mesh, &b).unwrap();
    let config = match example {
        // Collocation leaves a residual with nonzero segment means.
        Example::Exterior => BemConfig::new(Formulation::Indirect, Discretization::Collocation),
        _ => example.default_bem(),
    };
    let sol = solve(config, &b, problem.data.as_ref()).unwrap();
    let q = interpolate_residual(
        &b,
        problem.data.as_ref(),
        &sol.field,
        p + 1,
        NodeFamily::GaussLegendre,
    );
    let jq = project_l2(&b, &q, p).unwrap();
    let maj = solve_majorant(&layer, &jq).unwrap();
    let min = solve_minorant_mixed(&layer, &q, &b.length).unwrap();
    let curl = solve_minorant_curl(&layer, &q, p).unwrap();
    Pipeline {
        layer,
        maj,
        min,
        curl,
    }
}

pub fn pipeline_cases() -> Vec<(Example, TriMesh)> {
    vec![
        (Example::SquareSmooth, initial_mesh(Domain::Square)),
        (
            Example::LShapeSingular,
            random_mesh(21, Domain::LShape, 6, 3),
        ),
        (Example::SquareDirect, random_mesh(22, Domain::Square, 4, 3)),
        (
            Example::Exterior,
            random_mesh(23, Domain::ExteriorBox, 5, 3),
        ),
    ]
}

/// Measured defects of the structural identities of one estimator run.
#[derive(Debug, Default, Clone, Copy)]
pub struct Defects {
    /// `max_T |div τ_h|` relative to the largest flux coefficient.
    pub divergence: f64,
    /// Largest magnitude of any Γ^c coefficient of `w_h`, `w̃_h`, `τ_h`.
    pub gammac: f64,
    /// `|Σ η² - majorant²| / majorant²`.
    pub eta_sum: f64,
    /// `|Σ ν - 𝕸| / |𝕸|`.
    pub nu_sum: f64,
}

impl Defects {
    pub fn max(self, o: Defects) -> Defects {
        Defects {
            divergence: self.divergence.max(o.divergence),
            gammac: self.gammac.max(o.gammac),
            eta_sum: self.eta_sum.max(o.eta_sum),
            nu_sum: self.nu_sum.max(o.nu_sum),
        }
    }
}

pub fn defects(r: &Pipeline) -> Defects {
    let scale = max_abs(&r.min.tau).max(1e-300);
    let mut divergence = 0.0f64;
    for (e, t) in r.layer.local_elements.iter().enumerate() {
        let p = t.map(|v| r.layer.points[v]);
        let mut div = 0.0;
        for (k, &(edge, sign)) in r.min.space.elem_edges[e].iter().enumerate() {
            let (a, b) = (p[(k + 1) % 3], p[(k + 2) % 3]);
            div += sign * r.min.tau[edge] * (b[0] - a[0]).hypot(b[1] - a[1]);
        }
        divergence = divergence.max((div / r.layer.area(e)).abs() / scale);
    }
    let mut gammac = 0.0f64;
    for (d, k) in r.maj.space.kind.iter().enumerate() {
        if *k == DofKind::GammaC {
            gammac = gammac.max(r.maj.w[d].abs());
        }
    }
    for (d, k) in r.curl.space.kind.iter().enumerate() {
        if *k == DofKind::GammaC {
            gammac = gammac.max(r.curl.wtilde[d].abs());
        }
    }
    for (e, &on) in r.min.space.on_gammac.iter().enumerate() {
        if on {
            gammac = gammac.max(r.min.tau[e].abs());
        }
    }
    let m2 = r.maj.majorant * r.maj.majorant;
    let eta_sq: f64 = r.maj.eta.iter().map(|e| e * e).sum();
    let nu: f64 = r.min.nu.iter().sum();
    Defects {
        divergence,
        gammac,
        eta_sum: (eta_sq - m2).abs() / m2,
        nu_sum: (nu - r.min.minorant).abs() / r.min.minorant.abs().max(1e-300),
    }
}

/// Largest direct Galerkin RHS entry for `g ≡ 1`, and for the direct solve
/// with `g ≡ 1` the largest density and the largest `|u_h - 1|` at 20
/// interior points of the L-shape.
pub fn operator_identity_defects() -> (f64, f64, f64) {
    use funcbem::bem_kernels::assemble_direct_rhs;
    use funcbem::bem_solve::{solve_direct_galerkin, DirectData};
    let m = refine_all(&initial_mesh(Domain::LShape));
    let b = gamma_boundary(&m, Domain::LShape).unwrap();
    let rhs = assemble_direct_rhs(&b, &TraceFn::constant(&b, 1, 1.0)).unwrap();

    let b = gamma_boundary(&initial_mesh(Domain::LShape), Domain::LShape).unwrap();
    let s = solve_direct_galerkin(&b, &|_| 1.0, DirectData::Interpolation).unwrap();
    let mut rng = StdRng::seed_from_u64(8);
    let (mut n, mut dev) = (0, 0.0f64);
    while n < 20 {
        let x: Point = [rng.gen_range(0.01..0.49), rng.gen_range(0.01..0.49)];
        if !Domain::LShape.contains(x) {
            continue;
        }
        dev = dev.max((s.field.eval_value(x) - 1.0).abs());
        n += 1;
    }
    (max_abs(&rhs), max_abs(&s.field.slp), dev)
}

/// Measured defects of the boundary projection.
#[derive(Debug, Default, Clone, Copy)]
pub struct ProjectionDefects {
    /// `max |J(J q) - J q|` over the nodal values.
    pub idempotency: f64,
    /// `max |⟨q - J q, ψ⟩|` over the basis of `S^p`.
    pub orthogonality: f64,
    /// Random competitors closer to `q` than `J q`.
    pub beaten: usize,
    pub competitors: usize,
    /// Largest oscillation of a residual lying in `S^p`.
    pub osc: f64,
}

pub fn projection_defects() -> ProjectionDefects {
    let mut d = ProjectionDefects::default();
    let mut rng = StdRng::seed_from_u64(8);
    for (seed, domain) in [
        (1, Domain::Square),
        (2, Domain::LShape),
        (3, Domain::ExteriorBox),
    ] {
        let m = random_mesh(seed, domain, 5, 3);
        let b = gamma_boundary(&m, domain).unwrap();
        let layer = extract_layer(&m, &b).unwrap();
        let succ = b.successors();
        for p in [1, 2] {
            let q = random_poly(&b, p + 1, seed);
            let jq = project_l2(&b, &q, p).unwrap();
            let jjq = project_l2(&b, &trace_as_poly(&b, &jq), p).unwrap();
            let diff: Vec<f64> = jq
                .values
                .iter()
                .zip(&jjq.values)
                .map(|(a, c)| a - c)
                .collect();
            d.idempotency = d.idempotency.max(max_abs(&diff));
            d.orthogonality = d
                .orthogonality
                .max(max_abs(&orthogonality_residual(&b, &q, &jq)));

            let best = l2_distance(&b, &q, &jq);
            for k in 0..50 {
                let scale = 10f64.powi(-(k % 6));
                let v = TraceFn {
                    degree: p,
                    values: jq
                        .values
                        .iter()
                        .map(|x| x + scale * rng.gen_range(-1.0..1.0))
                        .collect(),
                };
                d.competitors += 1;
                if l2_distance(&b, &q, &v) < best {
                    d.beaten += 1;
                }
            }

            // A member of S^p seen as a degree-(p+1) residual.
            let v = TraceFn {
                degree: p,
                values: (0..b.len() * p).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            };
            let nodes = NodeFamily::GaussLegendre.nodes(p + 1);
            let values: Vec<f64> = (0..b.len())
                .flat_map(|i| nodes.iter().map(move |&xi| (i, xi)))
                .map(|(i, xi)| v.eval(i, succ[i], xi))
                .collect();
            let qv = BoundaryPoly::from_values(&nodes, &values);
            let jqv = project_l2(&b, &qv, p).unwrap();
            d.osc = d.osc.max(oscillations(&b, &qv, &jqv, &layer).total_sq);
        }
    }
    d
}

/// `total` single-element mark/refine steps spread over the three domains,
/// checking conformity and area along the way; returns the steps taken.
pub fn refinement_walk(seed: u64, total: usize) -> Result<usize, String> {
    let mut rng = StdRng::seed_from_u64(seed);
    let domains = [Domain::Square, Domain::LShape, Domain::ExteriorBox];
    let per = total.div_ceil(domains.len());
    let mut steps = 0;
    for domain in domains {
        let mut m = initial_mesh(domain);
        let area = m.total_area();
        for step in 0..per {
            let e = rng.gen_range(0..m.num_elements());
            m = refine_nvb(&m, &[e]);
            steps += 1;
            if step % 97 == 0 || step + 1 == per {
                m.check_conforming()
                    .map_err(|err| format!("{domain:?} step {step}: {err}"))?;
                if (m.total_area() - area).abs() > 1e-12 * area {
                    return Err(format!("{domain:?} step {step}: area drift"));
                }
            }
            // Restart before the mesh becomes expensive to copy.
            if m.num_elements() > 6000 {
                m = initial_mesh(domain);
            }
        }
    }
    Ok(steps)
}

/// Random meshes on which the extracted layer differs from the brute-force patch.
pub fn layer_mismatches(trials: usize) -> usize {
    let domains = [Domain::Square, Domain::LShape, Domain::ExteriorBox];
    (0..trials)
        .filter(|&t| {
            let domain = domains[t % 3];
            let m = random_mesh(11 + t as u64, domain, 1 + t % 9, 1 + t % 4);
            let b = gamma_boundary(&m, domain).unwrap();
            extract_layer(&m, &b).unwrap().elements != brute_force_patch(&m, &b)
        })
        .count()
}
