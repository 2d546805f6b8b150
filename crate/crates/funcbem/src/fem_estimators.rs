//! Finite element problems on the boundary layer `S` that bound the
//! potential error: the majorant from a discrete harmonic extension of
//! `J_h(g - u_h|_Γ)`, and two minorants from divergence-free fluxes
//! (lowest-order Raviart–Thomas, and curls of Lagrange functions).

use std::collections::HashMap;

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;

use crate::bem_kernels::TraceFn;
use crate::boundary_trace::BoundaryPoly;
use crate::error::FemError;
use crate::mesh::{cross, sub, LayerMesh, Point, VertexTag};
use crate::quadrature::{gauss, triangle7};

/// Classification of a layer degree of freedom.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DofKind {
    Interior,
    /// On Γ, with the index of the matching trace node.
    Gamma(usize),
    GammaC,
}

/// Lagrange space of degree 1 or 2 on the layer.
#[derive(Debug, Clone)]
pub struct LayerSpace {
    pub degree: usize,
    /// Per element: 3 vertex dofs, then for degree 2 the midpoints of the
    /// edges (0,1), (1,2), (2,0).
    pub elem_dofs: Vec<[usize; 6]>,
    pub kind: Vec<DofKind>,
}

fn key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl LayerSpace {
    pub fn new(layer: &LayerMesh, degree: usize) -> Self {
        assert!(
            degree == 1 || degree == 2,
            "layer elements must be P1 or P2"
        );
        let nv = layer.points.len();
        let nseg = layer.gamma_edges.len();
        let mut bvertex = vec![usize::MAX; nv];
        for (i, &v) in layer.boundary_to_local.iter().enumerate() {
            bvertex[v] = i;
        }
        let mut kind: Vec<DofKind> = (0..nv)
            .map(|v| match layer.tag[v] {
                VertexTag::Interior => DofKind::Interior,
                VertexTag::OnGamma => DofKind::Gamma(bvertex[v]),
                VertexTag::OnGammaC => DofKind::GammaC,
            })
            .collect();
        let mut elem_dofs = Vec::with_capacity(layer.num_elements());
        if degree == 1 {
            for t in &layer.local_elements {
                elem_dofs.push([t[0], t[1], t[2], 0, 0, 0]);
            }
            return Self {
                degree,
                elem_dofs,
                kind,
            };
        }
        let gamma: HashMap<(usize, usize), usize> = layer
            .gamma_edges
            .iter()
            .map(|&(s, a, b)| (key(a, b), s))
            .collect();
        let gammac: std::collections::HashSet<(usize, usize)> =
            layer.gammac_edges.iter().map(|e| key(e[0], e[1])).collect();
        let mut edge: HashMap<(usize, usize), usize> = HashMap::new();
        for t in &layer.local_elements {
            let mut d = [t[0], t[1], t[2], 0, 0, 0];
            for k in 0..3 {
                let e = key(t[k], t[(k + 1) % 3]);
                let id = *edge.entry(e).or_insert_with(|| {
                    kind.push(if let Some(&s) = gamma.get(&e) {
                        DofKind::Gamma(nseg + s)
                    } else if gammac.contains(&e) {
                        DofKind::GammaC
                    } else {
                        DofKind::Interior
                    });
                    kind.len() - 1
                });
                d[3 + k] = id;
            }
            elem_dofs.push(d);
        }
        Self {
            degree,
            elem_dofs,
            kind,
        }
    }

    pub fn ndof(&self) -> usize {
        self.kind.len()
    }

    pub fn nloc(&self) -> usize {
        if self.degree == 1 {
            3
        } else {
            6
        }
    }
}

/// Gradients of the barycentric coordinates and the area.
fn bary_grads(p: [Point; 3]) -> ([Point; 3], f64) {
    let area = 0.5 * cross(sub(p[1], p[0]), sub(p[2], p[0]));
    let s = 0.5 / area;
    (
        [
            [(p[1][1] - p[2][1]) * s, (p[2][0] - p[1][0]) * s],
            [(p[2][1] - p[0][1]) * s, (p[0][0] - p[2][0]) * s],
            [(p[0][1] - p[1][1]) * s, (p[1][0] - p[0][0]) * s],
        ],
        area,
    )
}

/// Element stiffness matrix (row-major `nloc x nloc`).
fn element_stiffness(p: [Point; 3], degree: usize) -> Vec<f64> {
    let (g, area) = bary_grads(p);
    let d = |a: Point, b: Point| a[0] * b[0] + a[1] * b[1];
    if degree == 1 {
        let mut k = vec![0.0; 9];
        for i in 0..3 {
            for j in 0..3 {
                k[i * 3 + j] = area * d(g[i], g[j]);
            }
        }
        return k;
    }
    let mut k = vec![0.0; 36];
    for (l, w) in triangle7() {
        let gr = p2_grads(&l, &g);
        for i in 0..6 {
            for j in 0..6 {
                k[i * 6 + j] += w * area * d(gr[i], gr[j]);
            }
        }
    }
    k
}

/// Gradients of the six P2 basis functions at barycentric point `l`.
fn p2_grads(l: &[f64; 3], g: &[Point; 3]) -> [Point; 6] {
    let mut out = [[0.0; 2]; 6];
    for i in 0..3 {
        let c = 4.0 * l[i] - 1.0;
        out[i] = [c * g[i][0], c * g[i][1]];
    }
    for k in 0..3 {
        let (i, j) = (k, (k + 1) % 3);
        out[3 + k] = [
            4.0 * (l[i] * g[j][0] + l[j] * g[i][0]),
            4.0 * (l[i] * g[j][1] + l[j] * g[i][1]),
        ];
    }
    out
}

fn factor_error<E: std::fmt::Debug>(e: E) -> FemError {
    FemError::Factorization(format!("{e:?}"))
}

fn spd_solve(
    n: usize,
    trip: &[Triplet<usize, usize, f64>],
    rhs: &[f64],
) -> Result<Vec<f64>, FemError> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let a = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, trip).map_err(factor_error)?;
    let llt = a.sp_cholesky(faer::Side::Lower).map_err(factor_error)?;
    let b = Mat::<f64>::from_fn(n, 1, |i, _| rhs[i]);
    let x = llt.solve(&b);
    Ok((0..n).map(|i| x[(i, 0)]).collect())
}

/// Discrete harmonic extension and its energy per element.
#[derive(Debug, Clone)]
pub struct MajorantResult {
    pub space: LayerSpace,
    /// Coefficients of `w_h` for every layer dof.
    pub w: Vec<f64>,
    /// `η_h(T) = ‖∇w_h‖_{L2(T)}` per layer element.
    pub eta: Vec<f64>,
    /// `‖∇w_h‖_{L2(S)}`.
    pub majorant: f64,
    /// Number of free unknowns.
    pub free_dofs: usize,
    /// Relative residual of the free stiffness rows.
    pub residual: f64,
}

/// Majorant: Lagrange FEM of degree `jq.degree` with data `J_h q` on Γ and
/// zero on Γ^c.
pub fn solve_majorant(layer: &LayerMesh, jq: &TraceFn) -> Result<MajorantResult, FemError> {
    let p = jq.degree;
    let space = LayerSpace::new(layer, p);
    let n = space.ndof();
    let nloc = space.nloc();
    let mut w = vec![0.0; n];
    let mut free = vec![usize::MAX; n];
    let mut nfree = 0;
    for (d, k) in space.kind.iter().enumerate() {
        match *k {
            DofKind::Gamma(t) => w[d] = jq.values[t],
            DofKind::GammaC => {}
            DofKind::Interior => {
                free[d] = nfree;
                nfree += 1;
            }
        }
    }
    let mut trip = Vec::new();
    let mut rhs = vec![0.0; nfree];
    let mut kel = Vec::with_capacity(layer.num_elements());
    for (e, t) in layer.local_elements.iter().enumerate() {
        let k = element_stiffness(t.map(|v| layer.points[v]), p);
        let dofs = &space.elem_dofs[e][..nloc];
        for i in 0..nloc {
            let fi = free[dofs[i]];
            if fi == usize::MAX {
                continue;
            }
            for j in 0..nloc {
                let fj = free[dofs[j]];
                let v = k[i * nloc + j];
                if fj == usize::MAX {
                    rhs[fi] -= v * w[dofs[j]];
                } else {
                    trip.push(Triplet::new(fi, fj, v));
                }
            }
        }
        kel.push(k);
    }
    let x = spd_solve(nfree, &trip, &rhs)?;
    for d in 0..n {
        if free[d] != usize::MAX {
            w[d] = x[free[d]];
        }
    }
    // Residual of the free rows and element energies.
    let mut res = vec![0.0; nfree];
    let mut eta = Vec::with_capacity(layer.num_elements());
    let mut total = 0.0;
    for (e, k) in kel.iter().enumerate() {
        let dofs = &space.elem_dofs[e][..nloc];
        let mut en = 0.0;
        for i in 0..nloc {
            let mut row = 0.0;
            for j in 0..nloc {
                row += k[i * nloc + j] * w[dofs[j]];
            }
            en += w[dofs[i]] * row;
            if free[dofs[i]] != usize::MAX {
                res[free[dofs[i]]] += row;
            }
        }
        let en = en.max(0.0);
        total += en;
        eta.push(en.sqrt());
    }
    let rn = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
    let residual = if rn > 0.0 {
        res.iter().map(|v| v * v).sum::<f64>().sqrt() / rn
    } else {
        0.0
    };
    Ok(MajorantResult {
        space,
        w,
        eta,
        majorant: total.sqrt(),
        free_dofs: nfree,
        residual,
    })
}

/// Edge data of the lowest-order Raviart–Thomas space on the layer.
#[derive(Debug, Clone)]
pub struct RtSpace {
    /// Local vertex pairs of all layer edges, `(lo, hi)`.
    pub edges: Vec<(usize, usize)>,
    /// Per element: global edge opposite local vertex `k` and its sign.
    pub elem_edges: Vec<[(usize, f64); 3]>,
    /// Boundary segment of each edge on Γ.
    pub gamma_segment: Vec<Option<usize>>,
    pub on_gammac: Vec<bool>,
}

impl RtSpace {
    pub fn new(layer: &LayerMesh) -> Self {
        let mut id: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edges = Vec::new();
        let mut elem_edges = Vec::with_capacity(layer.num_elements());
        for t in &layer.local_elements {
            let mut ee = [(0usize, 0.0f64); 3];
            for k in 0..3 {
                // Edge opposite vertex k.
                let (a, b) = (t[(k + 1) % 3], t[(k + 2) % 3]);
                let e = key(a, b);
                let gid = *id.entry(e).or_insert_with(|| {
                    edges.push(e);
                    edges.len() - 1
                });
                // Global normal: (lo -> hi) rotated clockwise; outward iff
                // the opposite vertex lies on its negative side.
                let (lo, hi) = (layer.points[e.0], layer.points[e.1]);
                let d = sub(hi, lo);
                let n = [d[1], -d[0]];
                let pk = sub(layer.points[t[k]], lo);
                let s = if pk[0] * n[0] + pk[1] * n[1] < 0.0 {
                    1.0
                } else {
                    -1.0
                };
                ee[k] = (gid, s);
            }
            elem_edges.push(ee);
        }
        let mut gamma_segment = vec![None; edges.len()];
        for &(s, a, b) in &layer.gamma_edges {
            gamma_segment[id[&key(a, b)]] = Some(s);
        }
        let mut on_gammac = vec![false; edges.len()];
        for e in &layer.gammac_edges {
            on_gammac[id[&key(e[0], e[1])]] = true;
        }
        Self {
            edges,
            elem_edges,
            gamma_segment,
            on_gammac,
        }
    }
}

/// Mixed minorant: divergence-free flux and its local contributions.
#[derive(Debug, Clone)]
pub struct MinorantResult {
    pub space: RtSpace,
    /// Normal-component coefficient per edge (global orientation).
    pub tau: Vec<f64>,
    /// Multiplier per element.
    pub omega: Vec<f64>,
    pub minorant: f64,
    /// `ν_h(T) = 2⟨q, n·τ_h⟩_{Γ∩∂T} - ‖τ_h‖²_T`.
    pub nu: Vec<f64>,
    /// `max_T |div τ_h|` relative to `max_T Σ_E |E| |τ_E| / |T|`.
    pub max_rel_div: f64,
}

/// RT0 mass matrix of one element: `∫_T ψ_i · ψ_j` for the element-local
/// basis `ψ_k = |E_k|/(2|T|) (x - P_k)` (outward normal component one).
fn rt0_mass(p: [Point; 3]) -> ([f64; 9], [f64; 3], f64) {
    let area = 0.5 * cross(sub(p[1], p[0]), sub(p[2], p[0]));
    let len = [
        dist2(p[1], p[2]).sqrt(),
        dist2(p[2], p[0]).sqrt(),
        dist2(p[0], p[1]).sqrt(),
    ];
    let mut m = [0.0; 9];
    for (l, w) in triangle7() {
        let x = [
            l[0] * p[0][0] + l[1] * p[1][0] + l[2] * p[2][0],
            l[0] * p[0][1] + l[1] * p[1][1] + l[2] * p[2][1],
        ];
        let psi: Vec<Point> = (0..3)
            .map(|k| {
                let c = len[k] / (2.0 * area);
                [c * (x[0] - p[k][0]), c * (x[1] - p[k][1])]
            })
            .collect();
        for i in 0..3 {
            for j in 0..3 {
                m[i * 3 + j] += w * area * (psi[i][0] * psi[j][0] + psi[i][1] * psi[j][1]);
            }
        }
    }
    (m, len, area)
}

fn dist2(a: Point, b: Point) -> f64 {
    let d = sub(a, b);
    d[0] * d[0] + d[1] * d[1]
}

/// `∫_0^1 q_i(ξ) dξ` exactly.
fn segment_mean(q: &BoundaryPoly, i: usize) -> f64 {
    gauss(q.degree / 2 + 1).integrate(0.0, 1.0, |xi| q.eval(i, xi))
}

/// Mixed minorant with RT0 fluxes and P0 multipliers; Γ^c fluxes pinned to zero.
pub fn solve_minorant_mixed(
    layer: &LayerMesh,
    q: &BoundaryPoly,
    seg_length: &[f64],
) -> Result<MinorantResult, FemError> {
    let space = RtSpace::new(layer);
    let ne = space.edges.len();
    let nt = layer.num_elements();
    let mut free = vec![usize::MAX; ne];
    let mut nf = 0;
    for e in 0..ne {
        if !space.on_gammac[e] {
            free[e] = nf;
            nf += 1;
        }
    }
    let n = nf + nt;
    let mut trip = Vec::new();
    let mut rhs = vec![0.0; n];
    let mut masses = Vec::with_capacity(nt);
    for (t, tri) in layer.local_elements.iter().enumerate() {
        let (m, len, _) = rt0_mass(tri.map(|v| layer.points[v]));
        let ee = space.elem_edges[t];
        for i in 0..3 {
            let (gi, si) = ee[i];
            let fi = free[gi];
            if fi == usize::MAX {
                continue;
            }
            for j in 0..3 {
                let (gj, sj) = ee[j];
                let fj = free[gj];
                if fj != usize::MAX {
                    trip.push(Triplet::new(fi, fj, si * sj * m[i * 3 + j]));
                }
            }
            let b = si * len[i];
            trip.push(Triplet::new(fi, nf + t, b));
            trip.push(Triplet::new(nf + t, fi, b));
        }
        masses.push(m);
    }
    // ⟨q, n·σ_E⟩ for Γ edges: the global basis has normal component one
    // along its global normal, which on Γ is the element-outward normal
    // times the element sign.
    let mut gamma_sign = vec![0.0; ne];
    for t in 0..nt {
        for &(g, s) in &space.elem_edges[t] {
            if space.gamma_segment[g].is_some() {
                gamma_sign[g] = s;
            }
        }
    }
    let mut qint = vec![0.0; ne];
    for e in 0..ne {
        if let Some(seg) = space.gamma_segment[e] {
            qint[e] = seg_length[seg] * segment_mean(q, seg);
            rhs[free[e]] = gamma_sign[e] * qint[e];
        }
    }
    let a = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &trip).map_err(factor_error)?;
    let lu = a.sp_lu().map_err(factor_error)?;
    let b = Mat::<f64>::from_fn(n, 1, |i, _| rhs[i]);
    let x = lu.solve(&b);
    let mut tau = vec![0.0; ne];
    for e in 0..ne {
        if free[e] != usize::MAX {
            tau[e] = x[(free[e], 0)];
        }
    }
    let omega: Vec<f64> = (0..nt).map(|t| x[(nf + t, 0)]).collect();
    let mut nu = vec![0.0; nt];
    let (mut max_div, mut max_scale): (f64, f64) = (0.0, 0.0);
    for (t, tri) in layer.local_elements.iter().enumerate() {
        let ee = space.elem_edges[t];
        let c: Vec<f64> = (0..3).map(|k| ee[k].1 * tau[ee[k].0]).collect();
        let m = &masses[t];
        let mut en = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                en += c[i] * m[i * 3 + j] * c[j];
            }
        }
        let mut bnd = 0.0;
        for k in 0..3 {
            let g = ee[k].0;
            if space.gamma_segment[g].is_some() {
                bnd += 2.0 * qint[g] * c[k];
            }
        }
        nu[t] = bnd - en;
        let (_, len, area) = rt0_mass(tri.map(|v| layer.points[v]));
        let div: f64 = (0..3).map(|k| len[k] * c[k]).sum::<f64>() / area;
        let scale: f64 = (0..3).map(|k| (len[k] * c[k]).abs()).sum::<f64>() / area;
        max_div = max_div.max(div.abs());
        max_scale = max_scale.max(scale);
    }
    let max_rel_div = if max_scale > 0.0 {
        max_div / max_scale
    } else {
        0.0
    };
    let minorant = nu.iter().sum();
    Ok(MinorantResult {
        space,
        tau,
        omega,
        minorant,
        nu,
        max_rel_div,
    })
}

/// Minorant from `curl w̃_h` with `w̃_h ∈ S^p` vanishing on Γ^c.
#[derive(Debug, Clone)]
pub struct CurlMinorantResult {
    pub space: LayerSpace,
    pub wtilde: Vec<f64>,
    pub minorant: f64,
}

/// 1D Lagrange basis derivatives on a Γ edge in the local parameter for the
/// nodes (start, end[, midpoint]).
fn edge_basis_deriv(p: usize, xi: f64) -> [f64; 3] {
    match p {
        1 => [-1.0, 1.0, 0.0],
        _ => [4.0 * xi - 3.0, 4.0 * xi - 1.0, 4.0 - 8.0 * xi],
    }
}

/// Curl minorant: `(∇w̃, ∇φ) = ⟨q, n·curl φ⟩_Γ` with `n·curl φ = -∂_t φ`
/// for the loop tangent `t` and normal `n = (t_y, -t_x)`.
pub fn solve_minorant_curl(
    layer: &LayerMesh,
    q: &BoundaryPoly,
    p: usize,
) -> Result<CurlMinorantResult, FemError> {
    let space = LayerSpace::new(layer, p);
    let n = space.ndof();
    let nloc = space.nloc();
    let mut free = vec![usize::MAX; n];
    let mut nf = 0;
    let any_gammac = space.kind.contains(&DofKind::GammaC);
    for (d, k) in space.kind.iter().enumerate() {
        let pinned = match k {
            DofKind::GammaC => true,
            // Without Γ^c the solution is fixed up to a constant.
            _ => !any_gammac && d == 0,
        };
        if !pinned {
            free[d] = nf;
            nf += 1;
        }
    }
    let mut trip = Vec::new();
    let mut kel = Vec::with_capacity(layer.num_elements());
    for (e, t) in layer.local_elements.iter().enumerate() {
        let k = element_stiffness(t.map(|v| layer.points[v]), p);
        let dofs = &space.elem_dofs[e][..nloc];
        for i in 0..nloc {
            let fi = free[dofs[i]];
            if fi == usize::MAX {
                continue;
            }
            for j in 0..nloc {
                let fj = free[dofs[j]];
                if fj != usize::MAX {
                    trip.push(Triplet::new(fi, fj, k[i * nloc + j]));
                }
            }
        }
        kel.push(k);
    }
    // Right-hand side -∫_F q dφ/dξ dξ on every Γ edge.
    let mut load = vec![0.0; n];
    let rule = gauss((q.degree + p) / 2 + 1);
    for &(seg, a, b) in &layer.gamma_edges {
        let e = layer.segment_element[seg];
        let dofs = &space.elem_dofs[e];
        let t = layer.local_elements[e];
        let mut nodes = [usize::MAX; 3];
        for k in 0..3 {
            if t[k] == a {
                nodes[0] = dofs[k];
            }
            if t[k] == b {
                nodes[1] = dofs[k];
            }
            if p == 2 && key(t[k], t[(k + 1) % 3]) == key(a, b) {
                nodes[2] = dofs[3 + k];
            }
        }
        for (xi, w) in rule.nodes.iter().zip(&rule.weights) {
            let dphi = edge_basis_deriv(p, *xi);
            let qv = q.eval(seg, *xi);
            for k in 0..(p + 1) {
                load[nodes[k]] -= w * qv * dphi[k];
            }
        }
    }
    let rhs: Vec<f64> = {
        let mut r = vec![0.0; nf];
        for d in 0..n {
            if free[d] != usize::MAX {
                r[free[d]] = load[d];
            }
        }
        r
    };
    let x = spd_solve(nf, &trip, &rhs)?;
    let mut wt = vec![0.0; n];
    for d in 0..n {
        if free[d] != usize::MAX {
            wt[d] = x[free[d]];
        }
    }
    let lw: f64 = (0..n).map(|d| load[d] * wt[d]).sum();
    let mut energy = 0.0;
    for (e, k) in kel.iter().enumerate() {
        let dofs = &space.elem_dofs[e][..nloc];
        for i in 0..nloc {
            for j in 0..nloc {
                energy += wt[dofs[i]] * k[i * nloc + j] * wt[dofs[j]];
            }
        }
    }
    Ok(CurlMinorantResult {
        space,
        wtilde: wt,
        minorant: 2.0 * lw - energy,
    })
}
