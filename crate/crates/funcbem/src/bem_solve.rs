//! Indirect (single-layer ansatz) and direct (Green representation) boundary
//! element solvers.

use faer::linalg::solvers::Solve;
use faer::Mat;

use crate::bem_kernels::{
    assemble_direct_rhs, assemble_slp_collocation, assemble_slp_galerkin, PotentialField, TraceFn,
};
use crate::boundary_trace::project_fn;
use crate::error::{BemError, Error};
use crate::mesh::{BoundaryMesh, Point};
use crate::quadrature::gauss;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Formulation {
    /// `u = Ṽφ` with an unknown non-physical density.
    Indirect,
    /// `u = Ṽφ - K̃g` with φ the normal derivative.
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Discretization {
    Galerkin,
    Collocation,
}

/// Approximation `g_h ∈ S^1` of the Dirichlet data in the direct formulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DirectData {
    /// Nodal interpolation at the boundary vertices.
    #[default]
    Interpolation,
    /// `J_h g`, the L2(Γ) projection.
    Projection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BemConfig {
    pub formulation: Formulation,
    pub discretization: Discretization,
    pub direct_data: DirectData,
}

impl BemConfig {
    pub fn new(formulation: Formulation, discretization: Discretization) -> Self {
        Self {
            formulation,
            discretization,
            direct_data: DirectData::default(),
        }
    }

    pub fn validate(&self) -> Result<(), BemError> {
        if self.formulation == Formulation::Direct
            && self.discretization == Discretization::Collocation
        {
            return Err(BemError::DirectCollocation);
        }
        Ok(())
    }
}

/// Outcome of a boundary element solve.
#[derive(Debug, Clone)]
pub struct BemSolution {
    pub field: PotentialField,
    /// Relative residual of the linear system.
    pub residual: f64,
}

/// Solve for the configured formulation.
pub fn solve(
    config: BemConfig,
    bnd: &BoundaryMesh,
    g: &(dyn Fn(Point) -> f64 + Sync),
) -> Result<BemSolution, Error> {
    config.validate()?;
    match (config.formulation, config.discretization) {
        (Formulation::Indirect, Discretization::Galerkin) => Ok(solve_indirect_galerkin(bnd, g)?),
        (Formulation::Indirect, Discretization::Collocation) => {
            Ok(solve_indirect_collocation(bnd, g)?)
        }
        (Formulation::Direct, _) => solve_direct_galerkin(bnd, g, config.direct_data),
    }
}

/// `∫_F g` for every segment by 16-point Gauss.
pub fn load_vector(bnd: &BoundaryMesh, g: &dyn Fn(Point) -> f64) -> Vec<f64> {
    let r = gauss(16);
    (0..bnd.len())
        .map(|i| bnd.length[i] * r.integrate(0.0, 1.0, |xi| g(bnd.point_at(i, xi))))
        .collect()
}

fn col(v: &[f64]) -> Mat<f64> {
    Mat::from_fn(v.len(), 1, |i, _| v[i])
}

fn rel_residual(a: &Mat<f64>, x: &Mat<f64>, b: &Mat<f64>) -> f64 {
    let r = a * x - b;
    let nb = b.norm_l2();
    if nb == 0.0 {
        r.norm_l2()
    } else {
        r.norm_l2() / nb
    }
}

fn spd_solve(a: &Mat<f64>, rhs: &[f64]) -> Result<(Vec<f64>, f64), BemError> {
    let b = col(rhs);
    let llt = a
        .llt(faer::Side::Lower)
        .map_err(|_| BemError::NotPositiveDefinite)?;
    let x = llt.solve(&b);
    let res = rel_residual(a, &x, &b);
    Ok(((0..rhs.len()).map(|i| x[(i, 0)]).collect(), res))
}

/// Lowest-order Galerkin BEM for `Vφ = g`.
pub fn solve_indirect_galerkin(
    bnd: &BoundaryMesh,
    g: &(dyn Fn(Point) -> f64 + Sync),
) -> Result<BemSolution, BemError> {
    let a = assemble_slp_galerkin(bnd)?;
    let rhs = load_vector(bnd, g);
    let (phi, residual) = spd_solve(&a, &rhs)?;
    Ok(BemSolution {
        field: PotentialField::single_layer(bnd.clone(), phi),
        residual,
    })
}

/// Estimate of the 1-norm condition number from an LU factorization (Hager).
fn condition_estimate(a: &Mat<f64>, lu: &faer::linalg::solvers::PartialPivLu<f64>) -> f64 {
    let n = a.nrows();
    let norm_a = (0..n)
        .map(|j| (0..n).map(|i| a[(i, j)].abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let mut x = Mat::<f64>::from_fn(n, 1, |_, _| 1.0 / n as f64);
    let mut est = 0.0;
    for _ in 0..5 {
        let y = lu.solve(&x);
        est = (0..n).map(|i| y[(i, 0)].abs()).sum::<f64>();
        let xi = Mat::<f64>::from_fn(n, 1, |i, _| if y[(i, 0)] >= 0.0 { 1.0 } else { -1.0 });
        let z = lu.solve_transpose(&xi);
        let (jmax, zmax) =
            (0..n)
                .map(|i| (i, z[(i, 0)].abs()))
                .fold((0, 0.0), |m, v| if v.1 > m.1 { v } else { m });
        let ztx: f64 = (0..n).map(|i| z[(i, 0)] * x[(i, 0)]).sum();
        if zmax <= ztx {
            break;
        }
        x = Mat::from_fn(n, 1, |i, _| if i == jmax { 1.0 } else { 0.0 });
    }
    norm_a * est
}

/// Collocation BEM `(Vφ)(x_F) = g(x_F)` at segment midpoints.
pub fn solve_indirect_collocation(
    bnd: &BoundaryMesh,
    g: &(dyn Fn(Point) -> f64 + Sync),
) -> Result<BemSolution, BemError> {
    let a = assemble_slp_collocation(bnd)?;
    let rhs: Vec<f64> = (0..bnd.len()).map(|i| g(bnd.point_at(i, 0.5))).collect();
    let b = col(&rhs);
    let lu = a.partial_piv_lu();
    let x = lu.solve(&b);
    let finite = (0..rhs.len()).all(|i| x[(i, 0)].is_finite());
    let residual = if finite {
        rel_residual(&a, &x, &b)
    } else {
        f64::INFINITY
    };
    if !finite || residual > 1e-8 {
        return Err(BemError::IllConditioned(condition_estimate(&a, &lu)));
    }
    Ok(BemSolution {
        field: PotentialField::single_layer(
            bnd.clone(),
            (0..rhs.len()).map(|i| x[(i, 0)]).collect(),
        ),
        residual,
    })
}

/// Galerkin BEM for `Vφ = (K + 1/2) g_h` with a degree-1 trace `g_h`.
pub fn solve_direct_galerkin(
    bnd: &BoundaryMesh,
    g: &(dyn Fn(Point) -> f64 + Sync),
    data: DirectData,
) -> Result<BemSolution, Error> {
    let gh = match data {
        DirectData::Interpolation => TraceFn::interpolate(bnd, 1, g),
        DirectData::Projection => project_fn(bnd, 1, g)?,
    };
    let a = assemble_slp_galerkin(bnd)?;
    let rhs = assemble_direct_rhs(bnd, &gh)?;
    let (phi, residual) = spd_solve(&a, &rhs)?;
    Ok(BemSolution {
        field: PotentialField {
            boundary: bnd.clone(),
            slp: phi,
            dlp: Some(gh),
        },
        residual,
    })
}
