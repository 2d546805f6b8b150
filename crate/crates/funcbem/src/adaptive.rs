//! The adaptive loop: BEM solve, boundary residual, layer estimators, Dörfler
//! marking and newest-vertex bisection.

use crate::bem_solve::{solve, BemConfig, Discretization, Formulation};
use crate::boundary_trace::{interpolate_residual, oscillations, project_l2, NodeFamily};
use crate::error::Error;
use crate::experiments::{potential_error, ExactSolution};
use crate::fem_estimators::{solve_majorant, solve_minorant_curl, solve_minorant_mixed};
use crate::mesh::{
    extract_layer_with, gamma_boundary, initial_mesh, refine_nvb, refine_uniform, Domain,
    LayerRule, Point, TriMesh,
};

/// Marking weights per layer element.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MarkingMode {
    /// `η_h(T)² + osc_h(T)²`.
    #[default]
    Standard,
    /// Width of the local confidence interval `η_h(T) + osc_h(T) - ν_h(T)`,
    /// clipped at zero.
    ConfidenceInterval,
}

#[derive(Debug, Clone)]
pub struct AdaptiveConfig {
    pub theta: f64,
    /// Degree of the majorant space and of `J_h`.
    pub p: usize,
    /// Degree of the residual interpolant `q`.
    pub p_residual: usize,
    /// Tolerance on the majorant.
    pub tol: f64,
    /// Stop once `#F_h^Γ` reaches this many segments.
    pub max_dof: usize,
    pub max_levels: usize,
    pub bem: BemConfig,
    pub marking: MarkingMode,
    /// Refine every layer element by three bisections instead of marking.
    pub uniform: bool,
    pub layer_rule: LayerRule,
    pub nodes: NodeFamily,
    /// Skip the potential error even when the exact solution is known.
    pub skip_error: bool,
}

impl Default for AdaptiveConfig {
    fn default() -> Self {
        Self {
            theta: 0.4,
            p: 1,
            p_residual: 2,
            tol: 1e-12,
            max_dof: 5000,
            max_levels: 200,
            bem: BemConfig::new(Formulation::Indirect, Discretization::Galerkin),
            marking: MarkingMode::Standard,
            uniform: false,
            layer_rule: LayerRule::default(),
            nodes: NodeFamily::default(),
            skip_error: false,
        }
    }
}

impl AdaptiveConfig {
    /// Uniform configuration with `levels` levels.
    pub fn uniform(levels: usize) -> Self {
        Self {
            theta: 1.0,
            uniform: true,
            max_levels: levels,
            max_dof: usize::MAX,
            ..Self::default()
        }
    }

    pub fn is_uniform(&self) -> bool {
        self.uniform || self.theta == 1.0
    }

    pub fn validate(&self) -> Result<(), Error> {
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(Error::Config(format!("theta {} not in (0, 1]", self.theta)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!(
                "tolerance {} must be positive",
                self.tol
            )));
        }
        if !(1..=2).contains(&self.p) {
            return Err(Error::Config(format!("degree {} not in {{1, 2}}", self.p)));
        }
        if self.p_residual < self.p {
            return Err(Error::Config(
                "residual degree below majorant degree".into(),
            ));
        }
        if self.max_levels == 0 {
            return Err(Error::Config("max_levels must be positive".into()));
        }
        self.bem.validate()?;
        Ok(())
    }
}

/// One row of the convergence tables.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateRecord {
    pub level: usize,
    pub n_gamma: usize,
    pub n_layer: usize,
    /// Free unknowns of the majorant problem.
    pub dof: usize,
    pub error: Option<f64>,
    pub majorant: f64,
    /// `sqrt(Σ osc_h(F)²)`.
    pub osc: f64,
    pub minorant: f64,
    /// Minorant of the curl formulation in the majorant space.
    pub minorant_curl: f64,
    pub maj_over_err: Option<f64>,
    pub maj_over_sqrt_min: f64,
    pub bem_residual: f64,
    pub max_rel_div: f64,
}

/// Boundary data and, when available, the exact potential.
pub struct Problem {
    pub domain: Domain,
    pub data: Box<dyn Fn(Point) -> f64 + Send + Sync>,
    pub exact: Option<ExactSolution>,
}

/// Minimal-cardinality set with `Σ_M w ≥ θ Σ w`; ties go to lower indices.
pub fn doerfler_mark(weights: &[f64], theta: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..weights.len()).filter(|&i| weights[i] > 0.0).collect();
    order.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));
    // Summing in the same order as the accumulation makes θ = 1 exact.
    let total: f64 = order.iter().map(|&i| weights[i]).sum();
    if total == 0.0 {
        return Vec::new();
    }
    let target = theta * total;
    let mut acc = 0.0;
    let mut marked = Vec::new();
    for i in order {
        marked.push(i);
        acc += weights[i];
        if acc >= target {
            break;
        }
    }
    marked
}

/// Mesh and level counter of the loop.
#[derive(Debug, Clone)]
pub struct AdaptiveState {
    pub mesh: TriMesh,
    pub level: usize,
}

impl AdaptiveState {
    pub fn new(domain: Domain) -> Self {
        Self {
            mesh: initial_mesh(domain),
            level: 0,
        }
    }
}

/// Estimate on the current mesh; returns the refined state unless the loop
/// should stop.
pub fn adaptive_step(
    config: &AdaptiveConfig,
    problem: &Problem,
    state: &AdaptiveState,
) -> Result<(EstimateRecord, Option<AdaptiveState>), Error> {
    let mesh = &state.mesh;
    let boundary = gamma_boundary(mesh, problem.domain)?;
    let layer = extract_layer_with(mesh, &boundary, config.layer_rule)?;
    let sol = solve(config.bem, &boundary, problem.data.as_ref())?;

    let q = interpolate_residual(
        &boundary,
        problem.data.as_ref(),
        &sol.field,
        config.p_residual,
        config.nodes,
    );
    let jq = project_l2(&boundary, &q, config.p)?;
    let osc = oscillations(&boundary, &q, &jq, &layer);
    let maj = solve_majorant(&layer, &jq)?;
    let min = solve_minorant_mixed(&layer, &q, &boundary.length)?;
    let curl = solve_minorant_curl(&layer, &q, config.p)?;

    let error = match (&problem.exact, config.skip_error) {
        (Some(u), false) => Some(potential_error(mesh, &sol.field, u)?),
        _ => None,
    };
    let majorant = maj.majorant;
    let record = EstimateRecord {
        level: state.level,
        n_gamma: boundary.len(),
        n_layer: layer.num_elements(),
        dof: maj.free_dofs,
        error,
        majorant,
        osc: osc.total_sq.sqrt(),
        minorant: min.minorant,
        minorant_curl: curl.minorant,
        maj_over_err: error.map(|e| majorant / e),
        maj_over_sqrt_min: majorant / min.minorant.sqrt(),
        bem_residual: sol.residual,
        max_rel_div: min.max_rel_div,
    };
    for v in [record.majorant, record.osc, record.minorant] {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::Invariant(format!(
                "estimator value {v} at level {}",
                state.level
            )));
        }
    }

    let done = majorant * majorant <= config.tol * config.tol
        || boundary.len() >= config.max_dof
        || state.level + 1 >= config.max_levels;
    if done {
        return Ok((record, None));
    }

    let refined = if config.is_uniform() {
        refine_uniform(mesh, &layer.elements)
    } else {
        let weights: Vec<f64> = match config.marking {
            MarkingMode::Standard => maj
                .eta
                .iter()
                .zip(&osc.per_element)
                .map(|(e, o)| e * e + o)
                .collect(),
            MarkingMode::ConfidenceInterval => maj
                .eta
                .iter()
                .zip(&osc.per_element)
                .zip(&min.nu)
                .map(|((e, o), n)| (e + o.sqrt() - n).max(0.0))
                .collect(),
        };
        let marked: Vec<usize> = doerfler_mark(&weights, config.theta)
            .into_iter()
            .map(|i| layer.elements[i])
            .collect();
        if marked.is_empty() {
            return Ok((record, None));
        }
        refine_nvb(mesh, &marked)
    };
    Ok((
        record,
        Some(AdaptiveState {
            mesh: refined,
            level: state.level + 1,
        }),
    ))
}

/// Run until the majorant meets the tolerance or a cap is hit.
pub fn adaptive_loop(
    config: &AdaptiveConfig,
    problem: &Problem,
) -> Result<Vec<EstimateRecord>, Error> {
    adaptive_loop_with(config, problem, |_| {})
}

/// [`adaptive_loop`] with a callback after every level.
pub fn adaptive_loop_with(
    config: &AdaptiveConfig,
    problem: &Problem,
    mut on_level: impl FnMut(&EstimateRecord),
) -> Result<Vec<EstimateRecord>, Error> {
    config.validate()?;
    let mut state = AdaptiveState::new(problem.domain);
    let mut records = Vec::new();
    loop {
        let (rec, next) = adaptive_step(config, problem, &state)?;
        on_level(&rec);
        records.push(rec);
        match next {
            Some(s) => state = s,
            None => return Ok(records),
        }
    }
}
