//! The example problems, the reference potential error by volume quadrature,
//! convergence-rate fitting and CSV output.

use std::fmt;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::adaptive::{adaptive_loop, AdaptiveConfig, EstimateRecord, Problem};
use crate::bem_kernels::PotentialField;
use crate::bem_solve::{BemConfig, Discretization, Formulation};
use crate::error::Error;
use crate::mesh::{refine_all, refine_uniform, Domain, Point, TriMesh};
use crate::quadrature::triangle7;
use crate::treecode::Treecode;

/// Harmonic functions with known values used as exact potentials.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExactSolution {
    /// `cosh(x1) cos(x2)`.
    CoshCos,
    /// `r^{2/3} cos(2φ/3)` in polar coordinates about the origin.
    CornerSingular,
}

impl ExactSolution {
    pub fn value(&self, x: Point) -> f64 {
        match self {
            ExactSolution::CoshCos => x[0].cosh() * x[1].cos(),
            ExactSolution::CornerSingular => {
                let r = x[0].hypot(x[1]);
                let phi = x[1].atan2(x[0]);
                r.powf(2.0 / 3.0) * (2.0 * phi / 3.0).cos()
            }
        }
    }

    pub fn gradient(&self, x: Point) -> Point {
        match self {
            ExactSolution::CoshCos => [x[0].sinh() * x[1].cos(), -x[0].cosh() * x[1].sin()],
            ExactSolution::CornerSingular => {
                let r = x[0].hypot(x[1]);
                let phi = x[1].atan2(x[0]);
                let c = 2.0 / 3.0 * r.powf(-1.0 / 3.0);
                [c * (phi / 3.0).cos(), c * (phi / 3.0).sin()]
            }
        }
    }

    /// Point where the gradient is unbounded.
    pub fn singular_point(&self) -> Option<Point> {
        match self {
            ExactSolution::CoshCos => None,
            ExactSolution::CornerSingular => Some([0.0, 0.0]),
        }
    }
}

/// The example problems of the reproduction runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Example {
    SquareSmooth,
    LShapeSmooth,
    LShapeSingular,
    SquareDirect,
    LShapeDirect,
    Exterior,
}

impl Example {
    pub const ALL: [Example; 6] = [
        Example::SquareSmooth,
        Example::LShapeSmooth,
        Example::LShapeSingular,
        Example::SquareDirect,
        Example::LShapeDirect,
        Example::Exterior,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Example::SquareSmooth => "square-smooth",
            Example::LShapeSmooth => "lshape-smooth",
            Example::LShapeSingular => "lshape-singular",
            Example::SquareDirect => "square-direct",
            Example::LShapeDirect => "lshape-direct",
            Example::Exterior => "exterior",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.name() == s)
    }

    pub fn domain(&self) -> Domain {
        match self {
            Example::SquareSmooth | Example::SquareDirect => Domain::Square,
            Example::LShapeSmooth | Example::LShapeSingular | Example::LShapeDirect => {
                Domain::LShape
            }
            Example::Exterior => Domain::ExteriorBox,
        }
    }

    pub fn exact(&self) -> Option<ExactSolution> {
        match self {
            Example::SquareSmooth | Example::LShapeSmooth | Example::SquareDirect => {
                Some(ExactSolution::CoshCos)
            }
            Example::LShapeSingular | Example::LShapeDirect => Some(ExactSolution::CornerSingular),
            Example::Exterior => None,
        }
    }

    pub fn default_bem(&self) -> BemConfig {
        let f = match self {
            Example::SquareDirect | Example::LShapeDirect => Formulation::Direct,
            _ => Formulation::Indirect,
        };
        BemConfig::new(f, Discretization::Galerkin)
    }

    /// Dirichlet data and exact solution as an adaptive problem.
    pub fn problem(&self) -> Problem {
        let exact = self.exact();
        Problem {
            domain: self.domain(),
            data: match exact {
                Some(u) => Box::new(move |x| u.value(x)),
                None => Box::new(|_| 1.0),
            },
            exact,
        }
    }
}

impl fmt::Display for Example {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Reference quadrature mesh: two uniform refinements of `mesh`, plus two
/// rings of extra refinement around a singular point of the exact solution.
pub fn quadrature_mesh(mesh: &TriMesh, singular: Option<Point>) -> TriMesh {
    let mut q = refine_all(&refine_all(mesh));
    if let Some(s) = singular {
        for _ in 0..2 {
            let touching: Vec<usize> = q
                .elements
                .iter()
                .enumerate()
                .filter(|(_, t)| {
                    t.iter()
                        .any(|&v| q.vertices[v][0] == s[0] && q.vertices[v][1] == s[1])
                })
                .map(|(e, _)| e)
                .collect();
            q = refine_uniform(&q, &touching);
        }
    }
    q
}

/// `‖∇(u - u_h)‖_{L2(Ω)}` by the seven-point rule on [`quadrature_mesh`].
pub fn potential_error(
    mesh: &TriMesh,
    field: &PotentialField,
    exact: &ExactSolution,
) -> Result<f64, Error> {
    let q = quadrature_mesh(mesh, exact.singular_point());
    let tree = Treecode::new(field);
    error_on_mesh(&q, &tree, &|x| exact.gradient(x))
}

/// `‖∇u - ∇u_h‖` on the given mesh for any reference gradient.
pub fn error_on_mesh(
    q: &TriMesh,
    tree: &Treecode,
    grad: &(dyn Fn(Point) -> Point + Sync),
) -> Result<f64, Error> {
    let rule = triangle7();
    let parts: Vec<f64> = q
        .elements
        .par_iter()
        .enumerate()
        .map(|(e, t)| {
            let p = t.map(|v| q.vertices[v]);
            let area = q.area(e);
            let mut s = 0.0;
            for (l, w) in &rule {
                let x = [
                    l[0] * p[0][0] + l[1] * p[1][0] + l[2] * p[2][0],
                    l[0] * p[0][1] + l[1] * p[1][1] + l[2] * p[2][1],
                ];
                let (_, gh) = tree.value_grad(x);
                let gu = grad(x);
                s += w * ((gu[0] - gh[0]).powi(2) + (gu[1] - gh[1]).powi(2));
            }
            s * area
        })
        .collect();
    let total: f64 = parts.iter().sum();
    if !total.is_finite() {
        return Err(Error::Invariant("non-finite potential error".into()));
    }
    Ok(total.sqrt())
}

/// Least-squares rate `r` with `value ∝ N^{-r}`.
pub fn fit_rate(n: &[f64], values: &[f64]) -> Result<f64, Error> {
    if n.len() != values.len() || n.len() < 4 {
        return Err(Error::Config("rate fit needs at least 4 points".into()));
    }
    if n.iter()
        .chain(values)
        .any(|v| !(*v > 0.0) || !v.is_finite())
    {
        return Err(Error::Config("rate fit needs positive values".into()));
    }
    let x: Vec<f64> = n.iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let m = x.len() as f64;
    let mx = x.iter().sum::<f64>() / m;
    let my = y.iter().sum::<f64>() / m;
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::Config("rate fit needs distinct N".into()));
    }
    Ok(-sxy / sxx)
}

/// Rate fit of one column over the records with `n_gamma ≥ n_min`.
pub fn fit_records(
    records: &[EstimateRecord],
    n_min: usize,
    column: impl Fn(&EstimateRecord) -> Option<f64>,
) -> Result<f64, Error> {
    let (n, v): (Vec<f64>, Vec<f64>) = records
        .iter()
        .filter(|r| r.n_gamma >= n_min)
        .filter_map(|r| column(r).map(|v| (r.n_gamma as f64, v)))
        .unzip();
    fit_rate(&n, &v)
}

pub const CSV_HEADER: &str =
    "level,n_gamma,n_layer,dof,error,majorant,osc,minorant,maj_over_err,maj_over_sqrt_min";

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

pub fn write_csv(records: &[EstimateRecord], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{:e},{:e},{:e},{},{:e}",
            r.level,
            r.n_gamma,
            r.n_layer,
            r.dof,
            opt(r.error),
            r.majorant,
            r.osc,
            r.minorant,
            opt(r.maj_over_err),
            r.maj_over_sqrt_min
        )?;
    }
    Ok(())
}

/// `(N, value)` series per curve, blank-line separated blocks.
pub fn write_plot_data(records: &[EstimateRecord], mut w: impl Write) -> std::io::Result<()> {
    type Column = fn(&EstimateRecord) -> Option<f64>;
    let curves: [(&str, Column); 4] = [
        ("error", |r| r.error),
        ("majorant", |r| Some(r.majorant)),
        ("osc", |r| Some(r.osc)),
        ("sqrt_minorant", |r| Some(r.minorant.max(0.0).sqrt())),
    ];
    for (name, f) in curves {
        if records.iter().all(|r| f(r).is_none()) {
            continue;
        }
        writeln!(w, "# {name}")?;
        for r in records {
            if let Some(v) = f(r) {
                writeln!(w, "{} {v:e}", r.n_gamma)?;
            }
        }
        writeln!(w)?;
        writeln!(w)?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub example: Example,
    pub config: AdaptiveConfig,
}

impl ExperimentSpec {
    pub fn new(example: Example) -> Self {
        let config = AdaptiveConfig {
            bem: example.default_bem(),
            ..AdaptiveConfig::default()
        };
        Self { example, config }
    }

    pub fn validate(&self) -> Result<(), Error> {
        self.config.validate()?;
        if self.example.domain().is_exterior() && self.config.bem.formulation == Formulation::Direct
        {
            return Err(Error::Config(
                "the exterior example uses the single-layer ansatz".into(),
            ));
        }
        Ok(())
    }
}

/// Fitted rates and efficiency range of a finished run.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub levels: usize,
    pub final_n_gamma: usize,
    pub rate_error: Option<f64>,
    pub rate_majorant: Option<f64>,
    pub rate_osc: Option<f64>,
    pub min_efficiency: Option<f64>,
    pub max_efficiency: Option<f64>,
}

impl RunSummary {
    pub fn new(records: &[EstimateRecord]) -> Self {
        let eff: Vec<f64> = records.iter().filter_map(|r| r.maj_over_err).collect();
        Self {
            levels: records.len(),
            final_n_gamma: records.last().map_or(0, |r| r.n_gamma),
            rate_error: fit_records(records, 0, |r| r.error).ok(),
            rate_majorant: fit_records(records, 0, |r| Some(r.majorant)).ok(),
            rate_osc: fit_records(records, 0, |r| Some(r.osc)).ok(),
            min_efficiency: eff.iter().copied().reduce(f64::min),
            max_efficiency: eff.iter().copied().reduce(f64::max),
        }
    }
}

impl fmt::Display for RunSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let o = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.3}"));
        writeln!(
            f,
            "levels: {} (final #F = {})",
            self.levels, self.final_n_gamma
        )?;
        writeln!(f, "rate error: {}", o(self.rate_error))?;
        writeln!(f, "rate majorant: {}", o(self.rate_majorant))?;
        writeln!(f, "rate osc: {}", o(self.rate_osc))?;
        write!(
            f,
            "majorant/error: [{}, {}]",
            o(self.min_efficiency),
            o(self.max_efficiency)
        )
    }
}

/// Run one experiment, optionally writing the CSV (and plot data next to it).
pub fn run_experiment(
    spec: &ExperimentSpec,
    out: Option<&Path>,
    plot_data: bool,
) -> Result<(Vec<EstimateRecord>, RunSummary), Error> {
    spec.validate()?;
    let problem = spec.example.problem();
    let records = adaptive_loop(&spec.config, &problem)?;
    if let Some(path) = out {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        write_csv(&records, f)?;
        if plot_data {
            let plot = path.with_extension("plot.dat");
            write_plot_data(
                &records,
                std::io::BufWriter::new(std::fs::File::create(plot)?),
            )?;
        }
    }
    let summary = RunSummary::new(&records);
    Ok((records, summary))
}
