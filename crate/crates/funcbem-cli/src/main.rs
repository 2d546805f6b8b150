//! `funcbem`: run the adaptive experiments and inspect meshes.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use funcbem::adaptive::{adaptive_loop_with, MarkingMode};
use funcbem::bem_solve::{BemConfig, Discretization, Formulation};
use funcbem::boundary_trace::NodeFamily;
use funcbem::experiments::{write_csv, write_plot_data, Example, ExperimentSpec, RunSummary};
use funcbem::mesh::{extract_boundary, initial_mesh, refine_all, refine_nvb, Domain, TriMesh};
use funcbem::Error;

#[derive(Parser)]
#[command(
    name = "funcbem",
    version,
    about = "2D Laplace BEM with guaranteed error bounds"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an adaptive or uniform experiment and print one row per level.
    Run(RunArgs),
    /// Mesh utilities.
    Mesh {
        #[command(subcommand)]
        command: MeshCommand,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ExampleArg {
    SquareSmooth,
    LshapeSmooth,
    LshapeSingular,
    SquareDirect,
    LshapeDirect,
    Exterior,
}

impl From<ExampleArg> for Example {
    fn from(e: ExampleArg) -> Self {
        match e {
            ExampleArg::SquareSmooth => Example::SquareSmooth,
            ExampleArg::LshapeSmooth => Example::LShapeSmooth,
            ExampleArg::LshapeSingular => Example::LShapeSingular,
            ExampleArg::SquareDirect => Example::SquareDirect,
            ExampleArg::LshapeDirect => Example::LShapeDirect,
            ExampleArg::Exterior => Example::Exterior,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    IndirectGalerkin,
    IndirectCollocation,
    DirectGalerkin,
}

#[derive(Clone, Copy, ValueEnum)]
enum Marking {
    Standard,
    Confidence,
}

#[derive(Clone, Copy, ValueEnum)]
enum Nodes {
    Gauss,
    Lobatto,
}

#[derive(Clone, Copy, ValueEnum)]
enum DomainArg {
    Square,
    Lshape,
    Exterior,
}

impl From<DomainArg> for Domain {
    fn from(d: DomainArg) -> Self {
        match d {
            DomainArg::Square => Domain::Square,
            DomainArg::Lshape => Domain::LShape,
            DomainArg::Exterior => Domain::ExteriorBox,
        }
    }
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long, value_enum)]
    example: ExampleArg,
    /// Defaults to the formulation of the example.
    #[arg(long, value_enum)]
    method: Option<Method>,
    /// Dörfler parameter in (0, 1], or `uniform`.
    #[arg(long, default_value = "0.4")]
    theta: String,
    #[arg(long, default_value_t = 1)]
    p: usize,
    /// Stop once the number of boundary segments reaches this value.
    #[arg(long, default_value_t = 5000)]
    max_dof: usize,
    #[arg(long, default_value_t = 200)]
    max_levels: usize,
    /// Tolerance on the majorant.
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
    #[arg(long, value_enum, default_value = "standard")]
    marking: Marking,
    /// Interpolation nodes of the boundary residual.
    #[arg(long, value_enum, default_value = "gauss")]
    nodes: Nodes,
    /// CSV output file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write `(N, value)` series next to the CSV.
    #[arg(long)]
    plot_data: bool,
    /// Single-threaded evaluation.
    #[arg(long)]
    deterministic: bool,
}

#[derive(Subcommand)]
enum MeshCommand {
    /// Print the (optionally refined) initial mesh of a domain.
    Dump {
        #[arg(long, value_enum)]
        domain: DomainArg,
        /// Number of uniform refinements.
        #[arg(long, default_value_t = 0)]
        refine: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Read a mesh, check conformity and print statistics.
    Load { path: PathBuf },
    /// Refine a mesh file by bisection of the listed elements (all if none given).
    Refine {
        path: PathBuf,
        #[arg(long, value_delimiter = ',')]
        elements: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn install_pool(deterministic: bool) -> Result<(), Error> {
    let threads = if deterministic {
        Some(1)
    } else {
        match std::env::var("FUNCBEM_THREADS") {
            Ok(v) => Some(
                v.parse::<usize>()
                    .map_err(|_| Error::Config(format!("FUNCBEM_THREADS={v} is not a number")))?,
            ),
            Err(_) => None,
        }
    };
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    Ok(())
}

fn run(args: RunArgs) -> Result<(), Error> {
    install_pool(args.deterministic)?;
    let example: Example = args.example.into();
    let mut spec = ExperimentSpec::new(example);
    let c = &mut spec.config;
    if let Some(m) = args.method {
        c.bem = match m {
            Method::IndirectGalerkin => {
                BemConfig::new(Formulation::Indirect, Discretization::Galerkin)
            }
            Method::IndirectCollocation => {
                BemConfig::new(Formulation::Indirect, Discretization::Collocation)
            }
            Method::DirectGalerkin => BemConfig::new(Formulation::Direct, Discretization::Galerkin),
        };
    }
    if args.theta == "uniform" {
        c.theta = 1.0;
        c.uniform = true;
    } else {
        c.theta = args.theta.parse().map_err(|_| {
            Error::Config(format!(
                "theta `{}` is neither a number nor `uniform`",
                args.theta
            ))
        })?;
    }
    c.p = args.p;
    c.p_residual = args.p + 1;
    c.max_dof = args.max_dof;
    c.max_levels = args.max_levels;
    c.tol = args.tol;
    c.marking = match args.marking {
        Marking::Standard => MarkingMode::Standard,
        Marking::Confidence => MarkingMode::ConfidenceInterval,
    };
    c.nodes = match args.nodes {
        Nodes::Gauss => NodeFamily::GaussLegendre,
        Nodes::Lobatto => NodeFamily::ChebyshevLobatto,
    };
    spec.validate()?;

    let problem = example.problem();
    println!("{}", funcbem::experiments::CSV_HEADER);
    let records = adaptive_loop_with(&spec.config, &problem, |r| {
        let o = |v: Option<f64>| v.map(|x| format!("{x:.4e}")).unwrap_or_default();
        println!(
            "{},{},{},{},{},{:.4e},{:.4e},{:.4e},{},{:.4}",
            r.level,
            r.n_gamma,
            r.n_layer,
            r.dof,
            o(r.error),
            r.majorant,
            r.osc,
            r.minorant,
            r.maj_over_err
                .map(|x| format!("{x:.4}"))
                .unwrap_or_default(),
            r.maj_over_sqrt_min
        );
    })?;
    if let Some(path) = &args.out {
        write_csv(
            &records,
            std::io::BufWriter::new(std::fs::File::create(path)?),
        )?;
        if args.plot_data {
            let plot = path.with_extension("plot.dat");
            write_plot_data(
                &records,
                std::io::BufWriter::new(std::fs::File::create(plot)?),
            )?;
        }
    }
    eprintln!("{}", RunSummary::new(&records));
    Ok(())
}

fn write_mesh(mesh: &TriMesh, out: Option<PathBuf>) -> Result<(), Error> {
    match out {
        Some(p) => std::fs::write(p, mesh.to_text())?,
        None => print!("{}", mesh.to_text()),
    }
    Ok(())
}

fn read_mesh(path: &PathBuf) -> Result<TriMesh, Error> {
    let mesh = TriMesh::from_text(&std::fs::read_to_string(path)?)?;
    mesh.check_conforming()
        .map_err(|e| Error::Invariant(e.to_string()))?;
    Ok(mesh)
}

fn mesh_command(cmd: MeshCommand) -> Result<(), Error> {
    match cmd {
        MeshCommand::Dump {
            domain,
            refine,
            out,
        } => {
            let mut m = initial_mesh(domain.into());
            for _ in 0..refine {
                m = refine_all(&m);
            }
            write_mesh(&m, out)
        }
        MeshCommand::Load { path } => {
            let m = read_mesh(&path)?;
            let b = extract_boundary(&m)?;
            println!("vertices: {}", m.vertices.len());
            println!("elements: {}", m.num_elements());
            println!("area: {:.12}", m.total_area());
            println!("boundary loops: {}", b.loops.len());
            println!("boundary segments: {}", b.len());
            Ok(())
        }
        MeshCommand::Refine {
            path,
            elements,
            out,
        } => {
            let m = read_mesh(&path)?;
            if let Some(&bad) = elements.iter().find(|&&e| e >= m.num_elements()) {
                return Err(funcbem::MeshError::BadIndex(bad).into());
            }
            let r = if elements.is_empty() {
                refine_all(&m)
            } else {
                refine_nvb(&m, &elements)
            };
            write_mesh(&r, out)
        }
    }
}

fn main() -> ExitCode {
    // Exit code 2 is reserved for invariant violations, so usage errors exit with 1.
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::FAILURE
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Mesh { command } => mesh_command(command),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Invariant(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
