use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gpamg::covariance::{fitted_curve_csv, ModelFamily};
use gpamg::io::{fmt_f64, load_matrix_market, save_matrix_market, write_coords, write_matrix_market, CsvTable};
use gpamg::pipeline::{fit_case, run_coarsen, run_table, VariogramOptions};
use gpamg::{coarsen::splitting_csv, CaseLabel, CovarianceSpec, ModelKind, ProblemInstance, RunConfig, SolveReport};

mod config;

#[derive(Parser, Debug)]
#[command(name = "gpamg", version, about = "Gaussian-process driven AMG coarsening")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a test problem as Matrix Market plus coordinates.
    Generate(Common),
    /// Fit semivariogram models and write binned and fitted curves.
    Variogram(Common),
    /// Coarsen and write the splitting and the interpolation matrix.
    Coarsen(Common),
    /// Coarsen, then report convergence rate and PCG iterations.
    Solve(Common),
    /// Run the full model matrix for the isotropic and/or anisotropic cases.
    Table {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "all")]
        tables: TableChoice,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum, PartialEq, Eq)]
enum TableChoice {
    Iso,
    Aniso,
    All,
}

#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// Flat key = value file; flags given on the command line take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// s-iso, s-aniso, c-iso or c-aniso
    #[arg(long)]
    case: Option<String>,
    /// External matrix in Matrix Market format (instead of --case).
    #[arg(long)]
    matrix: Option<PathBuf>,
    #[arg(long)]
    coords: Option<PathBuf>,
    /// emp, sph or exp
    #[arg(long)]
    model: Option<String>,
    /// Number of test vectors.
    #[arg(long = "K")]
    k: Option<String>,
    #[arg(long)]
    nu: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    qmax: Option<String>,
    #[arg(long)]
    radius: Option<String>,
    #[arg(long = "nc-fraction")]
    nc_fraction: Option<String>,
    #[arg(long)]
    tolerance: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Numerical(String),
}

impl From<gpamg::Error> for Failure {
    fn from(e: gpamg::Error) -> Self {
        use gpamg::Error as E;
        match e {
            E::InvalidArgument(_) | E::Parse { .. } | E::Io(_) | E::MissingCoordinates | E::DimensionMismatch { .. } => {
                Failure::Usage(e.to_string())
            }
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

type CliResult<T> = Result<T, Failure>;

/// Flags merged over the config file.
struct Settings {
    values: BTreeMap<String, String>,
    out: PathBuf,
}

impl Settings {
    fn resolve(c: &Common) -> CliResult<Self> {
        let mut values = match &c.config {
            Some(p) => config::load(p).map_err(Failure::Usage)?,
            None => BTreeMap::new(),
        };
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        let flags = [
            ("case", c.case.clone()),
            ("matrix", path(&c.matrix)),
            ("coords", path(&c.coords)),
            ("model", c.model.clone()),
            ("K", c.k.clone()),
            ("nu", c.nu.clone()),
            ("seed", c.seed.clone()),
            ("qmax", c.qmax.clone()),
            ("radius", c.radius.clone()),
            ("nc-fraction", c.nc_fraction.clone()),
            ("tolerance", c.tolerance.clone()),
            ("out", path(&c.out)),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                values.insert(k.to_string(), v);
            }
        }
        let out = PathBuf::from(values.get("out").map(String::as_str).unwrap_or("."));
        Ok(Self { values, out })
    }

    fn get<T: FromStr>(&self, key: &str) -> CliResult<Option<T>> {
        match self.values.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Failure::Usage(format!("invalid value '{v}' for {key}"))),
        }
    }

    fn case(&self) -> CliResult<Option<CaseLabel>> {
        match self.values.get("case") {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| {
                Failure::Usage(format!("unknown case '{v}' (expected s-iso, s-aniso, c-iso or c-aniso)"))
            }),
        }
    }

    fn model(&self) -> CliResult<Option<ModelKind>> {
        match self.values.get("model") {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(Failure::from),
        }
    }

    fn problem(&self) -> CliResult<ProblemInstance> {
        match (self.values.get("matrix"), self.case()?) {
            (Some(_), Some(_)) => Err(Failure::Usage("give either --case or --matrix, not both".into())),
            (Some(m), None) => {
                let coords = self.values.get("coords").map(PathBuf::from);
                Ok(load_matrix_market(m, coords.as_deref())?)
            }
            (None, case) => {
                if self.values.contains_key("coords") {
                    return Err(Failure::Usage("--coords requires --matrix".into()));
                }
                Ok(case.unwrap_or(CaseLabel::SIso).generate()?)
            }
        }
    }

    fn spec(&self, default: CovarianceSpec) -> CliResult<CovarianceSpec> {
        let kind = self.model()?.unwrap_or(default.kind);
        let k = self.get("K")?.unwrap_or(default.k);
        Ok(CovarianceSpec::new(kind, k)?)
    }

    fn run_config(&self, label: CaseLabel, spec: CovarianceSpec) -> CliResult<RunConfig> {
        let mut cfg = RunConfig::for_case(label, spec);
        if let Some(v) = self.get("nu")? {
            cfg.nu = v;
        }
        if let Some(v) = self.get("seed")? {
            cfg.seed = v;
        }
        if let Some(v) = self.get("qmax")? {
            cfg.q_max = v;
        }
        if let Some(v) = self.get("radius")? {
            cfg.radius = v;
        }
        if let Some(v) = self.get("nc-fraction")? {
            cfg.nc_fraction = v;
        }
        cfg.tolerance = self.get("tolerance")?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn out_file(&self, name: &str) -> CliResult<PathBuf> {
        fs::create_dir_all(&self.out).map_err(|e| Failure::Usage(format!("{}: {e}", self.out.display())))?;
        Ok(self.out.join(name))
    }

    fn write_csv(&self, name: &str, table: &CsvTable) -> CliResult<PathBuf> {
        let path = self.out_file(name)?;
        table.write(&path)?;
        Ok(path)
    }
}

const DEFAULT_SPEC: CovarianceSpec = CovarianceSpec {
    kind: ModelKind::Spherical,
    k: 1,
};

fn cmd_generate(s: &Settings) -> CliResult<()> {
    let p = s.problem()?;
    let stem = p.label.as_str();
    let mtx = s.out_file(&format!("{stem}.mtx"))?;
    save_matrix_market(&p, &mtx)?;
    println!("wrote {} (n = {}, nnz = {})", mtx.display(), p.n(), p.matrix.nnz());
    if let Some(c) = &p.coords {
        let path = s.out_file(&format!("{stem}.coords"))?;
        write_coords(c, &path)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_variogram(s: &Settings) -> CliResult<()> {
    let p = s.problem()?;
    let stem = p.label.as_str();
    let families = match s.model()? {
        None => vec![ModelFamily::Spherical, ModelFamily::Exponential],
        Some(m) => vec![m
            .family()
            .ok_or_else(|| Failure::Usage("variogram needs a parametric model (sph or exp)".into()))?],
    };
    let ks = match s.get::<usize>("K")? {
        Some(k) => vec![k],
        None => vec![1, 10, 100],
    };
    let cfg = s.run_config(p.label, DEFAULT_SPEC)?;
    // an explicit radius bounds the variogram cloud
    let opts = VariogramOptions {
        max_distance: s.get("radius")?,
        ..VariogramOptions::default()
    };
    let mut summary = CsvTable::new(["family", "K", "sigma2", "eta", "residual", "converged"]);
    for &family in &families {
        for &k in &ks {
            let (emp, fit) = fit_case(&p, family, k, cfg.nu, cfg.seed, &opts)?;
            let tag = format!("{stem}_{}-{k}", family.as_str());
            s.write_csv(&format!("semivariogram_{tag}.csv"), &emp.to_csv())?;
            s.write_csv(&format!("fit_{tag}.csv"), &fitted_curve_csv(&emp, &fit))?;
            if !fit.converged {
                eprintln!("warning: {tag} fit stopped at the iteration cap");
            }
            summary.push(vec![
                family.as_str().to_string(),
                k.to_string(),
                fmt_f64(fit.model.sigma2),
                fmt_f64(fit.model.eta),
                fmt_f64(fit.residual),
                fit.converged.to_string(),
            ]);
        }
    }
    let path = s.write_csv(&format!("fits_{stem}.csv"), &summary)?;
    print!("{}", summary.render());
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn cmd_coarsen(s: &Settings) -> CliResult<()> {
    let p = s.problem()?;
    let spec = s.spec(DEFAULT_SPEC)?;
    let cfg = s.run_config(p.label, spec)?;
    let out = run_coarsen(&p, &cfg)?;
    let tag = format!("{}_{spec}", p.label.as_str());
    s.write_csv(&format!("splitting_{tag}.csv"), &splitting_csv(&p, &out.state))?;
    let pfile = s.out_file(&format!("interpolation_{tag}.mtx"))?;
    write_matrix_market(&out.interpolation.matrix, &pfile)?;
    let d = out.state.diagnostics;
    let mut t = CsvTable::new([
        "case",
        "model",
        "n",
        "n_c",
        "max_fine_variance",
        "negative_variances",
        "embeddability_failures",
        "empty_stencils",
        "q_reductions",
    ]);
    t.push(vec![
        p.label.as_str().to_string(),
        spec.to_string(),
        p.n().to_string(),
        out.interpolation.n_c.to_string(),
        fmt_f64(out.state.max_fine_variance()),
        d.negative_variances.to_string(),
        d.embeddability_failures.to_string(),
        d.empty_stencils.to_string(),
        d.q_reductions.to_string(),
    ]);
    print!("{}", t.render());
    Ok(())
}

fn cmd_solve(s: &Settings) -> CliResult<()> {
    let p = s.problem()?;
    let spec = s.spec(DEFAULT_SPEC)?;
    let cfg = s.run_config(p.label, spec)?;
    let out = gpamg::run_solve(&p, &cfg)?;
    let tag = format!("{}_{spec}", p.label.as_str());
    let table = SolveReport::csv_table(std::slice::from_ref(&out.report));
    s.write_csv(&format!("report_{tag}.csv"), &table)?;
    s.write_csv(&format!("splitting_{tag}.csv"), &splitting_csv(&p, &out.coarsening.state))?;
    s.write_csv(&format!("residuals_{tag}.csv"), &out.report.residual_csv())?;
    print!("{}", table.render());
    eprintln!(
        "setup {:.2}s, solve {:.2}s",
        out.report.setup_time.as_secs_f64(),
        out.report.solve_time.as_secs_f64()
    );
    if !out.report.pcg_converged {
        return Err(Failure::Numerical(format!(
            "PCG did not reach the target reduction in {} iterations",
            out.report.pcg_iterations
        )));
    }
    Ok(())
}

fn cmd_table(s: &Settings, which: TableChoice) -> CliResult<()> {
    let specs = match (s.model()?, s.get::<usize>("K")?) {
        (None, None) => CovarianceSpec::table_columns(),
        (m, k) => vec![CovarianceSpec::new(m.unwrap_or(DEFAULT_SPEC.kind), k.unwrap_or(DEFAULT_SPEC.k))?],
    };
    let groups: Vec<(&str, Vec<CaseLabel>)> = match (s.case()?, which) {
        (Some(c), _) => vec![(if c.is_anisotropic() { "aniso" } else { "iso" }, vec![c])],
        (None, TableChoice::Iso) => vec![("iso", vec![CaseLabel::SIso, CaseLabel::CIso])],
        (None, TableChoice::Aniso) => vec![("aniso", vec![CaseLabel::SAniso, CaseLabel::CAniso])],
        (None, TableChoice::All) => vec![
            ("iso", vec![CaseLabel::SIso, CaseLabel::CIso]),
            ("aniso", vec![CaseLabel::SAniso, CaseLabel::CAniso]),
        ],
    };
    for (name, cases) in groups {
        let mut header: Vec<String> = SolveReport::CSV_HEADER.iter().map(|h| h.to_string()).collect();
        header.push("error".into());
        let mut long = CsvTable::new(header);
        let mut grid_header = vec!["case".to_string()];
        for spec in &specs {
            grid_header.push(format!("{spec} rho"));
            grid_header.push(format!("{spec} k"));
        }
        let mut grid = CsvTable::new(grid_header);
        for case in cases {
            let p = case.generate()?;
            let base = s.run_config(case, specs[0])?;
            let mut grid_row = vec![case.as_str().to_string()];
            for (spec, cell) in run_table(&p, &base, &specs) {
                match cell {
                    Ok(r) => {
                        let mut row = r.csv_row();
                        grid_row.push(row[6].clone());
                        grid_row.push(row[7].clone());
                        row.push(String::new());
                        long.push(row);
                    }
                    Err(e) => {
                        eprintln!("warning: {} {spec} failed: {e}", case.as_str());
                        let mut row = vec![String::new(); SolveReport::CSV_HEADER.len()];
                        row[0] = case.as_str().to_string();
                        row[1] = spec.to_string();
                        row[2] = spec.k.to_string();
                        row.push(e.replace(',', ";"));
                        long.push(row);
                        grid_row.extend([String::new(), String::new()]);
                    }
                }
            }
            grid.push(grid_row);
        }
        s.write_csv(&format!("table_{name}.csv"), &long)?;
        s.write_csv(&format!("table_{name}_grid.csv"), &grid)?;
        print!("{}", grid.render());
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    match &cli.command {
        Command::Generate(c) => cmd_generate(&Settings::resolve(c)?),
        Command::Variogram(c) => cmd_variogram(&Settings::resolve(c)?),
        Command::Coarsen(c) => cmd_coarsen(&Settings::resolve(c)?),
        Command::Solve(c) => cmd_solve(&Settings::resolve(c)?),
        Command::Table { common, tables } => cmd_table(&Settings::resolve(common)?, *tables),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Numerical(m)) => {
            eprintln!("numerical failure: {m}");
            ExitCode::from(2)
        }
    }
}
