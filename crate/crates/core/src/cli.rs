//! Command-line driver.
//!
//! Every invocation is captured in a [`RunConfig`], which can be saved with
//! `--save-run` and re-executed with `replay` to reproduce the same output.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::error::{Error, ErrorKind, Result};
use crate::fock::{Parity, SectorBasis};
use crate::hamiltonian::ModelParams;
use crate::scatter::{
    fft_spectrum, pdf_series, spectral_lines_with, transition_probability_with, CompositeSpec, Simulator, TimeGrid,
    Window,
};
use crate::ucc::{fit_cluster_operator, ClusterOperator};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DOMAIN: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Parser)]
#[command(
    name = "dlcq-scatter",
    version,
    about = "Exact DLCQ φ⁴ spectra, cluster fits, composite states and their dynamics"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: CliCommand,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Bare mass [default: 1]
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub m: Option<f64>,
    /// Coupling λ [default: 30]
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub lambda: Option<f64>,
    /// Largest momentum mode kept in operators [default: 12]
    #[arg(long, global = true)]
    pub cutoff: Option<u32>,
    /// TOML file with flat keys m, lambda, cutoff; flags take precedence
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Write output here instead of stdout
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Print 17 significant digits instead of 6
    #[arg(long, global = true)]
    pub full_precision: bool,
    /// Save the resolved run configuration as JSON for `replay`
    #[arg(long, global = true)]
    pub save_run: Option<PathBuf>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum CliCommand {
    #[command(flatten)]
    Run(Command),
    /// Re-execute a saved run configuration
    Replay { path: PathBuf },
}

/// The pipeline commands.
#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "command")]
pub enum Command {
    /// List a sector's Fock basis with free energies
    Basis {
        #[arg(long)]
        k: u32,
        #[arg(long)]
        parity: Parity,
    },
    /// Eigenvalues of a sector's full Hamiltonian, optionally with the modal matrix
    Spectrum {
        #[arg(long)]
        k: u32,
        #[arg(long)]
        parity: Parity,
        #[arg(long)]
        modal: bool,
    },
    /// Fit the cluster operator up to K_max
    Fit {
        #[arg(long)]
        kmax: u32,
    },
    /// Prepare a composite state, e.g. "A:[3,0]^2"
    Prepare {
        #[arg(long)]
        spec: String,
        /// Pin every factor to this parity sector
        #[arg(long)]
        parity: Option<Parity>,
        /// Previously fitted cluster operators (JSON from `fit --format json`)
        #[arg(long)]
        cluster: Vec<PathBuf>,
    },
    /// Transition probability series between two composite states
    Evolve {
        #[arg(long)]
        initial: String,
        #[arg(long = "final")]
        final_state: String,
        #[arg(long)]
        parity: Option<Parity>,
        #[arg(long, default_value_t = 200.0)]
        t_max: f64,
        #[arg(long, default_value_t = 8192)]
        samples: usize,
        /// Also emit the FFT magnitude spectrum of the series
        #[arg(long)]
        fft: bool,
        /// Also emit the exact spectral lines
        #[arg(long)]
        lines: bool,
        #[arg(long)]
        cluster: Vec<PathBuf>,
    },
    /// Time-dependent parton distribution of a composite state
    Pdf {
        #[arg(long)]
        spec: String,
        #[arg(long)]
        parity: Option<Parity>,
        #[arg(long, default_value_t = 200.0)]
        t_max: f64,
        #[arg(long, default_value_t = 8192)]
        samples: usize,
        #[arg(long)]
        cluster: Vec<PathBuf>,
    },
}

/// Everything needed to re-execute a command deterministically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: ModelParams,
    pub format: Format,
    pub full_precision: bool,
    pub command: Command,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    m: Option<f64>,
    lambda: Option<f64>,
    cutoff: Option<u32>,
}

fn resolve_model(g: &GlobalArgs) -> Result<ModelParams> {
    let file = match &g.config {
        Some(path) => {
            let text = fs::read_to_string(path)?;
            toml::from_str::<ModelFile>(&text)
                .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?
        }
        None => ModelFile::default(),
    };
    let d = ModelParams::default();
    ModelParams::new(
        g.m.or(file.m).unwrap_or(d.m),
        g.lambda.or(file.lambda).unwrap_or(d.lambda),
        g.cutoff.or(file.cutoff).unwrap_or(d.cutoff),
    )
}

/// A rectangular result table.
#[derive(Debug, Clone)]
struct Table {
    name: &'static str,
    headers: Vec<&'static str>,
    rows: Vec<Vec<Cell>>,
}

#[derive(Debug, Clone)]
enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

impl Table {
    fn new(name: &'static str, headers: &[&'static str]) -> Self {
        Table {
            name,
            headers: headers.to_vec(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.headers.len());
        self.rows.push(row);
    }
}

enum Output {
    Tables(Vec<Table>),
    /// A JSON document emitted verbatim in JSON mode, with a table fallback for CSV.
    Document(Value, Vec<Table>),
}

/// Magnitudes below this print as 0 at the default precision; they are
/// round-off residue of exactly vanishing amplitudes.
const DISPLAY_ZERO: f64 = 1e-13;

/// Six significant digits (plain notation for moderate magnitudes), or 17
/// in scientific notation with `full_precision`.
pub fn format_number(x: f64, full_precision: bool) -> String {
    if full_precision {
        return format!("{:.16e}", x);
    }
    const SIG: i32 = 6;
    if x.abs() < DISPLAY_ZERO {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    if (-5..SIG).contains(&exp) {
        let decimals = (SIG - 1 - exp).max(0) as usize;
        let s = format!("{x:.decimals$}");
        let s = if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        };
        if s == "-0" {
            "0".into()
        } else {
            s
        }
    } else {
        format!("{:.*e}", (SIG - 1) as usize, x)
    }
}

fn cell_text(c: &Cell, full: bool) -> String {
    match c {
        Cell::Num(x) => format_number(*x, full),
        Cell::Int(i) => i.to_string(),
        Cell::Text(s) => s.clone(),
    }
}

fn cell_json(c: &Cell, full: bool) -> Value {
    match c {
        Cell::Num(x) => {
            let rounded: f64 = format_number(*x, full).parse().unwrap_or(*x);
            json!(rounded)
        }
        Cell::Int(i) => json!(i),
        Cell::Text(s) => json!(s),
    }
}

fn table_csv(t: &Table, full: bool) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&t.headers)?;
    for row in &t.rows {
        w.write_record(row.iter().map(|c| cell_text(c, full)))?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn table_json(t: &Table, full: bool) -> Value {
    Value::Array(
        t.rows
            .iter()
            .map(|row| {
                let obj: Map<String, Value> = t
                    .headers
                    .iter()
                    .zip(row)
                    .map(|(h, c)| (h.to_string(), cell_json(c, full)))
                    .collect();
                Value::Object(obj)
            })
            .collect(),
    )
}

fn sibling(path: &Path, name: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ext = path.extension().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "csv".into());
    path.with_file_name(format!("{stem}.{name}.{ext}"))
}

fn emit(output: Output, cfg: &RunConfig, out: Option<&Path>, stdout: &mut dyn Write) -> Result<()> {
    let full = cfg.full_precision;
    let write_to = |path: Option<&Path>, bytes: &[u8], stdout: &mut dyn Write| -> Result<()> {
        match path {
            Some(p) => fs::write(p, bytes)?,
            None => stdout.write_all(bytes)?,
        }
        Ok(())
    };
    match (cfg.format, output) {
        (Format::Json, Output::Document(doc, _)) => {
            let mut text = serde_json::to_vec_pretty(&doc)?;
            text.push(b'\n');
            write_to(out, &text, stdout)
        }
        (Format::Json, Output::Tables(tables)) => {
            let doc = if tables.len() == 1 {
                table_json(&tables[0], full)
            } else {
                Value::Object(tables.iter().map(|t| (t.name.to_string(), table_json(t, full))).collect())
            };
            let mut text = serde_json::to_vec_pretty(&doc)?;
            text.push(b'\n');
            write_to(out, &text, stdout)
        }
        (Format::Csv, Output::Tables(tables)) | (Format::Csv, Output::Document(_, tables)) => {
            for (i, t) in tables.iter().enumerate() {
                let bytes = table_csv(t, full)?;
                match out {
                    Some(p) if i == 0 => fs::write(p, bytes)?,
                    Some(p) => fs::write(sibling(p, t.name), bytes)?,
                    None => {
                        if tables.len() > 1 {
                            if i > 0 {
                                stdout.write_all(b"\n")?;
                            }
                            writeln!(stdout, "# {}", t.name)?;
                        }
                        stdout.write_all(&bytes)?;
                    }
                }
            }
            Ok(())
        }
    }
}

fn load_clusters(sim: &Simulator, paths: &[PathBuf]) -> Result<()> {
    for p in paths {
        let c = ClusterOperator::from_json(&fs::read_to_string(p)?)?;
        sim.insert_cluster(c)?;
    }
    Ok(())
}

fn parse_spec(text: &str, parity: Option<Parity>) -> Result<CompositeSpec> {
    let spec: CompositeSpec = text.parse()?;
    Ok(match parity {
        Some(p) => spec.with_parity(p),
        None => spec,
    })
}

fn basis_table(k: u32, parity: Parity, m: f64) -> Table {
    let basis = SectorBasis::enumerate(k, parity);
    let mut t = Table::new("basis", &["index", "state", "free_energy"]);
    for (i, s) in basis.states().iter().enumerate() {
        t.push(vec![Cell::Int(i as i64), Cell::Text(s.to_string()), Cell::Num(s.free_energy(m))]);
    }
    t
}

fn amplitude_table(name: &'static str, v: &crate::opalg::SectorVector) -> Table {
    let mut t = Table::new(name, &["state", "re", "im", "abs"]);
    for (s, a) in v.basis().states().iter().zip(v.amplitudes().iter()) {
        t.push(vec![Cell::Text(s.to_string()), Cell::Num(a.re), Cell::Num(a.im), Cell::Num(a.norm())]);
    }
    t
}

fn run_command(cfg: &RunConfig) -> Result<Output> {
    let p = cfg.model;
    match &cfg.command {
        Command::Basis { k, parity } => Ok(Output::Tables(vec![basis_table(*k, *parity, p.m)])),

        Command::Spectrum { k, parity, modal } => {
            let sim = Simulator::new(p)?;
            let d = sim.spectrum(*k, *parity)?;
            let mut eig = Table::new("spectrum", &["n", "eigenvalue"]);
            for (n, e) in d.eigenvalues().iter().enumerate() {
                eig.push(vec![Cell::Int(n as i64), Cell::Num(*e)]);
            }
            let mut tables = vec![eig];
            if *modal {
                let mut w = Table::new("modal", &["state", "n", "re", "im"]);
                let entries = d.modal().entries();
                for (i, s) in d.basis().states().iter().enumerate() {
                    for n in 0..d.dim() {
                        let z = entries[(i, n)];
                        w.push(vec![Cell::Text(s.to_string()), Cell::Int(n as i64), Cell::Num(z.re), Cell::Num(z.im)]);
                    }
                }
                tables.push(w);
            }
            Ok(Output::Tables(tables))
        }

        Command::Fit { kmax } => {
            let c = fit_cluster_operator(&p, *kmax)?;
            let mut t = Table::new("terms", &["create", "annihilate", "re", "im"]);
            let join = |v: &[u32]| v.iter().map(u32::to_string).collect::<Vec<_>>().join(" ");
            for (key, z) in c.poly.iter() {
                t.push(vec![
                    Cell::Text(join(key.create())),
                    Cell::Text(join(key.annihilate())),
                    Cell::Num(z.re),
                    Cell::Num(z.im),
                ]);
            }
            Ok(Output::Document(serde_json::to_value(&c)?, vec![t]))
        }

        Command::Prepare { spec, parity, cluster } => {
            let sim = Simulator::new(p)?;
            load_clusters(&sim, cluster)?;
            let v = sim.prepare(&parse_spec(spec, *parity)?)?;
            Ok(Output::Tables(vec![amplitude_table("amplitudes", &v)]))
        }

        Command::Evolve {
            initial,
            final_state,
            parity,
            t_max,
            samples,
            fft,
            lines,
            cluster,
        } => {
            let sim = Simulator::new(p)?;
            load_clusters(&sim, cluster)?;
            let i = sim.prepare(&parse_spec(initial, *parity)?)?;
            let f = sim.prepare(&parse_spec(final_state, *parity)?)?;
            if i.basis().k() != f.basis().k() || i.basis().parity() != f.basis().parity() {
                return Err(Error::IncompatibleStates {
                    from: i.basis().label(),
                    to: f.basis().label(),
                });
            }
            let prop = sim.propagator(i.basis().k(), i.basis().parity())?;
            let grid = TimeGrid::new(*t_max, *samples)?;
            let times = grid.times();
            let series = transition_probability_with(&prop, &i, &f, &times)?;

            let mut s = Table::new("series", &["t", "value"]);
            for (t, v) in times.iter().zip(&series) {
                s.push(vec![Cell::Num(*t), Cell::Num(*v)]);
            }
            let mut tables = vec![s];
            if *fft {
                let spec = fft_spectrum(&series, grid.dt(), Window::Rectangular)?;
                let mut t = Table::new("fft", &["omega", "magnitude"]);
                for (w, m) in spec.omega.iter().zip(&spec.magnitude) {
                    t.push(vec![Cell::Num(*w), Cell::Num(*m)]);
                }
                tables.push(t);
            }
            if *lines {
                let mut t = Table::new("lines", &["frequency", "re_weight", "im_weight"]);
                for l in spectral_lines_with(&prop, &i, &f)? {
                    t.push(vec![Cell::Num(l.frequency), Cell::Num(l.weight.re), Cell::Num(l.weight.im)]);
                }
                tables.push(t);
            }
            Ok(Output::Tables(tables))
        }

        Command::Pdf {
            spec,
            parity,
            t_max,
            samples,
            cluster,
        } => {
            let sim = Simulator::new(p)?;
            load_clusters(&sim, cluster)?;
            let v = sim.prepare(&parse_spec(spec, *parity)?)?;
            let prop = sim.propagator(v.basis().k(), v.basis().parity())?;
            let times = TimeGrid::new(*t_max, *samples)?.times();
            let mut t = Table::new("pdf", &["t", "n", "value"]);
            for r in pdf_series(&prop, &v, &times)? {
                t.push(vec![Cell::Num(r.t), Cell::Int(i64::from(r.n)), Cell::Num(r.value)]);
            }
            Ok(Output::Tables(vec![t]))
        }
    }
}

/// Executes a run configuration, writing to `out` or to `stdout`.
pub fn execute(cfg: &RunConfig, out: Option<&Path>, stdout: &mut dyn Write) -> Result<()> {
    cfg.model.validate()?;
    let output = run_command(cfg)?;
    emit(output, cfg, out, stdout)
}

pub fn exit_code(e: &Error) -> i32 {
    match e.kind() {
        ErrorKind::Numerical => EXIT_NUMERICAL,
        ErrorKind::Domain | ErrorKind::Io => EXIT_DOMAIN,
    }
}

/// Machine-readable error object for stderr.
pub fn error_json(e: &Error) -> Value {
    json!({ "error": { "kind": e.kind().as_str(), "message": e.to_string(), "exit_code": exit_code(e) } })
}

fn dispatch(cli: Cli, stdout: &mut dyn Write) -> Result<()> {
    let g = &cli.global;
    let cfg = match cli.command {
        CliCommand::Run(command) => RunConfig {
            model: resolve_model(g)?,
            format: g.format.unwrap_or_default(),
            full_precision: g.full_precision,
            command,
        },
        CliCommand::Replay { path } => {
            let cfg: RunConfig = serde_json::from_str(&fs::read_to_string(&path)?)?;
            cfg
        }
    };
    if let Some(path) = &g.save_run {
        fs::write(path, serde_json::to_vec_pretty(&cfg)?)?;
    }
    execute(&cfg, g.out.as_deref(), stdout)
}

/// Parses `args`, runs, reports errors on `stderr`, and returns the exit code.
pub fn main_with<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let rendered = e.render().to_string();
            if code == EXIT_OK {
                let _ = stdout.write_all(rendered.as_bytes());
            } else {
                let obj = json!({ "error": { "kind": "usage", "message": rendered.trim_end(), "exit_code": code } });
                let _ = writeln!(stderr, "{obj}");
            }
            return code;
        }
    };
    match dispatch(cli, stdout) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "{}", error_json(&e));
            exit_code(&e)
        }
    }
}

/// Entry point used by the binary.
pub fn main() -> i32 {
    let stdout = io::stdout();
    let stderr = io::stderr();
    let code = main_with(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock());
    let _ = io::stdout().flush();
    code
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let mut full = vec!["dlcq-scatter"];
        full.extend_from_slice(args);
        let code = main_with(full, &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn number_formatting() {
        assert_eq!(format_number(0.666666666, false), "0.666667");
        assert_eq!(format_number(6.0, false), "6");
        assert_eq!(format_number(24.329214, false), "24.3292");
        assert_eq!(format_number(-0.12238, false), "-0.12238");
        assert_eq!(format_number(1.5e-9, false), "1.50000e-9");
        assert_eq!(format_number(0.0, false), "0");
        assert_eq!(format_number(-0.0, false), "0");
        assert_eq!(format_number(-2.7e-17, false), "0");
        let full = format_number(std::f64::consts::PI, true);
        assert_eq!(full.parse::<f64>().unwrap(), std::f64::consts::PI);
    }

    #[test]
    fn basis_command() {
        let (code, out, _) = run(&["basis", "--k", "3", "--parity", "odd"]);
        assert_eq!(code, 0);
        assert_eq!(out, "index,state,free_energy\n0,3^1,0.333333\n1,1^3,3\n");
        let (_, out, _) = run(&["basis", "--k", "0", "--parity", "even"]);
        assert_eq!(out.lines().nth(1), Some("0,vac,0"));
    }

    #[test]
    fn usage_and_domain_errors() {
        let (code, _, err) = run(&["basis", "--k"]);
        assert_eq!(code, EXIT_USAGE);
        assert!(err.contains("\"kind\":\"usage\""));

        let (code, _, err) = run(&["spectrum", "--k", "8", "--parity", "even", "--cutoff", "3"]);
        assert_eq!(code, EXIT_DOMAIN);
        let v: Value = serde_json::from_str(err.trim()).unwrap();
        assert_eq!(v["error"]["kind"], "domain");

        let (code, _, _) = run(&["prepare", "--spec", "A:[3,7]"]);
        assert_eq!(code, EXIT_DOMAIN);
    }
}
