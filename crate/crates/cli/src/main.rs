mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mwad_core::seqspace::{Exponent, Family};
use mwad_core::Window;

#[derive(Parser, Debug)]
#[command(name = "mwad", version, about = "Matrix-weighted dyadic sequence spaces and almost-diagonal operators")]
struct Cli {
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 20_231_117)]
    seed: u64,

    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Threshold report for a space and weight profile.
    Classify(ClassifyArgs),
    /// Quasi-norm of a coefficient file.
    Norm(NormArgs),
    /// Applies a kernel to a coefficient file.
    Apply(ApplyArgs),
    /// A_p constant and A_p-dimension fit of a weight.
    ApEstimate(ApArgs),
    /// Quadrature reducing operators of a power weight against the closed form.
    VerifyReducing(ReducingArgs),
    /// Fitted constant of the reducing-operator ratio estimate over random cube pairs.
    Lemma22(Lemma22Args),
    /// Growth of `‖Bt‖/‖t‖` along a counterexample ladder, as CSV.
    Sharpness(SharpnessArgs),
    /// Smallest C with `|b_QR| ≤ C b^DEF_QR` on a window.
    VerifyAd(VerifyAdArgs),
    /// Partial-sum diagnostics of one of the comparison series.
    Probe(ProbeArgs),
}

/// `(family, s, τ, p, q)`.
#[derive(Args, Debug, Clone)]
struct SpaceArgs {
    /// `b` or `f`.
    #[arg(long, visible_alias = "family", default_value = "b")]
    space: Family,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    s: f64,
    #[arg(long, default_value_t = 0.0)]
    tau: f64,
    #[arg(long)]
    p: f64,
    /// A positive number or `inf`.
    #[arg(long)]
    q: Exponent,
}

#[derive(Args, Debug)]
struct ClassifyArgs {
    #[arg(long)]
    n: usize,
    #[command(flatten)]
    space: SpaceArgs,
    /// A_p-dimension of the weight.
    #[arg(long, default_value_t = 0.0)]
    d: f64,
    /// Dual dimension; must be 0 when p ≤ 1.
    #[arg(long = "d-tilde", default_value_t = 0.0)]
    d_tilde: f64,
    /// Kernel exponents to test for admissibility under every rule.
    #[arg(long = "D", allow_hyphen_values = true, requires_all = ["big_e", "big_f"])]
    big_d: Option<f64>,
    #[arg(long = "E", allow_hyphen_values = true)]
    big_e: Option<f64>,
    #[arg(long = "F", allow_hyphen_values = true)]
    big_f: Option<f64>,
}

#[derive(Args, Debug)]
struct NormArgs {
    #[command(flatten)]
    space: SpaceArgs,
    /// `ident`, `power:d=<f>`, `dpower:d=<f,...>` or `grid:<path>`.
    #[arg(long, default_value = "ident")]
    weight: String,
    /// How the weight enters: `w` (pointwise W^{1/p}), `averaging` (reducing operators from quadrature)
    /// or `closed-form` (power weights only).
    #[arg(long, default_value = "w")]
    mode: String,
    /// Coefficient file (JSON lines).
    #[arg(long = "in")]
    input: PathBuf,
    /// `j_min:j_max:K`; defaults to the smallest window holding the support.
    #[arg(long, allow_hyphen_values = true)]
    window: Option<WindowArg>,
    #[command(flatten)]
    quad: QuadArgs,
}

#[derive(Args, Debug)]
struct ApplyArgs {
    /// `def:D=<f>,E=<f>,F=<f>[,amp=<f>]`, `diag:<f>` or `explicit:<path>`.
    #[arg(long)]
    kernel: String,
    #[arg(long = "in")]
    input: PathBuf,
    /// Output coefficient file.
    #[arg(long = "out")]
    output: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    window: Option<WindowArg>,
    /// Keep only `|j_R - j_Q| ≤ band`.
    #[arg(long)]
    band: Option<u32>,
    /// Drop entries with `|b_QR| < eps`.
    #[arg(long, default_value_t = 0.0)]
    eps: f64,
}

#[derive(Args, Debug, Clone, Copy)]
struct QuadArgs {
    /// Gauss–Legendre points per axis.
    #[arg(long, default_value_t = 4)]
    points: usize,
    /// Subdivision depth on cubes touching the singular set.
    #[arg(long, default_value_t = 12)]
    depth: u32,
}

#[derive(Args, Debug)]
struct ApArgs {
    #[arg(long)]
    weight: String,
    #[arg(long, default_value_t = 1)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    m: usize,
    #[arg(long)]
    p: f64,
    #[arg(long, allow_hyphen_values = true)]
    window: WindowArg,
    #[arg(long = "i-max", default_value_t = 4)]
    i_max: u32,
    #[command(flatten)]
    quad: QuadArgs,
}

#[derive(Args, Debug)]
struct ReducingArgs {
    #[arg(long)]
    d: f64,
    #[arg(long)]
    p: f64,
    #[arg(long, default_value_t = 1)]
    n: usize,
    #[arg(long = "j-min", default_value_t = -4, allow_hyphen_values = true)]
    j_min: i32,
    #[arg(long = "j-max", default_value_t = 4, allow_hyphen_values = true)]
    j_max: i32,
    /// Largest `|k|_∞`.
    #[arg(long = "k-max", default_value_t = 16)]
    k_max: i64,
    #[command(flatten)]
    quad: QuadArgs,
}

#[derive(Args, Debug)]
struct Lemma22Args {
    #[arg(long)]
    d: f64,
    #[arg(long)]
    p: f64,
    #[arg(long = "d-tilde", default_value_t = 0.0)]
    d_tilde: f64,
    #[arg(long, default_value_t = 1)]
    n: usize,
    #[arg(long, default_value_t = 10_000)]
    pairs: usize,
    #[arg(long, allow_hyphen_values = true, default_value = "-4:4:16")]
    window: WindowArg,
}

#[derive(Args, Debug)]
struct SharpnessArgs {
    /// Sequence family id.
    #[arg(long)]
    experiment: String,
    #[arg(long = "D", allow_hyphen_values = true)]
    big_d: f64,
    #[arg(long = "E", allow_hyphen_values = true)]
    big_e: f64,
    #[arg(long = "F", allow_hyphen_values = true)]
    big_f: f64,
    #[command(flatten)]
    space: SpaceArgs,
    #[arg(long, default_value_t = 1)]
    n: usize,
    /// Power weight dimension for the weighted families.
    #[arg(long, default_value_t = 0.0)]
    d: f64,
    #[arg(long, default_value_t = 4.0)]
    radius: f64,
    /// `a:b`, the powers of two from `a` to `b`.
    #[arg(long)]
    ladder: LadderArg,
    /// CSV destination; standard output when absent.
    #[arg(long = "out")]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct VerifyAdArgs {
    #[arg(long)]
    kernel: String,
    #[arg(long = "D", allow_hyphen_values = true)]
    big_d: f64,
    #[arg(long = "E", allow_hyphen_values = true)]
    big_e: f64,
    #[arg(long = "F", allow_hyphen_values = true)]
    big_f: f64,
    #[arg(long, default_value_t = 1)]
    n: usize,
    #[arg(long, allow_hyphen_values = true)]
    window: WindowArg,
    /// Report the attaining pair as a witness when `C` exceeds this bound.
    #[arg(long)]
    bound: Option<f64>,
}

#[derive(Args, Debug)]
struct ProbeArgs {
    /// `shifted_integral`, `shifted_lattice_sum`, `e_series`, `f_series` or `d_row`.
    #[arg(long)]
    family: String,
    #[arg(long, default_value_t = 1024)]
    depth: u64,
    #[arg(long, default_value_t = 1)]
    n: usize,
    #[arg(long, default_value_t = 2.0)]
    a: f64,
    #[arg(long, default_value_t = -3, allow_hyphen_values = true)]
    j: i32,
    #[arg(long, default_value_t = 50)]
    samples: usize,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    s: f64,
    #[arg(long, default_value_t = 0.0)]
    d: f64,
    #[arg(long, default_value_t = 2.0)]
    p: f64,
    #[arg(long = "D", default_value_t = 2.0, allow_hyphen_values = true)]
    big_d: f64,
    #[arg(long = "E", default_value_t = 1.0, allow_hyphen_values = true)]
    big_e: f64,
    #[arg(long = "F", default_value_t = 1.0, allow_hyphen_values = true)]
    big_f: f64,
}

/// `j_min:j_max:K`; the dimension is filled in by the command.
#[derive(Clone, Copy, Debug)]
struct WindowArg {
    j_min: i32,
    j_max: i32,
    k: u64,
}

impl WindowArg {
    fn window(&self, n: usize) -> mwad_core::Result<Window> {
        Window::new(self.j_min, self.j_max, self.k, n)
    }
}

impl std::str::FromStr for WindowArg {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let [a, b, c] = parts.as_slice() else {
            return Err(format!("expected j_min:j_max:K, got '{s}'"));
        };
        let bad = |e: std::num::ParseIntError| format!("bad window '{s}': {e}");
        Ok(WindowArg { j_min: a.parse().map_err(bad)?, j_max: b.parse().map_err(bad)?, k: c.parse().map_err(bad)? })
    }
}

#[derive(Clone, Debug)]
struct LadderArg(Vec<u32>);

impl std::str::FromStr for LadderArg {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let (a, b) = s.split_once(':').ok_or_else(|| format!("expected a:b, got '{s}'"))?;
        let bad = |e: std::num::ParseIntError| format!("bad ladder '{s}': {e}");
        let (a, b): (u32, u32) = (a.parse().map_err(bad)?, b.parse().map_err(bad)?);
        if !a.is_power_of_two() || !b.is_power_of_two() || a > b {
            return Err(format!("ladder ends must be powers of two with a ≤ b, got '{s}'"));
        }
        let mut out = Vec::new();
        let mut v = a;
        while v <= b {
            out.push(v);
            match v.checked_mul(2) {
                Some(next) => v = next,
                None => break,
            }
        }
        Ok(LadderArg(out))
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<mwad_core::Error>() {
        Some(e) if !e.is_config() => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
