use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use mwad_core::adkernel::{apply, verify_ad, AdKernel, AdParams, Truncation};
use mwad_core::experiments::{growth_run, series_probe, ExperimentSpec, ProbeFamily, ProbeParams, SequenceFamily};
use mwad_core::quadrature::QuadPolicy;
use mwad_core::seqspace::{norm, CoeffSequence, SpaceParams, WeightMode};
use mwad_core::thresholds::{admissible, classify, Rule};
use mwad_core::weights::{
    ap_constant, ap_dimension_fit, closed_form_comparison, lattice_cubes, lemma22_check, ReducingFamily, Strategy,
    WeightModel, WeightProfile,
};
use mwad_core::{DyadicCube, Window};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::{
    ApArgs, ApplyArgs, ClassifyArgs, Cli, Command, Lemma22Args, NormArgs, ProbeArgs, QuadArgs, ReducingArgs,
    SharpnessArgs, SpaceArgs, VerifyAdArgs,
};

pub fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed;
    match cli.command {
        Command::Classify(a) => classify_cmd(a),
        Command::Norm(a) => norm_cmd(a),
        Command::Apply(a) => apply_cmd(a),
        Command::ApEstimate(a) => ap_cmd(a),
        Command::VerifyReducing(a) => reducing_cmd(a),
        Command::Lemma22(a) => lemma22_cmd(a, seed),
        Command::Sharpness(a) => sharpness_cmd(a),
        Command::VerifyAd(a) => verify_ad_cmd(a),
        Command::Probe(a) => probe_cmd(a, seed),
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn space_params(a: &SpaceArgs) -> Result<SpaceParams> {
    Ok(SpaceParams::new(a.space, a.s, a.tau, a.p, a.q)?)
}

fn quad_policy(a: &QuadArgs) -> Result<QuadPolicy> {
    let q = QuadPolicy { points: a.points, depth: a.depth };
    q.validate()?;
    Ok(q)
}

fn read_sequence(path: &Path) -> Result<CoeffSequence> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(CoeffSequence::read_jsonl(BufReader::new(file), None)?)
}

fn window_or_bounding(arg: Option<crate::WindowArg>, t: &CoeffSequence) -> Result<Window> {
    Ok(match arg {
        Some(w) => w.window(t.n)?,
        None => t.bounding_window()?,
    })
}

fn classify_cmd(a: ClassifyArgs) -> Result<()> {
    let s = &a.space;
    let report = classify(a.n, s.space, s.s, s.tau, s.p, s.q, a.d, a.d_tilde)?;
    match (a.big_d, a.big_e, a.big_f) {
        (Some(d), Some(e), Some(f)) => {
            let verdicts: Vec<_> = Rule::ALL
                .into_iter()
                .filter(|r| report.bounds(*r).is_some())
                .map(|r| admissible(d, e, f, &report, r))
                .collect::<mwad_core::Result<_>>()?;
            print_json(&json!({ "report": report, "admissibility": verdicts }))
        }
        _ => print_json(&report),
    }
}

fn norm_cmd(a: NormArgs) -> Result<()> {
    let params = space_params(&a.space)?;
    let t = read_sequence(&a.input)?;
    let window = window_or_bounding(a.window, &t)?;
    let w = WeightModel::parse(&a.weight, t.n, t.m)?.with_quad(quad_policy(&a.quad)?)?;
    let result = match a.mode.as_str() {
        "w" if w.is_identity() => norm(&t, &params, WeightMode::Unweighted, &window)?,
        "w" => norm(&t, &params, WeightMode::Weight(&w), &window)?,
        "averaging" => {
            let cubes: Vec<DyadicCube> = t.cubes().cloned().collect();
            let family = ReducingFamily::from_weight(&w, params.p, &cubes, Strategy::Auto)?;
            norm(&t, &params, WeightMode::Averaging(&family), &window)?
        }
        "closed-form" => {
            let Some(d) = w.scalar_power_exponent() else {
                bail!(mwad_core::Error::InvalidParameter("closed-form mode needs ident or power:d=<f>".into()));
            };
            let family = ReducingFamily::closed_form_power(d, params.p, t.m)?;
            norm(&t, &params, WeightMode::Averaging(&family), &window)?
        }
        other => bail!(mwad_core::Error::Parse(format!("unknown mode '{other}'"))),
    };
    print_json(&result)
}

fn apply_cmd(a: ApplyArgs) -> Result<()> {
    let t = read_sequence(&a.input)?;
    let window = window_or_bounding(a.window, &t)?;
    let kernel = AdKernel::parse(&a.kernel)?.with_truncation(Truncation { level_band: a.band, eps_cut: a.eps })?;
    let result = apply(&kernel, &t, &window)?;
    let file = File::create(&a.output).with_context(|| format!("creating {}", a.output.display()))?;
    let mut out = BufWriter::new(file);
    result.output.write_jsonl(&mut out)?;
    out.flush()?;
    print_json(&json!({
        "output": a.output.display().to_string(),
        "entries": result.output.len(),
        "window": window,
        "tail_bound": result.tail_bound,
    }))
}

fn ap_cmd(a: ApArgs) -> Result<()> {
    let w = WeightModel::parse(&a.weight, a.n, a.m)?.with_quad(quad_policy(&a.quad)?)?;
    let window = a.window.window(a.n)?;
    let constant = ap_constant(&w, a.p, &window)?;
    let dimension = ap_dimension_fit(&w, a.p, &window, a.i_max)?;
    print_json(&json!({ "constant": constant, "dimension": dimension }))
}

fn reducing_cmd(a: ReducingArgs) -> Result<()> {
    let quad = quad_policy(&a.quad)?;
    let w = WeightModel::scalar_power(a.d, 1, a.n)?.with_quad(quad)?;
    let cubes = lattice_cubes(a.n, a.j_min, a.j_max, a.k_max);
    let base = closed_form_comparison(&w, a.p, &cubes)?;
    let fine = closed_form_comparison(&w.with_quad(quad.doubled())?, a.p, &cubes)?;
    print_json(&json!({
        "base": base,
        "doubled": fine,
        "lo_change": (fine.lo / base.lo - 1.0).abs(),
        "hi_change": (fine.hi / base.hi - 1.0).abs(),
    }))
}

fn lemma22_cmd(a: Lemma22Args, seed: u64) -> Result<()> {
    let window = a.window.window(a.n)?;
    let profile = WeightProfile::new(a.p, a.d, a.d_tilde, a.n)?;
    let family = ReducingFamily::closed_form_power(a.d, a.p, 1)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs: Vec<(DyadicCube, DyadicCube)> =
        (0..2 * a.pairs).map(|_| (window.random_cube(&mut rng), window.random_cube(&mut rng))).collect();
    let half = lemma22_check(&family, &profile, &pairs[..a.pairs])?;
    let full = lemma22_check(&family, &profile, &pairs)?;
    print_json(&json!({
        "profile": profile,
        "sample": half,
        "doubled_sample": full,
        "change": (full.c / half.c - 1.0).abs(),
    }))
}

fn sharpness_cmd(a: SharpnessArgs) -> Result<()> {
    let family: SequenceFamily = a.experiment.parse()?;
    let mut spec = ExperimentSpec::new(
        family,
        space_params(&a.space)?,
        AdParams::new(a.big_d, a.big_e, a.big_f),
        a.ladder.0.clone(),
        a.n,
    );
    spec.d = a.d;
    spec.radius = a.radius;
    let series = growth_run(&spec)?;
    let sink: Box<dyn Write> = match &a.output {
        Some(path) => Box::new(File::create(path).with_context(|| format!("creating {}", path.display()))?),
        None => Box::new(io::stdout().lock()),
    };
    let mut csv = csv::Writer::from_writer(sink);
    csv.write_record(["N", "norm_in", "norm_out", "ratio", "fitted_model", "alpha", "r2"])?;
    for r in &series.records {
        csv.write_record([
            r.n.to_string(),
            r.norm_in.to_string(),
            r.norm_out.to_string(),
            r.ratio.to_string(),
            series.fit.model.name().to_string(),
            series.fit.alpha.to_string(),
            series.fit.r2.to_string(),
        ])?;
    }
    csv.flush()?;
    Ok(())
}

fn verify_ad_cmd(a: VerifyAdArgs) -> Result<()> {
    let kernel = AdKernel::parse(&a.kernel)?;
    let window = a.window.window(a.n)?;
    let report = verify_ad(&kernel, &AdParams::new(a.big_d, a.big_e, a.big_f), &window)?;
    match a.bound {
        Some(bound) if report.c > bound => print_json(&json!({
            "within_bound": false,
            "bound": bound,
            "witness": { "pair": report.attaining, "ratio": report.c },
            "pairs": report.pairs,
        })),
        _ => print_json(&json!({ "within_bound": true, "c": report.c, "attaining": report.attaining, "pairs": report.pairs })),
    }
}

fn probe_cmd(a: ProbeArgs, seed: u64) -> Result<()> {
    let family: ProbeFamily = a.family.parse()?;
    let params = ProbeParams {
        n: a.n,
        a: a.a,
        j: a.j,
        samples: a.samples,
        seed,
        s: a.s,
        d: a.d,
        p: a.p,
        kernel: AdParams::new(a.big_d, a.big_e, a.big_f),
    };
    print_json(&series_probe(family, &params, a.depth)?)
}
