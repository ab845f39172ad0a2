//! Almost-diagonal kernels `{b_{Q,R}}`: the envelope `b^{DEF}`, kernel algebra and application.

mod apply;
mod estimate;

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dyadic::{distance_factor, DyadicCube};
use crate::error::{invalid, Error, Result};
use crate::linalg::C64;
use crate::seqspace::CoeffSequence;
use crate::weights::ReducingFamily;

pub use apply::{apply, ApplyResult};
pub use estimate::{compose, op_norm_estimate, verify_ad, OpNormReport, VerifyReport, WindowStats};

/// Decay exponents of the envelope.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdParams {
    #[serde(rename = "D")]
    pub d: f64,
    #[serde(rename = "E")]
    pub e: f64,
    #[serde(rename = "F")]
    pub f: f64,
}

impl AdParams {
    pub fn new(d: f64, e: f64, f: f64) -> Self {
        AdParams { d, e, f }
    }
}

/// `(ℓ(Q)/ℓ(R))^E` when `ℓ(Q) ≤ ℓ(R)`, else `(ℓ(R)/ℓ(Q))^F`.
#[inline]
pub fn level_factor(jq: i32, jr: i32, params: &AdParams) -> f64 {
    if jq >= jr {
        2f64.powf(-((jq - jr) as f64) * params.e)
    } else {
        2f64.powf(-((jr - jq) as f64) * params.f)
    }
}

/// `b^{DEF}_{Q,R}`. Equal edges take the `E` branch.
pub fn bdef_entry(q: &DyadicCube, r: &DyadicCube, params: &AdParams) -> f64 {
    distance_factor(q, r).powf(-params.d) * level_factor(q.j, r.j, params)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Part {
    /// `ℓ(R) ≥ ℓ(Q)`.
    Upper,
    /// `ℓ(R) < ℓ(Q)`.
    Lower,
}

impl Part {
    fn keeps(&self, q: &DyadicCube, r: &DyadicCube) -> bool {
        match self {
            Part::Upper => r.j <= q.j,
            Part::Lower => r.j > q.j,
        }
    }
}

pub type KernelTable = HashMap<(DyadicCube, DyadicCube), C64>;

#[derive(Clone, Debug)]
pub enum DiagonalValues {
    Constant(C64),
    Map(Arc<HashMap<DyadicCube, C64>>),
}

impl DiagonalValues {
    pub fn at(&self, q: &DyadicCube) -> C64 {
        match self {
            DiagonalValues::Constant(c) => *c,
            DiagonalValues::Map(m) => m.get(q).copied().unwrap_or(C64::new(0.0, 0.0)),
        }
    }
}

#[derive(Clone, Debug)]
pub enum KernelForm {
    Analytic { params: AdParams, amplitude: f64 },
    Explicit(Arc<KernelTable>),
    Diagonal(DiagonalValues),
    /// `|b_{Q,R}| ‖A_Q A_R^{-1}‖`.
    Conjugated { base: Box<KernelForm>, family: ReducingFamily },
    /// `(ℓ(R)/ℓ(Q))^s b_{Q,R}`.
    Rescaled { base: Box<KernelForm>, s: f64 },
    Triangular { base: Box<KernelForm>, part: Part },
}

impl KernelForm {
    pub fn entry(&self, q: &DyadicCube, r: &DyadicCube) -> Result<C64> {
        Ok(match self {
            KernelForm::Analytic { params, amplitude } => C64::new(amplitude * bdef_entry(q, r, params), 0.0),
            KernelForm::Explicit(table) => table.get(&(q.clone(), r.clone())).copied().unwrap_or(C64::new(0.0, 0.0)),
            KernelForm::Diagonal(values) => {
                if q == r {
                    values.at(q)
                } else {
                    C64::new(0.0, 0.0)
                }
            }
            KernelForm::Conjugated { base, family } => {
                let b = base.entry(q, r)?.norm();
                if b == 0.0 {
                    C64::new(0.0, 0.0)
                } else {
                    C64::new(b * family.ratio_norm(q, r)?, 0.0)
                }
            }
            KernelForm::Rescaled { base, s } => base.entry(q, r)? * (r.edge() / q.edge()).powf(*s),
            KernelForm::Triangular { base, part } => {
                if part.keeps(q, r) {
                    base.entry(q, r)?
                } else {
                    C64::new(0.0, 0.0)
                }
            }
        })
    }

    /// The analytic envelope underneath, with its amplitude, when the entries are bounded by it.
    fn analytic_envelope(&self) -> Option<(AdParams, f64, Option<Part>)> {
        match self {
            KernelForm::Analytic { params, amplitude } => Some((*params, amplitude.abs(), None)),
            KernelForm::Triangular { base, part } => match base.analytic_envelope()? {
                (p, a, None) => Some((p, a, Some(*part))),
                (p, a, Some(inner)) if inner == *part => Some((p, a, Some(inner))),
                _ => None,
            },
            _ => None,
        }
    }
}

/// Level band `|j_R - j_Q| ≤ band` and magnitude cutoff `|b_{Q,R}| ≥ eps_cut`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Truncation {
    pub level_band: Option<u32>,
    pub eps_cut: f64,
}

impl Truncation {
    pub fn none() -> Self {
        Truncation::default()
    }

    pub fn is_none(&self) -> bool {
        self.level_band.is_none() && self.eps_cut == 0.0
    }

    fn in_band(&self, jq: i32, jr: i32) -> bool {
        self.level_band.map_or(true, |b| (jq - jr).unsigned_abs() <= b)
    }
}

#[derive(Clone, Debug)]
pub struct AdKernel {
    pub form: KernelForm,
    pub truncation: Truncation,
}

#[derive(Serialize, Deserialize)]
struct KernelLine {
    q: DyadicCube,
    r: DyadicCube,
    re: f64,
    im: f64,
}

impl AdKernel {
    pub fn analytic(params: AdParams) -> Self {
        Self::analytic_scaled(params, 1.0)
    }

    pub fn analytic_scaled(params: AdParams, amplitude: f64) -> Self {
        AdKernel { form: KernelForm::Analytic { params, amplitude }, truncation: Truncation::none() }
    }

    pub fn explicit(table: KernelTable) -> Self {
        AdKernel { form: KernelForm::Explicit(Arc::new(table)), truncation: Truncation::none() }
    }

    pub fn diagonal_constant(c: C64) -> Self {
        AdKernel { form: KernelForm::Diagonal(DiagonalValues::Constant(c)), truncation: Truncation::none() }
    }

    pub fn diagonal_map(map: HashMap<DyadicCube, C64>) -> Self {
        AdKernel { form: KernelForm::Diagonal(DiagonalValues::Map(Arc::new(map))), truncation: Truncation::none() }
    }

    pub fn identity() -> Self {
        Self::diagonal_constant(C64::new(1.0, 0.0))
    }

    pub fn zero() -> Self {
        Self::explicit(KernelTable::new())
    }

    pub fn with_truncation(mut self, truncation: Truncation) -> Result<Self> {
        if !(truncation.eps_cut >= 0.0 && truncation.eps_cut.is_finite()) {
            return Err(invalid(format!("eps_cut must be finite and nonnegative, got {}", truncation.eps_cut)));
        }
        self.truncation = truncation;
        Ok(self)
    }

    /// Untruncated entry `b_{Q,R}`.
    pub fn entry(&self, q: &DyadicCube, r: &DyadicCube) -> Result<C64> {
        if q.dim() != r.dim() {
            return Err(Error::DimensionMismatch { expected: q.dim(), found: r.dim() });
        }
        self.form.entry(q, r)
    }

    /// Entry after the level band and magnitude cutoff.
    pub fn truncated_entry(&self, q: &DyadicCube, r: &DyadicCube) -> Result<C64> {
        if !self.truncation.in_band(q.j, r.j) {
            return Ok(C64::new(0.0, 0.0));
        }
        let e = self.entry(q, r)?;
        Ok(if e.norm() < self.truncation.eps_cut { C64::new(0.0, 0.0) } else { e })
    }

    /// Entrywise `(ℓ(R)/ℓ(Q))^s b_{Q,R}`. The analytic form maps to `(D, E-s, F+s)`.
    pub fn rescale(&self, s: f64) -> AdKernel {
        if s == 0.0 {
            return self.clone();
        }
        let form = match &self.form {
            KernelForm::Analytic { params, amplitude } => KernelForm::Analytic {
                params: AdParams::new(params.d, params.e - s, params.f + s),
                amplitude: *amplitude,
            },
            KernelForm::Explicit(table) => KernelForm::Explicit(Arc::new(
                table.iter().map(|((q, r), v)| ((q.clone(), r.clone()), v * (r.edge() / q.edge()).powf(s))).collect(),
            )),
            KernelForm::Diagonal(values) => KernelForm::Diagonal(values.clone()),
            KernelForm::Rescaled { base, s: s0 } => KernelForm::Rescaled { base: base.clone(), s: s0 + s },
            other => KernelForm::Rescaled { base: Box::new(other.clone()), s },
        };
        AdKernel { form, truncation: self.truncation }
    }

    /// `b̃_{Q,R} = |b_{Q,R}| ‖A_Q A_R^{-1}‖`.
    pub fn conjugate(&self, family: &ReducingFamily) -> AdKernel {
        AdKernel {
            form: KernelForm::Conjugated { base: Box::new(self.form.clone()), family: family.clone() },
            truncation: self.truncation,
        }
    }

    /// `(B₀, B₁)`: entries with `ℓ(R) ≥ ℓ(Q)` and with `ℓ(R) < ℓ(Q)`.
    pub fn split_triangular(&self) -> (AdKernel, AdKernel) {
        if let KernelForm::Diagonal(_) = self.form {
            return (self.clone(), AdKernel { truncation: self.truncation, ..AdKernel::zero() });
        }
        let part = |part| AdKernel {
            form: KernelForm::Triangular { base: Box::new(self.form.clone()), part },
            truncation: self.truncation,
        };
        (part(Part::Upper), part(Part::Lower))
    }

    /// Parses `def:D=<f>,E=<f>,F=<f>[,amp=<f>]`, `diag:<f>` or `explicit:<path>`.
    pub fn parse(spec: &str) -> Result<AdKernel> {
        let spec = spec.trim();
        if let Some(rest) = spec.strip_prefix("def:") {
            let mut vals: HashMap<String, f64> = HashMap::new();
            for part in rest.split(',') {
                let (k, v) = part
                    .split_once('=')
                    .ok_or_else(|| Error::Parse(format!("expected key=value in '{part}'")))?;
                let v: f64 = v.trim().parse().map_err(|e| Error::Parse(format!("bad value in '{part}': {e}")))?;
                vals.insert(k.trim().to_string(), v);
            }
            let get = |k: &str| vals.get(k).copied().ok_or_else(|| Error::Parse(format!("missing {k} in '{spec}'")));
            let params = AdParams::new(get("D")?, get("E")?, get("F")?);
            let amp = vals.get("amp").copied().unwrap_or(1.0);
            return Ok(AdKernel::analytic_scaled(params, amp));
        }
        if let Some(rest) = spec.strip_prefix("diag:") {
            let c: f64 = rest.trim().parse().map_err(|e| Error::Parse(format!("bad diagonal value: {e}")))?;
            return Ok(AdKernel::diagonal_constant(C64::new(c, 0.0)));
        }
        if let Some(path) = spec.strip_prefix("explicit:") {
            return Self::read_explicit(Path::new(path));
        }
        Err(Error::Parse(format!("unknown kernel spec '{spec}'")))
    }

    /// Reads a JSON-lines table `{"q": cube, "r": cube, "re": f, "im": f}`.
    pub fn read_explicit(path: &Path) -> Result<AdKernel> {
        let text = fs::read_to_string(path)?;
        let mut table = KernelTable::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: KernelLine = serde_json::from_str(line)
                .map_err(|e| Error::Parse(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
            if rec.q.dim() != rec.r.dim() {
                return Err(Error::Parse(format!("line {}: cube dimensions differ", lineno + 1)));
            }
            table.insert((rec.q, rec.r), C64::new(rec.re, rec.im));
        }
        Ok(AdKernel::explicit(table))
    }

    /// Writes an explicit table, sorted by `(Q, R)`.
    pub fn write_explicit<W: Write>(table: &KernelTable, mut out: W) -> Result<()> {
        let mut keys: Vec<_> = table.keys().collect();
        keys.sort();
        for key in keys {
            let v = table[key];
            serde_json::to_writer(&mut out, &KernelLine { q: key.0.clone(), r: key.1.clone(), re: v.re, im: v.im })?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// `(J_s t)_R = ℓ(R)^{-s} t_R`, which carries smoothness `s` to smoothness `0`.
pub fn smoothness_lift(t: &CoeffSequence, s: f64) -> CoeffSequence {
    t.map(|q, v| {
        let f = crate::dyadic::exp2i(q.j).powf(s);
        v.iter().map(|z| z * f).collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(j: i32, k: i64) -> DyadicCube {
        DyadicCube::new(j, &[k])
    }

    #[test]
    fn entry_examples() {
        let p = AdParams::new(2.0, 1.5, 0.7);
        assert_eq!(bdef_entry(&c(0, 0), &c(0, 0), &p), 1.0);
        assert_eq!(bdef_entry(&c(0, 0), &c(0, 3), &p), 0.0625);
        assert!((bdef_entry(&c(1, 0), &c(0, 0), &p) - 2f64.powf(-1.5)).abs() < 1e-16);
        assert!((bdef_entry(&c(0, 0), &c(1, 0), &p) - 2f64.powf(-0.7)).abs() < 1e-16);
    }

    #[test]
    fn rescale_maps_parameters() {
        let b = AdKernel::analytic(AdParams::new(2.0, 1.0, 1.0)).rescale(0.5);
        match b.form {
            KernelForm::Analytic { params, .. } => assert_eq!(params, AdParams::new(2.0, 0.5, 1.5)),
            _ => panic!("analytic form expected"),
        }
    }

    #[test]
    fn rescaled_entries_match_definition() {
        let base = AdKernel::analytic(AdParams::new(2.0, 1.0, 1.0));
        let r = base.rescale(0.5);
        for (q, rr) in [(c(0, 0), c(2, 3)), (c(3, -1), c(0, 0)), (c(1, 1), c(1, 4))] {
            let want = base.entry(&q, &rr).unwrap() * (rr.edge() / q.edge()).powf(0.5);
            let got = r.entry(&q, &rr).unwrap();
            assert!((want - got).norm() <= 1e-15 * want.norm());
        }
    }

    #[test]
    fn conjugation_by_identity_takes_moduli() {
        let mut table = KernelTable::new();
        table.insert((c(0, 0), c(0, 1)), C64::new(-3.0, 4.0));
        let b = AdKernel::explicit(table).conjugate(&ReducingFamily::identity(1));
        assert_eq!(b.entry(&c(0, 0), &c(0, 1)).unwrap(), C64::new(5.0, 0.0));
    }

    #[test]
    fn conjugation_by_closed_form_power() {
        let fam = ReducingFamily::closed_form_power(0.5, 1.0, 1).unwrap();
        let b = AdKernel::analytic(AdParams::new(3.0, 2.0, 2.0));
        let bt = b.conjugate(&fam);
        let (q, r) = (c(1, 2), c(0, 5));
        let factor = ((1.0 + 5.0) / (1.0 + 2.0) as f64).powf(0.5) * 2f64.powf((1 - 0) as f64 * 0.5);
        let want = b.entry(&q, &r).unwrap().re * factor;
        assert!((bt.entry(&q, &r).unwrap().re - want).abs() < 1e-15 * want);
    }

    #[test]
    fn split_examples() {
        let (b0, b1) = AdKernel::diagonal_constant(C64::new(2.0, 0.0)).split_triangular();
        assert_eq!(b0.entry(&c(0, 0), &c(0, 0)).unwrap(), C64::new(2.0, 0.0));
        assert_eq!(b1.entry(&c(0, 0), &c(0, 0)).unwrap(), C64::new(0.0, 0.0));

        let (u, l) = AdKernel::analytic(AdParams::new(1.0, 1.0, 1.0)).split_triangular();
        assert_eq!(l.entry(&c(2, 0), &c(2, 1)).unwrap(), C64::new(0.0, 0.0));
        assert!(u.entry(&c(2, 0), &c(2, 1)).unwrap().re > 0.0);
        assert!(l.entry(&c(0, 0), &c(2, 1)).unwrap().re > 0.0);
    }

    #[test]
    fn parse_kernel_specs() {
        let k = AdKernel::parse("def:D=3,E=2,F=1.5,amp=2").unwrap();
        assert!(matches!(k.form, KernelForm::Analytic { amplitude, .. } if amplitude == 2.0));
        assert!(AdKernel::parse("diag:2").is_ok());
        assert!(AdKernel::parse("def:D=3,E=2").is_err());
        assert!(AdKernel::parse("nope").is_err());
    }

    #[test]
    fn explicit_roundtrip() {
        let mut table = KernelTable::new();
        table.insert((c(0, 0), c(1, 3)), C64::new(0.25, -1.0));
        table.insert((c(-1, 2), c(0, 0)), C64::new(7.0, 0.0));
        let dir = std::env::temp_dir().join(format!("mwad-kernel-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("k.jsonl");
        AdKernel::write_explicit(&table, fs::File::create(&path).unwrap()).unwrap();
        let back = AdKernel::read_explicit(&path).unwrap();
        match back.form {
            KernelForm::Explicit(t) => assert_eq!(*t, table),
            _ => panic!(),
        }
        fs::remove_dir_all(&dir).ok();
    }
}
