use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adkernel::{bdef_entry, AdParams};
use crate::dyadic::DyadicCube;
use crate::error::{invalid, Error, Result};
use crate::quadrature::GaussLegendre;
use crate::stats::unit_ball_volume;
use crate::weights::closed_form_power_scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeFamily {
    /// `∫ 2^{jn} (1+|2^j x + y|)^{-a} dx`, by radial shells.
    ShiftedIntegral,
    /// `Σ_k 2^{jn} (1+|2^j k + y|)^{-a}` for `j ≤ 0`, by shells `|k|_∞ = K`, over random `y`.
    ShiftedLatticeSum,
    /// `Σ_{i ≤ 0} 2^{i(E - s - n/2 - d/p)}`.
    ESeries,
    /// `Σ_{i ≥ 1} 2^{-i(F + s - n/2)} (1+i)^{-1}`.
    FSeries,
    /// `Σ_k b^{DEF}_{Q_{0,0},Q_{0,k}} |A_{Q_{0,k}}^{-1} e|` for the power weight, by shells `|k|_∞ = K`.
    DRow,
}

impl std::str::FromStr for ProbeFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::Parse(format!("unknown probe '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeParams {
    pub n: usize,
    /// Decay exponent of the shifted sums.
    pub a: f64,
    pub j: i32,
    /// Number of random shifts `y`.
    pub samples: usize,
    pub seed: u64,
    pub s: f64,
    pub d: f64,
    pub p: f64,
    pub kernel: AdParams,
}

impl Default for ProbeParams {
    fn default() -> Self {
        ProbeParams {
            n: 1,
            a: 2.0,
            j: -3,
            samples: 50,
            seed: 0,
            s: 0.0,
            d: 0.0,
            p: 2.0,
            kernel: AdParams::new(2.0, 1.0, 1.0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "verdict")]
pub enum Verdict {
    /// Block ratio below 0.98; the tail is estimated as `B r/(1-r)` from the last block.
    Converges { tail_estimate: f64 },
    Diverges,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesReport {
    pub family: ProbeFamily,
    pub depth: u64,
    pub total: f64,
    /// `(terms summed, partial sum)` at every power of two and at the end.
    pub checkpoints: Vec<(u64, f64)>,
    /// Sums over index blocks `[2^b - 1, 2^{b+1} - 1)`.
    pub blocks: Vec<f64>,
    pub last_ratio: f64,
    pub verdict: Verdict,
    /// Exact tail after `depth` terms when the terms are geometric.
    pub geometric_tail: Option<f64>,
    /// Range of the totals over the random shifts.
    pub sample_min: Option<f64>,
    pub sample_max: Option<f64>,
}

/// Partial sums, dyadic blocks and the block-ratio verdict of a series.
fn summarize(family: ProbeFamily, terms: impl Iterator<Item = f64>) -> SeriesReport {
    let mut total = 0.0;
    let mut checkpoints = Vec::new();
    let mut blocks = Vec::new();
    let mut block = 0.0;
    let mut block_end = 1u64;
    let mut count = 0u64;
    for t in terms {
        total += t;
        block += t;
        count += 1;
        if count.is_power_of_two() {
            checkpoints.push((count, total));
        }
        if count == block_end {
            blocks.push(block);
            block = 0.0;
            block_end = 2 * block_end + 1;
        }
    }
    if checkpoints.last().map_or(true, |c| c.0 != count) {
        checkpoints.push((count, total));
    }
    let last_ratio = match blocks.as_slice() {
        [.., a, b] if *a > 0.0 => b / a,
        [.., _, b] if *b > 0.0 => f64::INFINITY,
        _ => 0.0,
    };
    let verdict = if last_ratio >= 0.98 {
        Verdict::Diverges
    } else {
        let last = blocks.last().copied().unwrap_or(0.0);
        Verdict::Converges { tail_estimate: last * last_ratio / (1.0 - last_ratio) }
    };
    SeriesReport {
        family,
        depth: count,
        total,
        checkpoints,
        blocks,
        last_ratio,
        verdict,
        geometric_tail: None,
        sample_min: None,
        sample_max: None,
    }
}

/// Lattice points with `|k|_∞ = shell`, grouped by the first axis that reaches the shell.
fn shell(n: usize, shell: i64) -> Vec<Vec<i64>> {
    if shell == 0 {
        return vec![vec![0; n]];
    }
    let mut out = Vec::new();
    for axis in 0..n {
        let ranges: Vec<(i64, i64)> = (0..n)
            .map(|i| if i < axis { (1 - shell, shell - 1) } else { (-shell, shell) })
            .collect();
        let mut k: Vec<i64> = ranges.iter().map(|r| r.0).collect();
        'outer: loop {
            out.push(k.clone());
            for i in (0..n).rev() {
                let step = if i == axis { 2 * shell } else { 1 };
                if k[i] + step <= ranges[i].1 {
                    k[i] += step;
                    continue 'outer;
                }
                k[i] = ranges[i].0;
            }
            break;
        }
    }
    out
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Runs one probe to `depth` terms.
pub fn series_probe(family: ProbeFamily, params: &ProbeParams, depth: u64) -> Result<SeriesReport> {
    if depth < 8 {
        return Err(invalid("depth must be at least 8"));
    }
    if params.n == 0 {
        return Err(invalid("n must be positive"));
    }
    let n = params.n;
    let nf = n as f64;
    let half_n = nf / 2.0;
    match family {
        ProbeFamily::ESeries => {
            let x = params.kernel.e - (params.s + half_n + params.d / params.p);
            let mut rep = summarize(family, (0..depth).map(|i| 2f64.powf(-x * i as f64)));
            if x > 0.0 {
                rep.geometric_tail = Some(2f64.powf(-x * depth as f64) / (1.0 - 2f64.powf(-x)));
            }
            Ok(rep)
        }
        ProbeFamily::FSeries => {
            let y = params.kernel.f + params.s - half_n;
            Ok(summarize(family, (1..=depth).map(|i| 2f64.powf(-(i as f64) * y) / (1.0 + i as f64))))
        }
        ProbeFamily::DRow => {
            if !(params.p > 0.0 && params.p.is_finite()) {
                return Err(invalid("p must be positive"));
            }
            let origin = DyadicCube::new(0, &vec![0; n]);
            let terms = (0..depth as i64).map(|big_k| {
                shell(n, big_k)
                    .iter()
                    .map(|k| {
                        let r = DyadicCube::new(0, k);
                        bdef_entry(&origin, &r, &params.kernel) / closed_form_power_scalar(params.d, params.p, &r)
                    })
                    .sum::<f64>()
            });
            Ok(summarize(family, terms))
        }
        ProbeFamily::ShiftedIntegral => {
            if !(params.a > nf) {
                return Err(invalid("the shifted integral needs a > n"));
            }
            let gl = GaussLegendre::new(8);
            let surface = nf * unit_ball_volume(n);
            let terms = (0..depth).map(|b| {
                gl.nodes
                    .iter()
                    .zip(&gl.weights)
                    .map(|(u, w)| {
                        let r = b as f64 + u;
                        w * r.powi(n as i32 - 1) * (1.0 + r).powf(-params.a)
                    })
                    .sum::<f64>()
                    * surface
            });
            let mut rep = summarize(family, terms);
            rep.sample_min = Some(rep.total);
            rep.sample_max = Some(rep.total);
            Ok(rep)
        }
        ProbeFamily::ShiftedLatticeSum => {
            if params.j > 0 {
                return Err(invalid("the shifted lattice sum needs j <= 0"));
            }
            if params.samples == 0 {
                return Err(invalid("need at least one shift sample"));
            }
            let scale = 2f64.powi(params.j);
            let weight = scale.powi(n as i32);
            let series = |y: Vec<f64>| {
                (0..depth as i64).map(move |big_k| {
                    shell(n, big_k)
                        .iter()
                        .map(|k| {
                            let v: Vec<f64> = k.iter().zip(&y).map(|(&ki, yi)| scale * ki as f64 + yi).collect();
                            weight * (1.0 + norm(&v)).powf(-params.a)
                        })
                        .sum::<f64>()
                })
            };
            let mut rep = summarize(family, series(vec![0.0; n]));
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
            for _ in 0..params.samples {
                let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-4.0..4.0)).collect();
                let total: f64 = series(y).sum();
                lo = lo.min(total);
                hi = hi.max(total);
            }
            rep.sample_min = Some(lo);
            rep.sample_max = Some(hi);
            Ok(rep)
        }
    }
}
