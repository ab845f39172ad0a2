use mwad_core::adkernel::AdParams;
use mwad_core::experiments::{growth_run, ExperimentSpec, SequenceFamily};
use mwad_core::seqspace::{Exponent, Family, SpaceParams};

fn space() -> SpaceParams {
    SpaceParams::new(Family::B, 0.0, 0.0, 1.0, Exponent::Finite(1.0)).unwrap()
}

fn ladder() -> Vec<u32> {
    (2..=7).map(|i| 1 << i).collect()
}

#[test]
fn unit_weight_reproduces_the_unweighted_family() {
    let kernel = AdParams::new(1.5, 2.0, 2.0);
    let plain = growth_run(&ExperimentSpec::new(SequenceFamily::TnLevel0, space(), kernel, ladder(), 1)).unwrap();
    let weighted = growth_run(&ExperimentSpec::new(SequenceFamily::WeightedLevel0, space(), kernel, ladder(), 1)).unwrap();
    assert_eq!(plain.records, weighted.records);
}

#[test]
fn ratio_settles_above_threshold() {
    let kernel = AdParams::new(2.5, 2.0, 2.0);
    let series = growth_run(&ExperimentSpec::new(SequenceFamily::TnLevel0, space(), kernel, ladder(), 1)).unwrap();
    let r = series.ratios();
    for w in r[r.len() - 3..].windows(2) {
        assert!((w[1] / w[0] - 1.0).abs() < 0.05, "{r:?}");
    }
}

#[test]
fn ratio_grows_below_threshold() {
    let kernel = AdParams::new(1.0, 2.0, 2.0);
    let series = growth_run(&ExperimentSpec::new(SequenceFamily::TnLevel0, space(), kernel, ladder(), 1)).unwrap();
    assert!(series.ratios().windows(2).all(|w| w[1] > w[0]));
}
