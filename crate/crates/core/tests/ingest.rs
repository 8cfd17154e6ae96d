use ctxmat::metrics::stats::{mean, sample_variance};
use ctxmat::pipeline::config::HumanSettings;
use ctxmat::pipeline::human::{synthetic_fixture, FixtureSpec};
use ctxmat::pipeline::ingest::{bin_count, bin_samples, ingest_human};
use proptest::prelude::*;

#[test]
fn fixture_channels_are_standardized_per_trial() {
    let raw = synthetic_fixture(&FixtureSpec {
        pairs: 2,
        ..FixtureSpec::default()
    })
    .unwrap();
    let report = ingest_human(&raw, &HumanSettings::default()).unwrap();
    assert_eq!(report.tasks.len(), 4);
    for task in &report.tasks {
        for seg in task.series.segments() {
            for a in 0..2 {
                for h in 0..3 {
                    let x = &task.series.trace(a, h)[seg.range()];
                    assert!(mean(x).abs() < 1e-12);
                    assert!((sample_variance(x) - 1.0).abs() < 1e-12);
                }
            }
        }
    }
}

proptest! {
    #[test]
    fn binning_conserves_duration(
        gaps in proptest::collection::vec(0.5f64..400.0, 1..300),
        bin in 50.0f64..600.0,
    ) {
        let mut t = 0.0;
        let mut samples = vec![(0.0, [1.0, 2.0, 3.0])];
        for g in &gaps {
            t += g;
            samples.push((t, [1.0, 2.0, 3.0]));
        }
        let b = bin_samples(&samples, bin).unwrap();
        prop_assert_eq!(b.bins.len(), bin_count(t, bin));
        prop_assert!(b.bins.iter().all(|v| *v == [1.0, 2.0, 3.0]));
    }
}
