//! Each attribute's distortion schedules must move that attribute's analytic
//! statistic strictly monotonically in the expected direction, for nearly
//! every (image, distortion) combination of a procedural corpus.

use attiqa::core::Attribute;
use attiqa::distortion::{apply_scheduled, default_schedule, distortions_for_attribute};
use attiqa::metrics::srocc;
use attiqa::synthetic::proxy_corpus;
use attiqa::vlm::analytic_stats;

#[test]
fn analytic_stats_are_monotone_across_schedules() {
    let corpus = proxy_corpus(20, 64, 64, 123);
    let mut total = 0usize;
    let mut monotone = 0usize;
    let mut failures = Vec::new();

    for attribute in Attribute::ALL {
        for kind in distortions_for_attribute(attribute) {
            let schedule = default_schedule(kind);
            let levels: Vec<f64> = (0..schedule.levels()).map(|l| l as f64).collect();
            for img in &corpus {
                let stats: Vec<f64> = (0..schedule.levels())
                    .map(|level| {
                        let distorted = apply_scheduled(img, &schedule, level, 11).unwrap();
                        analytic_stats(&distorted)[attribute.index()]
                    })
                    .collect();
                total += 1;
                let ok = match srocc(&stats, &levels) {
                    Ok(r) => r.value * f64::from(schedule.expected_direction) == 1.0,
                    Err(_) => false,
                };
                if ok {
                    monotone += 1;
                } else {
                    failures.push(format!("{attribute}/{kind:?}/{}", img.image_id()));
                }
            }
        }
    }

    let rate = monotone as f64 / total as f64;
    assert!(
        rate >= 0.95,
        "strict monotonicity on {monotone}/{total} cases ({rate:.3}); failures: {failures:?}"
    );
}
