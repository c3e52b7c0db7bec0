use crate::core::{DatasetManifest, SplitTag};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SplitError {
    #[error("cannot split an empty manifest")]
    EmptyManifest,
    #[error("train_fraction must lie strictly between 0 and 1, got {0}")]
    BadFraction(f64),
    #[error("manifest {0} carries official split tags; use split_official or override explicitly")]
    TagsPresent(String),
    #[error("manifest {0} has no split tags to honor")]
    TagsMissing(String),
}

/// Random 80/20-style partition: `floor(train_fraction * N)` records go to the
/// train side, the remainder to test. Sampling is uniform (no MOS
/// stratification); identical inputs produce identical splits.
///
/// Refuses manifests that carry official split tags; call [`split_official`]
/// to honor them or [`split_dataset_overriding_tags`] to ignore them.
pub fn split_dataset(
    manifest: &DatasetManifest,
    train_fraction: f64,
    seed: u64,
) -> Result<(DatasetManifest, DatasetManifest), SplitError> {
    if manifest.has_split_tags() {
        return Err(SplitError::TagsPresent(manifest.name.clone()));
    }
    split_dataset_overriding_tags(manifest, train_fraction, seed)
}

/// As [`split_dataset`] but ignores any official split tags on the records.
pub fn split_dataset_overriding_tags(
    manifest: &DatasetManifest,
    train_fraction: f64,
    seed: u64,
) -> Result<(DatasetManifest, DatasetManifest), SplitError> {
    if manifest.is_empty() {
        return Err(SplitError::EmptyManifest);
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(SplitError::BadFraction(train_fraction));
    }
    let n = manifest.len();
    let n_train = ((train_fraction * n as f64).floor() as usize).min(n);

    let mut order: Vec<usize> = (0..n).collect();
    fisher_yates(&mut order, seed);
    let mut is_train = vec![false; n];
    for &i in order.iter().take(n_train) {
        is_train[i] = true;
    }

    // Partition preserving the original record order within each side.
    let mut train = Vec::with_capacity(n_train);
    let mut test = Vec::with_capacity(n - n_train);
    for (i, rec) in manifest.records().iter().enumerate() {
        if is_train[i] {
            train.push(rec.clone());
        } else {
            test.push(rec.clone());
        }
    }
    Ok((
        DatasetManifest::new(format!("{}[train]", manifest.name), train)
            .expect("subset of a valid manifest is valid"),
        DatasetManifest::new(format!("{}[test]", manifest.name), test)
            .expect("subset of a valid manifest is valid"),
    ))
}

/// Partition by the records' official `split` tags; untagged records are an error.
pub fn split_official(
    manifest: &DatasetManifest,
) -> Result<(DatasetManifest, DatasetManifest), SplitError> {
    if manifest.is_empty() {
        return Err(SplitError::EmptyManifest);
    }
    if manifest.records().iter().any(|r| r.split.is_none()) {
        return Err(SplitError::TagsMissing(manifest.name.clone()));
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for rec in manifest.records() {
        match rec.split {
            Some(SplitTag::Train) => train.push(rec.clone()),
            Some(SplitTag::Test) => test.push(rec.clone()),
            None => unreachable!(),
        }
    }
    Ok((
        DatasetManifest::new(format!("{}[train]", manifest.name), train).expect("valid subset"),
        DatasetManifest::new(format!("{}[test]", manifest.name), test).expect("valid subset"),
    ))
}

/// Ten distinct deterministic split seeds derived from `base_seed`.
pub fn ten_split_seeds(base_seed: u64) -> [u64; 10] {
    let mut state = base_seed;
    let mut seeds = [0u64; 10];
    let mut filled = 0;
    while filled < 10 {
        let candidate = splitmix64(&mut state);
        if !seeds[..filled].contains(&candidate) {
            seeds[filled] = candidate;
            filled += 1;
        }
    }
    seeds
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

// Hand-rolled so split assignments never depend on rand's shuffle internals.
fn fisher_yates(order: &mut [usize], seed: u64) {
    let mut state = seed ^ 0x5851_f42d_4c95_7f2d;
    for i in (1..order.len()).rev() {
        let j = (splitmix64(&mut state) % (i as u64 + 1)) as usize;
        order.swap(i, j);
    }
}
