use super::{Dataset, LearnError};

/// Quartile cut points (25th, 50th, 75th percentile, linear interpolation
/// between order statistics), with duplicates removed.
pub fn quartile_cuts(values: &[f64]) -> Vec<f64> {
    assert!(!values.is_empty(), "no values to bin");
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let last = (sorted.len() - 1) as f64;
    let mut cuts: Vec<f64> = [0.25, 0.5, 0.75]
        .iter()
        .map(|p| {
            let pos = p * last;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
        })
        .collect();
    cuts.dedup();
    cuts
}

/// Bin index of `v`: the number of cut points strictly below it.
fn bin_of(cuts: &[f64], v: f64) -> usize {
    cuts.iter().filter(|&&c| v > c).count()
}

fn entropy(counts: &[usize]) -> f64 {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total as f64;
            -p * p.log2()
        })
        .sum()
}

/// Information gain (bits) of the label for each feature after quartile
/// binning: `H(label) - H(label | bin)`.
pub fn information_gains(data: &Dataset) -> Vec<f64> {
    let classes = data.num_classes();
    let n = data.len() as f64;
    let h_label = entropy(&data.class_counts());
    (0..data.num_features())
        .map(|j| {
            let values: Vec<f64> = data.samples().iter().map(|s| s.features[j]).collect();
            let cuts = quartile_cuts(&values);
            let mut table = vec![vec![0usize; classes]; cuts.len() + 1];
            for (s, &v) in data.samples().iter().zip(&values) {
                table[bin_of(&cuts, v)][s.label] += 1;
            }
            let conditional: f64 = table
                .iter()
                .map(|row| row.iter().sum::<usize>() as f64 / n * entropy(row))
                .sum();
            (h_label - conditional).max(0.0)
        })
        .collect()
}

/// The `k` features with the largest single-split information gain, in
/// descending order of gain; ties go to the lower feature index.
pub fn select_features_info_gain(data: &Dataset, k: usize) -> Result<Vec<usize>, LearnError> {
    if k > data.num_features() {
        return Err(LearnError::TooManyFeatures {
            k,
            available: data.num_features(),
        });
    }
    let gains = information_gains(data);
    let mut order: Vec<usize> = (0..gains.len()).collect();
    order.sort_by(|&a, &b| gains[b].total_cmp(&gains[a]).then(a.cmp(&b)));
    order.truncate(k);
    Ok(order)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learning::Sample;

    fn dataset(rows: Vec<(Vec<f64>, usize)>) -> Dataset {
        let f = rows[0].0.len();
        Dataset::new(
            (0..f).map(|i| format!("f{i}")).collect(),
            vec!["a".into(), "b".into()],
            rows.into_iter()
                .map(|(features, label)| Sample { features, label })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn cuts() {
        assert_eq!(
            quartile_cuts(&[1.0, 2.0, 3.0, 4.0, 5.0]),
            vec![2.0, 3.0, 4.0]
        );
        assert_eq!(quartile_cuts(&[7.0; 5]), vec![7.0]);
        assert_eq!(quartile_cuts(&[0.0, 0.0, 1.0, 1.0]), vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn perfect_predictor_and_constant() {
        let rows: Vec<(Vec<f64>, usize)> = (0..16)
            .map(|i| {
                let x = i as f64 * 1.3;
                // binarized at the median
                let label = usize::from(i >= 8);
                (vec![3.0, ((i * 7) % 5) as f64, x], label)
            })
            .collect();
        let d = dataset(rows);
        let gains = information_gains(&d);
        let h = entropy(&d.class_counts());
        assert!((gains[2] - h).abs() < 1e-12);
        assert_eq!(gains[0], 0.0);
        assert_eq!(select_features_info_gain(&d, 3).unwrap(), vec![2, 1, 0]);
    }

    #[test]
    fn too_many_features() {
        let d = dataset(vec![(vec![1.0], 0), (vec![2.0], 1)]);
        assert!(matches!(
            select_features_info_gain(&d, 2),
            Err(LearnError::TooManyFeatures { k: 2, available: 1 })
        ));
        assert_eq!(
            select_features_info_gain(&d, 0).unwrap(),
            Vec::<usize>::new()
        );
    }
}
