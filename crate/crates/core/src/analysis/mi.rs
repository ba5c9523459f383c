use super::ExperimentRecord;
use crate::error::{Error, Result};

/// Differences smaller than this count as ties and form their own sign
/// category, avoiding arbitrary tie-breaking in the MI estimate.
pub const SIGN_TIE_TOL: f64 = 1e-12;

/// Three-valued sign of `a - b` with the tie threshold above.
pub fn sign3(a: f64, b: f64) -> i8 {
    let d = a - b;
    if d > SIGN_TIE_TOL {
        1
    } else if d < -SIGN_TIE_TOL {
        -1
    } else {
        0
    }
}

fn sign_index(s: i8) -> usize {
    (s + 1) as usize
}

enum PairMi {
    /// No pairs in the restricted set.
    Empty,
    /// Pairs exist but the target never varies: zero information by
    /// definition.
    ConstantTarget,
    Value(f64),
}

/// Mutual information between the pairwise sign of `co` and the pairwise
/// sign of `pa` over the given index pairs, normalized by the sign entropy
/// of `pa`.
///
/// Pairs are enumerated ordered (both `(i, j)` and `(j, i)`), which
/// symmetrizes the joint distribution; a target that happens to be sorted
/// along the record order would otherwise have degenerate sign entropy.
fn mi_over_pairs<'a>(
    pairs: impl Iterator<Item = (usize, usize)> + 'a,
    co: &[f64],
    pa: &[f64],
) -> PairMi {
    let mut joint = [[0usize; 3]; 3];
    let mut total = 0usize;
    for (i, j) in pairs {
        let vc = sign_index(sign3(co[i], co[j]));
        let vp = sign_index(sign3(pa[i], pa[j]));
        joint[vc][vp] += 1;
        joint[sign_index(sign3(co[j], co[i]))][sign_index(sign3(pa[j], pa[i]))] += 1;
        total += 2;
    }
    if total == 0 {
        return PairMi::Empty;
    }
    let n = total as f64;
    let mut co_marginal = [0.0f64; 3];
    let mut pa_marginal = [0.0f64; 3];
    for c in 0..3 {
        for p in 0..3 {
            let pj = joint[c][p] as f64 / n;
            co_marginal[c] += pj;
            pa_marginal[p] += pj;
        }
    }
    let h_pa: f64 = pa_marginal
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum();
    if h_pa <= 0.0 {
        return PairMi::ConstantTarget;
    }
    let mut mi = 0.0;
    for c in 0..3 {
        for p in 0..3 {
            let pj = joint[c][p] as f64 / n;
            if pj > 0.0 {
                mi += pj * (pj / (co_marginal[c] * pa_marginal[p])).ln();
            }
        }
    }
    PairMi::Value((mi / h_pa).clamp(0.0, 1.0))
}

fn column(records: &[ExperimentRecord], key: &str) -> Result<Vec<f64>> {
    records
        .iter()
        .map(|r| {
            r.value(key).ok_or_else(|| Error::InvalidSpec(format!("unknown column {key:?}")))
        })
        .collect()
}

fn all_pairs(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(move |i| ((i + 1)..n).map(move |j| (i, j)))
}

/// Normalized mutual information `I(V_co, V_pa) / H(V_pa)` of the pairwise
/// sign variables over all record pairs.
pub fn normalized_mi(
    records: &[ExperimentRecord],
    measure_key: &str,
    target_key: &str,
) -> Result<f64> {
    if records.len() < 2 {
        return Err(Error::InvalidSpec("normalized MI needs at least 2 records".into()));
    }
    let co = column(records, measure_key)?;
    let pa = column(records, target_key)?;
    match mi_over_pairs(all_pairs(records.len()), &co, &pa) {
        PairMi::Value(mi) => Ok(mi),
        _ => Err(Error::DegenerateTarget(target_key.to_string())),
    }
}

/// Expected normalized MI with `subset_size` hyperparameters fixed: for
/// every subset of that size, restrict to record pairs agreeing on all of
/// its hyperparameters, compute the normalized MI there, and average
/// uniformly over subsets. Size 0 reduces exactly to `normalized_mi`.
/// Subsets with no agreeing pairs (or no target variation) are skipped;
/// it is an error if every subset is.
pub fn conditional_mi_expectation(
    records: &[ExperimentRecord],
    measure_key: &str,
    target_key: &str,
    registry: &[String],
    subset_size: usize,
) -> Result<f64> {
    if subset_size > registry.len() {
        return Err(Error::InvalidSpec(format!(
            "subset size {subset_size} exceeds registry of {}",
            registry.len()
        )));
    }
    if subset_size == 0 {
        return normalized_mi(records, measure_key, target_key);
    }
    let co = column(records, measure_key)?;
    let pa = column(records, target_key)?;
    let hyper_cols: Vec<Vec<f64>> =
        registry.iter().map(|h| column(records, h)).collect::<Result<_>>()?;

    let mut total = 0.0;
    let mut used = 0usize;
    for subset in combinations(registry.len(), subset_size) {
        let pairs = all_pairs(records.len()).filter(|&(i, j)| {
            subset.iter().all(|&h| (hyper_cols[h][i] - hyper_cols[h][j]).abs() <= SIGN_TIE_TOL)
        });
        match mi_over_pairs(pairs, &co, &pa) {
            PairMi::Value(mi) => {
                total += mi;
                used += 1;
            }
            // a fixed subset that freezes the target carries zero information
            PairMi::ConstantTarget => {
                used += 1;
            }
            PairMi::Empty => {}
        }
    }
    if used == 0 {
        return Err(Error::EmptySubspace { subset_size });
    }
    Ok(total / used as f64)
}

/// All size-`k` index subsets of `0..n` in lexicographic order.
fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(k);
    fn recurse(start: usize, n: usize, k: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if current.len() == k {
            out.push(current.clone());
            return;
        }
        for i in start..n {
            current.push(i);
            recurse(i + 1, n, k, current, out);
            current.pop();
        }
    }
    recurse(0, n, k, &mut current, &mut out);
    out
}

/// Fraction of unordered record pairs whose measure ordering disagrees with
/// the generalization-gap ordering; ties count as disagreement unless both
/// sides tie.
pub fn average_sign_error(records: &[ExperimentRecord], measure_key: &str) -> Result<f64> {
    if records.len() < 2 {
        return Err(Error::InvalidSpec("sign error needs at least 2 records".into()));
    }
    let co = column(records, measure_key)?;
    let gg = column(records, "gg_loss")?;
    let mut disagreements = 0usize;
    let mut total = 0usize;
    for (i, j) in all_pairs(records.len()) {
        if sign3(co[i], co[j]) != sign3(gg[i], gg[j]) {
            disagreements += 1;
        }
        total += 1;
    }
    Ok(disagreements as f64 / total as f64)
}

#[cfg(test)]
mod tests {
    use super::super::{conditioning_registry, test_record, ExperimentRecord};
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn records_from(values: &[(f64, f64)]) -> Vec<ExperimentRecord> {
        values
            .iter()
            .enumerate()
            .map(|(i, &(m, gg))| test_record(&format!("r{i}"), &[], m, gg))
            .collect()
    }

    #[test]
    fn monotone_dependence_gives_unit_mi() {
        // measure strictly increasing in the target
        let records = records_from(&[(0.1, 1.0), (0.2, 2.0), (0.3, 3.0), (0.4, 4.0)]);
        let mi = normalized_mi(&records, "frob", "gg_loss").unwrap();
        assert!((mi - 1.0).abs() < 1e-12, "MI {mi}");

        // measure equal to the target
        let records = records_from(&[(1.0, 1.0), (3.0, 3.0), (2.0, 2.0)]);
        let mi = normalized_mi(&records, "frob", "gg_loss").unwrap();
        assert!((mi - 1.0).abs() < 1e-12);
    }

    #[test]
    fn independent_parities_have_near_zero_mi() {
        // measure = index mod 2, target = (index / 2) mod 2: independent
        let records: Vec<ExperimentRecord> = (0..100)
            .map(|i| {
                test_record(
                    &format!("r{i}"),
                    &[],
                    (i % 2) as f64,
                    ((i / 2) % 2) as f64,
                )
            })
            .collect();
        let mi = normalized_mi(&records, "frob", "gg_loss").unwrap();
        assert!(mi <= 0.05, "independent MI {mi}");
    }

    #[test]
    fn constant_target_is_degenerate() {
        let records = records_from(&[(0.1, 2.0), (0.5, 2.0), (0.9, 2.0)]);
        assert!(matches!(
            normalized_mi(&records, "frob", "gg_loss"),
            Err(Error::DegenerateTarget(_))
        ));
    }

    #[test]
    fn mi_is_invariant_under_monotone_transforms_of_the_measure() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let records: Vec<ExperimentRecord> = (0..30)
            .map(|i| {
                test_record(
                    &format!("r{i}"),
                    &[("dropout_rate", (i % 3) as f64 * 0.15)],
                    rng.gen_range(0.1..5.0),
                    rng.gen_range(-1.0..1.0),
                )
            })
            .collect();
        let transformed: Vec<ExperimentRecord> = records
            .iter()
            .map(|r| {
                let mut t = r.clone();
                t.measures.frob_distance = r.measures.frob_distance.exp(); // strictly monotone
                t
            })
            .collect();
        let mi_a = normalized_mi(&records, "frob", "gg_loss").unwrap();
        let mi_b = normalized_mi(&transformed, "frob", "gg_loss").unwrap();
        assert_eq!(mi_a, mi_b);
        let se_a = average_sign_error(&records, "frob").unwrap();
        let se_b = average_sign_error(&transformed, "frob").unwrap();
        assert_eq!(se_a, se_b);

        // relabeling records leaves everything unchanged
        let mut shuffled = records.clone();
        shuffled.reverse();
        assert_eq!(mi_a, normalized_mi(&shuffled, "frob", "gg_loss").unwrap());
    }

    #[test]
    fn conditional_mi_at_zero_equals_unconditional_bit_for_bit() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let records: Vec<ExperimentRecord> = (0..24)
            .map(|i| {
                test_record(
                    &format!("r{i}"),
                    &[
                        ("batch_size", (i % 2) as f64),
                        ("depth", ((i / 2) % 2) as f64),
                        ("lr", ((i / 4) % 2) as f64),
                    ],
                    rng.gen_range(0.0..1.0),
                    rng.gen_range(0.0..1.0),
                )
            })
            .collect();
        let registry = conditioning_registry();
        let a = normalized_mi(&records, "path", "gg_loss").unwrap();
        let b = conditional_mi_expectation(&records, "path", "gg_loss", &registry, 0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn fixing_the_driving_hyperparameter_kills_its_subset_contribution() {
        // gg is a pure function of `depth`: conditioning on depth freezes
        // the target, so the {depth} subset contributes exactly 0 and j=1
        // averages it with the {batch_size} subset
        let records: Vec<ExperimentRecord> = (0..16)
            .map(|i| {
                let depth = (i % 4) as f64;
                test_record(
                    &format!("r{i}"),
                    &[("depth", depth), ("batch_size", ((i / 4) % 2) as f64)],
                    i as f64 * 0.37,
                    depth * 2.0,
                )
            })
            .collect();
        let registry = vec!["depth".to_string(), "batch_size".to_string()];
        let j1 = conditional_mi_expectation(&records, "frob", "gg_loss", &registry, 1).unwrap();
        let bs_only = vec!["batch_size".to_string()];
        let bs_mi = conditional_mi_expectation(&records, "frob", "gg_loss", &bs_only, 1).unwrap();
        assert!((j1 - bs_mi / 2.0).abs() < 1e-15, "j1 {j1} vs half of {bs_mi}");
    }

    #[test]
    fn vacuous_restriction_matches_full_pair_set() {
        // single-entry registry whose value is shared by every record
        let records: Vec<ExperimentRecord> = (0..10)
            .map(|i| {
                test_record(&format!("r{i}"), &[("width", 1.0)], i as f64, (i * i) as f64)
            })
            .collect();
        let registry = vec!["width".to_string()];
        let j1 = conditional_mi_expectation(&records, "frob", "gg_loss", &registry, 1).unwrap();
        let j0 = normalized_mi(&records, "frob", "gg_loss").unwrap();
        assert_eq!(j1, j0);
    }

    #[test]
    fn empty_subspace_is_an_error() {
        // two records that disagree on every hyperparameter: no agreeing pairs
        let records = vec![
            test_record("a", &[("depth", 1.0), ("batch_size", 32.0)], 0.5, 0.1),
            test_record("b", &[("depth", 2.0), ("batch_size", 64.0)], 0.7, 0.2),
        ];
        let registry = vec!["depth".to_string(), "batch_size".to_string()];
        assert!(matches!(
            conditional_mi_expectation(&records, "frob", "gg_loss", &registry, 1),
            Err(Error::EmptySubspace { subset_size: 1 })
        ));
    }

    #[test]
    fn sign_error_extremes_and_random_baseline() {
        let perfect = records_from(&[(0.1, 0.1), (0.5, 0.5), (0.3, 0.3), (0.9, 0.9)]);
        assert_eq!(average_sign_error(&perfect, "frob").unwrap(), 0.0);

        let inverted = records_from(&[(0.1, -0.1), (0.5, -0.5), (0.3, -0.3)]);
        assert_eq!(average_sign_error(&inverted, "frob").unwrap(), 1.0);

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let random: Vec<ExperimentRecord> = (0..200)
            .map(|i| {
                test_record(&format!("r{i}"), &[], rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0))
            })
            .collect();
        let se = average_sign_error(&random, "frob").unwrap();
        assert!((se - 0.5).abs() < 0.1, "random sign error {se}");
    }

    #[test]
    fn combinations_enumerate_lexicographically() {
        assert_eq!(combinations(3, 2), vec![vec![0, 1], vec![0, 2], vec![1, 2]]);
        assert_eq!(combinations(3, 0), vec![Vec::<usize>::new()]);
    }
}
