//! Aggregating per-prefix answers into mode, entropy, and accuracy metrics.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{AnswerValue, ModelError, is_correct};

#[derive(Debug, Error)]
pub enum AnalyticsError {
    #[error("answer sequence must not be empty")]
    EmptySequence,
    #[error("result list must not be empty")]
    EmptyResults,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// The ordered answers extracted from every prefix completion of one problem,
/// plus the baseline answer from the original full trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerSequence {
    pub problem_id: String,
    pub answers: Vec<AnswerValue>,
    pub a_last: AnswerValue,
}

/// Per-problem aggregates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemResult {
    pub problem_id: String,
    pub a_mode: AnswerValue,
    pub a_last: AnswerValue,
    pub entropy_bits: f64,
    pub last_correct: bool,
    pub mode_correct: bool,
    pub n: usize,
    pub unresolved_count: usize,
}

impl ProblemResult {
    pub fn compute(seq: &AnswerSequence, truth: &AnswerValue) -> Result<Self, AnalyticsError> {
        let a_mode = mode_answer(seq)?;
        let entropy = entropy_bits(seq)?;
        Ok(ProblemResult {
            problem_id: seq.problem_id.clone(),
            mode_correct: is_correct(&a_mode, truth)?,
            last_correct: is_correct(&seq.a_last, truth)?,
            a_mode,
            a_last: seq.a_last.clone(),
            entropy_bits: entropy,
            n: seq.answers.len(),
            unresolved_count: seq.answers.iter().filter(|a| a.is_unresolved()).count(),
        })
    }
}

/// The most frequent integer answer, ties broken by earliest first
/// appearance. Unresolved entries never win the vote; an all-unresolved
/// sequence yields `Unresolved`.
pub fn mode_answer(seq: &AnswerSequence) -> Result<AnswerValue, AnalyticsError> {
    if seq.answers.is_empty() {
        return Err(AnalyticsError::EmptySequence);
    }
    let mut tally: HashMap<&AnswerValue, (usize, usize)> = HashMap::new();
    for (index, answer) in seq.answers.iter().enumerate() {
        if answer.is_unresolved() {
            continue;
        }
        let (count, _first) = tally.entry(answer).or_insert((0, index));
        *count += 1;
    }
    let best = tally.into_iter().reduce(|best, candidate| {
        let (_, (best_count, best_first)) = best;
        let (_, (count, first)) = candidate;
        if count > best_count || (count == best_count && first < best_first) {
            candidate
        } else {
            best
        }
    });
    Ok(best.map_or(AnswerValue::Unresolved, |(answer, _)| answer.clone()))
}

/// Shannon entropy in bits of the empirical answer distribution. All entries
/// count, with `Unresolved` as one distinct symbol.
pub fn entropy_bits(seq: &AnswerSequence) -> Result<f64, AnalyticsError> {
    if seq.answers.is_empty() {
        return Err(AnalyticsError::EmptySequence);
    }
    let mut tally: HashMap<&AnswerValue, usize> = HashMap::new();
    for answer in &seq.answers {
        *tally.entry(answer).or_insert(0) += 1;
    }
    // Sum in sorted count order: float addition is not associative, and map
    // iteration order must not leak into persisted metrics.
    let mut counts: Vec<usize> = tally.into_values().collect();
    counts.sort_unstable();
    let n = seq.answers.len() as f64;
    let entropy: f64 = counts
        .into_iter()
        .map(|count| {
            let p = count as f64 / n;
            -p * p.log2()
        })
        .sum();
    // a single unique value gives -0.0; report plain zero
    Ok(if entropy == 0.0 { 0.0 } else { entropy })
}

/// Mean correctness of the baseline answer over a dataset.
pub fn accuracy_last(results: &[ProblemResult]) -> Result<f64, AnalyticsError> {
    accuracy_by(results, |r| r.last_correct)
}

/// Mean correctness of the mode answer over a dataset.
pub fn accuracy_most_freq(results: &[ProblemResult]) -> Result<f64, AnalyticsError> {
    accuracy_by(results, |r| r.mode_correct)
}

fn accuracy_by(
    results: &[ProblemResult],
    flag: impl Fn(&ProblemResult) -> bool,
) -> Result<f64, AnalyticsError> {
    if results.is_empty() {
        return Err(AnalyticsError::EmptyResults);
    }
    Ok(results.iter().filter(|r| flag(r)).count() as f64 / results.len() as f64)
}

/// Mean answer entropy of baseline-correct vs baseline-incorrect problems.
/// An empty partition has no mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropySplit {
    pub mean_correct: Option<f64>,
    pub mean_incorrect: Option<f64>,
    pub correct_count: usize,
    pub incorrect_count: usize,
}

pub fn entropy_split(results: &[ProblemResult]) -> EntropySplit {
    let mut sums = [0.0f64; 2];
    let mut counts = [0usize; 2];
    for result in results {
        let side = usize::from(!result.last_correct);
        sums[side] += result.entropy_bits;
        counts[side] += 1;
    }
    let mean = |side: usize| (counts[side] > 0).then(|| sums[side] / counts[side] as f64);
    EntropySplit {
        mean_correct: mean(0),
        mean_incorrect: mean(1),
        correct_count: counts[0],
        incorrect_count: counts[1],
    }
}

/// One row of the per-problem answer-evolution export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionRow {
    /// 1-based subthought index.
    pub index: usize,
    pub answer: AnswerValue,
    pub matches_truth: bool,
    pub matches_mode: bool,
    pub matches_last: bool,
}

/// Reformat a sequence for plotting: per-index answers flagged against the
/// ground truth, the mode, and the baseline answer.
pub fn answer_evolution(seq: &AnswerSequence, truth: &AnswerValue) -> Vec<EvolutionRow> {
    if seq.answers.is_empty() {
        return Vec::new();
    }
    let a_mode = mode_answer(seq).expect("sequence is non-empty");
    seq.answers
        .iter()
        .enumerate()
        .map(|(k, answer)| EvolutionRow {
            index: k + 1,
            answer: answer.clone(),
            matches_truth: answer == truth,
            matches_mode: *answer == a_mode,
            matches_last: *answer == seq.a_last,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn int(v: i64) -> AnswerValue {
        AnswerValue::integer(v)
    }

    fn sequence(values: &[Option<i64>]) -> AnswerSequence {
        AnswerSequence {
            problem_id: "p".into(),
            answers: values
                .iter()
                .map(|v| v.map_or(AnswerValue::Unresolved, AnswerValue::integer))
                .collect(),
            a_last: AnswerValue::Unresolved,
        }
    }

    #[test]
    fn mode_breaks_ties_by_first_appearance() {
        let seq = sequence(&[Some(10), Some(20), Some(20), Some(10)]);
        assert_eq!(mode_answer(&seq).unwrap(), int(10));
    }

    #[test]
    fn mode_picks_the_most_frequent() {
        let seq = sequence(&[Some(96), Some(50), Some(96), Some(96), Some(50)]);
        assert_eq!(mode_answer(&seq).unwrap(), int(96));
    }

    #[test]
    fn mode_ignores_unresolved_entries() {
        let seq = sequence(&[None, Some(7), None]);
        assert_eq!(mode_answer(&seq).unwrap(), int(7));
    }

    #[test]
    fn mode_of_all_unresolved_is_unresolved() {
        let seq = sequence(&[None, None]);
        assert_eq!(mode_answer(&seq).unwrap(), AnswerValue::Unresolved);
    }

    #[test]
    fn empty_sequences_are_errors() {
        let empty = sequence(&[]);
        assert!(matches!(mode_answer(&empty), Err(AnalyticsError::EmptySequence)));
        assert!(matches!(entropy_bits(&empty), Err(AnalyticsError::EmptySequence)));
    }

    #[test]
    fn entropy_closed_forms() {
        assert_eq!(entropy_bits(&sequence(&[Some(5); 4])).unwrap(), 0.0);
        assert!((entropy_bits(&sequence(&[Some(1), Some(2)])).unwrap() - 1.0).abs() < 1e-12);
        let h = entropy_bits(&sequence(&[Some(7), Some(7), Some(8), Some(9)])).unwrap();
        assert!((h - 1.5).abs() < 1e-12);
    }

    #[test]
    fn unresolved_is_one_entropy_symbol() {
        let h = entropy_bits(&sequence(&[Some(7), None])).unwrap();
        assert!((h - 1.0).abs() < 1e-12);
        let h = entropy_bits(&sequence(&[None, None])).unwrap();
        assert_eq!(h, 0.0);
    }

    fn result(last_correct: bool, mode_correct: bool, entropy: f64) -> ProblemResult {
        ProblemResult {
            problem_id: "p".into(),
            a_mode: int(1),
            a_last: int(1),
            entropy_bits: entropy,
            last_correct,
            mode_correct,
            n: 1,
            unresolved_count: 0,
        }
    }

    #[test]
    fn accuracy_means() {
        assert_eq!(accuracy_last(&[result(true, true, 0.0)]).unwrap(), 1.0);
        let results: Vec<ProblemResult> = [true, false, false, true]
            .into_iter()
            .map(|c| result(c, c, 0.0))
            .collect();
        assert_eq!(accuracy_last(&results).unwrap(), 0.5);
        assert_eq!(accuracy_most_freq(&results).unwrap(), 0.5);
        assert!(matches!(accuracy_last(&[]), Err(AnalyticsError::EmptyResults)));
    }

    #[test]
    fn mode_corrects_last_scenario_as_a_dataset() {
        let seq = AnswerSequence {
            problem_id: "mcl1".into(),
            answers: [96, 50, 96, 96, 50].iter().map(|&v| int(v)).collect(),
            a_last: int(50),
        };
        let result = ProblemResult::compute(&seq, &int(96)).unwrap();
        assert_eq!(result.a_mode, int(96));
        assert!(result.mode_correct);
        assert!(!result.last_correct);
        let results = [result];
        assert_eq!(accuracy_last(&results).unwrap(), 0.0);
        assert_eq!(accuracy_most_freq(&results).unwrap(), 1.0);
    }

    #[test]
    fn entropy_split_partitions_by_last_correct() {
        let results = [result(true, true, 0.0), result(false, false, 1.5)];
        let split = entropy_split(&results);
        assert_eq!(split.mean_correct, Some(0.0));
        assert_eq!(split.mean_incorrect, Some(1.5));
        assert_eq!((split.correct_count, split.incorrect_count), (1, 1));
    }

    #[test]
    fn entropy_split_reports_empty_partitions() {
        let results = [result(true, true, 0.25), result(true, true, 0.75)];
        let split = entropy_split(&results);
        assert_eq!(split.mean_correct, Some(0.5));
        assert_eq!(split.mean_incorrect, None);
        assert_eq!((split.correct_count, split.incorrect_count), (2, 0));

        let empty = entropy_split(&[]);
        assert_eq!(empty.mean_correct, None);
        assert_eq!(empty.mean_incorrect, None);
    }

    #[test]
    fn evolution_rows_flag_each_index() {
        let seq = AnswerSequence {
            problem_id: "p".into(),
            answers: vec![int(96), int(50)],
            a_last: int(50),
        };
        let rows = answer_evolution(&seq, &int(96));
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].index, 1);
        assert!(rows[0].matches_truth);
        assert!(rows[0].matches_mode);
        assert!(!rows[0].matches_last);
        assert!(!rows[1].matches_truth);
        assert!(rows[1].matches_last);
    }

    #[test]
    fn evolution_of_a_singleton() {
        let seq = AnswerSequence {
            problem_id: "p".into(),
            answers: vec![int(7)],
            a_last: int(7),
        };
        let rows = answer_evolution(&seq, &int(7));
        assert_eq!(rows.len(), 1);
        assert!(rows[0].matches_truth && rows[0].matches_mode && rows[0].matches_last);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn answers() -> impl Strategy<Value = Vec<Option<i64>>> {
            proptest::collection::vec(
                proptest::option::weighted(0.8, 0i64..4),
                1..=12,
            )
        }

        /// Brute-force (count, first-index) argmax over integer entries.
        fn brute_force_mode(values: &[Option<i64>]) -> AnswerValue {
            let distinct: Vec<i64> = {
                let mut seen = Vec::new();
                for v in values.iter().flatten() {
                    if !seen.contains(v) {
                        seen.push(*v);
                    }
                }
                seen
            };
            distinct
                .into_iter()
                .map(|v| {
                    let count = values.iter().filter(|x| **x == Some(v)).count();
                    let first = values.iter().position(|x| *x == Some(v)).unwrap();
                    (v, count, first)
                })
                .max_by(|a, b| a.1.cmp(&b.1).then(b.2.cmp(&a.2)))
                .map_or(AnswerValue::Unresolved, |(v, _, _)| AnswerValue::integer(v))
        }

        proptest! {
            #[test]
            fn mode_matches_brute_force(values in answers()) {
                let seq = sequence(&values);
                prop_assert_eq!(mode_answer(&seq).unwrap(), brute_force_mode(&values));
            }

            #[test]
            fn entropy_is_bounded(values in answers()) {
                let seq = sequence(&values);
                let h = entropy_bits(&seq).unwrap();
                let n = values.len() as f64;
                prop_assert!(h >= 0.0);
                prop_assert!(h <= n.log2() + 1e-12);

                let all_equal = values.windows(2).all(|w| w[0] == w[1]);
                prop_assert_eq!(all_equal, h == 0.0);

                let mut dedup = values.clone();
                dedup.sort();
                dedup.dedup();
                let all_distinct = dedup.len() == values.len();
                prop_assert_eq!(all_distinct, (h - n.log2()).abs() < 1e-12);
            }

            #[test]
            fn permutation_changes_nothing_but_tie_breaks(values in answers(), seed in any::<u64>()) {
                use rand::seq::SliceRandom;
                use rand::SeedableRng;
                let mut shuffled = values.clone();
                let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
                shuffled.shuffle(&mut rng);

                let original = sequence(&values);
                let permuted = sequence(&shuffled);
                prop_assert!(
                    (entropy_bits(&original).unwrap() - entropy_bits(&permuted).unwrap()).abs() < 1e-12
                );

                // the mode may move only between values tied on count
                let mode_a = mode_answer(&original).unwrap();
                let mode_b = mode_answer(&permuted).unwrap();
                if mode_a != mode_b {
                    let count = |vals: &[Option<i64>], target: &AnswerValue| {
                        vals.iter()
                            .filter(|v| &v.map_or(AnswerValue::Unresolved, AnswerValue::integer) == target)
                            .count()
                    };
                    prop_assert_eq!(count(&values, &mode_a), count(&values, &mode_b));
                }
            }

            #[test]
            fn accuracies_ignore_result_order(flags in proptest::collection::vec(any::<(bool, bool)>(), 1..20)) {
                let results: Vec<ProblemResult> = flags
                    .iter()
                    .map(|&(last, mode)| result(last, mode, 0.0))
                    .collect();
                let mut reversed = results.clone();
                reversed.reverse();
                let (a, b) = (accuracy_last(&results).unwrap(), accuracy_last(&reversed).unwrap());
                prop_assert_eq!(a, b);
                prop_assert!((0.0..=1.0).contains(&a));
                let (c, d) = (accuracy_most_freq(&results).unwrap(), accuracy_most_freq(&reversed).unwrap());
                prop_assert_eq!(c, d);
                prop_assert!((0.0..=1.0).contains(&c));
            }
        }
    }
}
