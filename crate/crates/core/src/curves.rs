//! Threshold calibration and curve construction.
//!
//! A curve point fixes a budget of false accepts (or false identifications),
//! calibrates the smallest observed score value admitting strictly fewer
//! negatives than the budget, and reports the positive count and rate at that
//! threshold. Budgets larger than the negative set saturate: the threshold
//! drops to the smallest observed score and the point reports the total
//! positive count.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::matching::{NegativeTag, ScorePartition};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveKind {
    Froc,
    Dir,
    Crr,
}

impl CurveKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            CurveKind::Froc => "FROC",
            CurveKind::Dir => "DIR",
            CurveKind::Crr => "CRR",
        }
    }
}

impl std::str::FromStr for CurveKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "FROC" => Ok(CurveKind::Froc),
            "DIR" => Ok(CurveKind::Dir),
            "CRR" => Ok(CurveKind::Crr),
            other => Err(Error::Validation(format!("unknown curve kind {other:?}"))),
        }
    }
}

impl fmt::Display for CurveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One calibrated point of a curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    /// Admitted-negative budget (false accepts / false identifications), or
    /// the target correct-identification count for rejection curves.
    pub budget: usize,
    /// Calibrated score threshold; `+inf` when no observed value satisfies
    /// the budget.
    pub threshold: f64,
    /// positive_count over the curve denominator.
    pub rate: f64,
    pub positive_count: usize,
    /// Negatives at or above the threshold.
    pub negative_count: usize,
    /// The budget exceeds what the submission can spend; counts are totals.
    pub saturated: bool,
}

/// An ordered sweep of operating points sharing one denominator
/// (M for FROC, N for DIR, the tagged-subset size for CRR).
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub kind: CurveKind,
    pub points: Vec<OperatingPoint>,
    pub denominator: usize,
}

/// The budget grid behind the standard results table.
pub const DEFAULT_BUDGETS: [usize; 5] = [10, 100, 1_000, 10_000, 100_000];

/// Strictly increasing log-spaced budget grid from 1 to `max`, for dense
/// plotting sweeps. At most `points` values; rounding collapses duplicates.
pub fn log_budget_grid(points: usize, max: usize) -> Vec<usize> {
    if points < 2 || max < 2 {
        return vec![max.max(1)];
    }
    let top = (max as f64).log10();
    let mut grid: Vec<usize> = (0..points)
        .map(|i| {
            let exponent = i as f64 * top / (points - 1) as f64;
            (10f64.powf(exponent).round() as usize).max(1)
        })
        .collect();
    grid.dedup();
    grid
}

fn count_at_or_above(sorted_ascending: &[f64], threshold: f64) -> usize {
    sorted_ascending.len() - sorted_ascending.partition_point(|&v| v < threshold)
}

fn validate_grid(grid: &[usize], what: &str) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument(format!("{what} grid is empty")));
    }
    if grid[0] == 0 {
        return Err(Error::InvalidArgument(format!(
            "{what} values must be at least 1"
        )));
    }
    for pair in grid.windows(2) {
        if pair[0] >= pair[1] {
            return Err(Error::InvalidArgument(format!(
                "{what} grid must be strictly increasing, got {} then {}",
                pair[0], pair[1]
            )));
        }
    }
    Ok(())
}

/// Smallest value in `candidate_values` admitting strictly fewer than
/// `budget` negatives at or above it, or `+inf` when no candidate does.
///
/// Thresholds are restricted to observed score values: any threshold strictly
/// between two scores admits the same counts as the next observed value, so
/// nothing is lost.
pub fn calibrate_threshold(
    negatives: &[f64],
    budget: usize,
    candidate_values: &[f64],
) -> Result<f64> {
    if budget == 0 {
        return Err(Error::InvalidArgument(
            "budget must be at least 1 (strictly fewer negatives than the budget are admitted)"
                .into(),
        ));
    }
    let mut negatives = negatives.to_vec();
    negatives.sort_by(f64::total_cmp);
    let mut candidates = candidate_values.to_vec();
    candidates.sort_by(f64::total_cmp);
    Ok(minimal_satisfying(&negatives, budget, &candidates))
}

/// Core of the calibration, on pre-sorted inputs. The admitted-negative count
/// is non-increasing in the threshold, so the satisfying candidates form a
/// suffix of the sorted candidate list and binary search applies.
fn minimal_satisfying(negatives_sorted: &[f64], budget: usize, candidates_sorted: &[f64]) -> f64 {
    let satisfies = |t: f64| count_at_or_above(negatives_sorted, t) < budget;
    let first = candidates_sorted.partition_point(|&c| !satisfies(c));
    candidates_sorted
        .get(first)
        .copied()
        .unwrap_or(f64::INFINITY)
}

/// Fraction of positive confidences at or above the threshold, over the total
/// face count M.
pub fn detection_rate(positives: &[f64], threshold: f64, total_faces: usize) -> Result<f64> {
    rate_at_threshold(positives, threshold, total_faces, "M")
}

/// Fraction of positive similarity scores at or above the threshold, over the
/// known-face count N.
pub fn identification_rate(positives: &[f64], threshold: f64, known_faces: usize) -> Result<f64> {
    rate_at_threshold(positives, threshold, known_faces, "N")
}

fn rate_at_threshold(
    positives: &[f64],
    threshold: f64,
    denominator: usize,
    name: &str,
) -> Result<f64> {
    if denominator == 0 {
        return Err(Error::InvalidArgument(format!(
            "denominator {name} must be at least 1"
        )));
    }
    let count = positives.iter().filter(|&&p| p >= threshold).count();
    Ok(count as f64 / denominator as f64)
}

/// Sweeps the budget grid over a partition. Candidate thresholds are all
/// observed scores of the submission (positives and negatives together).
pub fn build_curve(
    partition: &ScorePartition,
    budgets: &[usize],
    kind: CurveKind,
) -> Result<Curve> {
    let negatives = partition.negatives();
    let mut candidates = Vec::with_capacity(partition.positives.len() + negatives.len());
    candidates.extend_from_slice(&partition.positives);
    candidates.extend_from_slice(&negatives);
    build_curve_with_candidates(partition, &candidates, budgets, kind)
}

/// Like [`build_curve`] with an explicit candidate-threshold pool, so related
/// curves (the same-day/different-day pair) can share thresholds exactly.
pub fn build_curve_with_candidates(
    partition: &ScorePartition,
    candidate_values: &[f64],
    budgets: &[usize],
    kind: CurveKind,
) -> Result<Curve> {
    if kind == CurveKind::Crr {
        return Err(Error::InvalidArgument(
            "rejection curves are built by correct_rejection_curve".into(),
        ));
    }
    validate_grid(budgets, "budget")?;
    if partition.denominator == 0 {
        return Err(Error::InvalidArgument(
            "curve denominator must be at least 1".into(),
        ));
    }

    let mut positives = partition.positives.clone();
    positives.sort_by(f64::total_cmp);
    let mut negatives = partition.negatives();
    negatives.sort_by(f64::total_cmp);
    let mut candidates = candidate_values.to_vec();
    candidates.sort_by(f64::total_cmp);

    let points = budgets
        .iter()
        .map(|&budget| {
            let threshold = minimal_satisfying(&negatives, budget, &candidates);
            let positive_count = count_at_or_above(&positives, threshold);
            let negative_count = count_at_or_above(&negatives, threshold);
            OperatingPoint {
                budget,
                threshold,
                rate: positive_count as f64 / partition.denominator as f64,
                positive_count,
                negative_count,
                saturated: negatives.len() < budget,
            }
        })
        .collect();

    Ok(Curve {
        kind,
        points,
        denominator: partition.denominator,
    })
}

/// Rejection sweep for one tagged negative subset.
///
/// Each grid value `k` targets `k` correctly identified faces: the threshold
/// is the k-th largest positive score and the point reports the fraction of
/// the subset strictly below it. Grid values beyond the positive count
/// saturate at the smallest positive score.
pub fn correct_rejection_curve(
    partition: &ScorePartition,
    tag: NegativeTag,
    grid: &[usize],
) -> Result<Curve> {
    validate_grid(grid, "identification-count")?;
    let subset = partition.tagged(tag);
    if subset.is_empty() {
        return Err(Error::Validation(format!(
            "no negative scores tagged {tag}; rejection curve is undefined"
        )));
    }
    let mut subset_sorted = subset.to_vec();
    subset_sorted.sort_by(f64::total_cmp);
    let mut positives_desc = partition.positives.clone();
    positives_desc.sort_by(|a, b| f64::total_cmp(b, a));

    let points = grid
        .iter()
        .map(|&k| {
            let saturated = k > positives_desc.len();
            let threshold = if saturated {
                positives_desc.last().copied().unwrap_or(f64::INFINITY)
            } else {
                positives_desc[k - 1]
            };
            // rejected means strictly below the threshold
            let rejected = subset_sorted.partition_point(|&s| s < threshold);
            let positive_count = positives_desc.iter().filter(|&&p| p >= threshold).count();
            OperatingPoint {
                budget: k,
                threshold,
                rate: rejected as f64 / subset_sorted.len() as f64,
                positive_count,
                negative_count: subset_sorted.len() - rejected,
                saturated,
            }
        })
        .collect();

    Ok(Curve {
        kind: CurveKind::Crr,
        points,
        denominator: subset_sorted.len(),
    })
}

/// Correct rejection rate of a subset at a given threshold: the fraction
/// strictly below it. Exposed for analysis; the sweep above uses the same
/// strict comparison.
pub fn correct_rejection_rate(subset: &[f64], threshold: f64) -> Result<f64> {
    if subset.is_empty() {
        return Err(Error::InvalidArgument(
            "rejection rate needs a nonempty subset".into(),
        ));
    }
    let rejected = subset.iter().filter(|&&s| s < threshold).count();
    Ok(rejected as f64 / subset.len() as f64)
}

/// One cell of the results table: an absolute positive count, flagged when the
/// submission had fewer negatives than the row's budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SummaryCell {
    pub positive_count: usize,
    pub saturated: bool,
}

/// Budgets x participants table of absolute positive counts.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryTable {
    pub budgets: Vec<usize>,
    pub participants: Vec<String>,
    /// `rows[i][j]` belongs to `budgets[i]` and `participants[j]`
    pub rows: Vec<Vec<SummaryCell>>,
}

impl SummaryTable {
    /// Column index of the best (highest) count per row.
    pub fn best_per_row(&self) -> Vec<usize> {
        self.rows
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .max_by(|(ia, a), (ib, b)| {
                        a.positive_count.cmp(&b.positive_count).then(ib.cmp(ia))
                        // first column wins ties
                    })
                    .map(|(i, _)| i)
                    .unwrap_or(0)
            })
            .collect()
    }
}

impl fmt::Display for SummaryTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let best = self.best_per_row();
        write!(f, "{:>10}", "budget")?;
        for p in &self.participants {
            write!(f, " {:>12}", p)?;
        }
        writeln!(f)?;
        for (i, budget) in self.budgets.iter().enumerate() {
            write!(f, "{:>10}", budget)?;
            for (j, cell) in self.rows[i].iter().enumerate() {
                let mut text = cell.positive_count.to_string();
                if cell.saturated {
                    text.push('*');
                }
                if best[i] == j {
                    text.push('!');
                }
                write!(f, " {:>12}", text)?;
            }
            writeln!(f)?;
        }
        writeln!(f, "(* = all negatives spent: total count; ! = best in row)")
    }
}

/// Collects per-participant curves into the results table. All curves must
/// share the same budget grid.
pub fn summary_table(curves: &BTreeMap<String, Curve>) -> Result<SummaryTable> {
    let mut iter = curves.iter();
    let Some((first_name, first)) = iter.next() else {
        return Err(Error::InvalidArgument("no curves to summarize".into()));
    };
    let budgets: Vec<usize> = first.points.iter().map(|p| p.budget).collect();
    for (name, curve) in curves {
        let these: Vec<usize> = curve.points.iter().map(|p| p.budget).collect();
        if these != budgets {
            return Err(Error::InvalidArgument(format!(
                "curve {name:?} uses budgets {these:?} but {first_name:?} uses {budgets:?}"
            )));
        }
    }
    let participants: Vec<String> = curves.keys().cloned().collect();
    let rows = (0..budgets.len())
        .map(|i| {
            curves
                .values()
                .map(|curve| SummaryCell {
                    positive_count: curve.points[i].positive_count,
                    saturated: curve.points[i].saturated,
                })
                .collect()
        })
        .collect();
    Ok(SummaryTable {
        budgets,
        participants,
        rows,
    })
}
