//! Pixel-overlap scores between a predicted and a reference mask.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::BinaryMask;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// Counts with prediction and reference exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            fp: self.fn_,
            fn_: self.fp,
            ..*self
        }
    }
}

impl std::ops::Add for ConfusionCounts {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            tn: self.tn + o.tn,
        }
    }
}

impl std::iter::Sum for ConfusionCounts {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), |a, b| a + b)
    }
}

pub fn confusion(pred: &BinaryMask, truth: &BinaryMask) -> Result<ConfusionCounts> {
    if pred.width() != truth.width() || pred.height() != truth.height() {
        return Err(Error::Dimension(format!(
            "prediction {}x{} vs truth {}x{}",
            pred.width(),
            pred.height(),
            truth.width(),
            truth.height()
        )));
    }
    let mut c = ConfusionCounts::default();
    for (&p, &t) in pred.bits().iter().zip(truth.bits()) {
        match (p, t) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

/// Which ratios had a zero denominator (and were reported as 0).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Degenerate {
    pub jaccard: bool,
    pub dice: bool,
    pub sensitivity: bool,
    pub specificity: bool,
    pub accuracy: bool,
    pub precision: bool,
}

impl Degenerate {
    pub fn any(&self) -> bool {
        self.jaccard
            || self.dice
            || self.sensitivity
            || self.specificity
            || self.accuracy
            || self.precision
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub jaccard: f64,
    pub dice: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub accuracy: f64,
    pub precision: f64,
    #[serde(default, skip_serializing_if = "is_clean")]
    pub degenerate: Degenerate,
}

fn is_clean(d: &Degenerate) -> bool {
    !d.any()
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

pub fn metric_set(c: &ConfusionCounts) -> MetricSet {
    let (jaccard, dj) = ratio(c.tp, c.tp + c.fp + c.fn_);
    let (dice, dd) = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_);
    let (sensitivity, dse) = ratio(c.tp, c.tp + c.fn_);
    let (specificity, dsp) = ratio(c.tn, c.tn + c.fp);
    let (accuracy, da) = ratio(c.tp + c.tn, c.total());
    let (precision, dp) = ratio(c.tp, c.tp + c.fp);
    MetricSet {
        jaccard,
        dice,
        sensitivity,
        specificity,
        accuracy,
        precision,
        degenerate: Degenerate {
            jaccard: dj,
            dice: dd,
            sensitivity: dse,
            specificity: dsp,
            accuracy: da,
            precision: dp,
        },
    }
}

pub fn evaluate(pred: &BinaryMask, truth: &BinaryMask) -> Result<MetricSet> {
    confusion(pred, truth).map(|c| metric_set(&c))
}

/// Study-level summary: metrics of the summed confusion counts (`pooled`,
/// the headline) and the unweighted per-slice mean.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub pooled: MetricSet,
    pub mean: MetricSet,
    pub slices: usize,
    pub counts: ConfusionCounts,
}

pub fn aggregate(per_slice: &[ConfusionCounts]) -> Result<Aggregate> {
    if per_slice.is_empty() {
        return Err(Error::Size("cannot aggregate an empty slice set".into()));
    }
    let counts: ConfusionCounts = per_slice.iter().copied().sum();
    let sets: Vec<MetricSet> = per_slice.iter().map(metric_set).collect();
    let n = sets.len() as f64;
    let avg = |f: fn(&MetricSet) -> f64| sets.iter().map(f).sum::<f64>() / n;
    let mean = MetricSet {
        jaccard: avg(|m| m.jaccard),
        dice: avg(|m| m.dice),
        sensitivity: avg(|m| m.sensitivity),
        specificity: avg(|m| m.specificity),
        accuracy: avg(|m| m.accuracy),
        precision: avg(|m| m.precision),
        degenerate: Degenerate::default(),
    };
    Ok(Aggregate {
        pooled: metric_set(&counts),
        mean,
        slices: per_slice.len(),
        counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn counts(tp: u64, fp: u64, fn_: u64, tn: u64) -> ConfusionCounts {
        ConfusionCounts { tp, fp, fn_, tn }
    }

    #[test]
    fn identical_masks() {
        let truth = BinaryMask::from_fn(10, 10, |x, _| x < 5);
        let c = confusion(&truth, &truth).unwrap();
        assert_eq!(c, counts(50, 0, 0, 50));
        let m = metric_set(&c);
        for v in [
            m.jaccard,
            m.dice,
            m.sensitivity,
            m.specificity,
            m.accuracy,
            m.precision,
        ] {
            assert_eq!(v, 1.0);
        }
        assert!(!m.degenerate.any());
    }

    #[test]
    fn empty_prediction() {
        let truth = BinaryMask::from_fn(10, 10, |x, y| x + y < 6);
        let c = confusion(&BinaryMask::new(10, 10), &truth).unwrap();
        assert_eq!((c.tp, c.fn_), (0, truth.count() as u64));
        let m = metric_set(&c);
        assert_eq!(m.dice, 0.0);
        assert!(m.degenerate.precision && !m.degenerate.dice);
    }

    #[test]
    fn both_empty_is_flagged() {
        let m = metric_set(&counts(0, 0, 0, 64));
        assert_eq!(m.dice, 0.0);
        assert!(m.degenerate.dice && m.degenerate.jaccard);
        assert_eq!(m.accuracy, 1.0);
    }

    #[test]
    fn overlap_arithmetic() {
        // |pred| = |truth| = 100, overlap 80
        let m = metric_set(&counts(80, 20, 20, 880));
        assert!((m.dice - 0.8).abs() < 1e-15);
        assert!((m.jaccard - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch() {
        assert!(confusion(&BinaryMask::new(3, 4), &BinaryMask::new(4, 3)).is_err());
    }

    #[test]
    fn aggregate_single_and_pair() {
        let c = counts(30, 5, 7, 58);
        let a = aggregate(&[c]).unwrap();
        assert_eq!(a.pooled, metric_set(&c));
        assert_eq!(a.mean.dice, a.pooled.dice);
        let a = aggregate(&[counts(10, 0, 0, 90), counts(0, 10, 0, 90)]).unwrap();
        assert_eq!(a.mean.dice, 0.5);
        assert!(aggregate(&[]).is_err());
    }

    #[test]
    fn aggregate_hand_tally() {
        // (tp, fp, fn, tn): dice 100/110, 20/40, 0/10
        let slices = [
            counts(50, 6, 4, 40),
            counts(10, 10, 10, 70),
            counts(0, 10, 0, 90),
        ];
        let a = aggregate(&slices).unwrap();
        assert_eq!(a.counts, counts(60, 26, 14, 200));
        assert!((a.pooled.dice - 120.0 / 160.0).abs() < 1e-15);
        assert!((a.pooled.jaccard - 60.0 / 100.0).abs() < 1e-15);
        assert!((a.mean.dice - (100.0 / 110.0 + 0.5 + 0.0) / 3.0).abs() < 1e-15);
        assert!((a.mean.jaccard - (50.0 / 60.0 + 10.0 / 30.0 + 0.0) / 3.0).abs() < 1e-15);
        assert!((a.pooled.accuracy - 260.0 / 300.0).abs() < 1e-15);
    }

    fn arb_pair() -> impl Strategy<Value = (BinaryMask, BinaryMask)> {
        (1usize..20, 1usize..20).prop_flat_map(|(w, h)| {
            (
                proptest::collection::vec(any::<bool>(), w * h),
                proptest::collection::vec(any::<bool>(), w * h),
            )
                .prop_map(move |(a, b)| {
                    (
                        BinaryMask::from_bits(w, h, a).unwrap(),
                        BinaryMask::from_bits(w, h, b).unwrap(),
                    )
                })
        })
    }

    proptest! {
        #[test]
        fn dice_bounds_jaccard((p, t) in arb_pair()) {
            let m = evaluate(&p, &t).unwrap();
            for v in [m.jaccard, m.dice, m.sensitivity, m.specificity, m.accuracy, m.precision] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            prop_assert!(m.dice >= m.jaccard);
            if !m.degenerate.jaccard {
                prop_assert!((m.dice - 2.0 * m.jaccard / (1.0 + m.jaccard)).abs() < 1e-12);
            }
        }

        #[test]
        fn swap_symmetry((p, t) in arb_pair()) {
            let a = evaluate(&p, &t).unwrap();
            let b = evaluate(&t, &p).unwrap();
            prop_assert_eq!(confusion(&p, &t).unwrap().swapped(), confusion(&t, &p).unwrap());
            prop_assert_eq!(a.dice, b.dice);
            prop_assert_eq!(a.jaccard, b.jaccard);
            prop_assert_eq!(a.accuracy, b.accuracy);
            prop_assert_eq!(a.sensitivity, b.precision);
            prop_assert_eq!(a.precision, b.sensitivity);
        }

        #[test]
        fn matches_brute_force((p, t) in arb_pair()) {
            let c = confusion(&p, &t).unwrap();
            let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
            for y in 0..p.height() {
                for x in 0..p.width() {
                    match (p.get(x, y), t.get(x, y)) {
                        (true, true) => tp += 1,
                        (true, false) => fp += 1,
                        (false, true) => fn_ += 1,
                        _ => tn += 1,
                    }
                }
            }
            prop_assert_eq!(c, counts(tp, fp, fn_, tn));
            prop_assert_eq!(c.total() as usize, p.len());
        }
    }
}
