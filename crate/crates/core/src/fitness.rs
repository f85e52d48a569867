//! Fitness metrics over sorting behaviour.
//!
//! A program is evaluated on three lists (sizes 10, 30, 50), each a random
//! permutation of 1..=n. For one output list the score is (R - F) / (F + R),
//! where F and R are the L1 distances to the ascending and descending
//! targets: +1 means perfectly ascending, -1 perfectly descending.
//!
//! f1 is the mean score over the three lists with the direction flag clear.
//! f2 = (f1a - f1d) / 2 and f3 = (2 f1a - f1d) / 3, where f1a and f1d are f1
//! evaluated with the flag clear and set. Both reach 1 exactly when the
//! program sorts ascending on a clear flag and descending on a set flag; f3
//! also pays 1/3 for ascending-only behaviour, f2 pays nothing.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::interp::{execute, Direction};
use crate::program::Program;

/// List sizes every evaluation uses, in evaluation order.
pub const LIST_SIZES: [usize; 3] = [10, 30, 50];

/// A program scoring exactly this is called working.
pub const WORKING_SCORE: f64 = 1.0;

/// One generation's evaluation lists: a fresh permutation of 1..=n per size.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EvalSet {
    pub lists: Vec<Vec<i64>>,
}

pub fn make_eval_set(rng: &mut impl Rng) -> EvalSet {
    let lists = LIST_SIZES
        .iter()
        .map(|&n| {
            let mut l: Vec<i64> = (1..=n as i64).collect();
            l.shuffle(rng);
            l
        })
        .collect();
    EvalSet { lists }
}

/// L1 distance to the ascending target [1, 2, .., n].
pub fn forward_distance(list: &[i64]) -> u64 {
    list.iter()
        .enumerate()
        .map(|(i, &x)| x.abs_diff(i as i64 + 1))
        .sum()
}

/// L1 distance to the descending target [n, .., 2, 1].
pub fn reverse_distance(list: &[i64]) -> u64 {
    let n = list.len() as i64;
    list.iter()
        .enumerate()
        .map(|(i, &x)| x.abs_diff(n - i as i64))
        .sum()
}

/// Sortedness score in [-1, 1]: (R - F) / (F + R).
pub fn sortedness(list: &[i64]) -> f64 {
    let f = forward_distance(list) as f64;
    let r = reverse_distance(list) as f64;
    debug_assert!(f + r > 0.0, "distances cannot both be zero for n >= 2");
    (r - f) / (f + r)
}

/// Mean sortedness over the evaluation lists with the given direction flag.
pub fn eval_f1(p: &Program, set: &EvalSet, v: usize, direction: Direction) -> f64 {
    let total: f64 = set
        .lists
        .iter()
        .map(|l| sortedness(&execute(p, l, v, direction).final_list))
        .sum();
    total / set.lists.len() as f64
}

/// f1 with the flag clear and set, in that order.
pub fn eval_pair(p: &Program, set: &EvalSet, v: usize) -> (f64, f64) {
    (
        eval_f1(p, set, v, Direction::Ascending),
        eval_f1(p, set, v, Direction::Descending),
    )
}

pub fn eval_f2(p: &Program, set: &EvalSet, v: usize) -> f64 {
    let (f1a, f1d) = eval_pair(p, set, v);
    (f1a - f1d) / 2.0
}

pub fn eval_f3(p: &Program, set: &EvalSet, v: usize) -> f64 {
    let (f1a, f1d) = eval_pair(p, set, v);
    (2.0 * f1a - f1d) / 3.0
}

/// Selection metric used by an evolution or a density predicate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    F1,
    F2,
    F3,
}

impl Metric {
    pub fn score(self, p: &Program, set: &EvalSet, v: usize) -> f64 {
        match self {
            Metric::F1 => eval_f1(p, set, v, Direction::Ascending),
            Metric::F2 => eval_f2(p, set, v),
            Metric::F3 => eval_f3(p, set, v),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::F1 => "f1",
            Metric::F2 => "f2",
            Metric::F3 => "f3",
        }
    }
}

pub fn is_working(score: f64) -> bool {
    score >= WORKING_SCORE
}

fn runs_sorted(p: &Program, set: &EvalSet, v: usize, direction: Direction) -> bool {
    set.lists.iter().all(|l| {
        let out = execute(p, l, v, direction).final_list;
        match direction {
            Direction::Ascending => out.windows(2).all(|w| w[0] <= w[1]),
            Direction::Descending => out.windows(2).all(|w| w[0] >= w[1]),
        }
    })
}

/// Equivalent to `eval_f1(..) == 1.0` but stops at the first unsorted output,
/// which makes rejection-heavy sampling loops much cheaper.
pub fn is_f1_working(p: &Program, set: &EvalSet, v: usize) -> bool {
    runs_sorted(p, set, v, Direction::Ascending)
}

/// Equivalent to `eval_f2(..) == 1.0` (and `eval_f3(..) == 1.0`): sorted
/// ascending on a clear flag and descending on a set flag.
pub fn is_f2_working(p: &Program, set: &EvalSet, v: usize) -> bool {
    runs_sorted(p, set, v, Direction::Ascending) && runs_sorted(p, set, v, Direction::Descending)
}
