//! Interpreter for program trees, with a hard statement budget so that
//! arbitrarily nested loops always terminate.
//!
//! A run gets `v + 3` variable slots, all starting at 0 except slot `v+1`
//! (the list length) and slot `v+2` (the sort-direction flag). Slots 1..=v
//! are writable by For loops; the other three are read-only by construction
//! of valid programs.
//!
//! Statement accounting: executing any node costs one statement, and every
//! For iteration test (including the final failing one) costs one more.
//! Loop-counter increments are free. When the next statement would exceed
//! the budget, execution halts where it stands and the outcome is flagged.

use crate::program::{Program, ProgramNode, VarId};

/// Statement budget for a list of length `n`: ten times the statements a
/// bubble sort of that list needs.
pub fn budget_for(n: usize) -> u64 {
    let n = n as u64;
    10 * n * n
}

/// Sort direction requested from a program, exposed to it as the flag
/// variable `v+2` (0 ascending, 1 descending).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Ascending,
    Descending,
}

impl Direction {
    pub fn flag(self) -> i64 {
        match self {
            Direction::Ascending => 0,
            Direction::Descending => 1,
        }
    }
}

/// Everything a completed (or halted) run leaves behind.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExecOutcome {
    pub final_list: Vec<i64>,
    pub final_vars: Vec<i64>,
    pub statements_executed: u64,
    pub budget_exhausted: bool,
}

/// Observation hooks for tests and the single-evolution CLI trace. The
/// default implementations do nothing, so `execute` pays no tracing cost.
pub trait Tracer {
    fn node(&mut self, _node: &ProgramNode) {}
    fn loop_test(&mut self, _passed: bool) {}
}

/// Tracer that ignores everything.
pub struct NoTrace;

impl Tracer for NoTrace {}

struct Halted;

struct Machine<'t, T: Tracer> {
    vars: Vec<i64>,
    list: Vec<i64>,
    used: u64,
    budget: u64,
    tracer: &'t mut T,
}

impl<T: Tracer> Machine<'_, T> {
    fn charge(&mut self) -> Result<(), Halted> {
        if self.used == self.budget {
            return Err(Halted);
        }
        self.used += 1;
        Ok(())
    }

    fn run(&mut self, node: &ProgramNode) -> Result<(), Halted> {
        self.charge()?;
        self.tracer.node(node);
        match node {
            ProgramNode::For {
                loop_var,
                init_var,
                limit_var,
                body,
            } => {
                let lv = loop_var.index();
                debug_assert!(loop_var.is_writable(self.vars.len() - 3));
                self.vars[lv] = self.vars[init_var.index()];
                loop {
                    self.charge()?;
                    let passed = self.vars[lv] < self.vars[limit_var.index()];
                    self.tracer.loop_test(passed);
                    if !passed {
                        break;
                    }
                    self.run(body)?;
                    self.vars[lv] += 1;
                }
            }
            ProgramNode::IfElse {
                test_var,
                then_branch,
                else_branch,
            } => {
                let taken = if self.vars[test_var.index()] != 0 {
                    then_branch
                } else {
                    else_branch
                };
                if let Some(b) = taken {
                    self.run(b)?;
                }
            }
            ProgramNode::CompareSwap { pos_a, pos_b } => self.swap_if(*pos_a, *pos_b, false),
            ProgramNode::ReverseCompareSwap { pos_a, pos_b } => self.swap_if(*pos_a, *pos_b, true),
        }
        Ok(())
    }

    /// Swap positions read from two variables when they are out of order for
    /// the node's direction. Any out-of-range position makes it a no-op.
    fn swap_if(&mut self, pos_a: VarId, pos_b: VarId, reverse: bool) {
        let a = self.vars[pos_a.index()];
        let b = self.vars[pos_b.index()];
        let n = self.list.len() as i64;
        if a < 0 || a >= n || b < 0 || b >= n {
            return;
        }
        let (a, b) = (a as usize, b as usize);
        let out_of_order = if reverse {
            self.list[a] < self.list[b]
        } else {
            self.list[a] > self.list[b]
        };
        if out_of_order {
            self.list.swap(a, b);
        }
    }
}

/// Runs `p` on a copy of `list` with `v` writable variables.
pub fn execute(p: &Program, list: &[i64], v: usize, direction: Direction) -> ExecOutcome {
    execute_traced(p, list, v, direction, &mut NoTrace)
}

/// Same as [`execute`] but feeds every node execution and loop test to the
/// tracer. Monomorphized, so the untraced path stays untouched.
pub fn execute_traced<T: Tracer>(
    p: &Program,
    list: &[i64],
    v: usize,
    direction: Direction,
    tracer: &mut T,
) -> ExecOutcome {
    let mut vars = vec![0i64; VarId::slot_count(v)];
    vars[v + 1] = list.len() as i64;
    vars[v + 2] = direction.flag();
    let mut m = Machine {
        vars,
        list: list.to_vec(),
        used: 0,
        budget: budget_for(list.len()),
        tracer,
    };
    let budget_exhausted = m.run(p.root()).is_err();
    ExecOutcome {
        final_list: m.list,
        final_vars: m.vars,
        statements_executed: m.used,
        budget_exhausted,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::program::{
        canonical_dual_sorter, canonical_reverse_sorter, canonical_sorter, random_program,
    };
    use crate::rng_for;
    use crate::sexpr::parse_program;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;

    struct Counter {
        nodes: u64,
        tests: u64,
    }

    impl Tracer for Counter {
        fn node(&mut self, _: &ProgramNode) {
            self.nodes += 1;
        }
        fn loop_test(&mut self, _: bool) {
            self.tests += 1;
        }
    }

    fn shuffled(n: usize, seed: u64) -> Vec<i64> {
        let mut l: Vec<i64> = (1..=n as i64).collect();
        l.shuffle(&mut rng_for(seed, n as u64));
        l
    }

    #[test]
    fn budget_examples() {
        assert_eq!(budget_for(1), 10);
        assert_eq!(budget_for(10), 1_000);
        assert_eq!(budget_for(50), 25_000);
    }

    #[test]
    fn self_compare_is_a_no_op() {
        let p = parse_program("(cswap v0 v0)", 2).unwrap();
        let out = execute(&p, &[2, 1], 2, Direction::Ascending);
        assert_eq!(out.final_list, vec![2, 1]);
        assert_eq!(out.statements_executed, 1);
        assert!(!out.budget_exhausted);
    }

    #[test]
    fn out_of_range_position_is_a_no_op() {
        // v3 reads the list length, which is one past the last valid position
        let p = parse_program("(cswap v3 v0)", 2).unwrap();
        let out = execute(&p, &[5, 4, 3, 2, 1], 2, Direction::Ascending);
        assert_eq!(out.final_list, vec![5, 4, 3, 2, 1]);
        assert_eq!(out.statements_executed, 1);
    }

    #[test]
    fn loop_counter_is_usable_as_a_position() {
        let p = parse_program("(for v1 v0 v3 (rcswap v0 v1))", 2).unwrap();
        let out = execute(&p, &[1, 2, 3, 4], 2, Direction::Ascending);
        assert_eq!(out.final_list, vec![4, 1, 2, 3]);
        // node + 5 tests + 4 body leaves
        assert_eq!(out.statements_executed, 10);
    }

    #[test]
    fn loop_with_failing_first_test_runs_no_body() {
        let p = parse_program("(for v1 v3 v3 (cswap v0 v1))", 2).unwrap();
        let out = execute(&p, &[2, 1, 3], 2, Direction::Ascending);
        assert_eq!(out.final_list, vec![2, 1, 3]);
        assert_eq!(out.statements_executed, 2);
    }

    #[test]
    fn inner_loop_sharing_the_counter_cuts_the_outer_loop_short() {
        // the inner loop leaves v1 at n, so the outer loop exits after one pass
        let p = parse_program("(for v1 v0 v3 (for v1 v0 v3 (cswap v0 v0)))", 2).unwrap();
        let n = 10usize;
        let out = execute(&p, &shuffled(n, 1), 2, Direction::Ascending);
        // 1 outer node + 2 outer tests + 1 inner node + (n+1) inner tests + n leaves
        assert_eq!(out.statements_executed, (2 * n + 5) as u64);
        assert!(!out.budget_exhausted);
    }

    #[test]
    fn if_else_takes_the_right_branch() {
        // v3 holds the list length (non-zero), v0 holds zero; the loop gives
        // v1 the position values 0 and 1
        let swap_then = parse_program("(for v1 v0 v3 (if v3 (cswap v0 v1) _))", 2).unwrap();
        let out = execute(&swap_then, &[2, 1], 2, Direction::Ascending);
        assert_eq!(out.final_list, vec![1, 2]);

        let swap_else = parse_program("(for v1 v0 v3 (if v0 _ (rcswap v0 v1)))", 2).unwrap();
        let out = execute(&swap_else, &[1, 2], 2, Direction::Ascending);
        assert_eq!(out.final_list, vec![2, 1]);

        let absent = parse_program("(if v3 _ (cswap v0 v1))", 2).unwrap();
        let out = execute(&absent, &[2, 1], 2, Direction::Ascending);
        assert_eq!(out.final_list, vec![2, 1]);
        assert_eq!(out.statements_executed, 1);
    }

    #[test]
    fn canonical_sorter_matches_std_sort() {
        for i in 0..100 {
            for &n in &[10usize, 30, 50] {
                let list = shuffled(n, 1000 + i);
                let out = execute(&canonical_sorter(2), &list, 2, Direction::Ascending);
                let mut want = list.clone();
                want.sort_unstable();
                assert_eq!(out.final_list, want);
                assert!(!out.budget_exhausted);
            }
        }
    }

    #[test]
    fn canonical_reverse_sorter_sorts_descending() {
        for i in 0..20 {
            let list = shuffled(30, 2000 + i);
            let out = execute(&canonical_reverse_sorter(2), &list, 2, Direction::Ascending);
            let mut want = list.clone();
            want.sort_unstable_by(|a, b| b.cmp(a));
            assert_eq!(out.final_list, want);
        }
    }

    #[test]
    fn dual_sorter_obeys_the_direction_flag() {
        let list = shuffled(30, 3);
        let mut asc = list.clone();
        asc.sort_unstable();
        let mut desc = asc.clone();
        desc.reverse();
        let p = canonical_dual_sorter(2);
        assert_eq!(execute(&p, &list, 2, Direction::Ascending).final_list, asc);
        assert_eq!(execute(&p, &list, 2, Direction::Descending).final_list, desc);
    }

    #[test]
    fn read_only_slots_survive_execution() {
        let v = 3usize;
        let mut rng = rng_for(47, 0);
        for i in 0..2_000 {
            let p = random_program(v, 6, &mut rng);
            for dir in [Direction::Ascending, Direction::Descending] {
                let out = execute(&p, &shuffled(10, i), v, dir);
                assert_eq!(out.final_vars[0], 0);
                assert_eq!(out.final_vars[v + 1], 10);
                assert_eq!(out.final_vars[v + 2], dir.flag());
            }
        }
    }

    #[test]
    fn triple_nested_full_loops_exhaust_the_budget() {
        let p = parse_program(
            "(for v1 v0 v4 (for v2 v0 v4 (for v3 v0 v4 (cswap v1 v2))))",
            3,
        )
        .unwrap();
        let out = execute(&p, &shuffled(50, 9), 3, Direction::Ascending);
        assert!(out.budget_exhausted);
        assert_eq!(out.statements_executed, budget_for(50));
    }

    #[test]
    fn statements_equal_traced_nodes_plus_loop_tests() {
        let mut rng = rng_for(53, 0);
        for i in 0..2_000 {
            let p = random_program(2, 6, &mut rng);
            let mut c = Counter { nodes: 0, tests: 0 };
            let out = execute_traced(&p, &shuffled(10, i), 2, Direction::Ascending, &mut c);
            assert_eq!(out.statements_executed, c.nodes + c.tests);
        }
    }

    proptest! {
        #[test]
        fn output_is_a_permutation_of_the_input(seed in any::<u64>(), n in 2usize..40) {
            let p = random_program(2, 6, &mut rng_for(seed, 1));
            let list = shuffled(n, seed ^ 0xabcd);
            let out = execute(&p, &list, 2, Direction::Ascending);
            let mut got = out.final_list.clone();
            let mut want = list.clone();
            got.sort_unstable();
            want.sort_unstable();
            prop_assert_eq!(got, want);
        }

        #[test]
        fn statements_never_exceed_budget(seed in any::<u64>()) {
            let p = random_program(3, 6, &mut rng_for(seed, 2));
            let list = shuffled(10, seed ^ 0x77);
            let out = execute(&p, &list, 3, Direction::Ascending);
            prop_assert!(out.statements_executed <= budget_for(10));
            if out.budget_exhausted {
                prop_assert_eq!(out.statements_executed, budget_for(10));
            }
        }

        #[test]
        fn execution_is_deterministic(seed in any::<u64>()) {
            let p = random_program(2, 6, &mut rng_for(seed, 3));
            let list = shuffled(30, seed ^ 0x1111);
            let a = execute(&p, &list, 2, Direction::Descending);
            let b = execute(&p, &list, 2, Direction::Descending);
            prop_assert_eq!(a, b);
        }
    }
}
