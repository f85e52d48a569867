//! Program representation: a tagged tree of four node types, plus random
//! generation (grow method) and whole-subtree mutation.
//!
//! Variables are referenced by index. For a system with `v` writable
//! variables, indices 1..=v are writable; index 0 always holds 0, index v+1
//! holds the list length, and index v+2 holds the sort-direction flag.

use rand::Rng;

/// Hard depth limit for every program tree.
pub const MAX_DEPTH: usize = 6;

/// Largest node count a depth-6 tree can have (full binary IfElse tree).
pub const MAX_NODE_COUNT: usize = (1 << MAX_DEPTH) - 1;

/// Index of a variable slot. Whether it is writable depends on the configured
/// writable count `v`: slots 1..=v are writable, 0, v+1 and v+2 are read-only.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct VarId(pub u16);

impl VarId {
    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn is_writable(self, v: usize) -> bool {
        (1..=v).contains(&self.index())
    }

    /// Total number of variable slots for a given writable count.
    pub fn slot_count(v: usize) -> usize {
        v + 3
    }
}

/// One node of a program tree.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ProgramNode {
    /// C-style loop: `loop_var` starts at the value of `init_var` and the body
    /// runs while `loop_var < limit_var`, incrementing `loop_var` afterwards.
    For {
        loop_var: VarId,
        init_var: VarId,
        limit_var: VarId,
        body: Box<ProgramNode>,
    },
    /// Runs `then_branch` if `test_var` is non-zero, otherwise `else_branch`.
    /// Either branch (or both) may be absent.
    IfElse {
        test_var: VarId,
        then_branch: Option<Box<ProgramNode>>,
        else_branch: Option<Box<ProgramNode>>,
    },
    /// Swaps list positions `pos_a`/`pos_b` when out of ascending order.
    CompareSwap { pos_a: VarId, pos_b: VarId },
    /// Swaps list positions `pos_a`/`pos_b` when out of descending order.
    ReverseCompareSwap { pos_a: VarId, pos_b: VarId },
}

impl ProgramNode {
    pub fn depth(&self) -> usize {
        match self {
            ProgramNode::For { body, .. } => 1 + body.depth(),
            ProgramNode::IfElse {
                then_branch,
                else_branch,
                ..
            } => {
                let t = then_branch.as_ref().map_or(0, |n| n.depth());
                let e = else_branch.as_ref().map_or(0, |n| n.depth());
                1 + t.max(e)
            }
            ProgramNode::CompareSwap { .. } | ProgramNode::ReverseCompareSwap { .. } => 1,
        }
    }

    pub fn node_count(&self) -> usize {
        match self {
            ProgramNode::For { body, .. } => 1 + body.node_count(),
            ProgramNode::IfElse {
                then_branch,
                else_branch,
                ..
            } => {
                let t = then_branch.as_ref().map_or(0, |n| n.node_count());
                let e = else_branch.as_ref().map_or(0, |n| n.node_count());
                1 + t + e
            }
            ProgramNode::CompareSwap { .. } | ProgramNode::ReverseCompareSwap { .. } => 1,
        }
    }
}

/// A complete program: the root node plus cached structural metrics.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Program {
    root: ProgramNode,
    node_count: u32,
    depth: u32,
}

impl Program {
    /// Wraps a root node, caching its size and depth. The depth limit is
    /// enforced here so no valid `Program` can ever exceed it.
    pub fn new(root: ProgramNode) -> Program {
        let depth = root.depth();
        assert!(
            (1..=MAX_DEPTH).contains(&depth),
            "program depth {depth} outside 1..={MAX_DEPTH}"
        );
        let node_count = root.node_count();
        Program {
            root,
            node_count: node_count as u32,
            depth: depth as u32,
        }
    }

    pub fn root(&self) -> &ProgramNode {
        &self.root
    }

    pub fn node_count(&self) -> usize {
        self.node_count as usize
    }

    pub fn depth(&self) -> usize {
        self.depth as usize
    }
}

/// Knobs of the random generator. The defaults are what every experiment
/// uses; they exist as data so sampling tests can check the generator against
/// its own declared distribution.
#[derive(Clone, Copy, Debug)]
pub struct GeneratorConfig {
    /// Relative weights for drawing For / IfElse / CompareSwap /
    /// ReverseCompareSwap at positions with remaining depth > 1.
    pub node_weights: [f64; 4],
    /// Probability that each IfElse branch is independently absent.
    pub branch_absent_prob: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            node_weights: [1.0, 1.0, 1.0, 1.0],
            branch_absent_prob: 0.25,
        }
    }
}

#[derive(Clone, Copy)]
enum NodeKind {
    For,
    IfElse,
    CompareSwap,
    ReverseCompareSwap,
}

fn draw_kind(cfg: &GeneratorConfig, leaf_only: bool, rng: &mut impl Rng) -> NodeKind {
    let w = cfg.node_weights;
    let kinds = [
        NodeKind::For,
        NodeKind::IfElse,
        NodeKind::CompareSwap,
        NodeKind::ReverseCompareSwap,
    ];
    let (weights, kinds): (&[f64], &[NodeKind]) = if leaf_only {
        (&w[2..4], &kinds[2..4])
    } else {
        (&w, &kinds)
    };
    let total: f64 = weights.iter().sum();
    let mut x = rng.gen::<f64>() * total;
    for (weight, kind) in weights.iter().zip(kinds) {
        x -= weight;
        if x < 0.0 {
            return *kind;
        }
    }
    *kinds.last().unwrap()
}

fn random_var(v: usize, rng: &mut impl Rng) -> VarId {
    VarId(rng.gen_range(0..VarId::slot_count(v)) as u16)
}

fn random_writable_var(v: usize, rng: &mut impl Rng) -> VarId {
    VarId(rng.gen_range(1..=v) as u16)
}

fn grow_branch(
    cfg: &GeneratorConfig,
    v: usize,
    remaining_depth: usize,
    rng: &mut impl Rng,
) -> Option<Box<ProgramNode>> {
    if rng.gen::<f64>() < cfg.branch_absent_prob {
        None
    } else {
        Some(Box::new(grow(cfg, v, remaining_depth - 1, rng)))
    }
}

fn grow(cfg: &GeneratorConfig, v: usize, remaining_depth: usize, rng: &mut impl Rng) -> ProgramNode {
    debug_assert!(remaining_depth >= 1);
    match draw_kind(cfg, remaining_depth == 1, rng) {
        NodeKind::For => ProgramNode::For {
            loop_var: random_writable_var(v, rng),
            init_var: random_var(v, rng),
            limit_var: random_var(v, rng),
            body: Box::new(grow(cfg, v, remaining_depth - 1, rng)),
        },
        NodeKind::IfElse => {
            let test_var = random_var(v, rng);
            let then_branch = grow_branch(cfg, v, remaining_depth, rng);
            let else_branch = grow_branch(cfg, v, remaining_depth, rng);
            ProgramNode::IfElse {
                test_var,
                then_branch,
                else_branch,
            }
        }
        NodeKind::CompareSwap => ProgramNode::CompareSwap {
            pos_a: random_var(v, rng),
            pos_b: random_var(v, rng),
        },
        NodeKind::ReverseCompareSwap => ProgramNode::ReverseCompareSwap {
            pos_a: random_var(v, rng),
            pos_b: random_var(v, rng),
        },
    }
}

/// Generates a random program by the grow method under the default
/// [`GeneratorConfig`].
pub fn random_program(v: usize, max_depth: usize, rng: &mut impl Rng) -> Program {
    random_program_with(&GeneratorConfig::default(), v, max_depth, rng)
}

/// Generates a random program under an explicit generator configuration.
pub fn random_program_with(
    cfg: &GeneratorConfig,
    v: usize,
    max_depth: usize,
    rng: &mut impl Rng,
) -> Program {
    assert!(v >= 1, "need at least one writable variable");
    assert!(
        (1..=MAX_DEPTH).contains(&max_depth),
        "max_depth {max_depth} outside 1..={MAX_DEPTH}"
    );
    Program::new(grow(cfg, v, max_depth, rng))
}

/// Replaces the subtree at a uniformly random node position with a fresh
/// random subtree whose depth respects the global limit at that position.
/// The parent is left untouched.
pub fn mutate(parent: &Program, v: usize, max_depth: usize, rng: &mut impl Rng) -> Program {
    mutate_traced(parent, v, max_depth, rng).0
}

/// Like [`mutate`] but also reports which pre-order node position was
/// replaced (0 = root).
pub fn mutate_traced(
    parent: &Program,
    v: usize,
    max_depth: usize,
    rng: &mut impl Rng,
) -> (Program, usize) {
    let target = rng.gen_range(0..parent.node_count());
    let cfg = GeneratorConfig::default();
    let mut next_index = 0usize;
    let root = replace_at(
        parent.root(),
        target,
        &mut next_index,
        1,
        max_depth,
        &cfg,
        v,
        rng,
    );
    (Program::new(root), target)
}

/// Walks the tree in pre-order, cloning it, except that the node whose
/// pre-order index equals `target` is replaced by a fresh random subtree. The
/// replacement's depth budget is what the global limit leaves at this level.
#[allow(clippy::too_many_arguments)]
fn replace_at(
    node: &ProgramNode,
    target: usize,
    next_index: &mut usize,
    level: usize,
    max_depth: usize,
    cfg: &GeneratorConfig,
    v: usize,
    rng: &mut impl Rng,
) -> ProgramNode {
    let here = *next_index;
    *next_index += 1;
    if here == target {
        let budget = max_depth + 1 - level;
        let replacement = grow(cfg, v, budget, rng);
        // still have to advance the counter past the replaced subtree
        *next_index += node.node_count() - 1;
        return replacement;
    }
    match node {
        ProgramNode::For {
            loop_var,
            init_var,
            limit_var,
            body,
        } => ProgramNode::For {
            loop_var: *loop_var,
            init_var: *init_var,
            limit_var: *limit_var,
            body: Box::new(replace_at(
                body,
                target,
                next_index,
                level + 1,
                max_depth,
                cfg,
                v,
                rng,
            )),
        },
        ProgramNode::IfElse {
            test_var,
            then_branch,
            else_branch,
        } => {
            let then_branch = then_branch.as_ref().map(|n| {
                Box::new(replace_at(
                    n,
                    target,
                    next_index,
                    level + 1,
                    max_depth,
                    cfg,
                    v,
                    rng,
                ))
            });
            let else_branch = else_branch.as_ref().map(|n| {
                Box::new(replace_at(
                    n,
                    target,
                    next_index,
                    level + 1,
                    max_depth,
                    cfg,
                    v,
                    rng,
                ))
            });
            ProgramNode::IfElse {
                test_var: *test_var,
                then_branch,
                else_branch,
            }
        }
        leaf => leaf.clone(),
    }
}

/// The nested-loop ascending sorter: for i in [v0, v_{v+1}) { for j in [i,
/// v_{v+1}) { CompareSwap(i, j) } }. Works for any v >= 2.
pub fn canonical_sorter(v: usize) -> Program {
    assert!(v >= 2);
    let limit = VarId((v + 1) as u16);
    Program::new(ProgramNode::For {
        loop_var: VarId(1),
        init_var: VarId(0),
        limit_var: limit,
        body: Box::new(ProgramNode::For {
            loop_var: VarId(2),
            init_var: VarId(1),
            limit_var: limit,
            body: Box::new(ProgramNode::CompareSwap {
                pos_a: VarId(1),
                pos_b: VarId(2),
            }),
        }),
    })
}

/// The canonical sorter with every CompareSwap replaced by
/// ReverseCompareSwap: sorts descending.
pub fn canonical_reverse_sorter(v: usize) -> Program {
    assert!(v >= 2);
    let limit = VarId((v + 1) as u16);
    Program::new(ProgramNode::For {
        loop_var: VarId(1),
        init_var: VarId(0),
        limit_var: limit,
        body: Box::new(ProgramNode::For {
            loop_var: VarId(2),
            init_var: VarId(1),
            limit_var: limit,
            body: Box::new(ProgramNode::ReverseCompareSwap {
                pos_a: VarId(1),
                pos_b: VarId(2),
            }),
        }),
    })
}

/// Direction-aware sorter: tests the direction flag (variable v+2) and runs
/// the descending sorter when it is set, the ascending one when clear.
pub fn canonical_dual_sorter(v: usize) -> Program {
    assert!(v >= 2);
    let asc = canonical_sorter(v);
    let desc = canonical_reverse_sorter(v);
    Program::new(ProgramNode::IfElse {
        test_var: VarId((v + 2) as u16),
        then_branch: Some(Box::new(desc.root().clone())),
        else_branch: Some(Box::new(asc.root().clone())),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng_for;
    use proptest::prelude::*;

    // Independent metric oracles: plain recursion written separately from the
    // methods under test.
    fn naive_depth(n: &ProgramNode) -> usize {
        let children = naive_children(n);
        1 + children.iter().map(|c| naive_depth(c)).max().unwrap_or(0)
    }

    fn naive_count(n: &ProgramNode) -> usize {
        1 + naive_children(n)
            .iter()
            .map(|c| naive_count(c))
            .sum::<usize>()
    }

    fn naive_children(n: &ProgramNode) -> Vec<&ProgramNode> {
        match n {
            ProgramNode::For { body, .. } => vec![body],
            ProgramNode::IfElse {
                then_branch,
                else_branch,
                ..
            } => then_branch
                .iter()
                .chain(else_branch.iter())
                .map(|b| b.as_ref())
                .collect(),
            _ => vec![],
        }
    }

    fn all_vars(n: &ProgramNode, out: &mut Vec<VarId>) {
        match n {
            ProgramNode::For {
                loop_var,
                init_var,
                limit_var,
                ..
            } => out.extend([*loop_var, *init_var, *limit_var]),
            ProgramNode::IfElse { test_var, .. } => out.push(*test_var),
            ProgramNode::CompareSwap { pos_a, pos_b }
            | ProgramNode::ReverseCompareSwap { pos_a, pos_b } => out.extend([*pos_a, *pos_b]),
        }
        for c in naive_children(n) {
            all_vars(c, out);
        }
    }

    #[test]
    fn fixed_seed_reproduces_tree() {
        let a = random_program(2, 6, &mut rng_for(7, 0));
        let b = random_program(2, 6, &mut rng_for(7, 0));
        assert_eq!(a, b);
    }

    #[test]
    fn depth_one_forces_leaf() {
        for i in 0..200 {
            let p = random_program(2, 1, &mut rng_for(11, i));
            assert_eq!(p.node_count(), 1);
            assert!(matches!(
                p.root(),
                ProgramNode::CompareSwap { .. } | ProgramNode::ReverseCompareSwap { .. }
            ));
        }
    }

    #[test]
    fn root_kind_frequencies_match_generator_weights() {
        let mut rng = rng_for(13, 0);
        let mut counts = [0usize; 4];
        let samples = 100_000;
        for _ in 0..samples {
            let p = random_program(2, 6, &mut rng);
            let k = match p.root() {
                ProgramNode::For { .. } => 0,
                ProgramNode::IfElse { .. } => 1,
                ProgramNode::CompareSwap { .. } => 2,
                ProgramNode::ReverseCompareSwap { .. } => 3,
            };
            counts[k] += 1;
        }
        // each configured to 0.25; demand agreement within 2% absolute
        for (i, &c) in counts.iter().enumerate() {
            let freq = c as f64 / samples as f64;
            assert!(
                (freq - 0.25).abs() < 0.02,
                "root kind {i} frequency {freq} not within 2% of 0.25"
            );
        }
    }

    #[test]
    fn generated_programs_stay_in_bounds() {
        for v in [1usize, 2, 5, 10] {
            let mut rng = rng_for(17, v as u64);
            for _ in 0..20_000 {
                let p = random_program(v, 6, &mut rng);
                assert!(p.depth() <= MAX_DEPTH);
                let mut vars = Vec::new();
                all_vars(p.root(), &mut vars);
                for var in vars {
                    assert!(var.index() <= v + 2);
                }
            }
        }
    }

    #[test]
    fn for_loop_vars_are_writable() {
        fn check(n: &ProgramNode, v: usize) {
            if let ProgramNode::For { loop_var, .. } = n {
                assert!(loop_var.is_writable(v));
            }
            for c in naive_children(n) {
                check(c, v);
            }
        }
        let mut rng = rng_for(19, 0);
        for _ in 0..20_000 {
            let p = random_program(3, 6, &mut rng);
            check(p.root(), 3);
        }
    }

    #[test]
    fn metric_examples() {
        let leaf = Program::new(ProgramNode::CompareSwap {
            pos_a: VarId(0),
            pos_b: VarId(1),
        });
        assert_eq!((leaf.depth(), leaf.node_count()), (1, 1));

        let nested = Program::new(ProgramNode::For {
            loop_var: VarId(1),
            init_var: VarId(0),
            limit_var: VarId(3),
            body: Box::new(ProgramNode::For {
                loop_var: VarId(2),
                init_var: VarId(0),
                limit_var: VarId(3),
                body: Box::new(ProgramNode::CompareSwap {
                    pos_a: VarId(1),
                    pos_b: VarId(2),
                }),
            }),
        });
        assert_eq!((nested.depth(), nested.node_count()), (3, 3));

        let half_if = Program::new(ProgramNode::IfElse {
            test_var: VarId(0),
            then_branch: Some(Box::new(ProgramNode::CompareSwap {
                pos_a: VarId(1),
                pos_b: VarId(2),
            })),
            else_branch: None,
        });
        assert_eq!((half_if.depth(), half_if.node_count()), (2, 2));
    }

    #[test]
    fn mutating_a_leaf_replaces_the_root() {
        let leaf = Program::new(ProgramNode::ReverseCompareSwap {
            pos_a: VarId(0),
            pos_b: VarId(0),
        });
        for i in 0..500 {
            let (child, pos) = mutate_traced(&leaf, 2, 6, &mut rng_for(23, i));
            assert_eq!(pos, 0);
            assert!(child.depth() <= MAX_DEPTH);
        }
    }

    #[test]
    fn mutation_positions_cover_the_whole_tree() {
        let parent = canonical_sorter(2); // 3 nodes, depth 3
        let mut seen = [false; 3];
        let mut rng = rng_for(29, 0);
        for _ in 0..10_000 {
            let (_, pos) = mutate_traced(&parent, 2, 6, &mut rng);
            seen[pos] = true;
        }
        assert!(seen.iter().all(|&s| s), "positions hit: {seen:?}");
    }

    #[test]
    fn mutation_leaves_parent_untouched() {
        let mut rng = rng_for(31, 0);
        let parent = random_program(2, 6, &mut rng);
        let snapshot = parent.clone();
        let child = mutate(&parent, 2, 6, &mut rng);
        let _ = mutate(&child, 2, 6, &mut rng);
        assert_eq!(parent, snapshot);
    }

    #[test]
    fn canonical_sorters_have_expected_shape() {
        let s = canonical_sorter(2);
        assert_eq!((s.depth(), s.node_count()), (3, 3));
        let d = canonical_dual_sorter(2);
        assert_eq!((d.depth(), d.node_count()), (7 - 3, 7));
    }

    fn arb_program(v: usize) -> impl Strategy<Value = Program> {
        any::<u64>().prop_map(move |seed| random_program(v, 6, &mut rng_for(seed, 99)))
    }

    proptest! {
        #[test]
        fn cached_metrics_match_naive_traversal(p in arb_program(3)) {
            prop_assert_eq!(p.depth(), naive_depth(p.root()));
            prop_assert_eq!(p.node_count(), naive_count(p.root()));
        }

        #[test]
        fn mutation_preserves_depth_limit(p in arb_program(2), seed in any::<u64>()) {
            let child = mutate(&p, 2, 6, &mut rng_for(seed, 7));
            prop_assert!(child.depth() <= MAX_DEPTH);
            prop_assert!(child.node_count() <= MAX_NODE_COUNT);
        }
    }
}
