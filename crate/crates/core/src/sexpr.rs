//! Text form for programs, used by the CLI to print evolved winners and to
//! accept programs for replay.
//!
//! Grammar (whitespace-separated):
//!
//! ```text
//! node  := (for vL vI vM node)        loop_var init_var limit_var body
//!        | (if vT branch branch)      then-branch else-branch
//!        | (cswap vA vB)
//!        | (rcswap vA vB)
//! branch := node | _                  underscore marks an absent branch
//! var   := v<digits>
//! ```

use std::fmt;

use crate::program::{Program, ProgramNode, VarId, MAX_DEPTH};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum SexprError {
    #[error("unexpected end of input")]
    UnexpectedEnd,
    #[error("unexpected token {0:?}")]
    UnexpectedToken(String),
    #[error("bad variable token {0:?}")]
    BadVariable(String),
    #[error("variable v{index} out of range for {v} writable variables")]
    VariableOutOfRange { index: usize, v: usize },
    #[error("loop variable v{0} is not writable")]
    LoopVarNotWritable(usize),
    #[error("tree depth {0} exceeds limit {MAX_DEPTH}")]
    TooDeep(usize),
    #[error("trailing input after program")]
    TrailingInput,
}

struct SexprView<'a>(&'a ProgramNode);

impl fmt::Display for SexprView<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn branch(f: &mut fmt::Formatter<'_>, b: &Option<Box<ProgramNode>>) -> fmt::Result {
            match b {
                Some(n) => write!(f, "{}", SexprView(n)),
                None => write!(f, "_"),
            }
        }
        match self.0 {
            ProgramNode::For {
                loop_var,
                init_var,
                limit_var,
                body,
            } => write!(
                f,
                "(for v{} v{} v{} {})",
                loop_var.0,
                init_var.0,
                limit_var.0,
                SexprView(body)
            ),
            ProgramNode::IfElse {
                test_var,
                then_branch,
                else_branch,
            } => {
                write!(f, "(if v{} ", test_var.0)?;
                branch(f, then_branch)?;
                write!(f, " ")?;
                branch(f, else_branch)?;
                write!(f, ")")
            }
            ProgramNode::CompareSwap { pos_a, pos_b } => {
                write!(f, "(cswap v{} v{})", pos_a.0, pos_b.0)
            }
            ProgramNode::ReverseCompareSwap { pos_a, pos_b } => {
                write!(f, "(rcswap v{} v{})", pos_a.0, pos_b.0)
            }
        }
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", SexprView(self.root()))
    }
}

pub fn to_sexpr(p: &Program) -> String {
    p.to_string()
}

/// Parses the s-expression form of a program for a system with `v` writable
/// variables, validating variable ranges, loop-variable writability and the
/// depth limit.
pub fn parse_program(s: &str, v: usize) -> Result<Program, SexprError> {
    let spaced = s.replace('(', " ( ").replace(')', " ) ");
    let tokens: Vec<&str> = spaced.split_whitespace().collect();
    let mut pos = 0usize;
    let root = parse_node(&tokens, &mut pos, v)?;
    if pos != tokens.len() {
        return Err(SexprError::TrailingInput);
    }
    let depth = root.depth();
    if depth > MAX_DEPTH {
        return Err(SexprError::TooDeep(depth));
    }
    Ok(Program::new(root))
}

fn next<'a>(tokens: &[&'a str], pos: &mut usize) -> Result<&'a str, SexprError> {
    let t = tokens.get(*pos).ok_or(SexprError::UnexpectedEnd)?;
    *pos += 1;
    Ok(t)
}

fn expect(tokens: &[&str], pos: &mut usize, want: &str) -> Result<(), SexprError> {
    let t = next(tokens, pos)?;
    if t == want {
        Ok(())
    } else {
        Err(SexprError::UnexpectedToken(t.to_string()))
    }
}

fn parse_var(tokens: &[&str], pos: &mut usize, v: usize) -> Result<VarId, SexprError> {
    let t = next(tokens, pos)?;
    let digits = t
        .strip_prefix('v')
        .ok_or_else(|| SexprError::BadVariable(t.to_string()))?;
    let index: usize = digits
        .parse()
        .map_err(|_| SexprError::BadVariable(t.to_string()))?;
    if index >= VarId::slot_count(v) {
        return Err(SexprError::VariableOutOfRange { index, v });
    }
    Ok(VarId(index as u16))
}

fn parse_branch(
    tokens: &[&str],
    pos: &mut usize,
    v: usize,
) -> Result<Option<Box<ProgramNode>>, SexprError> {
    if tokens.get(*pos) == Some(&"_") {
        *pos += 1;
        return Ok(None);
    }
    Ok(Some(Box::new(parse_node(tokens, pos, v)?)))
}

fn parse_node(tokens: &[&str], pos: &mut usize, v: usize) -> Result<ProgramNode, SexprError> {
    expect(tokens, pos, "(")?;
    let head = next(tokens, pos)?;
    let node = match head {
        "for" => {
            let loop_var = parse_var(tokens, pos, v)?;
            if !loop_var.is_writable(v) {
                return Err(SexprError::LoopVarNotWritable(loop_var.index()));
            }
            let init_var = parse_var(tokens, pos, v)?;
            let limit_var = parse_var(tokens, pos, v)?;
            let body = Box::new(parse_node(tokens, pos, v)?);
            ProgramNode::For {
                loop_var,
                init_var,
                limit_var,
                body,
            }
        }
        "if" => {
            let test_var = parse_var(tokens, pos, v)?;
            let then_branch = parse_branch(tokens, pos, v)?;
            let else_branch = parse_branch(tokens, pos, v)?;
            ProgramNode::IfElse {
                test_var,
                then_branch,
                else_branch,
            }
        }
        "cswap" => ProgramNode::CompareSwap {
            pos_a: parse_var(tokens, pos, v)?,
            pos_b: parse_var(tokens, pos, v)?,
        },
        "rcswap" => ProgramNode::ReverseCompareSwap {
            pos_a: parse_var(tokens, pos, v)?,
            pos_b: parse_var(tokens, pos, v)?,
        },
        other => return Err(SexprError::UnexpectedToken(other.to_string())),
    };
    expect(tokens, pos, ")")?;
    Ok(node)
}
