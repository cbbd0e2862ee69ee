//! Shared test fixtures: a small schema, a formula generator over it and an
//! evaluator written independently of the library.
//!
//! Formulas have the shape `(forall ((x S) (y S)) body)` with a quantifier
//! free body. A counterexample to the equivalence of two such formulas
//! survives in the substructure on the falsifying pair plus `c`, so domains
//! of up to three elements decide equivalence exactly.
#![allow(dead_code)]

pub mod reference_runs;
pub mod synthetic;

use roundtrip_core::nli::NliCategory;
use roundtrip_core::rng::SplitMix64;

pub const SMALL_SCHEMA: &str = "
(declare-sort S 0)
(declare-fun p (S) Bool)
(declare-fun q (S) Bool)
(declare-fun r (S S) Bool)
(declare-const c S)
";

pub const COMPLETE_DOMAIN: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arg {
    X,
    Y,
    C,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum B {
    T,
    F,
    P(Arg),
    Q(Arg),
    R(Arg, Arg),
    Eq(Arg, Arg),
    Not(Box<B>),
    And(Vec<B>),
    Or(Vec<B>),
    Imp(Box<B>, Box<B>),
    Iff(Box<B>, Box<B>),
}

fn arg_text(a: Arg) -> &'static str {
    match a {
        Arg::X => "x",
        Arg::Y => "y",
        Arg::C => "c",
    }
}

impl B {
    pub fn text(&self) -> String {
        let many = |op: &str, xs: &[B]| format!("({op} {})", xs.iter().map(B::text).collect::<Vec<_>>().join(" "));
        match self {
            B::T => "true".into(),
            B::F => "false".into(),
            B::P(a) => format!("(p {})", arg_text(*a)),
            B::Q(a) => format!("(q {})", arg_text(*a)),
            B::R(a, b) => format!("(r {} {})", arg_text(*a), arg_text(*b)),
            B::Eq(a, b) => format!("(= {} {})", arg_text(*a), arg_text(*b)),
            B::Not(x) => format!("(not {})", x.text()),
            B::And(xs) => many("and", xs),
            B::Or(xs) => many("or", xs),
            B::Imp(a, b) => format!("(=> {} {})", a.text(), b.text()),
            B::Iff(a, b) => format!("(= {} {})", a.text(), b.text()),
        }
    }

    pub fn closed(&self) -> String {
        format!("(forall ((x S) (y S)) {})", self.text())
    }
}

/// A finite structure for the small schema.
#[derive(Debug, Clone)]
pub struct Model {
    pub n: usize,
    pub p: Vec<bool>,
    pub q: Vec<bool>,
    /// Row-major `n * n`.
    pub r: Vec<bool>,
    pub c: usize,
}

fn bits(mask: u64, len: usize) -> Vec<bool> {
    (0..len).map(|i| mask >> i & 1 == 1).collect()
}

impl Model {
    /// Every structure with 1..=max elements.
    pub fn all(max: usize) -> impl Iterator<Item = Model> {
        (1..=max).flat_map(|n| {
            let cells = n * n;
            (0u64..1 << n).flat_map(move |p| {
                (0u64..1 << n).flat_map(move |q| {
                    (0u64..1 << cells).flat_map(move |r| {
                        (0..n).map(move |c| Model {
                            n,
                            p: bits(p, n),
                            q: bits(q, n),
                            r: bits(r, cells),
                            c,
                        })
                    })
                })
            })
        })
    }

    fn val(&self, a: Arg, x: usize, y: usize) -> usize {
        match a {
            Arg::X => x,
            Arg::Y => y,
            Arg::C => self.c,
        }
    }

    pub fn body(&self, b: &B, x: usize, y: usize) -> bool {
        match b {
            B::T => true,
            B::F => false,
            B::P(a) => self.p[self.val(*a, x, y)],
            B::Q(a) => self.q[self.val(*a, x, y)],
            B::R(a, b) => self.r[self.val(*a, x, y) * self.n + self.val(*b, x, y)],
            B::Eq(a, b) => self.val(*a, x, y) == self.val(*b, x, y),
            B::Not(i) => !self.body(i, x, y),
            B::And(xs) => xs.iter().all(|i| self.body(i, x, y)),
            B::Or(xs) => xs.iter().any(|i| self.body(i, x, y)),
            B::Imp(a, b) => !self.body(a, x, y) || self.body(b, x, y),
            B::Iff(a, b) => self.body(a, x, y) == self.body(b, x, y),
        }
    }

    pub fn holds(&self, b: &B) -> bool {
        (0..self.n).all(|x| (0..self.n).all(|y| self.body(b, x, y)))
    }
}

/// First structure (smallest first) on which the closed formulas differ.
pub fn brute_force_difference(a: &B, b: &B, max: usize) -> Option<Model> {
    Model::all(max).find(|m| m.holds(a) != m.holds(b))
}

fn arg(rng: &mut SplitMix64) -> Arg {
    *rng.pick(&[Arg::X, Arg::Y, Arg::C])
}

pub fn gen_body(rng: &mut SplitMix64, depth: u32) -> B {
    if depth == 0 || rng.chance(1, 4) {
        return match rng.below(10) {
            0 => B::T,
            1 => B::F,
            2 | 3 => B::P(arg(rng)),
            4 | 5 => B::Q(arg(rng)),
            6 | 7 => B::R(arg(rng), arg(rng)),
            _ => B::Eq(arg(rng), arg(rng)),
        };
    }
    let d = depth - 1;
    match rng.below(5) {
        0 => B::Not(Box::new(gen_body(rng, d))),
        1 => B::And((0..2 + rng.below(2)).map(|_| gen_body(rng, d)).collect()),
        2 => B::Or((0..2 + rng.below(2)).map(|_| gen_body(rng, d)).collect()),
        3 => B::Imp(Box::new(gen_body(rng, d)), Box::new(gen_body(rng, d))),
        _ => B::Iff(Box::new(gen_body(rng, d)), Box::new(gen_body(rng, d))),
    }
}

fn swap_xy(b: &B) -> B {
    let s = |a: &Arg| match a {
        Arg::X => Arg::Y,
        Arg::Y => Arg::X,
        Arg::C => Arg::C,
    };
    match b {
        B::P(a) => B::P(s(a)),
        B::Q(a) => B::Q(s(a)),
        B::R(a, c) => B::R(s(a), s(c)),
        B::Eq(a, c) => B::Eq(s(a), s(c)),
        B::Not(i) => B::Not(Box::new(swap_xy(i))),
        B::And(xs) => B::And(xs.iter().map(swap_xy).collect()),
        B::Or(xs) => B::Or(xs.iter().map(swap_xy).collect()),
        B::Imp(a, c) => B::Imp(Box::new(swap_xy(a)), Box::new(swap_xy(c))),
        B::Iff(a, c) => B::Iff(Box::new(swap_xy(a)), Box::new(swap_xy(c))),
        other => other.clone(),
    }
}

/// One semantics-preserving rewrite at the root, or recursively inside.
fn rewrite_once(rng: &mut SplitMix64, b: &B) -> B {
    let descend = rng.chance(1, 2);
    match b {
        B::And(xs) | B::Or(xs) if descend => {
            let i = rng.below(xs.len() as u64) as usize;
            let mut ys = xs.clone();
            ys[i] = rewrite_once(rng, &xs[i]);
            if matches!(b, B::And(_)) {
                B::And(ys)
            } else {
                B::Or(ys)
            }
        }
        B::And(xs) => match rng.below(3) {
            0 => B::Not(Box::new(B::Or(xs.iter().map(|x| B::Not(Box::new(x.clone()))).collect()))),
            1 => B::And(xs.iter().rev().cloned().collect()),
            _ => B::And(vec![xs[0].clone(), B::And(xs[1..].to_vec())]),
        },
        B::Or(xs) => match rng.below(2) {
            0 => B::Not(Box::new(B::And(xs.iter().map(|x| B::Not(Box::new(x.clone()))).collect()))),
            _ => B::Or(xs.iter().rev().cloned().collect()),
        },
        B::Imp(a, c) => match rng.below(3) {
            0 => B::Or(vec![B::Not(a.clone()), (**c).clone()]),
            1 => B::Imp(Box::new(B::Not(c.clone())), Box::new(B::Not(a.clone()))),
            _ => B::Imp(Box::new(rewrite_once(rng, a)), c.clone()),
        },
        B::Iff(a, c) => match rng.below(2) {
            0 => B::Iff(c.clone(), a.clone()),
            _ => B::And(vec![B::Imp(a.clone(), c.clone()), B::Imp(c.clone(), a.clone())]),
        },
        B::Not(i) => match &**i {
            B::Not(j) => (**j).clone(),
            _ => B::Not(Box::new(rewrite_once(rng, i))),
        },
        B::R(a, c) if rng.chance(1, 3) => B::And(vec![B::T, B::R(*a, *c)]),
        B::Eq(a, c) => B::Eq(*c, *a),
        other => B::Not(Box::new(B::Not(Box::new(other.clone())))),
    }
}

/// An equivalent body: a few rewrites, plus possibly renaming x and y
/// (both are universally bound, so the swap is harmless).
pub fn rewrite(rng: &mut SplitMix64, b: &B) -> B {
    let mut out = b.clone();
    for _ in 0..1 + rng.below(3) {
        out = rewrite_once(rng, &out);
    }
    if rng.chance(1, 3) {
        out = swap_xy(&out);
    }
    out
}

/// A body that usually, but not always, differs in meaning.
pub fn mutate(rng: &mut SplitMix64, b: &B) -> B {
    match b {
        B::Not(i) if rng.chance(1, 2) => (**i).clone(),
        B::And(xs) | B::Or(xs) => {
            let i = rng.below(xs.len() as u64) as usize;
            let mut ys = xs.clone();
            ys[i] = mutate(rng, &xs[i]);
            if matches!(b, B::And(_)) {
                B::And(ys)
            } else {
                B::Or(ys)
            }
        }
        B::Imp(a, c) if rng.chance(1, 2) => B::Imp(c.clone(), a.clone()),
        B::Imp(a, c) => B::Imp(a.clone(), Box::new(mutate(rng, c))),
        B::Iff(a, c) => B::Imp(a.clone(), c.clone()),
        B::P(a) => B::Q(*a),
        B::Q(a) => B::P(*a),
        B::R(a, c) => B::R(*c, *a),
        B::Eq(a, _) => B::Eq(*a, arg(rng)),
        other => B::Not(Box::new(other.clone())),
    }
}

/// `n` formula pairs, alternating rewrites and mutations.
pub fn pair_corpus(seed: u64, n: usize) -> Vec<(B, B)> {
    let mut rng = SplitMix64::new(seed);
    (0..n)
        .map(|i| {
            let a = gen_body(&mut rng, 3);
            let b = if i % 2 == 0 { rewrite(&mut rng, &a) } else { mutate(&mut rng, &a) };
            (a, b)
        })
        .collect()
}

/// An original rule and a reconstruction that reverses its meaning.
pub const PASSING_ORIGINAL: &str = "The being-passed obligations (move right on signal, no accelerating) do not apply when passing to the right is permitted.";
pub const PASSING_RECONSTRUCTED: &str = "When a vehicle is passing another vehicle on a roadway and the passing is not on the right side, the vehicle being passed must not accelerate and must move as close to the right edge of the roadway as practicable.";

/// Reference tree over grid units of 0.05, so every comparison is exact.
pub fn reference_category(ef: u32, eb: u32, cf: u32, cb: u32) -> NliCategory {
    let (emin, cmax) = (ef.min(eb), cf.max(cb));
    let rules: [(bool, NliCategory); 5] = [
        (cmax >= 12, NliCategory::Contradiction),
        (emin >= 14 && cmax < 4, NliCategory::Equivalent),
        (ef >= 12 && eb < 8, NliCategory::Strengthened),
        (eb >= 12 && ef < 8, NliCategory::Weakened),
        (emin >= 6 && cmax < 6, NliCategory::Related),
    ];
    rules
        .iter()
        .find(|(hit, _)| *hit)
        .map_or(NliCategory::Unrelated, |(_, c)| *c)
}

