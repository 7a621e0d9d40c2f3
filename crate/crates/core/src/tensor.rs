//! Tensor products of semimodules over commutative semirings: formal sums of
//! pairs modulo the bilinearity congruence, with a complete normal form for
//! free modules, bounded chain search in general, and sampling harnesses for
//! the cancellation property (*) of sub-semimodules.

use std::collections::{BTreeMap, HashSet, VecDeque};
use std::fmt::Debug;
use std::hash::Hash;

use rand_chacha::rand_core::Rng;
use rand_chacha::ChaCha20Rng;
use serde_json::{json, Value};

use crate::error::{MvError, Result};
use crate::specialize::{stream_rng, uniform_below};

pub trait Semiring: Clone + Eq + Ord + Hash + Debug {
    fn zero() -> Self;
    fn one() -> Self;
    fn add(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    /// Elements of "size" at most `bound` (all elements for finite semirings).
    fn elements(bound: u64) -> Vec<Self>;
    /// Enumeration size of this element.
    fn size(&self) -> u64;
    fn is_zero(&self) -> bool {
        *self == Self::zero()
    }
}

impl Semiring for u64 {
    fn zero() -> Self {
        0
    }
    fn one() -> Self {
        1
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn elements(bound: u64) -> Vec<Self> {
        (0..=bound).collect()
    }
    fn size(&self) -> u64 {
        *self
    }
}

/// {0, ..., C} with saturating operations.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Capped<const C: u64>(pub u64);

impl<const C: u64> Semiring for Capped<C> {
    fn zero() -> Self {
        Capped(0)
    }
    fn one() -> Self {
        Capped(1.min(C))
    }
    fn add(&self, o: &Self) -> Self {
        Capped((self.0 + o.0).min(C))
    }
    fn mul(&self, o: &Self) -> Self {
        Capped((self.0 * o.0).min(C))
    }
    fn elements(_bound: u64) -> Vec<Self> {
        (0..=C).map(Capped).collect()
    }
    fn size(&self) -> u64 {
        self.0
    }
}

/// Semiring axioms on all triples of small elements; returns the first violation.
pub fn semiring_laws<S: Semiring>(bound: u64) -> std::result::Result<(), String> {
    let el = S::elements(bound);
    let (z, o) = (S::zero(), S::one());
    for a in &el {
        if a.add(&z) != *a || a.mul(&o) != *a || !a.mul(&z).is_zero() {
            return Err(format!("identity laws at {a:?}"));
        }
        for b in &el {
            if a.add(b) != b.add(a) || a.mul(b) != b.mul(a) {
                return Err(format!("commutativity at {a:?}, {b:?}"));
            }
            for c in &el {
                if a.add(b).add(c) != a.add(&b.add(c)) || a.mul(b).mul(c) != a.mul(&b.mul(c)) {
                    return Err(format!("associativity at {a:?}, {b:?}, {c:?}"));
                }
                if a.mul(&b.add(c)) != a.mul(b).add(&a.mul(c)) {
                    return Err(format!("distributivity at {a:?}, {b:?}, {c:?}"));
                }
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// free modules S^r

pub type Vector<S> = Vec<S>;

fn vadd<S: Semiring>(a: &[S], b: &[S]) -> Vector<S> {
    a.iter().zip(b).map(|(x, y)| x.add(y)).collect()
}

fn vact<S: Semiring>(s: &S, a: &[S]) -> Vector<S> {
    a.iter().map(|x| s.mul(x)).collect()
}

fn vzero<S: Semiring>(r: usize) -> Vector<S> {
    vec![S::zero(); r]
}

fn is_vzero<S: Semiring>(a: &[S]) -> bool {
    a.iter().all(|x| x.is_zero())
}

/// Cartesian product of per-coordinate choices.
fn product<T: Clone>(choices: &[Vec<T>]) -> Vec<Vec<T>> {
    let mut out = vec![vec![]];
    for c in choices {
        let mut next = vec![];
        for prefix in &out {
            for x in c {
                let mut p = prefix.clone();
                p.push(x.clone());
                next.push(p);
            }
        }
        out = next;
    }
    out
}

fn vsize<S: Semiring>(v: &[S]) -> u64 {
    v.iter().map(|x| x.size()).max().unwrap_or(0)
}

/// Pairs (a, b) with a + b = v, both nonzero.
fn splits<S: Semiring>(v: &[S], bound: u64) -> Vec<(Vector<S>, Vector<S>)> {
    let el = S::elements(bound.max(vsize(v)));
    let per: Vec<Vec<(S, S)>> = v
        .iter()
        .map(|x| {
            let mut c = vec![];
            for a in &el {
                for b in &el {
                    if a.add(b) == *x {
                        c.push((a.clone(), b.clone()));
                    }
                }
            }
            c
        })
        .collect();
    product(&per)
        .into_iter()
        .map(|p| p.into_iter().unzip::<S, S, Vector<S>, Vector<S>>())
        .filter(|(a, b)| !is_vzero(a) && !is_vzero(b))
        .collect()
}

/// Pairs (s, x) with s x = v, s not in {0, 1}, x != v.
fn factorizations<S: Semiring>(v: &[S], bound: u64) -> Vec<(S, Vector<S>)> {
    let el = S::elements(bound.max(vsize(v)));
    let mut out = vec![];
    for s in el.iter().filter(|s| !s.is_zero() && **s != S::one()) {
        let per: Vec<Vec<S>> = v.iter().map(|c| el.iter().filter(|x| s.mul(x) == *c).cloned().collect()).collect();
        for x in product(&per) {
            if x != v {
                out.push((s.clone(), x));
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// tensor elements

/// Finite S-combination of pairs [m1, m2]; no zero coefficients stored.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct TensorElem<S: Semiring> {
    pub terms: BTreeMap<(Vector<S>, Vector<S>), S>,
}

impl<S: Semiring> Default for TensorElem<S> {
    fn default() -> Self {
        TensorElem { terms: BTreeMap::new() }
    }
}

impl<S: Semiring> TensorElem<S> {
    pub fn zero() -> Self {
        Self::default()
    }
    pub fn pair(m1: Vector<S>, m2: Vector<S>) -> Self {
        Self::term(S::one(), m1, m2)
    }
    pub fn term(c: S, m1: Vector<S>, m2: Vector<S>) -> Self {
        let mut e = Self::zero();
        e.push(c, m1, m2);
        e
    }
    fn push(&mut self, c: S, m1: Vector<S>, m2: Vector<S>) {
        if c.is_zero() {
            return;
        }
        let key = (m1, m2);
        let v = match self.terms.remove(&key) {
            Some(old) => old.add(&c),
            None => c,
        };
        if !v.is_zero() {
            self.terms.insert(key, v);
        }
    }
    pub fn add(&self, o: &Self) -> Self {
        let mut r = self.clone();
        for ((a, b), c) in &o.terms {
            r.push(c.clone(), a.clone(), b.clone());
        }
        r
    }
    pub fn scale(&self, s: &S) -> Self {
        let mut r = Self::zero();
        for ((a, b), c) in &self.terms {
            r.push(s.mul(c), a.clone(), b.clone());
        }
        r
    }
    /// Every way of removing c copies of a term: one result per rest with rest + c = old.
    fn take(&self, key: &(Vector<S>, Vector<S>), c: &S, bound: u64) -> Vec<Self> {
        let Some(old) = self.terms.get(key) else { return vec![] };
        let mut out = vec![];
        for rest in S::elements(bound.max(old.size())) {
            if rest.add(c) == *old {
                let mut r = self.clone();
                r.terms.remove(key);
                r.push(rest, key.0.clone(), key.1.clone());
                out.push(r);
            }
        }
        out
    }
    pub fn to_json(&self) -> Value {
        Value::Array(
            self.terms
                .iter()
                .map(|((a, b), c)| json!({ "coeff": format!("{c:?}"), "m1": format!("{a:?}"), "m2": format!("{b:?}") }))
                .collect(),
        )
    }
}

/// Context: ranks of the two free modules and the size bound for enumeration.
#[derive(Clone, Copy, Debug)]
pub struct Ctx {
    pub r1: usize,
    pub r2: usize,
    pub bound: u64,
}

/// Elements related to a by one generator of the congruence, either direction.
pub fn neighbors<S: Semiring>(ctx: &Ctx, a: &TensorElem<S>) -> Vec<TensorElem<S>> {
    let bd = ctx.bound;
    let mut out: Vec<TensorElem<S>> = vec![];
    let keys: Vec<((Vector<S>, Vector<S>), S)> = a.terms.iter().map(|(k, c)| (k.clone(), c.clone())).collect();
    for ((m1, m2), c) in &keys {
        let c = c.clone();
        let key = (m1.clone(), m2.clone());
        // s[m1, m2] -> [s m1, m2] and [m1, s m2]
        for s in S::elements(bd.max(c.size())).into_iter().filter(|s| !s.is_zero()) {
            for rest in a.take(&key, &s, bd) {
                if s != S::one() {
                    out.push(rest.add(&TensorElem::pair(vact(&s, m1), m2.clone())));
                    out.push(rest.add(&TensorElem::pair(m1.clone(), vact(&s, m2))));
                }
            }
        }
        let once = a.take(&key, &S::one(), bd);
        for rest in &once {
            // [s x, m2] -> s[x, m2], and on the second slot
            for (s, x) in factorizations(m1, bd) {
                out.push(rest.add(&TensorElem::term(s, x, m2.clone())));
            }
            for (s, x) in factorizations(m2, bd) {
                out.push(rest.add(&TensorElem::term(s, m1.clone(), x)));
            }
            // [a + b, m2] -> [a, m2] + [b, m2]
            for (x, y) in splits(m1, bd) {
                out.push(rest.add(&TensorElem::pair(x, m2.clone())).add(&TensorElem::pair(y, m2.clone())));
            }
            for (x, y) in splits(m2, bd) {
                out.push(rest.add(&TensorElem::pair(m1.clone(), x)).add(&TensorElem::pair(m1.clone(), y)));
            }
            // [0, m2] -> nothing
            if is_vzero(m1) || is_vzero(m2) {
                out.push(rest.clone());
            }
            // [a, m2] + [b, m2] -> [a + b, m2]
            for ((n1, n2), _) in &keys {
                let other = (n1.clone(), n2.clone());
                for rest2 in rest.take(&other, &S::one(), bd) {
                    if n2 == m2 {
                        out.push(rest2.add(&TensorElem::pair(vadd(m1, n1), m2.clone())));
                    }
                    if n1 == m1 {
                        out.push(rest2.add(&TensorElem::pair(m1.clone(), vadd(m2, n2))));
                    }
                }
            }
        }
    }
    out.sort();
    out.dedup();
    out.retain(|x| x != a);
    out
}

/// Related by a single generator (symmetric closure).
pub fn one_step_related<S: Semiring>(ctx: &Ctx, a: &TensorElem<S>, b: &TensorElem<S>) -> bool {
    a == b || neighbors(ctx, a).contains(b) || neighbors(ctx, b).contains(a)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Search {
    Yes,
    NoWithinBound,
}

impl Search {
    pub fn is_yes(self) -> bool {
        self == Search::Yes
    }
}

/// Cap on visited nodes per side of the search.
pub const MAX_NODES: usize = 200_000;

fn ball<S: Semiring>(ctx: &Ctx, a: &TensorElem<S>, depth: usize) -> HashSet<TensorElem<S>> {
    let mut seen: HashSet<TensorElem<S>> = HashSet::from([a.clone()]);
    let mut q = VecDeque::from([(a.clone(), 0usize)]);
    while let Some((x, d)) = q.pop_front() {
        if d == depth || seen.len() > MAX_NODES {
            continue;
        }
        for y in neighbors(ctx, &x) {
            if seen.insert(y.clone()) {
                q.push_back((y, d + 1));
            }
        }
    }
    seen
}

/// Chain of at most `steps` one-step relations from a to b, searched from both ends.
pub fn equiv_search<S: Semiring>(ctx: &Ctx, a: &TensorElem<S>, b: &TensorElem<S>, steps: usize) -> Search {
    if a == b {
        return Search::Yes;
    }
    // some moves (dropping [0, m]) have no enumerated inverse, so both
    // one-sided searches run besides the meet in the middle
    let fa = ball(ctx, a, steps);
    if fa.contains(b) {
        return Search::Yes;
    }
    let fb = ball(ctx, b, steps);
    if fb.contains(a) {
        return Search::Yes;
    }
    let half = ball(ctx, b, steps / 2);
    let near: HashSet<TensorElem<S>> = ball(ctx, a, steps.div_ceil(2));
    if near.iter().any(|x| half.contains(x)) {
        Search::Yes
    } else {
        Search::NoWithinBound
    }
}

/// Coordinates in S^{r1 r2}: expand both slots on the standard bases.
pub fn normal_form<S: Semiring>(ctx: &Ctx, a: &TensorElem<S>) -> Vector<S> {
    let mut v = vzero::<S>(ctx.r1 * ctx.r2);
    for ((m1, m2), c) in &a.terms {
        for i in 0..ctx.r1 {
            for j in 0..ctx.r2 {
                let x = c.mul(&m1[i]).mul(&m2[j]);
                v[i * ctx.r2 + j] = v[i * ctx.r2 + j].add(&x);
            }
        }
    }
    v
}

/// Canonical representative: scalars on the first slot, basis vectors on the second.
pub fn normal_elem<S: Semiring>(ctx: &Ctx, a: &TensorElem<S>) -> TensorElem<S> {
    let v = normal_form(ctx, a);
    let mut r = TensorElem::zero();
    for j in 0..ctx.r2 {
        let col: Vector<S> = (0..ctx.r1).map(|i| v[i * ctx.r2 + j].clone()).collect();
        if !is_vzero(&col) {
            let mut e = vzero::<S>(ctx.r2);
            e[j] = S::one();
            r = r.add(&TensorElem::pair(col, e));
        }
    }
    r
}

/// Decision for free modules.
pub fn equiv<S: Semiring>(ctx: &Ctx, a: &TensorElem<S>, b: &TensorElem<S>) -> bool {
    normal_form(ctx, a) == normal_form(ctx, b)
}

// ---------------------------------------------------------------------------
// sub-semimodules and property (*)

/// Membership in the sub-semimodule generated by `gens`, by closure search.
pub fn in_span<S: Semiring>(v: &[S], gens: &[Vector<S>], bound: u64) -> bool {
    if is_vzero(v) {
        return true;
    }
    let el: Vec<S> = S::elements(bound).into_iter().filter(|s| !s.is_zero()).collect();
    let scaled: Vec<Vector<S>> = gens.iter().flat_map(|g| el.iter().map(move |s| vact(s, g))).filter(|g| !is_vzero(g)).collect();
    let mut seen: HashSet<Vector<S>> = HashSet::from([vzero(v.len())]);
    let mut q = VecDeque::from([vzero::<S>(v.len())]);
    while let Some(x) = q.pop_front() {
        for g in &scaled {
            let y = vadd(&x, g);
            if y == v {
                return true;
            }
            // prune sums that cannot shrink back (sizes only grow for our instances)
            if seen.len() < MAX_NODES && y.iter().zip(v).all(|(a, b)| a <= b) && seen.insert(y.clone()) {
                q.push_back(y);
            }
        }
    }
    false
}

/// Generators of the tensor sub-semimodule spanned by [u1, m2] and [m1, u2], in normal form.
pub fn tensor_sub_gens<S: Semiring>(ctx: &Ctx, u1: &[Vector<S>], u2: &[Vector<S>]) -> Vec<Vector<S>> {
    let basis = |r: usize| -> Vec<Vector<S>> {
        (0..r)
            .map(|i| {
                let mut e = vzero::<S>(r);
                e[i] = S::one();
                e
            })
            .collect()
    };
    let mut g = vec![];
    for u in u1 {
        for e in basis(ctx.r2) {
            g.push(normal_form(ctx, &TensorElem::pair(u.clone(), e)));
        }
    }
    for u in u2 {
        for e in basis(ctx.r1) {
            g.push(normal_form(ctx, &TensorElem::pair(e, u.clone())));
        }
    }
    g
}

/// Membership of a tensor element in that sub-semimodule.
pub fn in_u<S: Semiring>(ctx: &Ctx, a: &TensorElem<S>, u1: &[Vector<S>], u2: &[Vector<S>]) -> bool {
    in_span(&normal_form(ctx, a), &tensor_sub_gens(ctx, u1, u2), ctx.bound * ctx.bound + ctx.bound)
}

#[derive(Clone, Debug, PartialEq)]
pub struct StarReport {
    pub samples: u64,
    /// samples whose premise s m + m' in U held
    pub premises: u64,
    pub counterexample: Option<String>,
}

impl StarReport {
    pub fn holds(&self) -> bool {
        self.counterexample.is_none()
    }
    pub fn to_json(&self) -> Value {
        json!({ "samples": self.samples, "premises": self.premises, "counterexample": self.counterexample })
    }
}

fn random_vec<S: Semiring>(rng: &mut ChaCha20Rng, r: usize, bound: u64) -> Vector<S> {
    let el = S::elements(bound);
    (0..r).map(|_| el[uniform_below(rng, el.len() as u32) as usize].clone()).collect()
}

/// Samples (m, m', s != 0) and checks s m + m' in U => m, m' in U. Premises are
/// enforced by drawing half of the pairs from U itself; every small triple is
/// also tried exhaustively first.
pub fn star_check<S: Semiring>(r: usize, gens: &[Vector<S>], bound: u64, samples: u64, seed: u64) -> StarReport {
    let el: Vec<S> = S::elements(bound);
    let nonzero: Vec<S> = el.iter().filter(|s| !s.is_zero()).cloned().collect();
    let inu = |v: &[S]| in_span(v, gens, bound * 4 + 4);
    let mut premises = 0;
    let mut try_one = |m: &Vector<S>, m2: &Vector<S>, s: &S| -> Option<String> {
        let lhs = vadd(&vact(s, m), m2);
        if inu(&lhs) {
            premises += 1;
            if !inu(m) || !inu(m2) {
                return Some(format!("s = {s:?}, m = {m:?}, m' = {m2:?}"));
            }
        }
        None
    };
    // exhaustive over the smallest vectors
    let small: Vec<Vector<S>> = product(&vec![el.iter().take(3).cloned().collect::<Vec<_>>(); r]);
    for m in &small {
        for m2 in &small {
            for s in nonzero.iter().take(2) {
                if let Some(c) = try_one(m, m2, s) {
                    return StarReport { samples, premises, counterexample: Some(c) };
                }
            }
        }
    }
    let mut rng = stream_rng(seed, 0);
    for i in 0..samples {
        let m = random_vec::<S>(&mut rng, r, bound);
        let mut m2 = random_vec::<S>(&mut rng, r, bound);
        let s = nonzero[uniform_below(&mut rng, nonzero.len() as u32) as usize].clone();
        if i % 2 == 0 && !gens.is_empty() {
            // complete to a premise: m' = u + s m with u a generator combination
            let g = &gens[uniform_below(&mut rng, gens.len() as u32) as usize];
            m2 = vadd(&vact(&s, &m), g);
            if let Some(c) = try_one(&vzero(r), &m2, &s) {
                return StarReport { samples, premises, counterexample: Some(c) };
            }
        }
        if let Some(c) = try_one(&m, &m2, &s) {
            return StarReport { samples, premises, counterexample: Some(c) };
        }
    }
    StarReport { samples, premises, counterexample: None }
}

/// Hypotheses: (*) for {0} in S, U1 in M1 and U2 in M2; then (*) is sampled for
/// the generated sub-semimodule of M1 (x) M2.
pub fn lemma_check<S: Semiring>(
    ctx: &Ctx,
    u1: &[Vector<S>],
    u2: &[Vector<S>],
    samples: u64,
    seed: u64,
) -> Result<StarReport> {
    for (name, r, gens) in [("{0} in S", 1, &vec![]), ("U1 in M1", ctx.r1, &u1.to_vec()), ("U2 in M2", ctx.r2, &u2.to_vec())] {
        let rep = star_check::<S>(r, gens, ctx.bound, samples, seed);
        if let Some(c) = rep.counterexample {
            return Err(MvError::HypothesisFailed(format!("{name}: {c}")));
        }
    }
    let gens = tensor_sub_gens(ctx, u1, u2);
    Ok(star_check::<S>(ctx.r1 * ctx.r2, &gens, ctx.bound, samples, seed.wrapping_add(1)))
}

/// Random element with 1..=3 terms of small entries.
pub fn random_elem<S: Semiring>(ctx: &Ctx, rng: &mut ChaCha20Rng) -> TensorElem<S> {
    let n = 1 + uniform_below(rng, 3) as usize;
    let el: Vec<S> = S::elements(ctx.bound).into_iter().filter(|s| !s.is_zero()).collect();
    let mut e = TensorElem::zero();
    for _ in 0..n {
        let c = el[uniform_below(rng, el.len().min(2) as u32) as usize].clone();
        e = e.add(&TensorElem::term(c, random_vec(rng, ctx.r1, ctx.bound), random_vec(rng, ctx.r2, ctx.bound)));
    }
    e
}

/// Random chain of `steps` one-step moves.
pub fn random_walk<S: Semiring>(ctx: &Ctx, a: &TensorElem<S>, steps: usize, rng: &mut ChaCha20Rng) -> TensorElem<S> {
    let mut x = a.clone();
    for _ in 0..steps {
        let nb = neighbors(ctx, &x);
        if nb.is_empty() {
            break;
        }
        x = nb[(rng.next_u64() % nb.len() as u64) as usize].clone();
    }
    x
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AgreeReport {
    pub pairs: u64,
    pub search_yes: u64,
    pub nf_equal: u64,
    pub disagreements: u64,
}

/// Normal form against bounded search on fuzzed pairs: half are random chains of
/// length <= steps (search must find them), half independent draws.
pub fn agreement<S: Semiring>(ctx: &Ctx, pairs: u64, steps: usize, seed: u64) -> AgreeReport {
    let mut rng = stream_rng(seed, 0);
    let mut rep = AgreeReport { pairs, ..Default::default() };
    for i in 0..pairs {
        let a = random_elem::<S>(ctx, &mut rng);
        let chained = i % 2 == 0;
        let b = if chained {
            let k = 1 + (rng.next_u32() as usize % steps);
            random_walk(ctx, &a, k, &mut rng)
        } else {
            random_elem::<S>(ctx, &mut rng)
        };
        let nf = equiv(ctx, &a, &b);
        let s = equiv_search(ctx, &a, &b, steps).is_yes();
        rep.nf_equal += nf as u64;
        rep.search_yes += s as u64;
        // search is sound; on chained pairs it must also be complete
        if (s && !nf) || (chained && !s) || (chained && !nf) {
            rep.disagreements += 1;
        }
    }
    rep
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx(r1: usize, r2: usize) -> Ctx {
        Ctx { r1, r2, bound: 3 }
    }

    #[test]
    fn laws() {
        assert!(semiring_laws::<u64>(4).is_ok());
        assert!(semiring_laws::<Capped<3>>(0).is_ok());
        assert!(semiring_laws::<Capped<1>>(0).is_ok());
    }

    #[test]
    fn generator_shapes() {
        let c = ctx(2, 2);
        let (m1, m1p, m2) = (vec![1u64, 0], vec![0u64, 1], vec![1u64, 1]);
        // s[m1, m2] ~ [s m1, m2]
        assert!(one_step_related(&c, &TensorElem::term(2, m1.clone(), m2.clone()), &TensorElem::pair(vec![2, 0], m2.clone())));
        let sum = TensorElem::pair(vadd(&m1, &m1p), m2.clone());
        let split = TensorElem::pair(m1.clone(), m2.clone()).add(&TensorElem::pair(m1p.clone(), m2.clone()));
        assert!(one_step_related(&c, &sum, &split));
        // no rule swaps the slots
        let c32 = Ctx { r1: 2, r2: 1, bound: 3 };
        let a = TensorElem::pair(vec![1u64, 2], vec![1]);
        let b = TensorElem::pair(vec![1u64], vec![1, 2]);
        assert!(!one_step_related(&c32, &a, &b));
    }

    #[test]
    fn normal_forms() {
        let c = ctx(1, 1);
        let a = TensorElem::pair(vec![2u64], vec![3]);
        let b = TensorElem::term(6, vec![1u64], vec![1]);
        assert!(equiv(&c, &a, &b));
        assert_eq!(normal_elem(&c, &a), TensorElem::pair(vec![6], vec![1]));
        assert!(equiv(&c, &TensorElem::term(0, vec![1u64], vec![1]), &TensorElem::zero()));
        assert!(TensorElem::term(0u64, vec![1], vec![1]).terms.is_empty());
        let sum = TensorElem::pair(vec![3u64], vec![1]);
        let split = TensorElem::pair(vec![1u64], vec![1]).add(&TensorElem::pair(vec![2], vec![1]));
        assert_eq!(equiv_search(&c, &sum, &split, 1), Search::Yes);
        assert_eq!(equiv_search(&c, &a, &b, 4), Search::Yes);
        assert_eq!(equiv_search(&c, &a, &TensorElem::pair(vec![5], vec![1]), 2), Search::NoWithinBound);
    }

    #[test]
    fn search_agrees_with_normal_form() {
        let rep = agreement::<u64>(&ctx(2, 1), 250, 2, 1);
        assert_eq!(rep.disagreements, 0, "{rep:?}");
        let rep = agreement::<Capped<2>>(&Ctx { r1: 1, r2: 2, bound: 2 }, 250, 2, 2);
        assert_eq!(rep.disagreements, 0, "{rep:?}");
    }

    #[test]
    fn addition_is_well_defined() {
        let c = ctx(1, 2);
        let mut rng = stream_rng(4, 0);
        for _ in 0..40 {
            let a1 = random_elem::<u64>(&c, &mut rng);
            let a2 = random_elem::<u64>(&c, &mut rng);
            let b1 = random_walk(&c, &a1, 1, &mut rng);
            let b2 = random_walk(&c, &a2, 1, &mut rng);
            assert!(equiv(&c, &a1.add(&a2), &b1.add(&b2)));
            assert!(equiv_search(&c, &a1.add(&a2), &b1.add(&b2), 2).is_yes());
        }
    }

    #[test]
    fn membership() {
        let c = ctx(2, 2);
        let u1 = vec![vec![0u64, 1]];
        let a = TensorElem::pair(vec![0u64, 2], vec![1, 1]);
        assert!(in_u(&c, &a, &u1, &[]));
        assert!(!in_u(&c, &TensorElem::pair(vec![1u64, 0], vec![1, 0]), &u1, &[]));
        // U1 = M1 gives everything
        let all = vec![vec![1u64, 0], vec![0, 1]];
        let mut rng = stream_rng(2, 0);
        for _ in 0..20 {
            assert!(in_u(&c, &random_elem::<u64>(&c, &mut rng), &all, &[]));
        }
    }

    #[test]
    fn lemma_instances() {
        let c = ctx(2, 2);
        let rep = lemma_check::<u64>(&c, &[vec![0, 1]], &[], 100, 7).unwrap();
        assert!(rep.holds(), "{rep:?}");
        assert!(rep.premises > 0);
        // even naturals: 1 + 1 in U, 1 not
        let one = Ctx { r1: 1, r2: 1, bound: 3 };
        assert!(matches!(lemma_check::<u64>(&one, &[vec![2]], &[], 100, 7), Err(MvError::HypothesisFailed(_))));
    }
}
