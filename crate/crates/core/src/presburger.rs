//! Piecewise Presburger functions Z^n -> CVal: evaluation, closed-form
//! geometric summation, limits, dominance checks and rational generating series.

use std::collections::BTreeMap;
use std::fmt;

use num_integer::Integer;
use serde_json::{json, Value};

use crate::error::{MvError, Result};
use crate::groth::{CVal, ClassAtom};
use crate::mot_ring::MotElem;

/// Affine integer form sum(a_i x_i) + c.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Lin {
    pub a: Vec<i64>,
    pub c: i64,
}

impl Lin {
    pub fn new(a: Vec<i64>, c: i64) -> Self {
        Lin { a, c }
    }
    pub fn constant(n: usize, c: i64) -> Self {
        Lin { a: vec![0; n], c }
    }
    pub fn var(n: usize, i: usize) -> Self {
        let mut a = vec![0; n];
        a[i] = 1;
        Lin { a, c: 0 }
    }
    pub fn eval(&self, x: &[i64]) -> i64 {
        self.a.iter().zip(x).map(|(a, x)| a * x).sum::<i64>() + self.c
    }
    fn only_var(&self, v: usize) -> bool {
        self.a.iter().enumerate().all(|(i, &a)| i == v || a == 0)
    }
    fn drop_var(&self, v: usize, val: i64) -> Lin {
        let mut a = self.a.clone();
        let c = self.c + a[v] * val;
        a.remove(v);
        Lin { a, c }
    }
}

/// One conjunct of a guard.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Conj {
    /// form >= 0
    Ge(Lin),
    /// form = res (mod m)
    Cong(Lin, i64, i64),
}

impl Conj {
    fn holds(&self, x: &[i64]) -> bool {
        match self {
            Conj::Ge(l) => l.eval(x) >= 0,
            Conj::Cong(l, m, r) => (l.eval(x) - r).rem_euclid(*m) == 0,
        }
    }
    fn lin(&self) -> &Lin {
        match self {
            Conj::Ge(l) | Conj::Cong(l, _, _) => l,
        }
    }
}

/// Conjunction of linear inequalities and congruences.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Guard {
    pub n: usize,
    pub conj: Vec<Conj>,
}

/// A guard restricted to one variable: lo <= v <= hi, v mod m in residues.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Interval {
    pub lo: Option<i64>,
    pub hi: Option<i64>,
    pub m: i64,
    pub res: Vec<i64>,
}

impl Interval {
    pub fn is_empty(&self) -> bool {
        self.res.is_empty() || matches!((self.lo, self.hi), (Some(a), Some(b)) if a > b)
    }
    pub fn contains(&self, v: i64) -> bool {
        self.lo.is_none_or(|l| v >= l)
            && self.hi.is_none_or(|h| v <= h)
            && self.res.contains(&v.rem_euclid(self.m))
    }
}

impl Guard {
    pub fn all(n: usize) -> Self {
        Guard { n, conj: vec![] }
    }
    pub fn with(mut self, c: Conj) -> Self {
        self.conj.push(c);
        self
    }
    /// One-variable guard lo <= r <= hi.
    pub fn range(lo: Option<i64>, hi: Option<i64>) -> Self {
        let mut g = Guard::all(1);
        if let Some(l) = lo {
            g.conj.push(Conj::Ge(Lin::new(vec![1], -l)));
        }
        if let Some(h) = hi {
            g.conj.push(Conj::Ge(Lin::new(vec![-1], h)));
        }
        g
    }
    /// One-variable guard lo <= r <= hi, r = res (mod m).
    pub fn range_mod(lo: Option<i64>, hi: Option<i64>, m: i64, res: i64) -> Self {
        let g = Guard::range(lo, hi);
        if m > 1 {
            g.with(Conj::Cong(Lin::new(vec![1], 0), m, res.rem_euclid(m)))
        } else {
            g
        }
    }
    pub fn holds(&self, x: &[i64]) -> bool {
        self.conj.iter().all(|c| c.holds(x))
    }
    pub fn and(&self, o: &Guard) -> Guard {
        let mut g = self.clone();
        g.conj.extend(o.conj.iter().cloned());
        g
    }
    /// Projection onto variable v when every conjunct mentioning v mentions only v.
    /// Conjuncts not mentioning v are returned separately.
    pub fn split_var(&self, v: usize) -> Option<(Interval, Guard)> {
        let mut lo: Option<i64> = None;
        let mut hi: Option<i64> = None;
        let mut congs = vec![];
        let mut rest = Guard::all(self.n);
        let mut empty = false;
        for c in &self.conj {
            let l = c.lin();
            if l.a[v] == 0 {
                rest.conj.push(c.clone());
                continue;
            }
            if !l.only_var(v) {
                return None;
            }
            let a = l.a[v];
            match c {
                Conj::Ge(_) => {
                    if a > 0 {
                        let b = Integer::div_ceil(&(-l.c), &a);
                        lo = Some(lo.map_or(b, |x| x.max(b)));
                    } else {
                        let b = Integer::div_floor(&l.c, &(-a));
                        hi = Some(hi.map_or(b, |x| x.min(b)));
                    }
                }
                Conj::Cong(_, m, r) => congs.push((a, l.c, *m, *r)),
            }
        }
        let m = congs.iter().fold(1i64, |acc, c| acc.lcm(&c.2));
        let res: Vec<i64> = (0..m)
            .filter(|&x| congs.iter().all(|&(a, c, mm, r)| (a * x + c - r).rem_euclid(mm) == 0))
            .collect();
        if res.is_empty() {
            empty = true;
        }
        let iv = Interval { lo, hi, m, res: if empty { vec![] } else { res } };
        Some((iv, rest))
    }
    /// Substitute x_v = val and drop the variable.
    pub fn fix_var(&self, v: usize, val: i64) -> Guard {
        let mut g = Guard::all(self.n - 1);
        for c in &self.conj {
            match c {
                Conj::Ge(l) => g.conj.push(Conj::Ge(l.drop_var(v, val))),
                Conj::Cong(l, m, r) => g.conj.push(Conj::Cong(l.drop_var(v, val), *m, *r)),
            }
        }
        g.simplify()
    }
    fn simplify(mut self) -> Guard {
        let mut out = vec![];
        for c in self.conj.drain(..) {
            let l = c.lin();
            if l.a.iter().all(|&a| a == 0) {
                if c.holds(&vec![0; l.a.len()]) {
                    continue;
                }
                // unsatisfiable constant conjunct
                out.clear();
                out.push(Conj::Ge(Lin::constant(self.n, -1)));
                return Guard { n: self.n, conj: out };
            }
            out.push(c);
        }
        Guard { n: self.n, conj: out }
    }
    fn is_const_false(&self) -> bool {
        self.conj.iter().any(|c| c.lin().a.iter().all(|&a| a == 0) && !c.holds(&vec![0; self.n]))
    }
    /// Remove variable v from guards that do not mention it.
    fn remove_var(&self, v: usize) -> Guard {
        Guard {
            n: self.n - 1,
            conj: self
                .conj
                .iter()
                .map(|c| match c {
                    Conj::Ge(l) => Conj::Ge(l.drop_var(v, 0)),
                    Conj::Cong(l, m, r) => Conj::Cong(l.drop_var(v, 0), *m, *r),
                })
                .collect(),
        }
    }
    fn to_json(&self) -> Value {
        Value::Array(
            self.conj
                .iter()
                .map(|c| match c {
                    Conj::Ge(l) => json!({"ge": [l.a, l.c]}),
                    Conj::Cong(l, m, r) => json!({"cong": [l.a, l.c], "mod": m, "res": r}),
                })
                .collect(),
        )
    }
}

/// Integer polynomial in n variables.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IPoly {
    pub n: usize,
    pub terms: BTreeMap<Vec<u32>, i64>,
}

impl IPoly {
    pub fn constant(n: usize, c: i64) -> Self {
        let mut terms = BTreeMap::new();
        if c != 0 {
            terms.insert(vec![0; n], c);
        }
        IPoly { n, terms }
    }
    pub fn one(n: usize) -> Self {
        Self::constant(n, 1)
    }
    pub fn var(n: usize, i: usize) -> Self {
        let mut e = vec![0; n];
        e[i] = 1;
        IPoly { n, terms: [(e, 1)].into_iter().collect() }
    }
    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }
    pub fn eval(&self, x: &[i64]) -> i64 {
        self.terms
            .iter()
            .map(|(e, c)| c * e.iter().zip(x).map(|(&k, &v)| v.pow(k)).product::<i64>())
            .sum()
    }
    fn add_term(&mut self, e: Vec<u32>, c: i64) {
        if c == 0 {
            return;
        }
        let ent = self.terms.entry(e.clone()).or_insert(0);
        *ent += c;
        if *ent == 0 {
            self.terms.remove(&e);
        }
    }
    pub fn add(&self, o: &IPoly) -> IPoly {
        let mut r = self.clone();
        for (e, c) in &o.terms {
            r.add_term(e.clone(), *c);
        }
        r
    }
    pub fn scale(&self, k: i64) -> IPoly {
        let mut r = IPoly::constant(self.n, 0);
        for (e, c) in &self.terms {
            r.add_term(e.clone(), c * k);
        }
        r
    }
    pub fn mul(&self, o: &IPoly) -> IPoly {
        let mut r = IPoly::constant(self.n, 0);
        for (e1, c1) in &self.terms {
            for (e2, c2) in &o.terms {
                let e: Vec<u32> = e1.iter().zip(e2).map(|(a, b)| a + b).collect();
                r.add_term(e, c1 * c2);
            }
        }
        r
    }
    /// Degree in variable v.
    pub fn deg_in(&self, v: usize) -> u32 {
        self.terms.keys().map(|e| e[v]).max().unwrap_or(0)
    }
    pub fn is_const(&self) -> bool {
        self.terms.keys().all(|e| e.iter().all(|&k| k == 0))
    }
    pub fn const_value(&self) -> i64 {
        self.terms.get(&vec![0; self.n]).copied().unwrap_or(0)
    }
    /// Substitute x_v = val and drop v.
    pub fn fix_var(&self, v: usize, val: i64) -> IPoly {
        let mut r = IPoly::constant(self.n - 1, 0);
        for (e, c) in &self.terms {
            let mut e2 = e.clone();
            let k = e2.remove(v);
            r.add_term(e2, c * val.pow(k));
        }
        r
    }
    /// Substitute x_v = a + b*x_v.
    pub fn affine_subst(&self, v: usize, a: i64, b: i64) -> IPoly {
        let lin = IPoly::constant(self.n, a).add(&IPoly::var(self.n, v).scale(b));
        let mut r = IPoly::constant(self.n, 0);
        for (e, c) in &self.terms {
            let mut e2 = e.clone();
            let k = e2[v];
            e2[v] = 0;
            let mut m = IPoly { n: self.n, terms: [(e2, *c)].into_iter().collect() };
            for _ in 0..k {
                m = m.mul(&lin);
            }
            r = r.add(&m);
        }
        r
    }
}

/// Exponent (sum(a_i x_i) + c) / den, integral wherever the piece guard holds.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExpForm {
    pub a: Vec<i64>,
    pub c: i64,
    pub den: i64,
}

impl ExpForm {
    pub fn constant(n: usize, c: i64) -> Self {
        ExpForm { a: vec![0; n], c, den: 1 }
    }
    pub fn linear(a: Vec<i64>, c: i64) -> Self {
        ExpForm { a, c, den: 1 }
    }
    pub fn eval(&self, x: &[i64]) -> i64 {
        let v = self.a.iter().zip(x).map(|(a, x)| a * x).sum::<i64>() + self.c;
        debug_assert!(v % self.den == 0, "non-integral exponent");
        v.div_euclid(self.den)
    }
}

/// atom * coeff * poly(x) * L^{exp(x)} where guard(x).
#[derive(Clone, Debug)]
pub struct Piece {
    pub guard: Guard,
    pub atom: ClassAtom,
    pub coeff: MotElem,
    pub poly: IPoly,
    pub exp: ExpForm,
}

impl Piece {
    pub fn value(&self, x: &[i64]) -> CVal {
        let p = self.poly.eval(x);
        if p == 0 {
            return CVal::zero();
        }
        CVal::term(
            self.atom.clone(),
            self.coeff.mul(&MotElem::int(p)).mul_l_pow(self.exp.eval(x)),
        )
    }
}

/// Finite sum of guarded pieces.
#[derive(Clone, Debug)]
pub struct MotFun {
    pub n: usize,
    pub pieces: Vec<Piece>,
}

/// Three-valued answer of the incomplete dominance checks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Tri {
    True,
    False,
    Unknown,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Limit {
    Value(CVal),
    NoLimit,
}

impl MotFun {
    pub fn zero(n: usize) -> Self {
        MotFun { n, pieces: vec![] }
    }
    /// c * L^{slope*r + intercept} on the one-variable guard g.
    pub fn geometric(g: Guard, c: MotElem, slope: i64, intercept: i64) -> Self {
        Self::piece(g, ClassAtom::point(), c, IPoly::one(1), ExpForm::linear(vec![slope], intercept))
    }
    /// Constant c on the guard.
    pub fn constant_on(g: Guard, c: CVal) -> Self {
        let n = g.n;
        let mut f = MotFun::zero(n);
        for (a, m) in c.terms() {
            f.pieces.push(Piece {
                guard: g.clone(),
                atom: a.clone(),
                coeff: m.clone(),
                poly: IPoly::one(n),
                exp: ExpForm::constant(n, 0),
            });
        }
        f
    }
    pub fn piece(g: Guard, atom: ClassAtom, c: MotElem, poly: IPoly, exp: ExpForm) -> Self {
        MotFun { n: g.n, pieces: vec![Piece { guard: g, atom, coeff: c, poly, exp }] }
    }
    pub fn eval(&self, x: &[i64]) -> CVal {
        let mut s = CVal::zero();
        for p in &self.pieces {
            if p.guard.holds(x) {
                s = s.add(&p.value(x));
            }
        }
        s
    }
    pub fn eval1(&self, r: i64) -> CVal {
        self.eval(&[r])
    }
    pub fn add(&self, o: &MotFun) -> MotFun {
        let mut f = self.clone();
        f.pieces.extend(o.pieces.iter().cloned());
        f.compact()
    }
    pub fn neg(&self) -> MotFun {
        let mut f = self.clone();
        for p in &mut f.pieces {
            p.coeff = p.coeff.neg();
        }
        f
    }
    pub fn sub(&self, o: &MotFun) -> MotFun {
        self.add(&o.neg())
    }
    pub fn scale(&self, m: &MotElem) -> MotFun {
        let mut f = self.clone();
        for p in &mut f.pieces {
            p.coeff = p.coeff.mul(m);
        }
        f.pieces.retain(|p| !p.coeff.is_zero());
        f
    }
    /// Multiply by L^{form(x)}.
    pub fn mul_l_lin(&self, a: &[i64], c: i64) -> MotFun {
        let mut f = self.clone();
        for p in &mut f.pieces {
            for (i, ai) in a.iter().enumerate() {
                p.exp.a[i] += ai * p.exp.den;
            }
            p.exp.c += c * p.exp.den;
        }
        f
    }
    /// Multiply by the class of an atom (point atoms only on the other side).
    pub fn mul_atom(&self, b: &ClassAtom) -> Result<MotFun> {
        let mut f = MotFun::zero(self.n);
        for p in &self.pieces {
            let v = CVal::term(p.atom.clone(), p.coeff.clone()).mul_atom(b)?;
            for (a, m) in v.terms() {
                let mut q = p.clone();
                q.atom = a.clone();
                q.coeff = m.clone();
                f.pieces.push(q);
            }
        }
        Ok(f)
    }
    /// Restrict every piece to an extra guard.
    pub fn restrict(&self, g: &Guard) -> MotFun {
        let mut f = self.clone();
        for p in &mut f.pieces {
            p.guard = p.guard.and(g);
        }
        f
    }
    /// Merge pieces that differ only in their coefficient.
    pub fn compact(mut self) -> MotFun {
        let mut out: Vec<Piece> = vec![];
        for p in self.pieces.drain(..) {
            if p.coeff.is_zero() || p.poly.is_zero() || p.guard.is_const_false() {
                continue;
            }
            if let Some(q) = out.iter_mut().find(|q| {
                q.guard == p.guard && q.atom == p.atom && q.poly == p.poly && q.exp == p.exp
            }) {
                q.coeff = q.coeff.add(&p.coeff);
            } else {
                out.push(p);
            }
        }
        out.retain(|p| !p.coeff.is_zero());
        MotFun { n: self.n, pieces: out }
    }

    /// Sum over variable v restricted to `range` (a guard on v alone, in the full variable space).
    pub fn sum_over(&self, v: usize, range: &Guard) -> Result<MotFun> {
        let mut out = MotFun::zero(self.n - 1);
        for p in &self.pieces {
            let g = p.guard.and(range);
            let (iv, rest) = g.split_var(v).ok_or_else(|| {
                MvError::Unsupported("summation range couples the summed variable to others".into())
            })?;
            if iv.is_empty() {
                continue;
            }
            let rest = rest.remove_var(v);
            match (iv.lo, iv.hi) {
                (Some(lo), Some(hi)) => {
                    for val in lo..=hi {
                        if !iv.contains(val) {
                            continue;
                        }
                        let poly = p.poly.fix_var(v, val);
                        if poly.is_zero() {
                            continue;
                        }
                        let mut exp = p.exp.clone();
                        exp.c += exp.a[v] * val;
                        exp.a.remove(v);
                        out.pieces.push(Piece {
                            guard: rest.clone(),
                            atom: p.atom.clone(),
                            coeff: p.coeff.clone(),
                            poly,
                            exp,
                        });
                    }
                }
                (Some(lo), None) => {
                    for &res in &iv.res {
                        let v0 = lo + (res - lo).rem_euclid(iv.m);
                        out.pieces.extend(geometric_tail(p, v, v0, iv.m, &rest)?);
                    }
                }
                (None, Some(hi)) => {
                    // reflect v -> -v
                    let mut q = p.clone();
                    q.exp.a[v] = -q.exp.a[v];
                    q.poly = q.poly.affine_subst(v, 0, -1);
                    for &res in &iv.res {
                        let w0 = -hi + (-res + hi).rem_euclid(iv.m);
                        out.pieces.extend(geometric_tail(&q, v, w0, iv.m, &rest)?);
                    }
                }
                (None, None) => {
                    return Err(MvError::Divergent("sum over all of Z".into()));
                }
            }
        }
        Ok(out.compact())
    }

    /// Breakpoints and modulus of a one-variable function.
    fn layout(&self) -> Result<(Vec<(Interval, &Piece)>, i64, i64, i64)> {
        if self.n != 1 {
            return Err(MvError::Unsupported("expected a function of one variable".into()));
        }
        let mut ivs = vec![];
        let mut m = 1i64;
        let mut lo_all = i64::MAX;
        let mut hi_all = i64::MIN;
        for p in &self.pieces {
            let (iv, rest) = p.guard.split_var(0).expect("one variable");
            if rest.is_const_false() || iv.is_empty() {
                continue;
            }
            m = m.lcm(&iv.m).lcm(&p.exp.den);
            if let Some(l) = iv.lo {
                lo_all = lo_all.min(l);
                hi_all = hi_all.max(l);
            }
            if let Some(h) = iv.hi {
                hi_all = hi_all.max(h);
                lo_all = lo_all.min(h);
            }
            ivs.push((iv, p));
        }
        if lo_all == i64::MAX {
            lo_all = 0;
            hi_all = 0;
        }
        Ok((ivs, m, lo_all, hi_all))
    }

    /// Tail description per residue class: for r = rho + M j (j >= 0, r beyond every breakpoint),
    /// groups keyed by (atom, slope per step) with polynomial-in-j MotElem coefficients.
    fn tail(&self) -> Result<(i64, i64, Vec<TailClass>)> {
        let (ivs, m, _, hi_all) = self.layout()?;
        let start = hi_all + 1;
        let mut classes = vec![];
        for k in 0..m {
            let rho = start + k;
            let mut groups: BTreeMap<(ClassAtom, i64), Vec<MotElem>> = BTreeMap::new();
            for (iv, p) in &ivs {
                if iv.hi.is_some() || !iv.contains(rho) {
                    continue;
                }
                // value at r = rho + M j : coeff * P(rho + M j) * L^{e(rho) + s M j}
                let step = p.exp.a[0] * m / p.exp.den;
                let base = p.exp.eval(&[rho]);
                let pj = p.poly.affine_subst(0, rho, m);
                let d = pj.deg_in(0) as usize;
                let ent = groups.entry((p.atom.clone(), step)).or_default();
                if ent.len() < d + 1 {
                    ent.resize(d + 1, MotElem::zero());
                }
                for (e, c) in &pj.terms {
                    let i = e[0] as usize;
                    ent[i] = ent[i].add(&p.coeff.mul(&MotElem::int(*c)).mul_l_pow(base));
                }
            }
            let groups = groups
                .into_iter()
                .map(|(k, mut v)| {
                    while v.last().is_some_and(|x| x.is_zero()) {
                        v.pop();
                    }
                    (k, v)
                })
                .filter(|(_, v)| !v.is_empty())
                .collect();
            classes.push(TailClass { rho, groups });
        }
        Ok((start, m, classes))
    }

    /// Limit as r -> +infinity in the degree topology.
    pub fn limit(&self) -> Result<Limit> {
        let (_, _, classes) = self.tail()?;
        let mut val: Option<CVal> = None;
        for cl in &classes {
            let mut v = CVal::zero();
            for ((atom, step), coeffs) in &cl.groups {
                if *step < 0 {
                    continue;
                }
                if *step > 0 || coeffs.len() > 1 {
                    return Ok(Limit::NoLimit);
                }
                v = v.add(&CVal::term(atom.clone(), coeffs[0].clone()));
            }
            match &val {
                None => val = Some(v),
                Some(w) if *w == v => {}
                Some(_) => return Ok(Limit::NoLimit),
            }
        }
        Ok(Limit::Value(val.unwrap_or_default()))
    }

    /// g - f(r) nonnegative for every r (one variable).
    pub fn is_bounded_by(&self, g: &CVal) -> Result<Tri> {
        let h = MotFun::constant_on(Guard::all(1), g.clone()).sub(self);
        h.is_nonneg_everywhere(None)
    }

    /// f(r+1) - f(r) nonnegative for every r >= lo.
    pub fn is_increasing(&self, lo: Option<i64>) -> Result<Tri> {
        let shifted = self.shift_var(1);
        shifted.sub(self).is_nonneg_everywhere(lo)
    }

    /// r -> f(r + k)
    pub fn shift_var(&self, k: i64) -> MotFun {
        let mut f = self.clone();
        for p in &mut f.pieces {
            p.guard = Guard {
                n: 1,
                conj: p
                    .guard
                    .conj
                    .iter()
                    .map(|c| match c {
                        Conj::Ge(l) => Conj::Ge(Lin::new(l.a.clone(), l.c + l.a[0] * k)),
                        Conj::Cong(l, m, r) => Conj::Cong(Lin::new(l.a.clone(), l.c + l.a[0] * k), *m, *r),
                    })
                    .collect(),
            };
            p.poly = p.poly.affine_subst(0, k, 1);
            p.exp.c += p.exp.a[0] * k;
        }
        f
    }

    /// Decide h(r) in C+ for all integers r >= lo (all r when lo is None).
    pub fn is_nonneg_everywhere(&self, lo: Option<i64>) -> Result<Tri> {
        let (ivs, _, lo_all, hi_all) = self.layout()?;
        // below every lower bound only pieces unbounded below contribute
        let unbounded_below = ivs.iter().any(|(iv, _)| iv.lo.is_none() && !iv.res.is_empty());
        let start = match lo {
            Some(l) => l,
            None => {
                let start = lo_all.min(hi_all);
                if unbounded_below {
                    // r < start: only pieces unbounded below are active; reflect r -> -r
                    match self.reflect().is_nonneg_everywhere(Some(1 - start))? {
                        Tri::True => {}
                        t => return Ok(t),
                    }
                }
                start
            }
        };
        let (tail_start, m, classes) = self.tail()?;
        for r in start..tail_start.max(start) {
            if !self.eval1(r).is_nonneg() {
                return Ok(Tri::False);
            }
        }
        let mut verdict = Tri::True;
        for cl in &classes {
            let j0 = if cl.rho >= start { 0 } else { Integer::div_ceil(&(start - cl.rho), &m) };
            match tail_nonneg(cl, j0) {
                Tri::True => {}
                Tri::False => return Ok(Tri::False),
                Tri::Unknown => {
                    // search for a counterexample
                    for j in j0..j0 + 256 {
                        if !self.eval1(cl.rho + m * j).is_nonneg() {
                            return Ok(Tri::False);
                        }
                    }
                    verdict = Tri::Unknown;
                }
            }
        }
        Ok(verdict)
    }

    /// r -> f(-r) for a one-variable function.
    pub fn reflect(&self) -> MotFun {
        let mut f = self.clone();
        for p in &mut f.pieces {
            for c in &mut p.guard.conj {
                match c {
                    Conj::Ge(l) | Conj::Cong(l, _, _) => l.a[0] = -l.a[0],
                }
            }
            p.poly = p.poly.affine_subst(0, 0, -1);
            p.exp.a[0] = -p.exp.a[0];
        }
        f
    }

    /// sum_{r >= 0} f(r) T^r for a one-variable function.
    pub fn generating_series(&self) -> Result<RationalSeries> {
        let (ivs, _, _, _) = self.layout()?;
        let mut s = RationalSeries::zero();
        for (iv, p) in ivs {
            if p.atom != ClassAtom::point() {
                return Err(MvError::Unsupported("generating series with etale coefficients".into()));
            }
            let lo = iv.lo.unwrap_or(0).max(0);
            match iv.hi {
                Some(hi) => {
                    for r in lo..=hi {
                        if iv.contains(r) {
                            let c = p.value(&[r]).as_scalar().expect("point atom");
                            s = s.add(&RationalSeries::monomial(r as u32, c));
                        }
                    }
                }
                None => {
                    if !p.poly.is_const() {
                        return Err(MvError::Unsupported(
                            "generating series of a non-geometric piece".into(),
                        ));
                    }
                    let c0 = p.coeff.mul(&MotElem::int(p.poly.const_value()));
                    let mm = iv.m.lcm(&p.exp.den);
                    for k in 0..mm {
                        let r0 = lo + k;
                        if !iv.contains(r0) {
                            continue;
                        }
                        let step = p.exp.a[0] * mm / p.exp.den;
                        let num = c0.mul_l_pow(p.exp.eval(&[r0]));
                        s = s.add(&RationalSeries {
                            num: [(r0 as u32, num)].into_iter().collect(),
                            den: vec![(step, mm as u32)],
                        });
                    }
                }
            }
        }
        Ok(s)
    }

    pub fn to_json(&self) -> Value {
        Value::Array(
            self.pieces
                .iter()
                .map(|p| {
                    json!({
                        "guard": p.guard.to_json(),
                        "atom": p.atom.to_json(),
                        "coeff": p.coeff.to_json(),
                        "poly": p.poly.terms.iter().map(|(e, c)| json!([e, c])).collect::<Vec<_>>(),
                        "exp": {"a": p.exp.a, "c": p.exp.c, "den": p.exp.den},
                    })
                })
                .collect(),
        )
    }
}

struct TailClass {
    rho: i64,
    groups: BTreeMap<(ClassAtom, i64), Vec<MotElem>>,
}

/// Sufficient conditions for the tail of one residue class to be nonnegative for j >= j0.
fn tail_nonneg(cl: &TailClass, j0: i64) -> Tri {
    let atoms: Vec<ClassAtom> = {
        let mut a: Vec<ClassAtom> = cl.groups.keys().map(|k| k.0.clone()).collect();
        a.dedup();
        a
    };
    let mut verdict = Tri::True;
    for atom in atoms {
        let gs: Vec<(i64, &Vec<MotElem>)> =
            cl.groups.iter().filter(|((a, _), _)| *a == atom).map(|((_, s), c)| (*s, c)).collect();
        // every term nonnegative: coefficients of the binomial-free monomials j^i
        if gs.iter().all(|(_, cs)| cs.iter().all(|c| c.is_nonneg())) {
            continue;
        }
        // monotone bound: negative parts must be geometric and decaying, positive parts constant
        let mut bound = MotElem::zero();
        let mut ok = true;
        for (s, cs) in &gs {
            for (i, c) in cs.iter().enumerate() {
                if c.is_nonneg() {
                    if *s == 0 && i == 0 {
                        bound = bound.add(c);
                    }
                    continue;
                }
                if *s < 0 && i == 0 {
                    bound = bound.add(&c.mul_l_pow(s * j0));
                } else {
                    ok = false;
                }
            }
        }
        if ok && bound.is_nonneg() {
            continue;
        }
        // the dominant term for large j fixes the sign at every L when it is the only growing one
        let top = gs.iter().filter(|(_, cs)| !cs.is_empty()).max_by_key(|(s, cs)| (*s, cs.len()));
        if let Some((s, cs)) = top {
            let lead = cs.last().expect("nonempty");
            if *s >= 0 && lead.neg().is_nonneg() && !lead.is_zero() {
                // eventually negative at every L > 1 where lead < 0
                return Tri::False;
            }
        }
        verdict = Tri::Unknown;
    }
    verdict
}

/// Tail sum over v = v0 + M j (j >= 0) of one piece.
fn geometric_tail(p: &Piece, v: usize, v0: i64, m: i64, rest: &Guard) -> Result<Vec<Piece>> {
    let b_num = p.exp.a[v] * m;
    if b_num % p.exp.den != 0 {
        return Err(MvError::Unsupported("non-integral step exponent".into()));
    }
    let b = b_num / p.exp.den;
    if b >= 0 {
        return Err(MvError::Divergent(format!(
            "exponent coefficient {} on an infinite range",
            p.exp.a[v]
        )));
    }
    // P(v0 + M j) in the binomial basis of j
    let pj = p.poly.affine_subst(v, v0, m);
    let d = pj.deg_in(v);
    let vals: Vec<IPoly> = (0..=d as i64).map(|l| pj.fix_var(v, l)).collect();
    let mut out = vec![];
    let mut exp = p.exp.clone();
    exp.c += exp.a[v] * v0;
    exp.a.remove(v);
    // 1/(1 - L^b) = -L^{-b} / (1 - L^{-b})
    let inv = MotElem::mono(-1, -b).mul(&MotElem::inv_one_minus_l((-b) as u32));
    for i in 0..=d as usize {
        // forward difference Delta^i at 0
        let mut ci = IPoly::constant(rest.n, 0);
        for (l, val) in vals.iter().enumerate().take(i + 1) {
            let sign = if (i - l) % 2 == 0 { 1 } else { -1 };
            ci = ci.add(&val.scale(sign * binom(i as i64, l as i64)));
        }
        if ci.is_zero() {
            continue;
        }
        // sum_j C(j,i) z^j = z^i / (1-z)^{i+1}
        let coeff = p.coeff.mul(&inv.pow(i as u32 + 1)).mul_l_pow(b * i as i64);
        out.push(Piece { guard: rest.clone(), atom: p.atom.clone(), coeff, poly: ci, exp: exp.clone() });
    }
    Ok(out)
}

fn binom(n: i64, k: i64) -> i64 {
    let mut r = 1i64;
    for i in 0..k {
        r = r * (n - i) / (i + 1);
    }
    r
}

/// num(T) / prod (1 - L^a T^b).
#[derive(Clone, Debug)]
pub struct RationalSeries {
    pub num: BTreeMap<u32, MotElem>,
    pub den: Vec<(i64, u32)>,
}

type TPoly = BTreeMap<u32, MotElem>;

fn tpoly_mul(a: &TPoly, b: &TPoly) -> TPoly {
    let mut r: TPoly = BTreeMap::new();
    for (i, x) in a {
        for (j, y) in b {
            let e = r.entry(i + j).or_insert_with(MotElem::zero);
            *e = e.add(&x.mul(y));
        }
    }
    r.retain(|_, v| !v.is_zero());
    r
}

fn tpoly_add(a: &TPoly, b: &TPoly) -> TPoly {
    let mut r = a.clone();
    for (i, y) in b {
        let e = r.entry(*i).or_insert_with(MotElem::zero);
        *e = e.add(y);
    }
    r.retain(|_, v| !v.is_zero());
    r
}

fn den_factor(a: i64, b: u32) -> TPoly {
    let mut t: TPoly = BTreeMap::new();
    t.insert(0, MotElem::one());
    t.insert(b, MotElem::mono(-1, a));
    t
}

fn multiset_minus(a: &[(i64, u32)], b: &[(i64, u32)]) -> Vec<(i64, u32)> {
    let mut rest = b.to_vec();
    let mut out = vec![];
    for x in a {
        if let Some(p) = rest.iter().position(|y| y == x) {
            rest.remove(p);
        } else {
            out.push(*x);
        }
    }
    out
}

impl RationalSeries {
    pub fn zero() -> Self {
        RationalSeries { num: BTreeMap::new(), den: vec![] }
    }
    pub fn monomial(e: u32, c: MotElem) -> Self {
        let mut num = BTreeMap::new();
        if !c.is_zero() {
            num.insert(e, c);
        }
        RationalSeries { num, den: vec![] }
    }
    /// 1 / (1 - L^a T^b)
    pub fn geometric(a: i64, b: u32) -> Self {
        RationalSeries { num: [(0, MotElem::one())].into_iter().collect(), den: vec![(a, b)] }
    }
    fn den_poly(d: &[(i64, u32)]) -> TPoly {
        d.iter().fold([(0u32, MotElem::one())].into_iter().collect(), |acc, &(a, b)| {
            tpoly_mul(&acc, &den_factor(a, b))
        })
    }
    pub fn add(&self, o: &RationalSeries) -> RationalSeries {
        if o.num.is_empty() {
            return self.clone();
        }
        if self.num.is_empty() {
            return o.clone();
        }
        let only_o = multiset_minus(&o.den, &self.den);
        let only_s = multiset_minus(&self.den, &o.den);
        let mut den = self.den.clone();
        den.extend(&only_o);
        den.sort();
        let num = tpoly_add(
            &tpoly_mul(&self.num, &Self::den_poly(&only_o)),
            &tpoly_mul(&o.num, &Self::den_poly(&only_s)),
        );
        RationalSeries { num, den }
    }
    /// Coefficient of T^r.
    pub fn coefficient(&self, r: u32) -> MotElem {
        // expand each 1/(1 - L^a T^b) up to T^r
        let mut ser: TPoly = self.num.iter().filter(|(e, _)| **e <= r).map(|(e, c)| (*e, c.clone())).collect();
        for &(a, b) in &self.den {
            let mut g: TPoly = BTreeMap::new();
            let mut k = 0u32;
            while k * b <= r {
                g.insert(k * b, MotElem::l_pow(a * k as i64));
                k += 1;
            }
            ser = tpoly_mul(&ser, &g);
            ser.retain(|e, _| *e <= r);
        }
        ser.get(&r).cloned().unwrap_or_else(MotElem::zero)
    }
    /// Cross-multiplied equality.
    pub fn equals(&self, o: &RationalSeries) -> bool {
        tpoly_mul(&self.num, &Self::den_poly(&o.den)) == tpoly_mul(&o.num, &Self::den_poly(&self.den))
    }
    pub fn to_json(&self) -> Value {
        json!({
            "num": self.num.iter().map(|(e, c)| json!([e, c.to_json()])).collect::<Vec<_>>(),
            "den": self.den.iter().map(|(a, b)| json!([a, b])).collect::<Vec<_>>(),
        })
    }
}

impl PartialEq for RationalSeries {
    fn eq(&self, o: &Self) -> bool {
        self.equals(o)
    }
}

impl fmt::Display for RationalSeries {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        write!(f, "(")?;
        for (e, c) in &self.num {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            match e {
                0 => write!(f, "{c}")?,
                1 => write!(f, "({c})*T")?,
                _ => write!(f, "({c})*T^{e}")?,
            }
        }
        if first {
            write!(f, "0")?;
        }
        write!(f, ")")?;
        for (a, b) in &self.den {
            let t = if *b == 1 { "T".to_string() } else { format!("T^{b}") };
            write!(f, " / (1 - L^{a}*{t})")?;
        }
        Ok(())
    }
}

impl fmt::Display for MotFun {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.pieces.is_empty() {
            return write!(f, "0");
        }
        for (i, p) in self.pieces.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            write!(f, "[{:?}] {} * ({})", p.guard.conj, p.atom, p.coeff)?;
            if !p.poly.is_const() || p.poly.const_value() != 1 {
                write!(f, " * {:?}", p.poly.terms)?;
            }
            write!(f, " * L^(({:?}.x + {})/{})", p.exp.a, p.exp.c, p.exp.den)?;
        }
        Ok(())
    }
}

/// Exact sum of a[j] over a finite list; helper for tests and callers.
pub fn cval_sum(it: impl IntoIterator<Item = CVal>) -> CVal {
    it.into_iter().fold(CVal::zero(), |a, b| a.add(&b))
}

impl Default for RationalSeries {
    fn default() -> Self {
        Self::zero()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ge0() -> Guard {
        Guard::range(Some(0), None)
    }
    fn l_minus_r() -> MotFun {
        MotFun::geometric(ge0(), MotElem::one(), -1, 0)
    }

    #[test]
    fn eval_examples() {
        assert_eq!(l_minus_r().eval1(3), CVal::scalar(MotElem::l_pow(-3)));
        let par = MotFun::geometric(Guard::range_mod(None, None, 2, 0), MotElem::one(), 0, 0)
            .add(&MotFun::geometric(Guard::range_mod(None, None, 2, 1), MotElem::l_pow(1), 0, 0));
        assert_eq!(par.eval1(5), CVal::scalar(MotElem::l_pow(1)));
        let rl = MotFun::piece(ge0(), ClassAtom::point(), MotElem::one(), IPoly::var(1, 0), ExpForm::linear(vec![-1], 0));
        assert_eq!(rl.eval1(2), CVal::scalar(MotElem::mono(2, -2)));
    }

    #[test]
    fn sums() {
        let f = MotFun::geometric(Guard::all(1), MotElem::one(), -2, 0);
        let s = f.sum_over(0, &ge0()).unwrap();
        let v = s.eval(&[]).as_scalar().unwrap();
        // L^2/(L^2 - 1)
        let target = MotElem::mono(-1, 2).mul(&MotElem::inv_one_minus_l(2));
        assert_eq!(v, target);
        // telescoping cross-check
        let partial: MotElem = (0..6).map(|r| MotElem::l_pow(-2 * r)).fold(MotElem::zero(), |a, b| a.add(&b));
        let diff = v.sub(&partial).mul(&MotElem::one().sub(&MotElem::l_pow(-2)));
        assert_eq!(diff, MotElem::l_pow(-12));
        let s = l_minus_r().sum_over(0, &Guard::range(Some(0), Some(2))).unwrap();
        assert_eq!(
            s.eval(&[]).as_scalar().unwrap(),
            MotElem::one().add(&MotElem::l_pow(-1)).add(&MotElem::l_pow(-2))
        );
        let g = MotFun::geometric(Guard::all(1), MotElem::one(), 1, 0);
        assert!(matches!(g.sum_over(0, &ge0()), Err(MvError::Divergent(_))));
    }

    #[test]
    fn polynomial_sum() {
        // sum_{r>=0} r L^{-r} = L^{-1}/(1-L^{-1})^2
        let f = MotFun::piece(Guard::all(1), ClassAtom::point(), MotElem::one(), IPoly::var(1, 0), ExpForm::linear(vec![-1], 0));
        let v = f.sum_over(0, &ge0()).unwrap().eval(&[]).as_scalar().unwrap();
        let q = num_rational::BigRational::from_integer(3.into());
        assert_eq!(v.eval_at(&q).unwrap(), num_rational::BigRational::new(3.into(), 4.into()));
    }

    #[test]
    fn limits() {
        assert_eq!(l_minus_r().limit().unwrap(), Limit::Value(CVal::zero()));
        let one = MotFun::constant_on(ge0(), CVal::one());
        let rl = MotFun::piece(ge0(), ClassAtom::point(), MotElem::one(), IPoly::var(1, 0), ExpForm::linear(vec![-1], 0));
        assert_eq!(one.add(&rl).limit().unwrap(), Limit::Value(CVal::one()));
        let par = MotFun::geometric(Guard::range_mod(None, None, 2, 0), MotElem::one(), 0, 0)
            .add(&MotFun::geometric(Guard::range_mod(None, None, 2, 1), MotElem::l_pow(1), 0, 0));
        assert_eq!(par.limit().unwrap(), Limit::NoLimit);
    }

    #[test]
    fn dominance() {
        assert_eq!(l_minus_r().is_bounded_by(&CVal::one()).unwrap(), Tri::True);
        let f = MotFun::constant_on(ge0(), CVal::one()).sub(&l_minus_r());
        assert_eq!(f.is_increasing(Some(0)).unwrap(), Tri::True);
        let r = MotFun::piece(ge0(), ClassAtom::point(), MotElem::one(), IPoly::var(1, 0), ExpForm::constant(1, 0));
        assert_eq!(r.is_bounded_by(&CVal::int(5)).unwrap(), Tri::False);
    }

    #[test]
    fn series() {
        let s = l_minus_r().generating_series().unwrap();
        assert!(s.equals(&RationalSeries::geometric(-1, 1)));
        for r in 0..=5 {
            assert_eq!(s.coefficient(r), MotElem::l_pow(-(r as i64)));
        }
        let one = MotFun::constant_on(ge0(), CVal::one()).generating_series().unwrap();
        assert!(one.equals(&RationalSeries::geometric(0, 1)));
        // L^{-ceil(r/2)}
        let f = MotFun::piece(
            Guard::range_mod(Some(0), None, 2, 0),
            ClassAtom::point(),
            MotElem::one(),
            IPoly::one(1),
            ExpForm { a: vec![-1], c: 0, den: 2 },
        )
        .add(&MotFun::piece(
            Guard::range_mod(Some(0), None, 2, 1),
            ClassAtom::point(),
            MotElem::one(),
            IPoly::one(1),
            ExpForm { a: vec![-1], c: -1, den: 2 },
        ));
        let s = f.generating_series().unwrap();
        let mut num = RationalSeries::monomial(0, MotElem::one()).add(&RationalSeries::monomial(1, MotElem::l_pow(-1)));
        num.den = vec![(-1, 2)];
        assert!(s.equals(&num));
        for r in 0..10u32 {
            assert_eq!(s.coefficient(r), MotElem::l_pow(-((r as i64 + 1) / 2)));
        }
    }

    #[test]
    fn fubini_finite() {
        // f(x, y) = (x + 2y) L^{x - y} on a box
        let f = MotFun::piece(
            Guard::all(2),
            ClassAtom::point(),
            MotElem::one(),
            IPoly::var(2, 0).add(&IPoly::var(2, 1).scale(2)),
            ExpForm::linear(vec![1, -1], 0),
        );
        let rx = Guard::all(2).with(Conj::Ge(Lin::new(vec![1, 0], 0))).with(Conj::Ge(Lin::new(vec![-1, 0], 3)));
        let ry = Guard::all(2).with(Conj::Ge(Lin::new(vec![0, 1], 1))).with(Conj::Ge(Lin::new(vec![0, -1], 2)));
        let a = f.sum_over(0, &rx).unwrap();
        let ry1 = Guard::range(Some(-1), Some(2));
        let a = a.sum_over(0, &ry1).unwrap().eval(&[]);
        let b = f.sum_over(1, &ry).unwrap();
        let rx1 = Guard::range(Some(0), Some(3));
        let b = b.sum_over(0, &rx1).unwrap().eval(&[]);
        assert_eq!(a, b);
    }

    pub(crate) fn arb_geo() -> impl Strategy<Value = MotFun> {
        // nonnegative geometric pieces c L^{s r + b} on r >= lo, r = res (mod m)
        proptest::collection::vec((0i64..3, -2i64..1, -1i64..2, 0i64..3, 1i64..3, 0i64..2), 1..4).prop_map(|v| {
            let mut f = MotFun::zero(1);
            for (c, s, b, lo, m, res) in v {
                f = f.add(&MotFun::geometric(Guard::range_mod(Some(lo), None, m, res % m), MotElem::int(c), s, b));
            }
            f
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn squeeze(f in arb_geo(), g in arb_geo()) {
            if f.add(&g).limit().unwrap() == Limit::Value(CVal::zero()) {
                prop_assert_eq!(f.limit().unwrap(), Limit::Value(CVal::zero()));
                prop_assert_eq!(g.limit().unwrap(), Limit::Value(CVal::zero()));
            }
        }

        #[test]
        fn monotone_bounded_converges(f in arb_geo(), k in 0i64..4) {
            let g = CVal::int(k);
            if f.is_increasing(Some(0)).unwrap() == Tri::True && f.is_bounded_by(&g).unwrap() == Tri::True {
                prop_assert_ne!(f.limit().unwrap(), Limit::NoLimit);
            }
        }

        #[test]
        fn series_coefficients(f in arb_geo()) {
            let s = f.generating_series().unwrap();
            for r in 0..=10u32 {
                prop_assert_eq!(CVal::scalar(s.coefficient(r)), f.eval1(r as i64));
            }
        }
    }
}
