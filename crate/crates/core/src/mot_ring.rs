//! The ring A = Z[L, L^-1, 1/(1-L^i)] with exact evaluation and a decision
//! procedure for membership in A+ (nonnegative at every real L > 1).

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde_json::{json, Value};

use crate::error::{MvError, Result};
use crate::k::{Field, Kx, Poly};

/// Laurent polynomial in L with integer coefficients.
#[derive(Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LaurentPolyL {
    terms: BTreeMap<i64, BigInt>,
}

impl LaurentPolyL {
    pub fn zero() -> Self {
        Self::default()
    }
    pub fn one() -> Self {
        Self::monomial(1, 0)
    }
    pub fn monomial(c: impl Into<BigInt>, e: i64) -> Self {
        let mut p = Self::zero();
        p.add_term(e, c.into());
        p
    }
    pub fn from_terms(it: impl IntoIterator<Item = (i64, BigInt)>) -> Self {
        let mut p = Self::zero();
        for (e, c) in it {
            p.add_term(e, c);
        }
        p
    }
    fn add_term(&mut self, e: i64, c: BigInt) {
        if c.is_zero() {
            return;
        }
        let ent = self.terms.entry(e).or_insert_with(BigInt::zero);
        *ent += c;
        if ent.is_zero() {
            self.terms.remove(&e);
        }
    }
    pub fn terms(&self) -> impl Iterator<Item = (i64, &BigInt)> {
        self.terms.iter().map(|(e, c)| (*e, c))
    }
    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }
    pub fn max_exp(&self) -> Option<i64> {
        self.terms.keys().next_back().copied()
    }
    pub fn min_exp(&self) -> Option<i64> {
        self.terms.keys().next().copied()
    }
    pub fn add(&self, o: &Self) -> Self {
        let mut r = self.clone();
        for (e, c) in &o.terms {
            r.add_term(*e, c.clone());
        }
        r
    }
    pub fn neg(&self) -> Self {
        Self { terms: self.terms.iter().map(|(e, c)| (*e, -c)).collect() }
    }
    pub fn sub(&self, o: &Self) -> Self {
        self.add(&o.neg())
    }
    pub fn mul(&self, o: &Self) -> Self {
        let mut r = Self::zero();
        for (e1, c1) in &self.terms {
            for (e2, c2) in &o.terms {
                r.add_term(e1 + e2, c1 * c2);
            }
        }
        r
    }
    pub fn shift(&self, s: i64) -> Self {
        Self { terms: self.terms.iter().map(|(e, c)| (e + s, c.clone())).collect() }
    }
    /// 1 - L^i
    pub fn one_minus_l(i: i64) -> Self {
        Self::one().sub(&Self::monomial(1, i))
    }
    /// Exact quotient by 1 - L^i if it divides.
    pub fn div_one_minus_l(&self, i: i64) -> Option<Self> {
        // self = (1 - L^i) * q  <=>  q_e = s_e + q_{e-i}, walking upward in e
        let lo = self.min_exp()?;
        let hi = self.max_exp()?;
        let mut q: BTreeMap<i64, BigInt> = BTreeMap::new();
        let mut e = lo;
        while e <= hi - i {
            let s = self.terms.get(&e).cloned().unwrap_or_default();
            let prev = q.get(&(e - i)).cloned().unwrap_or_default();
            let v = s + prev;
            if !v.is_zero() {
                q.insert(e, v);
            }
            e += 1;
        }
        let qp = Self { terms: q };
        if qp.mul(&Self::one_minus_l(i)) == *self {
            Some(qp)
        } else {
            None
        }
    }
    pub fn eval(&self, q: &BigRational) -> BigRational {
        let mut s = BigRational::zero();
        for (e, c) in &self.terms {
            s += BigRational::from_integer(c.clone()) * pow_rat(q, *e);
        }
        s
    }
}

pub(crate) fn pow_rat(q: &BigRational, e: i64) -> BigRational {
    let p = num_traits::pow(q.clone(), e.unsigned_abs() as usize);
    if e < 0 {
        p.recip()
    } else {
        p
    }
}

fn fmt_lpoly(p: &LaurentPolyL, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if p.is_zero() {
        return write!(f, "0");
    }
    let mut first = true;
    for (e, c) in p.terms.iter().rev() {
        let neg = c.is_negative();
        let mag = c.abs();
        if first {
            if neg {
                write!(f, "-")?;
            }
        } else {
            write!(f, "{}", if neg { " - " } else { " + " })?;
        }
        first = false;
        let mon = match *e {
            0 => String::new(),
            1 => "L".to_string(),
            _ => format!("L^{e}"),
        };
        if mon.is_empty() {
            write!(f, "{mag}")?;
        } else if mag.is_one() {
            write!(f, "{mon}")?;
        } else {
            write!(f, "{mag}*{mon}")?;
        }
    }
    Ok(())
}

impl fmt::Display for LaurentPolyL {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_lpoly(self, f)
    }
}
impl fmt::Debug for LaurentPolyL {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_lpoly(self, f)
    }
}

/// num / prod (1 - L^i) for i in den.
#[derive(Clone)]
pub struct MotElem {
    num: LaurentPolyL,
    den: Vec<u32>,
}

impl PartialEq for MotElem {
    fn eq(&self, o: &Self) -> bool {
        self.num.mul(&den_poly(&o.den)) == o.num.mul(&den_poly(&self.den))
    }
}
impl Eq for MotElem {}

fn den_poly(d: &[u32]) -> LaurentPolyL {
    d.iter().fold(LaurentPolyL::one(), |acc, &i| acc.mul(&LaurentPolyL::one_minus_l(i as i64)))
}

fn multiset_diff(a: &[u32], b: &[u32]) -> Vec<u32> {
    let mut rest = b.to_vec();
    let mut out = vec![];
    for &x in a {
        if let Some(pos) = rest.iter().position(|&y| y == x) {
            rest.remove(pos);
        } else {
            out.push(x);
        }
    }
    out
}

impl MotElem {
    pub fn new(num: LaurentPolyL, mut den: Vec<u32>) -> Self {
        assert!(den.iter().all(|&i| i > 0), "denominator factors need i > 0");
        den.sort_unstable();
        let mut m = MotElem { num, den };
        m.cancel();
        m
    }
    pub fn zero() -> Self {
        Self::poly(LaurentPolyL::zero())
    }
    pub fn one() -> Self {
        Self::int(1)
    }
    pub fn int(n: i64) -> Self {
        Self::poly(LaurentPolyL::monomial(n, 0))
    }
    pub fn big(n: BigInt) -> Self {
        Self::poly(LaurentPolyL::monomial(n, 0))
    }
    pub fn poly(num: LaurentPolyL) -> Self {
        MotElem { num, den: vec![] }
    }
    /// L^e
    pub fn l_pow(e: i64) -> Self {
        Self::poly(LaurentPolyL::monomial(1, e))
    }
    /// c * L^e
    pub fn mono(c: i64, e: i64) -> Self {
        Self::poly(LaurentPolyL::monomial(c, e))
    }
    /// 1 / (1 - L^i)
    pub fn inv_one_minus_l(i: u32) -> Self {
        MotElem { num: LaurentPolyL::one(), den: vec![i] }
    }
    pub fn num(&self) -> &LaurentPolyL {
        &self.num
    }
    pub fn den(&self) -> &[u32] {
        &self.den
    }
    fn cancel(&mut self) {
        if self.num.is_zero() {
            self.den.clear();
            return;
        }
        let mut kept = vec![];
        for &i in &self.den {
            match self.num.div_one_minus_l(i as i64) {
                Some(q) => self.num = q,
                None => kept.push(i),
            }
        }
        self.den = kept;
    }
    pub fn is_zero(&self) -> bool {
        self.num.is_zero()
    }
    pub fn add(&self, o: &Self) -> Self {
        if o.is_zero() {
            return self.clone();
        }
        if self.is_zero() {
            return o.clone();
        }
        let only_o = multiset_diff(&o.den, &self.den);
        let only_s = multiset_diff(&self.den, &o.den);
        let mut den = self.den.clone();
        den.extend(&only_o);
        let num = self.num.mul(&den_poly(&only_o)).add(&o.num.mul(&den_poly(&only_s)));
        MotElem::new(num, den)
    }
    pub fn neg(&self) -> Self {
        MotElem { num: self.num.neg(), den: self.den.clone() }
    }
    pub fn sub(&self, o: &Self) -> Self {
        self.add(&o.neg())
    }
    pub fn mul(&self, o: &Self) -> Self {
        if self.is_zero() || o.is_zero() {
            return Self::zero();
        }
        let mut den = self.den.clone();
        den.extend(&o.den);
        MotElem::new(self.num.mul(&o.num), den)
    }
    pub fn mul_l_pow(&self, e: i64) -> Self {
        MotElem { num: self.num.shift(e), den: self.den.clone() }
    }
    pub fn pow(&self, e: u32) -> Self {
        (0..e).fold(Self::one(), |a, _| a.mul(self))
    }
    /// Sum of the family.
    pub fn sum<'a>(it: impl IntoIterator<Item = &'a MotElem>) -> Self {
        it.into_iter().fold(Self::zero(), |a, b| a.add(b))
    }
    /// deg(num) - sum(den); None encodes minus infinity.
    pub fn degree(&self) -> Option<i64> {
        let d = self.num.max_exp()?;
        Some(d - self.den.iter().map(|&i| i as i64).sum::<i64>())
    }
    pub fn eval_at(&self, q: &BigRational) -> Result<BigRational> {
        if *q <= BigRational::one() {
            return Err(MvError::DomainError(format!("evaluation needs q > 1, got {q}")));
        }
        let d = den_poly(&self.den).eval(q);
        Ok(self.num.eval(q) / d)
    }
    pub fn eval_int(&self, q: u64) -> Result<BigRational> {
        self.eval_at(&BigRational::from_integer(BigInt::from(q)))
    }
    pub fn eval_f64(&self, q: f64) -> f64 {
        let n: f64 = self.num.terms().map(|(e, c)| c.to_f64().unwrap_or(f64::NAN) * q.powi(e as i32)).sum();
        let d: f64 = self.den.iter().map(|&i| 1.0 - q.powi(i as i32)).product();
        n / d
    }
    /// Exact integer when the element is a constant integer.
    pub fn as_integer(&self) -> Option<BigInt> {
        if self.is_zero() {
            return Some(BigInt::zero());
        }
        if !self.den.is_empty() {
            return None;
        }
        if self.num.terms.len() == 1 {
            if let Some(c) = self.num.terms.get(&0) {
                return Some(c.clone());
            }
        }
        None
    }

    /// Polynomial with the same sign as self on (1, inf), shifted to have nonzero constant term.
    fn sign_poly(&self) -> Option<Poly<Kx>> {
        let lo = self.num.min_exp()?;
        let mut p = self.num.shift(-lo);
        if self.den.len() % 2 == 1 {
            p = p.neg();
        }
        let hi = p.max_exp().unwrap_or(0) as usize;
        let mut c = vec![Field::Q.zero(); hi + 1];
        for (e, v) in p.terms() {
            c[e as usize] = Field::Q.big(v);
        }
        Some(Poly::new(c, Field::Q.zero()))
    }

    /// True iff self(r) >= 0 for every real r > 1. Exact (Sturm sequences).
    pub fn is_nonneg(&self) -> bool {
        self.negativity_witness().is_none()
    }

    /// A rational r > 1 with self(r) < 0, if one exists.
    pub fn negativity_witness(&self) -> Option<BigRational> {
        let p = self.sign_poly()?;
        for s in sign_region_samples(&p) {
            if let Kx::Q(v) = p.eval(&Kx::Q(s.clone())) {
                if v.is_negative() {
                    return Some(s);
                }
            }
        }
        None
    }

    pub fn to_json(&self) -> Value {
        let num: Vec<Value> = self
            .num
            .terms()
            .map(|(e, c)| json!([e, bigint_json(c)]))
            .collect();
        json!({"num": num, "den": self.den})
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        let bad = || MvError::Usage(format!("malformed MotElem JSON: {v}"));
        if let Some(n) = v.as_i64() {
            return Ok(MotElem::int(n));
        }
        let num = v.get("num").and_then(|x| x.as_array()).ok_or_else(bad)?;
        let mut p = LaurentPolyL::zero();
        for t in num {
            let a = t.as_array().ok_or_else(bad)?;
            if a.len() != 2 {
                return Err(bad());
            }
            let e = a[0].as_i64().ok_or_else(bad)?;
            let c: BigInt = match &a[1] {
                Value::Number(n) => n.as_i64().map(BigInt::from).ok_or_else(bad)?,
                Value::String(s) => s.parse().map_err(|_| bad())?,
                _ => return Err(bad()),
            };
            p.add_term(e, c);
        }
        let den = match v.get("den") {
            None => vec![],
            Some(d) => d
                .as_array()
                .ok_or_else(bad)?
                .iter()
                .map(|x| x.as_u64().filter(|&i| i > 0).map(|i| i as u32).ok_or_else(bad))
                .collect::<Result<Vec<_>>>()?,
        };
        Ok(MotElem::new(p, den))
    }
}

pub(crate) fn bigint_json(c: &BigInt) -> Value {
    match c.to_i64() {
        Some(i) => json!(i),
        None => json!(c.to_string()),
    }
}

fn sign_of(p: &Poly<Kx>, x: &BigRational) -> i8 {
    match p.eval(&Kx::Q(x.clone())) {
        Kx::Q(v) => {
            if v.is_zero() {
                0
            } else if v.is_positive() {
                1
            } else {
                -1
            }
        }
        _ => unreachable!(),
    }
}

struct Sturm {
    seq: Vec<Poly<Kx>>,
}

impl Sturm {
    fn new(g: &Poly<Kx>) -> Self {
        let mut seq = vec![g.clone(), g.deriv()];
        loop {
            let n = seq.len();
            if seq[n - 1].is_zero() {
                seq.pop();
                break;
            }
            let (_, r) = seq[n - 2].divrem(&seq[n - 1]).expect("Q coefficients");
            if r.is_zero() {
                break;
            }
            seq.push(r.neg());
        }
        Sturm { seq }
    }
    fn variations(&self, x: &BigRational) -> usize {
        let mut last = 0i8;
        let mut v = 0;
        for p in &self.seq {
            let s = sign_of(p, x);
            if s != 0 {
                if last != 0 && s != last {
                    v += 1;
                }
                last = s;
            }
        }
        v
    }
    /// Distinct roots in (a, b], a not a root.
    fn count(&self, a: &BigRational, b: &BigRational) -> usize {
        self.variations(a).saturating_sub(self.variations(b))
    }
}

fn half(a: &BigRational, b: &BigRational) -> BigRational {
    (a + b) / BigRational::from_integer(BigInt::from(2))
}

/// A point strictly inside (a, b) that is not a root of g.
fn split_point(g: &Poly<Kx>, a: &BigRational, b: &BigRational) -> BigRational {
    let mut den = 2i64;
    loop {
        for k in 1..den {
            let x = a + (b - a) * BigRational::new(BigInt::from(k), BigInt::from(den));
            if sign_of(g, &x) != 0 {
                return x;
            }
        }
        den += 1;
    }
}

/// Sample points, one in each open interval of (1, inf) cut out by the real roots of p.
fn sign_region_samples(p: &Poly<Kx>) -> Vec<BigRational> {
    let one = BigRational::one();
    if p.deg().unwrap_or(0) == 0 {
        return vec![BigRational::from_integer(BigInt::from(2))];
    }
    let mut g = p.radical();
    // drop a root at 1 so that 1 is a valid left endpoint
    if sign_of(&g, &one) == 0 {
        let lin = Poly::new(vec![Field::Q.int(-1), Field::Q.one()], Field::Q.zero());
        g = g.div_exact(&lin);
    }
    if g.deg().unwrap_or(0) == 0 {
        return vec![BigRational::from_integer(BigInt::from(2))];
    }
    let st = Sturm::new(&g);
    // Cauchy bound
    let lc = match g.lc() {
        Kx::Q(v) => v,
        _ => unreachable!(),
    };
    let mut bound = BigRational::one();
    for c in g.coeffs() {
        if let Kx::Q(v) = c {
            let r = (v / &lc).abs();
            if r > bound {
                bound = r;
            }
        }
    }
    let bound = bound + BigRational::from_integer(BigInt::from(2));
    // isolate
    let mut todo = vec![(one.clone(), bound.clone())];
    let mut isol: Vec<(BigRational, BigRational)> = vec![];
    while let Some((a, b)) = todo.pop() {
        let n = st.count(&a, &b);
        if n == 0 {
            continue;
        }
        if n == 1 {
            isol.push((a, b));
            continue;
        }
        let m = split_point(&g, &a, &b);
        todo.push((a, m.clone()));
        todo.push((m, b));
    }
    isol.sort();
    if isol.is_empty() {
        return vec![BigRational::from_integer(BigInt::from(2))];
    }
    let mut out = vec![];
    // left of the first root
    let mut s = isol[0].1.clone();
    loop {
        s = half(&one, &s);
        if sign_of(&g, &s) != 0 && st.count(&one, &s) == 0 {
            break;
        }
    }
    out.push(s);
    // right endpoints are never roots except possibly the outer bound; they separate consecutive roots
    for (_, b) in &isol {
        if sign_of(&g, b) != 0 {
            out.push(b.clone());
        } else {
            out.push(b + BigRational::one());
        }
    }
    out
}

/// Nearest f64 of a rational.
/// Parse an element such as `(1 - L^-1)^2 + 3*L^-4` or `L^2/(1 - L^2)`.
/// Integers, `L`, `+ - * ^`, parentheses; negative powers only of monomials;
/// division only by monomials and by `1 - L^i`.
pub fn parse_mot(s: &str) -> Result<MotElem> {
    let toks: Vec<char> = s.chars().filter(|c| !c.is_whitespace()).collect();
    let mut p = MotParser { t: toks, i: 0, src: s };
    let e = p.expr()?;
    if p.i != p.t.len() {
        return Err(p.err("trailing input"));
    }
    Ok(e)
}

struct MotParser<'a> {
    t: Vec<char>,
    i: usize,
    src: &'a str,
}

impl MotParser<'_> {
    fn err(&self, m: &str) -> MvError {
        MvError::Usage(format!("bad element '{}' at {}: {m}", self.src, self.i))
    }
    fn peek(&self) -> Option<char> {
        self.t.get(self.i).copied()
    }
    fn int(&mut self) -> Result<i64> {
        let neg = self.peek() == Some('-');
        if neg {
            self.i += 1;
        }
        let st = self.i;
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.i += 1;
        }
        let v: i64 = self.t[st..self.i].iter().collect::<String>().parse().map_err(|_| self.err("expected integer"))?;
        Ok(if neg { -v } else { v })
    }
    fn expr(&mut self) -> Result<MotElem> {
        let mut a = self.term()?;
        while let Some(c) = self.peek() {
            match c {
                '+' => {
                    self.i += 1;
                    a = a.add(&self.term()?);
                }
                '-' => {
                    self.i += 1;
                    a = a.sub(&self.term()?);
                }
                _ => break,
            }
        }
        Ok(a)
    }
    fn term(&mut self) -> Result<MotElem> {
        let mut a = self.factor()?;
        while let Some(c) = self.peek() {
            match c {
                '*' => {
                    self.i += 1;
                    a = a.mul(&self.factor()?);
                }
                '/' => {
                    self.i += 1;
                    let d = self.factor()?;
                    a = a.mul(&self.inverse(&d)?);
                }
                _ => break,
            }
        }
        Ok(a)
    }
    fn inverse(&self, d: &MotElem) -> Result<MotElem> {
        if d.den.is_empty() {
            let terms: Vec<(i64, &BigInt)> = d.num.terms().collect();
            if let [(e, c)] = terms[..] {
                if c.is_one() {
                    return Ok(MotElem::l_pow(-e));
                }
                if (-c).is_one() {
                    return Ok(MotElem::l_pow(-e).neg());
                }
            }
            for i in 1..=64u32 {
                if *d == MotElem::one().sub(&MotElem::l_pow(i as i64)) {
                    return Ok(MotElem::inv_one_minus_l(i));
                }
            }
        }
        Err(self.err("can only divide by +-L^e or 1 - L^i"))
    }
    fn factor(&mut self) -> Result<MotElem> {
        if self.peek() == Some('-') {
            self.i += 1;
            return Ok(self.factor()?.neg());
        }
        let base = match self.peek() {
            Some('(') => {
                self.i += 1;
                let e = self.expr()?;
                if self.peek() != Some(')') {
                    return Err(self.err("expected )"));
                }
                self.i += 1;
                e
            }
            Some('L') => {
                self.i += 1;
                MotElem::l_pow(1)
            }
            Some(c) if c.is_ascii_digit() => MotElem::int(self.int()?),
            _ => return Err(self.err("expected a factor")),
        };
        if self.peek() != Some('^') {
            return Ok(base);
        }
        self.i += 1;
        let e = self.int()?;
        if e >= 0 {
            Ok(base.pow(e as u32))
        } else {
            Ok(self.inverse(&base)?.pow((-e) as u32))
        }
    }
}

pub fn rat_to_f64(r: &BigRational) -> f64 {
    use num_traits::ToPrimitive;
    r.to_f64().unwrap_or_else(|| {
        let (n, d) = (r.numer().bits() as i64, r.denom().bits() as i64);
        let sh = (n.max(d) - 1000).max(0) as usize;
        let nn = (r.numer() >> sh).to_f64().unwrap_or(0.0);
        let dd = (r.denom() >> sh).to_f64().unwrap_or(1.0);
        nn / dd
    })
}

impl fmt::Display for MotElem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den.is_empty() {
            return write!(f, "{}", self.num);
        }
        if self.num.terms.len() > 1 {
            write!(f, "({})", self.num)?;
        } else {
            write!(f, "{}", self.num)?;
        }
        write!(f, "/(")?;
        for (j, i) in self.den.iter().enumerate() {
            if j > 0 {
                write!(f, "*")?;
            }
            if *i == 1 {
                write!(f, "(1 - L)")?;
            } else {
                write!(f, "(1 - L^{i})")?;
            }
        }
        write!(f, ")")
    }
}
impl fmt::Debug for MotElem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parse_elements() {
        let u = MotElem::one().sub(&MotElem::l_pow(-1));
        assert_eq!(parse_mot("(1 - L^-1)^2").unwrap(), u.pow(2));
        assert_eq!(parse_mot("(L-2)^2").unwrap(), MotElem::l_pow(1).sub(&MotElem::int(2)).pow(2));
        assert_eq!(parse_mot("3*L^-4 - 2").unwrap(), MotElem::mono(3, -4).sub(&MotElem::int(2)));
        assert_eq!(parse_mot("L^2/(1 - L^2)").unwrap(), MotElem::l_pow(2).mul(&MotElem::inv_one_minus_l(2)));
        assert!(parse_mot("1/(L - 2)").is_err());
        assert!(parse_mot("2 +").is_err());
    }

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }
    fn one_minus_linv() -> MotElem {
        MotElem::one().sub(&MotElem::l_pow(-1))
    }

    #[test]
    fn ring_examples() {
        assert!(MotElem::one().add(&MotElem::int(-1)).is_zero());
        let a = MotElem::inv_one_minus_l(1).mul(&MotElem::poly(LaurentPolyL::one_minus_l(1)));
        assert_eq!(a, MotElem::one());
        assert!(a.den().is_empty());
        let sq = one_minus_linv().mul(&one_minus_linv());
        let expect = MotElem::poly(LaurentPolyL::from_terms([
            (0, BigInt::from(1)),
            (-1, BigInt::from(-2)),
            (-2, BigInt::from(1)),
        ]));
        assert_eq!(sq, expect);
    }

    #[test]
    fn degrees() {
        assert_eq!(MotElem::l_pow(2).degree(), Some(2));
        assert_eq!(MotElem::inv_one_minus_l(1).degree(), Some(-1));
        assert_eq!(MotElem::zero().degree(), None);
    }

    #[test]
    fn evaluation() {
        assert_eq!(one_minus_linv().pow(2).eval_int(3).unwrap(), q(4, 9));
        assert_eq!(MotElem::one().eval_at(&q(7, 5)).unwrap(), q(1, 1));
        // (L^2-1)(L^2-L) L^-4 at 2; GL_2(F_2) has 6 elements
        let gl2 = MotElem::poly(LaurentPolyL::from_terms([(2, 1.into()), (0, (-1).into())]))
            .mul(&MotElem::poly(LaurentPolyL::from_terms([(2, 1.into()), (1, (-1).into())])))
            .mul_l_pow(-4);
        assert_eq!(gl2.eval_int(2).unwrap(), q(6, 16));
        assert!(matches!(MotElem::one().eval_at(&q(1, 1)), Err(MvError::DomainError(_))));
    }

    #[test]
    fn positivity_examples() {
        for n in 0..=5 {
            assert!(one_minus_linv().pow(n).is_nonneg());
        }
        let l_minus_2 = MotElem::l_pow(1).sub(&MotElem::int(2));
        assert!(!l_minus_2.is_nonneg());
        assert!(!l_minus_2.neg().is_nonneg());
        assert!(l_minus_2.pow(2).is_nonneg());
        // 1/(1-L) is negative on (1, inf)
        assert!(!MotElem::inv_one_minus_l(1).is_nonneg());
        assert!(MotElem::inv_one_minus_l(1).neg().is_nonneg());
        // (L - 3/2)^2 (L - 5)  is negative near 1, and has a double root inside
        let p = MotElem::poly(LaurentPolyL::from_terms([(1, 2.into()), (0, (-3).into())]))
            .pow(2)
            .mul(&MotElem::l_pow(1).sub(&MotElem::int(5)));
        assert!(!p.is_nonneg());
        // (L-1)(L-2)^2 vanishes at 1 (excluded) and touches 0 at 2
        let p = MotElem::l_pow(1)
            .sub(&MotElem::one())
            .mul(&l_minus_2.pow(2));
        assert!(p.is_nonneg());
    }

    #[test]
    fn json_roundtrip() {
        let a = one_minus_linv().mul(&MotElem::inv_one_minus_l(2));
        let b = MotElem::from_json(&a.to_json()).unwrap();
        assert_eq!(a, b);
    }

    fn arb_lpoly() -> impl Strategy<Value = LaurentPolyL> {
        proptest::collection::vec((-3i64..4, -4i64..5), 0..5)
            .prop_map(|v| LaurentPolyL::from_terms(v.into_iter().map(|(e, c)| (e, BigInt::from(c)))))
    }
    pub(crate) fn arb_mot() -> impl Strategy<Value = MotElem> {
        (arb_lpoly(), proptest::collection::vec(1u32..4, 0..3)).prop_map(|(n, d)| MotElem::new(n, d))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn nonneg_agrees_with_sampling(a in arb_mot()) {
            let nn = a.is_nonneg();
            // 50 points spread over (1, 10]
            let pts: Vec<BigRational> = (1..=50).map(|j| BigRational::one() + q(9 * j, 50)).collect();
            if nn {
                for x in &pts { prop_assert!(!a.eval_at(x).unwrap().is_negative()); }
            } else {
                let w = a.negativity_witness().unwrap();
                prop_assert!(w > BigRational::one());
                prop_assert!(a.eval_at(&w).unwrap().is_negative());
            }
        }

        #[test]
        fn degree_is_additive(a in arb_mot(), b in arb_mot()) {
            prop_assume!(!a.is_zero() && !b.is_zero());
            prop_assert_eq!(a.mul(&b).degree().unwrap(), a.degree().unwrap() + b.degree().unwrap());
        }

        #[test]
        fn eval_is_ring_morphism(a in arb_mot(), b in arb_mot(), k in 2i64..9) {
            let x = q(k, 1) + q(1, 3);
            let (ea, eb) = (a.eval_at(&x).unwrap(), b.eval_at(&x).unwrap());
            prop_assert_eq!(a.add(&b).eval_at(&x).unwrap(), &ea + &eb);
            prop_assert_eq!(a.mul(&b).eval_at(&x).unwrap(), ea * eb);
        }

        #[test]
        fn equality_compatible(a in arb_mot(), b in arb_mot(), c in arb_mot()) {
            // a*(1-L)/(1-L) == a, and equality is stable under adding c
            let a2 = MotElem::new(a.num().mul(&LaurentPolyL::one_minus_l(2)), {
                let mut d = a.den().to_vec(); d.push(2); d });
            prop_assert!(a == a2);
            prop_assert!(a.add(&c) == a2.add(&c));
            prop_assert!(a.mul(&c) == a2.mul(&c));
            if a == b { prop_assert!(b == a2); }
        }
    }
}
