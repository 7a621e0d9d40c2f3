//! Zero-dimensional residue classes: powers [k^m] of the affine line and
//! finite etale classes given by squarefree polynomials, and the value type
//! CVal of formal combinations (class atom, element of A).

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde_json::{json, Value};

use crate::error::{MvError, Result};
use crate::k::{parse_kconst, Field, Kx, Poly};
use crate::mot_ring::MotElem;

/// Zero set in k of a squarefree monic polynomial.
#[derive(Clone)]
pub struct EtaleClass {
    poly: Poly<Kx>,
}

impl EtaleClass {
    pub fn new(p: Poly<Kx>) -> Result<Self> {
        if !p.is_squarefree() {
            return Err(MvError::NonSquarefree(p.render("x")));
        }
        Ok(EtaleClass { poly: p.monic() })
    }
    pub fn poly(&self) -> &Poly<Kx> {
        &self.poly
    }
    pub fn field(&self) -> Field {
        self.poly.field()
    }
    pub fn degree(&self) -> usize {
        self.poly.deg().unwrap_or(0)
    }
}

impl PartialEq for EtaleClass {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for EtaleClass {}
impl PartialOrd for EtaleClass {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for EtaleClass {
    fn cmp(&self, o: &Self) -> Ordering {
        self.field()
            .q()
            .cmp(&o.field().q())
            .then(self.poly.coeffs().len().cmp(&o.poly.coeffs().len()))
            .then_with(|| self.poly.coeffs().cmp(o.poly.coeffs()))
    }
}

impl fmt::Debug for EtaleClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}]", self.poly.render("x"))
    }
}

/// A class in the Grothendieck semiring of a point.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum ClassAtom {
    /// [k^m]
    PowerOfL(u32),
    Etale(EtaleClass),
}

impl ClassAtom {
    pub fn point() -> Self {
        ClassAtom::PowerOfL(0)
    }
    pub fn etale(p: Poly<Kx>) -> Result<Self> {
        Ok(ClassAtom::Etale(EtaleClass::new(p)?))
    }
    /// Parse `x^2 - 2` over k.
    pub fn etale_str(s: &str, k: Field) -> Result<Self> {
        Self::etale(parse_upoly(s, k)?)
    }
    pub fn to_json(&self) -> Value {
        match self {
            ClassAtom::PowerOfL(m) => json!({"L_pow": m}),
            ClassAtom::Etale(e) => json!({"etale": e.poly.render("x")}),
        }
    }
    pub fn from_json(v: &Value, k: Field) -> Result<Self> {
        if let Some(m) = v.get("L_pow").and_then(|m| m.as_u64()) {
            return Ok(ClassAtom::PowerOfL(m as u32));
        }
        if let Some(s) = v.get("etale").and_then(|m| m.as_str()) {
            return Self::etale_str(s, k);
        }
        if v.as_str() == Some("pt") {
            return Ok(ClassAtom::point());
        }
        Err(MvError::Usage(format!("malformed atom {v}")))
    }
    /// Number of F_q-points.
    pub fn count_points(&self, q: u32) -> Result<BigRational> {
        match self {
            ClassAtom::PowerOfL(m) => Ok(BigRational::from_integer(BigInt::from(q).pow(*m))),
            ClassAtom::Etale(e) => {
                if e.field().q() != q {
                    return Err(MvError::BaseFieldMismatch(format!(
                        "atom {e:?} is defined over {}",
                        e.field()
                    )));
                }
                Ok(BigRational::from_integer(BigInt::from(e.poly.count_roots_fq())))
            }
        }
    }
}

impl fmt::Display for ClassAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClassAtom::PowerOfL(0) => write!(f, "pt"),
            ClassAtom::PowerOfL(m) => write!(f, "[k^{m}]"),
            ClassAtom::Etale(e) => write!(f, "{e:?}"),
        }
    }
}

/// Parse a univariate polynomial in `x` (or `u`) with constant coefficients in k.
pub fn parse_upoly(s: &str, k: Field) -> Result<Poly<Kx>> {
    let bad = |m: &str| MvError::Usage(format!("bad polynomial '{s}': {m}"));
    let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    if t.is_empty() {
        return Err(bad("empty"));
    }
    let mut terms = vec![];
    let mut cur = String::new();
    for (i, ch) in t.chars().enumerate() {
        if (ch == '+' || ch == '-') && i > 0 && !cur.ends_with('^') {
            terms.push(std::mem::take(&mut cur));
        }
        cur.push(ch);
    }
    terms.push(cur);
    let mut p = Poly::zero(k.zero());
    for term in terms {
        let (sign, body) = match term.strip_prefix('-') {
            Some(b) => (-1, b.to_string()),
            None => (1, term.trim_start_matches('+').to_string()),
        };
        let (coef, mono) = match body.find(['x', 'u']) {
            None => (body.as_str(), None),
            Some(pos) => {
                let c = body[..pos].trim_end_matches('*');
                (c, Some(&body[pos + 1..]))
            }
        };
        let c = if coef.is_empty() { k.one() } else { parse_kconst(coef, k)? };
        let e: usize = match mono {
            None => 0,
            Some("") => 1,
            Some(r) => r
                .strip_prefix('^')
                .ok_or_else(|| bad("expected ^"))?
                .parse()
                .map_err(|_| bad("bad exponent"))?,
        };
        let c = if sign < 0 { c.neg() } else { c };
        p = p.add(&Poly::monomial(c, e));
    }
    Ok(p)
}

/// Finite signed combination of (class atom, element of A). Nonnegative values
/// are those whose coefficients all lie in A+.
#[derive(Clone, Default, PartialEq, Eq)]
pub struct CVal {
    terms: BTreeMap<ClassAtom, MotElem>,
}

impl CVal {
    pub fn zero() -> Self {
        Self::default()
    }
    pub fn one() -> Self {
        Self::scalar(MotElem::one())
    }
    pub fn int(n: i64) -> Self {
        Self::scalar(MotElem::int(n))
    }
    /// m times the class of a point.
    pub fn scalar(m: MotElem) -> Self {
        Self::term(ClassAtom::point(), m)
    }
    pub fn atom(a: ClassAtom) -> Self {
        Self::term(a, MotElem::one())
    }
    pub fn term(a: ClassAtom, m: MotElem) -> Self {
        let mut c = Self::zero();
        c.push(a, m);
        c
    }
    fn push(&mut self, a: ClassAtom, m: MotElem) {
        if m.is_zero() {
            return;
        }
        let (a, m) = normalize(a, m);
        // rational roots of an etale atom are split off as points
        if let ClassAtom::Etale(e) = &a {
            let (n, rest) = split_etale(e);
            self.push_raw(ClassAtom::point(), m.mul(&MotElem::int(n as i64)));
            if let Some(rest) = rest {
                self.push_raw(ClassAtom::Etale(rest), m);
            }
            return;
        }
        self.push_raw(a, m);
    }
    fn push_raw(&mut self, a: ClassAtom, m: MotElem) {
        if m.is_zero() {
            return;
        }
        let e = self.terms.entry(a.clone()).or_insert_with(MotElem::zero);
        *e = e.add(&m);
        if e.is_zero() {
            self.terms.remove(&a);
        }
    }
    pub fn terms(&self) -> impl Iterator<Item = (&ClassAtom, &MotElem)> {
        self.terms.iter()
    }
    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }
    pub fn add(&self, o: &Self) -> Self {
        let mut r = self.clone();
        for (a, m) in &o.terms {
            r.push(a.clone(), m.clone());
        }
        r
    }
    pub fn neg(&self) -> Self {
        CVal { terms: self.terms.iter().map(|(a, m)| (a.clone(), m.neg())).collect() }
    }
    pub fn sub(&self, o: &Self) -> Self {
        self.add(&o.neg())
    }
    /// Multiplication by an element of A+.
    pub fn scale(&self, m: &MotElem) -> Result<Self> {
        if !m.is_nonneg() {
            return Err(MvError::NegativeCoefficient(m.to_string()));
        }
        Ok(self.scale_signed(m))
    }
    /// Multiplication by any element of A (the result may leave the nonnegative cone).
    pub fn scale_signed(&self, m: &MotElem) -> Self {
        let mut r = Self::zero();
        for (a, c) in &self.terms {
            r.push(a.clone(), c.mul(m));
        }
        r
    }
    /// Product with the class of an atom.
    pub fn mul_atom(&self, b: &ClassAtom) -> Result<Self> {
        let mut r = Self::zero();
        for (a, c) in &self.terms {
            r = r.add(&atom_product(a, b, c)?);
        }
        Ok(r)
    }
    pub fn mul(&self, o: &Self) -> Result<Self> {
        let mut r = Self::zero();
        for (b, cb) in &o.terms {
            r = r.add(&self.mul_atom(b)?.scale_signed(cb));
        }
        Ok(r)
    }
    /// Componentwise membership in A+.
    pub fn is_nonneg(&self) -> bool {
        self.terms.values().all(|m| m.is_nonneg())
    }
    /// The A-coefficient when the value is a multiple of the point class.
    pub fn as_scalar(&self) -> Option<MotElem> {
        match self.terms.len() {
            0 => Some(MotElem::zero()),
            1 => self.terms.get(&ClassAtom::point()).cloned(),
            _ => None,
        }
    }
    /// Specialization: sum of coeff(q) * #atom(F_q).
    pub fn count_points(&self, q: u32) -> Result<BigRational> {
        let qq = BigRational::from_integer(BigInt::from(q));
        let mut s = BigRational::zero();
        for (a, m) in &self.terms {
            s += a.count_points(q)? * m.eval_at(&qq)?;
        }
        Ok(s)
    }
    /// Evaluation of a point-class value at L = q.
    pub fn eval_at(&self, q: &BigRational) -> Result<BigRational> {
        let m = self.as_scalar().ok_or_else(|| {
            MvError::BaseFieldMismatch("value carries etale classes; use count_points".into())
        })?;
        m.eval_at(q)
    }
    pub fn degree(&self) -> Option<i64> {
        self.terms.values().filter_map(|m| m.degree()).max()
    }
    pub fn to_json(&self) -> Value {
        Value::Array(
            self.terms
                .iter()
                .map(|(a, m)| json!({"atom": a.to_json(), "coeff": m.to_json()}))
                .collect(),
        )
    }
    pub fn from_json(v: &Value, k: Field) -> Result<Self> {
        if let Some(n) = v.as_i64() {
            return Ok(CVal::int(n));
        }
        let arr = v.as_array().ok_or_else(|| MvError::Usage(format!("malformed CVal {v}")))?;
        let mut r = CVal::zero();
        for t in arr {
            let a = ClassAtom::from_json(
                t.get("atom").ok_or_else(|| MvError::Usage(format!("term without atom: {t}")))?,
                k,
            )?;
            let m = MotElem::from_json(
                t.get("coeff").ok_or_else(|| MvError::Usage(format!("term without coeff: {t}")))?,
            )?;
            r.push(a, m);
        }
        Ok(r)
    }
}

/// Fold [k^m] into the coefficient and split rational points off etale atoms.
fn normalize(a: ClassAtom, m: MotElem) -> (ClassAtom, MotElem) {
    match a {
        ClassAtom::PowerOfL(e) if e > 0 => (ClassAtom::point(), m.mul_l_pow(e as i64)),
        ClassAtom::Etale(ref ec) if ec.degree() == 0 => (ClassAtom::point(), MotElem::zero()),
        other => (other, m),
    }
}

fn split_etale(e: &EtaleClass) -> (usize, Option<EtaleClass>) {
    let roots = e.poly.roots_in_k().len();
    match e.field() {
        Field::F(_) => (roots, None),
        Field::Q => {
            let rest = e.poly.irrational_part();
            if rest.deg().unwrap_or(0) == 0 {
                (roots, None)
            } else {
                (roots, Some(EtaleClass { poly: rest }))
            }
        }
    }
}

fn atom_product(a: &ClassAtom, b: &ClassAtom, c: &MotElem) -> Result<CVal> {
    match (a, b) {
        (ClassAtom::PowerOfL(i), x) | (x, ClassAtom::PowerOfL(i)) => {
            Ok(CVal::term(x.clone(), c.mul_l_pow(*i as i64)))
        }
        (ClassAtom::Etale(e1), ClassAtom::Etale(e2)) => {
            if let (Field::F(_), Field::F(_)) = (e1.field(), e2.field()) {
                let n = e1.poly.count_roots_fq() * e2.poly.count_roots_fq();
                return Ok(CVal::scalar(c.mul(&MotElem::int(n as i64))));
            }
            Err(MvError::Unsupported(
                "product of two etale classes over Q".into(),
            ))
        }
    }
}

/// Class of a finite set given as a list of atoms.
pub fn mu0_finite(atoms: &[ClassAtom]) -> Result<CVal> {
    let mut r = CVal::zero();
    for a in atoms {
        if let ClassAtom::Etale(e) = a {
            if !e.poly.is_squarefree() {
                return Err(MvError::NonSquarefree(e.poly.render("x")));
            }
        }
        r = r.add(&CVal::atom(a.clone()));
    }
    Ok(r)
}

impl fmt::Display for CVal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (j, (a, m)) in self.terms.iter().enumerate() {
            if j > 0 {
                write!(f, " + ")?;
            }
            match a {
                ClassAtom::PowerOfL(0) => write!(f, "{m}")?,
                _ if m.as_integer().is_some_and(|i| i.is_one()) => write!(f, "{a}")?,
                _ => write!(f, "{a}*({m})")?,
            }
        }
        Ok(())
    }
}
impl fmt::Debug for CVal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}
