//! The valued field K = k((t)): exact Laurent polynomials, precision-tracked
//! series, the rational function field k(t), Newton polygons and the
//! valuation-locus engine that turns conditions val h(x) >= a*r + b on a ball
//! into Presburger functions of r.

use std::collections::BTreeMap;
use std::fmt;

use num_integer::Integer;
use num_rational::Ratio;

use crate::error::{MvError, Result};
use crate::groth::{CVal, ClassAtom};
use crate::k::{parse_kconst, Field, Kx, Poly, Ring};
use crate::mot_ring::MotElem;
use crate::presburger::{ExpForm, Guard, IPoly, MotFun};

/// Default cap on the ball-descent depth.
pub const DEFAULT_DEPTH_CAP: usize = 32;

// ---------------------------------------------------------------------------
// exact Laurent polynomials

/// Exact element of k[t, 1/t].
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Ls {
    k: Field,
    terms: BTreeMap<i64, Kx>,
}

impl Ls {
    pub fn zero(k: Field) -> Self {
        Ls { k, terms: BTreeMap::new() }
    }
    pub fn one(k: Field) -> Self {
        Self::constant(k.one())
    }
    pub fn constant(c: Kx) -> Self {
        Self::mono(c, 0)
    }
    /// c * t^e
    pub fn mono(c: Kx, e: i64) -> Self {
        let k = c.field();
        let mut terms = BTreeMap::new();
        if !c.is_zero() {
            terms.insert(e, c);
        }
        Ls { k, terms }
    }
    pub fn t_pow(k: Field, e: i64) -> Self {
        Self::mono(k.one(), e)
    }
    pub fn int(k: Field, n: i64) -> Self {
        Self::constant(k.int(n))
    }
    pub fn from_terms(k: Field, it: impl IntoIterator<Item = (i64, Kx)>) -> Self {
        let mut s = Ls::zero(k);
        for (e, c) in it {
            s.add_term(e, &c);
        }
        s
    }
    fn add_term(&mut self, e: i64, c: &Kx) {
        if c.is_zero() {
            return;
        }
        let v = match self.terms.get(&e) {
            Some(x) => x.add(c),
            None => c.clone(),
        };
        if v.is_zero() {
            self.terms.remove(&e);
        } else {
            self.terms.insert(e, v);
        }
    }
    pub fn field(&self) -> Field {
        self.k
    }
    pub fn terms(&self) -> impl Iterator<Item = (i64, &Kx)> {
        self.terms.iter().map(|(e, c)| (*e, c))
    }
    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }
    /// Valuation; None for 0.
    pub fn val(&self) -> Option<i64> {
        self.terms.keys().next().copied()
    }
    /// Leading (angular) coefficient; 0 for 0.
    pub fn ac(&self) -> Kx {
        self.terms.values().next().cloned().unwrap_or_else(|| self.k.zero())
    }
    pub fn coeff(&self, e: i64) -> Kx {
        self.terms.get(&e).cloned().unwrap_or_else(|| self.k.zero())
    }
    pub fn max_exp(&self) -> Option<i64> {
        self.terms.keys().next_back().copied()
    }
    /// Residue of an element of valuation >= 0.
    pub fn res(&self) -> Result<Kx> {
        match self.val() {
            Some(v) if v < 0 => Err(MvError::DomainError(format!("res of element of valuation {v}"))),
            _ => Ok(self.coeff(0)),
        }
    }
    pub fn add(&self, o: &Ls) -> Ls {
        let mut s = self.clone();
        for (e, c) in &o.terms {
            s.add_term(*e, c);
        }
        s
    }
    pub fn neg(&self) -> Ls {
        Ls { k: self.k, terms: self.terms.iter().map(|(e, c)| (*e, c.neg())).collect() }
    }
    pub fn sub(&self, o: &Ls) -> Ls {
        self.add(&o.neg())
    }
    pub fn mul(&self, o: &Ls) -> Ls {
        let mut s = Ls::zero(self.k);
        for (e1, c1) in &self.terms {
            for (e2, c2) in &o.terms {
                s.add_term(e1 + e2, &c1.mul(c2));
            }
        }
        s
    }
    pub fn scale(&self, c: &Kx) -> Ls {
        let mut s = Ls::zero(self.k);
        for (e, x) in &self.terms {
            s.add_term(*e, &x.mul(c));
        }
        s
    }
    /// Multiply by t^e.
    pub fn shift(&self, e: i64) -> Ls {
        Ls { k: self.k, terms: self.terms.iter().map(|(x, c)| (x + e, c.clone())).collect() }
    }
    /// Keep terms of exponent < e.
    pub fn truncate(&self, e: i64) -> Ls {
        Ls { k: self.k, terms: self.terms.range(..e).map(|(x, c)| (*x, c.clone())).collect() }
    }
    pub fn pow(&self, n: u32) -> Ls {
        (0..n).fold(Ls::one(self.k), |a, _| a.mul(self))
    }
    /// Inverse when the element is a monomial.
    pub fn inv_mono(&self) -> Option<Ls> {
        if self.terms.len() != 1 {
            return None;
        }
        let (e, c) = self.terms.iter().next().expect("one term");
        Some(Ls::mono(c.inv()?, -e))
    }
    /// Series inverse to absolute precision `prec` (exponents < prec).
    pub fn inv_series(&self, prec: i64) -> Result<Ls> {
        let v = self.val().ok_or_else(|| MvError::DomainError("inverse of 0".into()))?;
        let a0inv = self.ac().inv().expect("nonzero");
        // x = t^{-v} * sum b_i t^i with (self t^{-v}) * sum b_i t^i = 1
        let u = self.shift(-v);
        let n = prec + v;
        let mut b: Vec<Kx> = vec![];
        for i in 0..n.max(0) {
            let mut s = if i == 0 { self.k.one() } else { self.k.zero() };
            for (j, bj) in b.iter().enumerate() {
                s = s.sub(&u.coeff(i - j as i64).mul(bj));
            }
            b.push(s.mul(&a0inv));
        }
        Ok(Ls::from_terms(self.k, b.into_iter().enumerate().map(|(i, c)| (i as i64 - v, c))))
    }

    /// Parse text such as `1 + 2*t^3 - t^-1`.
    pub fn parse(s: &str, k: Field) -> Result<Ls> {
        let s: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        if s.is_empty() {
            return Err(MvError::Usage("empty series".into()));
        }
        let mut out = Ls::zero(k);
        let bytes: Vec<char> = s.chars().collect();
        let mut i = 0;
        while i < bytes.len() {
            let mut sign = 1i64;
            if bytes[i] == '+' || bytes[i] == '-' {
                if bytes[i] == '-' {
                    sign = -1;
                }
                i += 1;
            }
            let start = i;
            while i < bytes.len() && !((bytes[i] == '+' || bytes[i] == '-') && i > start && bytes[i - 1] != '^') {
                i += 1;
            }
            let term: String = bytes[start..i].iter().collect();
            let (coef, e) = parse_monomial(&term, k)?;
            out.add_term(e, &coef.mul(&k.int(sign)));
        }
        Ok(out)
    }
}

fn parse_monomial(term: &str, k: Field) -> Result<(Kx, i64)> {
    let bad = || MvError::Usage(format!("bad series term '{term}'"));
    if term.is_empty() {
        return Err(bad());
    }
    let (c, tpart) = match term.find('t') {
        None => (term, None),
        Some(p) => {
            let c = term[..p].trim_end_matches('*');
            (c, Some(&term[p + 1..]))
        }
    };
    let coef = if c.is_empty() { k.one() } else { parse_kconst(c, k).map_err(|_| bad())? };
    let e = match tpart {
        None => 0,
        Some("") => 1,
        Some(rest) => {
            let rest = rest.strip_prefix('^').ok_or_else(bad)?;
            let rest = rest.trim_start_matches('(').trim_end_matches(')');
            rest.parse::<i64>().map_err(|_| bad())?
        }
    };
    Ok((coef, e))
}

impl Ring for Ls {
    fn zero_like(&self) -> Self {
        Ls::zero(self.k)
    }
    fn one_like(&self) -> Self {
        Ls::one(self.k)
    }
    fn int_like(&self, n: i64) -> Self {
        Ls::int(self.k, n)
    }
    fn is_zero_el(&self) -> bool {
        self.is_zero()
    }
    fn radd(&self, o: &Self) -> Self {
        self.add(o)
    }
    fn rsub(&self, o: &Self) -> Self {
        self.sub(o)
    }
    fn rmul(&self, o: &Self) -> Self {
        self.mul(o)
    }
    fn rneg(&self) -> Self {
        self.neg()
    }
    fn rinv(&self) -> Option<Self> {
        self.inv_mono()
    }
}

impl fmt::Display for Ls {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        for (e, c) in &self.terms {
            let s = c.to_string();
            let (neg, mag) = match s.strip_prefix('-') {
                Some(m) => (true, m.to_string()),
                None => (false, s),
            };
            if first {
                if neg {
                    write!(f, "-")?;
                }
            } else {
                write!(f, "{}", if neg { " - " } else { " + " })?;
            }
            first = false;
            let mag = if mag.contains('/') && *e != 0 { format!("({mag})") } else { mag };
            match (*e, mag.as_str()) {
                (0, m) => write!(f, "{m}")?,
                (1, "1") => write!(f, "t")?,
                (1, m) => write!(f, "{m}*t")?,
                (e, "1") => write!(f, "t^{e}")?,
                (e, m) => write!(f, "{m}*t^{e}")?,
            }
        }
        Ok(())
    }
}

impl fmt::Debug for Ls {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

/// Polynomial over K with exact coefficients.
pub type KPoly = Poly<Ls>;

/// Render a KPoly in the named variable.
pub fn render_kpoly(p: &KPoly, var: &str) -> String {
    if p.is_zero() {
        return "0".into();
    }
    let mut parts = vec![];
    for (i, c) in p.coeffs().iter().enumerate().rev() {
        if c.is_zero() {
            continue;
        }
        let cs = c.to_string();
        let mono = match i {
            0 => String::new(),
            1 => var.to_string(),
            _ => format!("{var}^{i}"),
        };
        parts.push(if i == 0 {
            format!("({cs})")
        } else if cs == "1" {
            mono
        } else {
            format!("({cs})*{mono}")
        });
    }
    parts.join(" + ")
}

// ---------------------------------------------------------------------------
// precision-tracked series

/// Element of k((t)) known modulo t^prec (prec None: exact).
#[derive(Clone, Debug, PartialEq)]
pub struct SeriesElem {
    pub digits: Ls,
    pub prec: Option<i64>,
}

impl SeriesElem {
    pub fn exact(x: Ls) -> Self {
        SeriesElem { digits: x, prec: None }
    }
    /// x + O(t^prec)
    pub fn truncated(x: Ls, prec: i64) -> Self {
        SeriesElem { digits: x.truncate(prec), prec: Some(prec) }
    }
    pub fn is_exact(&self) -> bool {
        self.prec.is_none()
    }
    /// Valuation; None means the element is exactly zero.
    pub fn val(&self) -> Result<Option<i64>> {
        match (self.digits.val(), self.prec) {
            (Some(v), _) => Ok(Some(v)),
            (None, None) => Ok(None),
            (None, Some(_)) => Err(MvError::PrecisionLoss),
        }
    }
    pub fn ac(&self) -> Result<Kx> {
        match self.val()? {
            Some(_) => Ok(self.digits.ac()),
            None => Ok(self.digits.field().zero()),
        }
    }
    pub fn res(&self) -> Result<Kx> {
        if let Some(p) = self.prec {
            if p <= 0 {
                return Err(MvError::PrecisionLoss);
            }
        }
        if let Some(v) = self.digits.val() {
            if v < 0 {
                return Err(MvError::DomainError(format!("res of element of valuation {v}")));
            }
        }
        Ok(self.digits.coeff(0))
    }
    fn min_prec(a: Option<i64>, b: Option<i64>) -> Option<i64> {
        match (a, b) {
            (Some(x), Some(y)) => Some(x.min(y)),
            (x, None) => x,
            (None, y) => y,
        }
    }
    pub fn add(&self, o: &Self) -> Self {
        let p = Self::min_prec(self.prec, o.prec);
        let d = self.digits.add(&o.digits);
        SeriesElem { digits: p.map_or(d.clone(), |p| d.truncate(p)), prec: p }
    }
    pub fn neg(&self) -> Self {
        SeriesElem { digits: self.digits.neg(), prec: self.prec }
    }
    pub fn sub(&self, o: &Self) -> Self {
        self.add(&o.neg())
    }
    pub fn mul(&self, o: &Self) -> Self {
        // (a + O(t^pa))(b + O(t^pb)) = ab + O(t^{min(va+pb, vb+pa)})
        let pa = self.prec.map(|p| p + o.digits.val().unwrap_or(o.prec.unwrap_or(i64::MAX / 4)));
        let pb = o.prec.map(|p| p + self.digits.val().unwrap_or(self.prec.unwrap_or(i64::MAX / 4)));
        let p = Self::min_prec(pa, pb);
        let d = self.digits.mul(&o.digits);
        SeriesElem { digits: p.map_or(d.clone(), |p| d.truncate(p)), prec: p }
    }
}

// ---------------------------------------------------------------------------
// k(t)

fn t_ord(p: &Poly<Kx>) -> Option<usize> {
    p.coeffs().iter().position(|c| !c.is_zero())
}

/// Element of the rational function field k(t), normalized with a monic denominator.
#[derive(Clone, Debug, PartialEq)]
pub struct Kq {
    num: Poly<Kx>,
    den: Poly<Kx>,
}

impl Kq {
    pub fn from_ls(x: &Ls) -> Kq {
        let k = x.field();
        let v = x.val().unwrap_or(0);
        let n = x.max_exp().unwrap_or(0);
        let lo = v.min(0);
        let coeffs: Vec<Kx> = (lo..=n.max(lo)).map(|e| x.coeff(e)).collect();
        let num = Poly::new(coeffs, k.zero());
        let den = Poly::monomial(k.one(), (-lo) as usize);
        Kq::make(num, den)
    }
    fn make(num: Poly<Kx>, den: Poly<Kx>) -> Kq {
        if num.is_zero() {
            let z = den.zero_el().clone();
            return Kq { num: Poly::zero(z.clone()), den: Poly::constant(z.one_like()) };
        }
        let g = num.gcd(&den);
        let num = num.div_exact(&g);
        let den = den.div_exact(&g);
        let l = den.lc().inv().expect("nonzero");
        Kq { num: num.scale(&l), den: den.scale(&l) }
    }
    pub fn val(&self) -> Option<i64> {
        Some(t_ord(&self.num)? as i64 - t_ord(&self.den).expect("nonzero den") as i64)
    }
    pub fn ac(&self) -> Kx {
        match (t_ord(&self.num), t_ord(&self.den)) {
            (Some(a), Some(b)) => self.num.coeff(a).mul(&self.den.coeff(b).inv().expect("nonzero")),
            _ => self.num.zero_el().clone(),
        }
    }
}

impl Ring for Kq {
    fn zero_like(&self) -> Self {
        let z = self.num.zero_el().clone();
        Kq { num: Poly::zero(z.clone()), den: Poly::constant(z.one_like()) }
    }
    fn one_like(&self) -> Self {
        self.int_like(1)
    }
    fn int_like(&self, n: i64) -> Self {
        let z = self.num.zero_el().clone();
        Kq::make(Poly::constant(z.int_like(n)), Poly::constant(z.one_like()))
    }
    fn is_zero_el(&self) -> bool {
        self.num.is_zero()
    }
    fn radd(&self, o: &Self) -> Self {
        Kq::make(self.num.mul(&o.den).add(&o.num.mul(&self.den)), self.den.mul(&o.den))
    }
    fn rsub(&self, o: &Self) -> Self {
        self.radd(&o.rneg())
    }
    fn rmul(&self, o: &Self) -> Self {
        Kq::make(self.num.mul(&o.num), self.den.mul(&o.den))
    }
    fn rneg(&self) -> Self {
        Kq { num: self.num.neg(), den: self.den.clone() }
    }
    fn rinv(&self) -> Option<Self> {
        if self.num.is_zero() {
            None
        } else {
            Some(Kq::make(self.den.clone(), self.num.clone()))
        }
    }
}

fn to_kq_poly(p: &KPoly, k: Field) -> Poly<Kq> {
    let z = Kq::from_ls(&Ls::zero(k));
    p.map(z, Kq::from_ls)
}

// ---------------------------------------------------------------------------
// balls and Newton polygons

/// Closed ball {y : min_i val(y_i - c_i) >= rad}.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Ball {
    pub center: Vec<Ls>,
    pub rad: i64,
}

impl Ball {
    pub fn new(center: Vec<Ls>, rad: i64) -> Self {
        Ball { center, rad }
    }
    pub fn contains(&self, y: &[Ls]) -> bool {
        y.iter().zip(&self.center).all(|(a, c)| a.sub(c).val().is_none_or(|v| v >= self.rad))
    }
    /// Ball inclusion self ⊆ o.
    pub fn subset_of(&self, o: &Ball) -> bool {
        self.rad >= o.rad && o.contains(&self.center)
    }
    pub fn dim(&self) -> usize {
        self.center.len()
    }
}

/// Slopes of the lower convex hull of (i, val c_i): root valuations with
/// multiplicities; None stands for the root 0 (valuation infinity).
pub fn newton_polygon(p: &KPoly) -> Vec<(Option<Ratio<i64>>, usize)> {
    let pts: Vec<(i64, i64)> = p
        .coeffs()
        .iter()
        .enumerate()
        .filter_map(|(i, c)| c.val().map(|v| (i as i64, v)))
        .collect();
    let mut out = vec![];
    if pts.is_empty() {
        return out;
    }
    if pts[0].0 > 0 {
        out.push((None, pts[0].0 as usize));
    }
    let mut i = 0;
    while i + 1 < pts.len() {
        // steepest descent from pts[i]: minimize slope (v_j - v_i)/(j - i), farthest on ties
        let (x0, y0) = pts[i];
        let mut best = i + 1;
        for j in i + 1..pts.len() {
            let (x, y) = pts[j];
            let (bx, by) = pts[best];
            // (y - y0)/(x - x0) <= (by - y0)/(bx - x0)
            if (y - y0) * (bx - x0) <= (by - y0) * (x - x0) {
                best = j;
            }
        }
        let (x1, y1) = pts[best];
        out.push((Some(Ratio::new(y0 - y1, x1 - x0)), (x1 - x0) as usize));
        i = best;
    }
    out
}

// ---------------------------------------------------------------------------
// the locus engine

/// Condition val h(x) >= a*r + b.
#[derive(Clone, Debug)]
pub struct LocusAtom {
    pub h: KPoly,
    pub a: i64,
    pub b: i64,
}

/// Guard m >= a*r + b.
#[derive(Clone, Copy, Debug)]
struct ValGuard {
    m: i64,
    a: i64,
    b: i64,
}

impl ValGuard {
    fn holds(&self, r: i64) -> bool {
        self.m >= self.a * r + self.b
    }
    /// Beyond this r the truth value is constant.
    fn settles(&self) -> i64 {
        if self.a == 0 {
            i64::MIN
        } else {
            if self.a > 0 {
                Integer::div_floor(&(self.m - self.b), &self.a) + 1
            } else {
                Integer::div_ceil(&(self.m - self.b), &self.a)
            }
        }
    }
}

/// Requirement val(u) >= ceil((a*r + beta)/e).
#[derive(Clone, Copy, Debug)]
struct Req {
    a: i64,
    beta: i64,
    e: i64,
}

impl Req {
    fn at(&self, r: i64) -> i64 {
        Integer::div_ceil(&(self.a * r + self.beta), &self.e)
    }
}

/// L^{-rho - max(c0, max_j req_j(r))} on r >= r0 where the guards hold.
fn closed_form(rho: i64, c0: i64, reqs: &[Req], guards: &[ValGuard], r0: i64) -> Result<MotFun> {
    let value = |r: i64| -> Option<i64> {
        if !guards.iter().all(|g| g.holds(r)) {
            return None;
        }
        Some(-rho - reqs.iter().map(|q| q.at(r)).fold(c0, i64::max))
    };
    // dominant requirement for large r: max slope, then max intercept, as rationals
    let dom = reqs.iter().copied().max_by(|p, q| {
        (Ratio::new(p.a, p.e), Ratio::new(p.beta, p.e)).cmp(&(Ratio::new(q.a, q.e), Ratio::new(q.beta, q.e)))
    });
    let mut rstar = r0;
    for g in guards {
        rstar = rstar.max(g.settles());
    }
    if let Some(d) = dom {
        for q in reqs {
            let ds = Ratio::new(d.a, d.e) - Ratio::new(q.a, q.e);
            let di = Ratio::new(q.beta, q.e) - Ratio::new(d.beta, d.e);
            if ds > Ratio::from_integer(0) {
                rstar = rstar.max((di / ds).ceil().to_integer());
            }
        }
        if d.a > 0 {
            rstar = rstar.max(Integer::div_ceil(&(c0 * d.e - d.beta), &d.a));
        }
    }
    if rstar - r0 > 20000 {
        return Err(MvError::Unsupported("locus breakpoints too far apart".into()));
    }
    let mut f = MotFun::zero(1);
    for r in r0..rstar {
        if let Some(e) = value(r) {
            f = f.add(&MotFun::geometric(Guard::range(Some(r), Some(r)), MotElem::one(), 0, e));
        }
    }
    if !guards.iter().all(|g| g.holds(rstar)) {
        return Ok(f);
    }
    match dom {
        Some(d) if d.a != 0 && d.at(rstar) >= c0 => {
            for s in 0..d.e {
                let delta = (-(d.a * s + d.beta)).rem_euclid(d.e);
                let exp = ExpForm { a: vec![-d.a], c: -(rho * d.e + d.beta + delta), den: d.e };
                f.pieces.push(crate::presburger::Piece {
                    guard: Guard::range_mod(Some(rstar), None, d.e, s),
                    atom: ClassAtom::point(),
                    coeff: MotElem::one(),
                    poly: IPoly::one(1),
                    exp,
                });
            }
        }
        _ => {
            let e = value(rstar).expect("guards hold");
            f = f.add(&MotFun::geometric(Guard::range(Some(rstar), None), MotElem::one(), 0, e));
        }
    }
    Ok(f)
}

fn times_cval(f: &MotFun, c: &CVal) -> Result<MotFun> {
    let mut out = MotFun::zero(f.n);
    for (atom, m) in c.terms() {
        out = out.add(&f.scale(m).mul_atom(atom)?);
    }
    Ok(out)
}

enum AtomKind {
    /// h vanishes identically
    Always,
    /// constant valuation m on the ball
    Const(i64),
    /// generic valuation m, residue polynomial
    Vanish { hu: KPoly, m: i64, pbar: Poly<Kx> },
}

fn classify(h: &KPoly, c: &Ls, rho: i64) -> AtomKind {
    let k = c.field();
    let hu = h.substitute_affine(c, &Ls::t_pow(k, rho));
    if hu.is_zero() {
        return AtomKind::Always;
    }
    let m = hu.coeffs().iter().filter_map(|x| x.val()).min().expect("nonzero");
    let pbar = residue_poly(&hu, m, k);
    if pbar.deg() == Some(0) {
        AtomKind::Const(m)
    } else {
        AtomKind::Vanish { hu, m, pbar }
    }
}

fn residue_poly(hu: &KPoly, m: i64, k: Field) -> Poly<Kx> {
    Poly::new(hu.coeffs().iter().map(|x| x.coeff(m)).collect(), k.zero())
}

/// Center-root shape: hu = u^e * G with G root-free on O. Returns (val of u^e coefficient, e).
fn center_root(hu: &KPoly) -> Option<(i64, i64)> {
    let cs = hu.coeffs();
    let e = cs.iter().position(|x| !x.is_zero())?;
    if e == 0 {
        return None;
    }
    let ve = cs[e].val()?;
    if cs.iter().skip(e + 1).all(|x| x.val().is_none_or(|v| v > ve)) {
        Some((ve, e as i64))
    } else {
        None
    }
}

/// Valuation of gcd's residue polynomial over k(t).
fn gcd_residue(hs: &[&KPoly], k: Field) -> Poly<Kx> {
    let mut g = to_kq_poly(hs[0], k);
    for h in &hs[1..] {
        g = g.gcd(&to_kq_poly(h, k));
    }
    let m = g.coeffs().iter().filter_map(|x| x.val()).min();
    match m {
        None => Poly::zero(k.zero()),
        Some(m) => Poly::new(
            g.coeffs().iter().map(|x| if x.val() == Some(m) { x.ac() } else { k.zero() }).collect(),
            k.zero(),
        ),
    }
}

/// Measure of {x in B(c, rho) : val h_j(x) >= a_j r + b_j for all j} as a function of r >= r0.
pub fn locus_measure(atoms: &[LocusAtom], c: &Ls, rho: i64, r0: i64, cap: usize) -> Result<MotFun> {
    locus_rec(atoms, c, rho, r0, 0, cap)
}

fn locus_rec(atoms: &[LocusAtom], c: &Ls, rho: i64, r0: i64, depth: usize, cap: usize) -> Result<MotFun> {
    if depth > cap {
        return Err(MvError::UnsupportedRamification(depth));
    }
    let k = c.field();
    let mut guards = vec![];
    let mut vanish = vec![];
    for at in atoms {
        match classify(&at.h, c, rho) {
            AtomKind::Always => {}
            AtomKind::Const(m) => guards.push(ValGuard { m, a: at.a, b: at.b }),
            AtomKind::Vanish { hu, m, pbar } => vanish.push((at, hu, m, pbar)),
        }
    }
    if vanish.is_empty() {
        return closed_form(rho, 0, &[], &guards, r0);
    }
    // all vanishing atoms root at the center with root-free cofactors
    let centers: Vec<_> = vanish.iter().map(|(_, hu, _, _)| center_root(hu)).collect();
    if centers.iter().all(|x| x.is_some()) {
        let reqs: Vec<Req> = vanish
            .iter()
            .zip(&centers)
            .map(|((at, _, _, _), cr)| {
                let (v, e) = cr.expect("checked");
                Req { a: at.a, beta: at.b - v, e }
            })
            .collect();
        return closed_form(rho, 0, &reqs, &guards, r0);
    }
    // residue classes
    let prod = vanish.iter().fold(Poly::constant(k.one()), |acc, (_, _, _, p)| acc.mul(p));
    let rad = prod.radical();
    let roots: Vec<Kx> = rad.roots_in_k().into_iter().map(|(a, _)| a).collect();
    let irr = if k.is_finite() { Poly::constant(k.one()) } else { rad.irrational_part() };
    let mut zclass = CVal::int(roots.len() as i64);
    if irr.deg().unwrap_or(0) > 0 {
        zclass = zclass.add(&CVal::atom(ClassAtom::etale(irr.clone())?));
    }
    // non-root classes: every atom has its generic valuation
    let mut g_all = guards.clone();
    for (at, _, m, _) in &vanish {
        g_all.push(ValGuard { m: *m, a: at.a, b: at.b });
    }
    let base = closed_form(rho, 0, &[], &g_all, r0)?;
    let coeff = CVal::one().sub(&zclass.scale_signed(&MotElem::l_pow(-1)));
    let mut total = times_cval(&base, &coeff)?;
    for alpha in &roots {
        let mut g = guards.clone();
        let mut zero_set = vec![];
        for (at, hu, m, p) in &vanish {
            let mult = p.root_multiplicity(alpha);
            if mult == 0 {
                g.push(ValGuard { m: *m, a: at.a, b: at.b });
            } else {
                zero_set.push((at, hu, *m, mult));
            }
        }
        let simple = zero_set.iter().all(|z| z.3 == 1);
        let shared = zero_set.len() == 1 || {
            let hs: Vec<&KPoly> = zero_set.iter().map(|z| z.1).collect();
            gcd_residue(&hs, k).eval(alpha).is_zero()
        };
        if simple && shared {
            let reqs: Vec<Req> = zero_set.iter().map(|(at, _, m, _)| Req { a: at.a, beta: at.b - m, e: 1 }).collect();
            total = total.add(&closed_form(rho, 1, &reqs, &g, r0)?);
        } else {
            let c2 = c.add(&Ls::mono(alpha.clone(), rho));
            total = total.add(&locus_rec(atoms, &c2, rho + 1, r0, depth + 1, cap)?);
        }
    }
    if irr.deg().unwrap_or(0) > 0 {
        // refine the irrational part by which atoms vanish on it
        let mut parts: Vec<(Poly<Kx>, Vec<usize>)> = vec![(irr.clone(), vec![])];
        for (j, (_, _, _, p)) in vanish.iter().enumerate() {
            let mut next = vec![];
            for (h, js) in parts {
                let g = h.gcd(p);
                if g.deg().unwrap_or(0) > 0 {
                    let mut js2 = js.clone();
                    js2.push(j);
                    next.push((g.clone(), js2));
                }
                let rest = h.div_exact(&g).monic();
                if rest.deg().unwrap_or(0) > 0 {
                    next.push((rest, js));
                }
            }
            parts = next;
        }
        for (h, js) in parts {
            let mut g = guards.clone();
            for (j, (at, _, m, _)) in vanish.iter().enumerate() {
                if !js.contains(&j) {
                    g.push(ValGuard { m: *m, a: at.a, b: at.b });
                }
            }
            // simple roots: h coprime to p/h
            let simple = js.iter().all(|&j| {
                let p = &vanish[j].3;
                let q = p.div_exact(&h);
                q.gcd(&h).deg() == Some(0)
            });
            let shared = js.len() == 1 || {
                let hs: Vec<&KPoly> = js.iter().map(|&j| &vanish[j].1).collect();
                let gr = gcd_residue(&hs, k);
                !gr.is_zero() && gr.divrem(&h).is_some_and(|(_, r)| r.is_zero())
            };
            if !(simple && shared) {
                return Err(MvError::Unsupported(format!(
                    "coincident irrational residue roots of {}",
                    h.render("u")
                )));
            }
            let reqs: Vec<Req> = js.iter().map(|&j| Req { a: vanish[j].0.a, beta: vanish[j].0.b - vanish[j].2, e: 1 }).collect();
            let f = closed_form(rho, 1, &reqs, &g, r0)?;
            total = total.add(&f.mul_atom(&ClassAtom::etale(h)?)?);
        }
    }
    Ok(total.compact())
}

/// Measure of {x in D : val p(x) >= r} for r >= 0.
pub fn val_locus_measure(p: &KPoly, center: &Ls, rad: i64) -> Result<MotFun> {
    locus_measure(&[LocusAtom { h: p.clone(), a: 1, b: 0 }], center, rad, 0, DEFAULT_DEPTH_CAP)
}

/// Explicit finite union of disjoint balls equal to {x in B(c, rho) : val h_j(x) >= b_j}.
pub fn locus_balls(atoms: &[(KPoly, i64)], c: &Ls, rho: i64, cap: usize) -> Result<Vec<(Ls, i64)>> {
    let mut out = vec![];
    balls_rec(atoms, c, rho, 0, cap, &mut out)?;
    Ok(out)
}

fn balls_rec(atoms: &[(KPoly, i64)], c: &Ls, rho: i64, depth: usize, cap: usize, out: &mut Vec<(Ls, i64)>) -> Result<()> {
    if depth > cap {
        return Err(MvError::UnsupportedRamification(depth));
    }
    let k = c.field();
    let mut pending = vec![];
    for (h, b) in atoms {
        match classify(h, c, rho) {
            AtomKind::Always => {}
            AtomKind::Const(m) => {
                if m < *b {
                    return Ok(());
                }
            }
            AtomKind::Vanish { m, pbar, .. } => {
                if m < *b {
                    pending.push(pbar);
                }
            }
        }
    }
    if pending.is_empty() {
        out.push((c.clone(), rho));
        return Ok(());
    }
    // only common residue roots can satisfy every pending atom
    let g = pending.iter().skip(1).fold(pending[0].clone(), |acc, p| acc.gcd(p));
    if g.deg().unwrap_or(0) == 0 {
        return Ok(());
    }
    let rad = g.radical();
    if !k.is_finite() && rad.irrational_part().deg().unwrap_or(0) > 0 {
        return Err(MvError::Unsupported("locus contains balls around irrational points".into()));
    }
    for (alpha, _) in rad.roots_in_k() {
        balls_rec(atoms, &c.add(&Ls::mono(alpha, rho)), rho + 1, depth + 1, cap, out)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::k::Field;
    use num_rational::BigRational;
    use proptest::prelude::*;

    fn q() -> Field {
        Field::Q
    }
    fn ls(s: &str) -> Ls {
        Ls::parse(s, q()).unwrap()
    }
    fn kp(cs: &[&str]) -> KPoly {
        Poly::new(cs.iter().map(|s| ls(s)).collect(), Ls::zero(q()))
    }

    #[test]
    fn val_ac_res() {
        assert_eq!(ls("t^2 + t^3").val(), Some(2));
        assert_eq!(ls("3*t^-1 + 1").ac(), q().int(3));
        let z = SeriesElem::truncated(Ls::zero(q()), 5);
        assert_eq!(z.val(), Err(MvError::PrecisionLoss));
        assert_eq!(SeriesElem::exact(ls("1 + t")).res().unwrap(), q().one());
        assert!(ls("t^-1").res().is_err());
    }

    #[test]
    fn parse_print() {
        let x = ls("1 + 2*t^3 - t^-1");
        assert_eq!(x.coeff(-1), q().int(-1));
        assert_eq!(x.coeff(3), q().int(2));
        assert_eq!(Ls::parse(&x.to_string(), q()).unwrap(), x);
        assert_eq!(ls("-1/2*t").coeff(1), parse_kconst("-1/2", q()).unwrap());
    }

    #[test]
    fn series_inverse() {
        let x = ls("1 - t");
        let inv = x.inv_series(6).unwrap();
        assert_eq!(inv, ls("1 + t + t^2 + t^3 + t^4 + t^5"));
        let prod = SeriesElem::exact(x).mul(&SeriesElem::truncated(inv, 6));
        assert_eq!(prod.digits, Ls::one(q()));
        assert_eq!(prod.prec, Some(6));
    }

    #[test]
    fn newton() {
        let half = Ratio::new(1, 2);
        assert_eq!(newton_polygon(&kp(&["-t", "0", "1"])), vec![(Some(half), 2)]);
        assert_eq!(newton_polygon(&kp(&["-t^2", "0", "1"])), vec![(Some(Ratio::from_integer(1)), 2)]);
        assert_eq!(newton_polygon(&kp(&["-1", "1"])), vec![(Some(Ratio::from_integer(0)), 1)]);
        assert_eq!(newton_polygon(&kp(&["0", "0", "1"])), vec![(None, 2)]);
    }

    fn at(f: &MotFun, r: i64, qv: i64) -> BigRational {
        f.eval1(r).eval_at(&BigRational::from_integer(qv.into())).unwrap()
    }

    #[test]
    fn locus_examples() {
        let z = Ls::zero(q());
        let f = val_locus_measure(&kp(&["0", "1"]), &z, 0).unwrap();
        for r in 0..6 {
            assert_eq!(f.eval1(r), CVal::scalar(MotElem::l_pow(-r)));
        }
        let f = val_locus_measure(&kp(&["0", "0", "1"]), &z, 0).unwrap();
        for r in 0..8 {
            assert_eq!(f.eval1(r), CVal::scalar(MotElem::l_pow(-((r + 1) / 2))));
        }
        let f = val_locus_measure(&kp(&["0", "-1", "1"]), &z, 0).unwrap();
        assert_eq!(f.eval1(0), CVal::one());
        for r in 1..6 {
            assert_eq!(f.eval1(r), CVal::scalar(MotElem::mono(2, -r)));
        }
    }

    #[test]
    fn locus_irrational() {
        // x^2 - 2 over Q: [x^2-2] L^{-r} for r >= 1
        let z = Ls::zero(q());
        let f = val_locus_measure(&kp(&["-2", "0", "1"]), &z, 0).unwrap();
        let a = ClassAtom::etale_str("x^2 - 2", q()).unwrap();
        assert_eq!(f.eval1(3), CVal::term(a, MotElem::l_pow(-3)));
        assert_eq!(f.eval1(0), CVal::one());
        // x^2 - t : 1, L^-1, then empty
        let f = val_locus_measure(&kp(&["-t", "0", "1"]), &z, 0).unwrap();
        assert_eq!(f.eval1(1), CVal::scalar(MotElem::l_pow(-1)));
        assert_eq!(f.eval1(2), CVal::zero());
        assert_eq!(at(&f, 0, 5), BigRational::from_integer(1.into()));
    }

    #[test]
    fn shared_root_atoms() {
        // val x >= r and val 2x >= r+1 share the root 0
        let z = Ls::zero(q());
        let atoms = [
            LocusAtom { h: kp(&["0", "1"]), a: 1, b: 0 },
            LocusAtom { h: kp(&["0", "2"]), a: 1, b: 1 },
        ];
        let f = locus_measure(&atoms, &z, 0, 0, 32).unwrap();
        for r in 0..5 {
            assert_eq!(f.eval1(r), CVal::scalar(MotElem::l_pow(-(r + 1))));
        }
        // distinct roots 0 and t: val x >= r, val(x - t) >= r
        let atoms = [
            LocusAtom { h: kp(&["0", "1"]), a: 1, b: 0 },
            LocusAtom { h: kp(&["-t", "1"]), a: 1, b: 0 },
        ];
        let f = locus_measure(&atoms, &z, 0, 0, 32).unwrap();
        assert_eq!(f.eval1(1), CVal::scalar(MotElem::l_pow(-1)));
        assert_eq!(f.eval1(2), CVal::zero());
    }

    #[test]
    fn explicit_balls() {
        let z = Ls::zero(q());
        // val(x^2 - x) >= 2 in O: balls B(0,2) and B(1,2)
        let b = locus_balls(&[(kp(&["0", "-1", "1"]), 2)], &z, 0, 32).unwrap();
        assert_eq!(b.len(), 2);
        assert!(b.iter().all(|(_, r)| *r == 2));
    }

    fn arb_ls() -> impl Strategy<Value = Ls> {
        proptest::collection::vec((-3i64..4, -3i64..4), 0..4)
            .prop_map(|v| Ls::from_terms(Field::Q, v.into_iter().map(|(e, c)| (e, Field::Q.int(c)))))
    }

    proptest! {
        #[test]
        fn ultrametric(a in arb_ls(), b in arb_ls()) {
            let s = a.add(&b);
            match (a.val(), b.val(), s.val()) {
                (Some(x), Some(y), vs) => {
                    prop_assert!(vs.is_none_or(|v| v >= x.min(y)));
                    if x != y { prop_assert_eq!(vs, Some(x.min(y))); }
                }
                (None, _, vs) => prop_assert_eq!(vs, b.val()),
                (_, None, vs) => prop_assert_eq!(vs, a.val()),
            }
        }

        #[test]
        fn slopes_sum(cs in proptest::collection::vec(arb_ls(), 2..5)) {
            let p = Poly::new(cs, Ls::zero(Field::Q));
            if let (Some(v0), Some(d)) = (p.coeff(0).val(), p.deg()) {
                if d >= 1 {
                    let vn = p.lc().val().unwrap();
                    let s: Ratio<i64> = newton_polygon(&p).iter().map(|(s, m)| s.unwrap() * Ratio::from_integer(*m as i64)).sum();
                    prop_assert_eq!(s, Ratio::from_integer(v0 - vn));
                }
            }
        }
    }
}
