//! Residue fields k (the rationals or a small finite field) and dense
//! univariate polynomials over any coefficient ring used in the crate.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::{Mutex, OnceLock};

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{MvError, Result};

/// Addition/multiplication tables of F_q, q = p^deg <= 256.
pub struct Gf {
    pub q: u32,
    pub p: u32,
    pub deg: u32,
    add: Vec<u16>,
    mul: Vec<u16>,
    neg: Vec<u16>,
    inv: Vec<u16>,
}

impl Gf {
    #[inline]
    pub fn add(&self, a: u16, b: u16) -> u16 {
        self.add[a as usize * self.q as usize + b as usize]
    }
    #[inline]
    pub fn mul(&self, a: u16, b: u16) -> u16 {
        self.mul[a as usize * self.q as usize + b as usize]
    }
    #[inline]
    pub fn neg(&self, a: u16) -> u16 {
        self.neg[a as usize]
    }
    #[inline]
    pub fn sub(&self, a: u16, b: u16) -> u16 {
        self.add(a, self.neg(b))
    }
    /// Inverse; 0 maps to 0.
    #[inline]
    pub fn inv(&self, a: u16) -> u16 {
        self.inv[a as usize]
    }
    pub fn from_i64(&self, n: i64) -> u16 {
        n.rem_euclid(self.p as i64) as u16
    }
    /// p-th root (inverse Frobenius).
    pub fn pth_root(&self, a: u16) -> u16 {
        // a^(q/p)
        let mut r = 1u16;
        for _ in 0..(self.q / self.p) {
            r = self.mul(r, a);
        }
        if a == 0 {
            0
        } else {
            r
        }
    }
}

fn factor_prime_power(q: u32) -> Option<(u32, u32)> {
    if q < 2 {
        return None;
    }
    let mut p = 2;
    while p * p <= q && !q.is_multiple_of(p) {
        p += 1;
    }
    if !q.is_multiple_of(p) {
        p = q;
    }
    let (mut r, mut d) = (q, 0);
    while r % p == 0 {
        r /= p;
        d += 1;
    }
    if r == 1 {
        Some((p, d))
    } else {
        None
    }
}

// polynomials over F_p as little-endian digit vectors
fn fp_polymulmod(a: &[u32], b: &[u32], m: &[u32], p: u32) -> Vec<u32> {
    let d = m.len() - 1;
    let mut prod = vec![0u32; a.len() + b.len()];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            prod[i + j] = (prod[i + j] + x * y) % p;
        }
    }
    for i in (d..prod.len()).rev() {
        let c = prod[i];
        if c != 0 {
            for j in 0..=d {
                let idx = i - d + j;
                prod[idx] = (prod[idx] + p - (c * m[j]) % p) % p;
            }
        }
    }
    prod.truncate(d);
    prod.resize(d, 0);
    prod
}

fn fp_irreducible(p: u32, d: u32) -> Vec<u32> {
    if d == 1 {
        return vec![0, 1];
    }
    let count = p.pow(d);
    'cand: for code in 0..count {
        let mut m: Vec<u32> = (0..d).map(|i| (code / p.pow(i)) % p).collect();
        m.push(1);
        if m[0] == 0 {
            continue;
        }
        // trial division by monic polys of degree 1..=d/2
        for e in 1..=d / 2 {
            for c2 in 0..p.pow(e) {
                let mut f: Vec<u32> = (0..e).map(|i| (c2 / p.pow(i)) % p).collect();
                f.push(1);
                let mut r = m.clone();
                for i in (e as usize..r.len()).rev() {
                    let c = r[i];
                    if c != 0 {
                        for j in 0..=e as usize {
                            let idx = i - e as usize + j;
                            r[idx] = (r[idx] + p - (c * f[j]) % p) % p;
                        }
                    }
                }
                if r[..e as usize].iter().all(|&x| x == 0) {
                    continue 'cand;
                }
            }
        }
        return m;
    }
    unreachable!("irreducible polynomials exist in every degree")
}

fn build_gf(q: u32) -> Result<Gf> {
    let (p, deg) = factor_prime_power(q)
        .ok_or_else(|| MvError::Usage(format!("{q} is not a prime power")))?;
    if q > 256 {
        return Err(MvError::Usage(format!("F_{q}: only q <= 256 is supported")));
    }
    let m = fp_irreducible(p, deg);
    let digits = |a: u32| -> Vec<u32> { (0..deg).map(|i| (a / p.pow(i)) % p).collect() };
    let code = |v: &[u32]| -> u32 { v.iter().enumerate().map(|(i, &x)| x * p.pow(i as u32)).sum() };
    let qs = q as usize;
    let mut add = vec![0u16; qs * qs];
    let mut mul = vec![0u16; qs * qs];
    for a in 0..q {
        let da = digits(a);
        for b in 0..q {
            let db = digits(b);
            let s: Vec<u32> = da.iter().zip(&db).map(|(x, y)| (x + y) % p).collect();
            add[a as usize * qs + b as usize] = code(&s) as u16;
            mul[a as usize * qs + b as usize] = code(&fp_polymulmod(&da, &db, &m, p)) as u16;
        }
    }
    let mut neg = vec![0u16; qs];
    let mut inv = vec![0u16; qs];
    for a in 0..qs {
        for b in 0..qs {
            if add[a * qs + b] == 0 {
                neg[a] = b as u16;
            }
            if mul[a * qs + b] == 1 {
                inv[a] = b as u16;
            }
        }
    }
    Ok(Gf { q, p, deg, add, mul, neg, inv })
}

/// Shared table for F_q (built once, kept for the process lifetime).
pub fn gf(q: u32) -> Result<&'static Gf> {
    static REG: OnceLock<Mutex<HashMap<u32, &'static Gf>>> = OnceLock::new();
    let reg = REG.get_or_init(|| Mutex::new(HashMap::new()));
    let mut g = reg.lock().expect("gf registry poisoned");
    if let Some(t) = g.get(&q) {
        return Ok(t);
    }
    let t: &'static Gf = Box::leak(Box::new(build_gf(q)?));
    g.insert(q, t);
    Ok(t)
}

/// The residue field k.
#[derive(Clone, Copy)]
pub enum Field {
    Q,
    F(&'static Gf),
}

impl PartialEq for Field {
    fn eq(&self, o: &Self) -> bool {
        self.q() == o.q()
    }
}
impl Eq for Field {}
impl std::hash::Hash for Field {
    fn hash<H: Hasher>(&self, h: &mut H) {
        self.q().hash(h)
    }
}
impl PartialOrd for Field {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Field {
    fn cmp(&self, o: &Self) -> Ordering {
        self.q().cmp(&o.q())
    }
}

impl fmt::Debug for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Field::Q => write!(f, "Q"),
            Field::F(g) => write!(f, "F{}", g.q),
        }
    }
}

impl Field {
    /// Field size, 0 for Q.
    pub fn q(&self) -> u32 {
        match self {
            Field::Q => 0,
            Field::F(g) => g.q,
        }
    }
    pub fn is_finite(&self) -> bool {
        matches!(self, Field::F(_))
    }
    pub fn finite(q: u32) -> Result<Field> {
        Ok(Field::F(gf(q)?))
    }
    /// Accepts `Q`, `F7`, `F_7`, `F<7>`, `GF(7)`.
    pub fn parse(s: &str) -> Result<Field> {
        let s = s.trim();
        if s == "Q" || s == "QQ" {
            return Ok(Field::Q);
        }
        let digits: String = s.chars().filter(|c| c.is_ascii_digit()).collect();
        let head: String = s.chars().filter(|c| c.is_ascii_alphabetic()).collect();
        if (head == "F" || head == "GF") && !digits.is_empty() {
            let q: u32 = digits.parse().map_err(|_| MvError::Usage(format!("bad field {s}")))?;
            return Field::finite(q);
        }
        Err(MvError::Usage(format!("unknown residue field '{s}' (expected Q or F<q>)")))
    }
    pub fn char_p(&self) -> u32 {
        match self {
            Field::Q => 0,
            Field::F(g) => g.p,
        }
    }
    pub fn zero(&self) -> Kx {
        self.int(0)
    }
    pub fn one(&self) -> Kx {
        self.int(1)
    }
    pub fn int(&self, n: i64) -> Kx {
        match self {
            Field::Q => Kx::Q(BigRational::from_integer(BigInt::from(n))),
            Field::F(g) => Kx::F(g, g.from_i64(n)),
        }
    }
    pub fn big(&self, n: &BigInt) -> Kx {
        match self {
            Field::Q => Kx::Q(BigRational::from_integer(n.clone())),
            Field::F(g) => {
                let r = n.mod_floor(&BigInt::from(g.p)).to_i64().unwrap_or(0);
                Kx::F(g, g.from_i64(r))
            }
        }
    }
    pub fn rational(&self, r: &BigRational) -> Result<Kx> {
        match self {
            Field::Q => Ok(Kx::Q(r.clone())),
            Field::F(_) => {
                let d = self.big(r.denom());
                if d.is_zero() {
                    return Err(MvError::Usage(format!(
                        "constant {r} is not defined over {self}"
                    )));
                }
                Ok(self.big(r.numer()).mul(&d.inv().expect("nonzero")))
            }
        }
    }
    /// All elements (finite fields only).
    pub fn elements(&self) -> Vec<Kx> {
        match self {
            Field::Q => vec![],
            Field::F(g) => (0..g.q as u16).map(|v| Kx::F(g, v)).collect(),
        }
    }
}

/// An element of k.
#[derive(Clone)]
pub enum Kx {
    Q(BigRational),
    F(&'static Gf, u16),
}

impl PartialEq for Kx {
    fn eq(&self, o: &Self) -> bool {
        match (self, o) {
            (Kx::Q(a), Kx::Q(b)) => a == b,
            (Kx::F(g, a), Kx::F(h, b)) => g.q == h.q && a == b,
            _ => false,
        }
    }
}
impl Eq for Kx {}
impl Hash for Kx {
    fn hash<H: Hasher>(&self, h: &mut H) {
        match self {
            Kx::Q(a) => {
                0u8.hash(h);
                a.hash(h)
            }
            Kx::F(g, a) => {
                1u8.hash(h);
                g.q.hash(h);
                a.hash(h)
            }
        }
    }
}
impl PartialOrd for Kx {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Kx {
    fn cmp(&self, o: &Self) -> Ordering {
        match (self, o) {
            (Kx::Q(a), Kx::Q(b)) => a.cmp(b),
            (Kx::F(_, a), Kx::F(_, b)) => a.cmp(b),
            (Kx::Q(_), Kx::F(..)) => Ordering::Less,
            (Kx::F(..), Kx::Q(_)) => Ordering::Greater,
        }
    }
}

impl fmt::Debug for Kx {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for Kx {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kx::Q(a) => write!(f, "{a}"),
            Kx::F(g, a) => {
                if g.deg == 1 {
                    write!(f, "{a}")
                } else {
                    write!(f, "[{a}]")
                }
            }
        }
    }
}

impl Kx {
    pub fn field(&self) -> Field {
        match self {
            Kx::Q(_) => Field::Q,
            Kx::F(g, _) => Field::F(g),
        }
    }
    pub fn is_zero(&self) -> bool {
        match self {
            Kx::Q(a) => a.is_zero(),
            Kx::F(_, a) => *a == 0,
        }
    }
    pub fn is_one(&self) -> bool {
        match self {
            Kx::Q(a) => a.is_one(),
            Kx::F(_, a) => *a == 1,
        }
    }
    pub fn add(&self, o: &Kx) -> Kx {
        match (self, o) {
            (Kx::Q(a), Kx::Q(b)) => Kx::Q(a + b),
            (Kx::F(g, a), Kx::F(_, b)) => Kx::F(g, g.add(*a, *b)),
            _ => panic!("mixed residue fields"),
        }
    }
    pub fn sub(&self, o: &Kx) -> Kx {
        match (self, o) {
            (Kx::Q(a), Kx::Q(b)) => Kx::Q(a - b),
            (Kx::F(g, a), Kx::F(_, b)) => Kx::F(g, g.sub(*a, *b)),
            _ => panic!("mixed residue fields"),
        }
    }
    pub fn mul(&self, o: &Kx) -> Kx {
        match (self, o) {
            (Kx::Q(a), Kx::Q(b)) => Kx::Q(a * b),
            (Kx::F(g, a), Kx::F(_, b)) => Kx::F(g, g.mul(*a, *b)),
            _ => panic!("mixed residue fields"),
        }
    }
    pub fn neg(&self) -> Kx {
        match self {
            Kx::Q(a) => Kx::Q(-a),
            Kx::F(g, a) => Kx::F(g, g.neg(*a)),
        }
    }
    pub fn inv(&self) -> Option<Kx> {
        if self.is_zero() {
            return None;
        }
        Some(match self {
            Kx::Q(a) => Kx::Q(a.recip()),
            Kx::F(g, a) => Kx::F(g, g.inv(*a)),
        })
    }
    pub fn pow(&self, mut e: u64) -> Kx {
        let mut base = self.clone();
        let mut acc = self.field().one();
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.mul(&base);
            }
            base = base.mul(&base);
            e >>= 1;
        }
        acc
    }
    pub fn as_rational(&self) -> Option<&BigRational> {
        match self {
            Kx::Q(a) => Some(a),
            _ => None,
        }
    }
}

/// Minimal commutative-ring interface used by [`Poly`].
pub trait Ring: Clone + PartialEq + fmt::Debug {
    fn zero_like(&self) -> Self;
    fn one_like(&self) -> Self;
    fn int_like(&self, n: i64) -> Self;
    fn is_zero_el(&self) -> bool;
    fn radd(&self, o: &Self) -> Self;
    fn rsub(&self, o: &Self) -> Self;
    fn rmul(&self, o: &Self) -> Self;
    fn rneg(&self) -> Self;
    /// Multiplicative inverse when it exists.
    fn rinv(&self) -> Option<Self>;
}

impl Ring for Kx {
    fn zero_like(&self) -> Self {
        self.field().zero()
    }
    fn one_like(&self) -> Self {
        self.field().one()
    }
    fn int_like(&self, n: i64) -> Self {
        self.field().int(n)
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
        self.inv()
    }
}

/// Dense polynomial, little-endian coefficients, no trailing zeros.
/// `z` is a zero of the coefficient ring (carries the ring context).
#[derive(Clone)]
pub struct Poly<C: Ring> {
    c: Vec<C>,
    z: C,
}

impl<C: Ring> PartialEq for Poly<C> {
    fn eq(&self, o: &Self) -> bool {
        self.c == o.c
    }
}


impl<C: Ring + Eq> Eq for Poly<C> {}
impl<C: Ring> fmt::Debug for Poly<C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Poly{:?}", self.c)
    }
}

impl<C: Ring> Poly<C> {
    pub fn new(mut c: Vec<C>, z: C) -> Self {
        while c.last().is_some_and(|x| x.is_zero_el()) {
            c.pop();
        }
        Poly { c, z }
    }
    pub fn zero(z: C) -> Self {
        Poly { c: vec![], z }
    }
    pub fn constant(a: C) -> Self {
        let z = a.zero_like();
        Poly::new(vec![a], z)
    }
    /// The variable itself.
    pub fn var(z: C) -> Self {
        let one = z.one_like();
        Poly::new(vec![z.clone(), one], z)
    }
    pub fn monomial(a: C, e: usize) -> Self {
        let z = a.zero_like();
        let mut c = vec![z.clone(); e];
        c.push(a);
        Poly::new(c, z)
    }
    pub fn zero_el(&self) -> &C {
        &self.z
    }
    pub fn coeffs(&self) -> &[C] {
        &self.c
    }
    pub fn coeff(&self, i: usize) -> C {
        self.c.get(i).cloned().unwrap_or_else(|| self.z.clone())
    }
    pub fn is_zero(&self) -> bool {
        self.c.is_empty()
    }
    pub fn deg(&self) -> Option<usize> {
        if self.c.is_empty() {
            None
        } else {
            Some(self.c.len() - 1)
        }
    }
    /// Degree with -1 for zero.
    pub fn degi(&self) -> i64 {
        self.c.len() as i64 - 1
    }
    pub fn lc(&self) -> C {
        self.c.last().cloned().unwrap_or_else(|| self.z.clone())
    }
    pub fn add(&self, o: &Self) -> Self {
        let n = self.c.len().max(o.c.len());
        let v = (0..n).map(|i| self.coeff(i).radd(&o.coeff(i))).collect();
        Poly::new(v, self.z.clone())
    }
    pub fn sub(&self, o: &Self) -> Self {
        let n = self.c.len().max(o.c.len());
        let v = (0..n).map(|i| self.coeff(i).rsub(&o.coeff(i))).collect();
        Poly::new(v, self.z.clone())
    }
    pub fn neg(&self) -> Self {
        Poly::new(self.c.iter().map(|x| x.rneg()).collect(), self.z.clone())
    }
    pub fn mul(&self, o: &Self) -> Self {
        if self.is_zero() || o.is_zero() {
            return Poly::zero(self.z.clone());
        }
        let mut v = vec![self.z.clone(); self.c.len() + o.c.len() - 1];
        for (i, a) in self.c.iter().enumerate() {
            if a.is_zero_el() {
                continue;
            }
            for (j, b) in o.c.iter().enumerate() {
                v[i + j] = v[i + j].radd(&a.rmul(b));
            }
        }
        Poly::new(v, self.z.clone())
    }
    pub fn scale(&self, a: &C) -> Self {
        Poly::new(self.c.iter().map(|x| x.rmul(a)).collect(), self.z.clone())
    }
    pub fn shift(&self, e: usize) -> Self {
        if self.is_zero() {
            return self.clone();
        }
        let mut v = vec![self.z.clone(); e];
        v.extend(self.c.iter().cloned());
        Poly::new(v, self.z.clone())
    }
    pub fn pow(&self, e: u32) -> Self {
        let mut acc = Poly::constant(self.z.one_like());
        for _ in 0..e {
            acc = acc.mul(self);
        }
        acc
    }
    pub fn eval(&self, x: &C) -> C {
        let mut acc = self.z.clone();
        for a in self.c.iter().rev() {
            acc = acc.rmul(x).radd(a);
        }
        acc
    }
    pub fn deriv(&self) -> Self {
        let v = self
            .c
            .iter()
            .enumerate()
            .skip(1)
            .map(|(i, a)| a.rmul(&self.z.int_like(i as i64)))
            .collect();
        Poly::new(v, self.z.clone())
    }
    /// Substitute x = a + b*u, returning the polynomial in u.
    pub fn substitute_affine(&self, a: &C, b: &C) -> Self {
        let lin = Poly::new(vec![a.clone(), b.clone()], self.z.clone());
        let mut acc = Poly::zero(self.z.clone());
        for co in self.c.iter().rev() {
            acc = acc.mul(&lin).add(&Poly::constant(co.clone()));
        }
        acc
    }
    /// Composition self(g).
    pub fn compose(&self, g: &Self) -> Self {
        let mut acc = Poly::zero(self.z.clone());
        for co in self.c.iter().rev() {
            acc = acc.mul(g).add(&Poly::constant(co.clone()));
        }
        acc
    }
    pub fn map<D: Ring>(&self, z: D, f: impl Fn(&C) -> D) -> Poly<D> {
        Poly::new(self.c.iter().map(f).collect(), z)
    }
    /// Division with remainder; needs an invertible leading coefficient of `d`.
    pub fn divrem(&self, d: &Self) -> Option<(Self, Self)> {
        let dl = d.lc().rinv()?;
        let dd = d.deg()?;
        let mut r = self.clone();
        let mut q = vec![self.z.clone(); self.c.len().saturating_sub(dd) + 1];
        while let Some(rd) = r.deg() {
            if rd < dd {
                break;
            }
            let f = r.lc().rmul(&dl);
            q[rd - dd] = f.clone();
            let sub = d.scale(&f).shift(rd - dd);
            let mut nr = r.sub(&sub);
            // exact cancellation of the top coefficient
            if nr.c.len() > rd {
                nr.c.truncate(rd);
                nr = Poly::new(nr.c, self.z.clone());
            }
            r = nr;
        }
        Some((Poly::new(q, self.z.clone()), r))
    }
    pub fn monic(&self) -> Self {
        match self.lc().rinv() {
            Some(i) if !self.is_zero() => self.scale(&i),
            _ => self.clone(),
        }
    }
    /// Monic gcd (coefficients in a field).
    pub fn gcd(&self, o: &Self) -> Self {
        let (mut a, mut b) = (self.clone(), o.clone());
        while !b.is_zero() {
            let (_, r) = a.divrem(&b).expect("field coefficients");
            a = b;
            b = r;
        }
        a.monic()
    }
    /// Exact quotient (panics on non-divisibility in debug).
    pub fn div_exact(&self, d: &Self) -> Self {
        let (q, r) = self.divrem(d).expect("field coefficients");
        debug_assert!(r.is_zero(), "inexact polynomial division");
        q
    }
    /// Multiplicity of the root `a` (0 if not a root); the zero polynomial gives usize::MAX.
    pub fn root_multiplicity(&self, a: &C) -> usize {
        if self.is_zero() {
            return usize::MAX;
        }
        let lin = Poly::new(vec![a.rneg(), a.one_like()], self.z.clone());
        let mut p = self.clone();
        let mut m = 0;
        loop {
            let (q, r) = p.divrem(&lin).expect("monic divisor");
            if !r.is_zero() {
                return m;
            }
            m += 1;
            p = q;
        }
    }
}

impl Poly<Kx> {
    pub fn field(&self) -> Field {
        self.z.field()
    }
    /// Radical (product of distinct monic irreducible factors).
    pub fn radical(&self) -> Self {
        if self.deg().unwrap_or(0) == 0 {
            return Poly::constant(self.z.one_like());
        }
        let d = self.deriv();
        if d.is_zero() {
            // p-th power in characteristic p
            let Field::F(g) = self.field() else { unreachable!() };
            let p = g.p as usize;
            let v: Vec<Kx> = self
                .c
                .iter()
                .step_by(p)
                .map(|x| match x {
                    Kx::F(g, a) => Kx::F(g, g.pth_root(*a)),
                    _ => unreachable!(),
                })
                .collect();
            return Poly::new(v, self.z.clone()).radical();
        }
        let g = self.gcd(&d);
        if g.deg() == Some(0) {
            return self.monic();
        }
        let r1 = self.div_exact(&g).radical();
        let r2 = g.radical();
        let c = r1.gcd(&r2);
        r1.mul(&r2).div_exact(&c).monic()
    }
    /// Roots lying in k with multiplicities (exhaustive for F_q, rational-root test for Q).
    pub fn roots_in_k(&self) -> Vec<(Kx, usize)> {
        if self.deg().unwrap_or(0) == 0 {
            return vec![];
        }
        let cands: Vec<Kx> = match self.field() {
            Field::F(_) => self.field().elements(),
            Field::Q => rational_root_candidates(self),
        };
        let mut out = vec![];
        for a in cands {
            let m = self.root_multiplicity(&a);
            if m > 0 {
                out.push((a, m));
            }
        }
        out.sort_by(|a, b| a.0.cmp(&b.0));
        out.dedup_by(|a, b| a.0 == b.0);
        out
    }
    /// The part of the radical with no roots in k.
    pub fn irrational_part(&self) -> Self {
        let mut r = self.radical();
        for (a, _) in r.roots_in_k() {
            let lin = Poly::new(vec![a.neg(), self.z.one_like()], self.z.clone());
            r = r.div_exact(&lin);
        }
        r.monic()
    }
    /// Number of roots in F_q counted without multiplicity.
    pub fn count_roots_fq(&self) -> usize {
        self.roots_in_k().len()
    }
    pub fn is_squarefree(&self) -> bool {
        match self.deg() {
            None => false,
            Some(0) => true,
            Some(_) => {
                let d = self.deriv();
                !d.is_zero() && self.gcd(&d).deg() == Some(0)
            }
        }
    }
    /// Render in the variable `v`.
    pub fn render(&self, v: &str) -> String {
        if self.is_zero() {
            return "0".into();
        }
        let mut s = String::new();
        for (i, a) in self.c.iter().enumerate().rev() {
            if a.is_zero() {
                continue;
            }
            let (neg, mag) = match a {
                Kx::Q(r) if r.is_negative() => (true, Kx::Q(-r)),
                _ => (false, a.clone()),
            };
            if s.is_empty() {
                if neg {
                    s.push('-');
                }
            } else {
                s.push_str(if neg { " - " } else { " + " });
            }
            let mon = match i {
                0 => String::new(),
                1 => v.to_string(),
                _ => format!("{v}^{i}"),
            };
            if mon.is_empty() {
                s.push_str(&mag.to_string());
            } else if mag.is_one() {
                s.push_str(&mon);
            } else {
                s.push_str(&format!("{mag}*{mon}"));
            }
        }
        s
    }
}

fn divisors(n: &BigInt) -> Vec<BigInt> {
    let n = n.abs();
    if n.is_zero() {
        return vec![BigInt::one()];
    }
    let mut out = vec![];
    let mut d = BigInt::one();
    // coefficients in this crate stay small; plain trial division
    while &d * &d <= n {
        if (&n % &d).is_zero() {
            out.push(d.clone());
            out.push(&n / &d);
        }
        d += 1;
        if d > BigInt::from(2_000_000) {
            break;
        }
    }
    out.sort();
    out.dedup();
    out
}

fn rational_root_candidates(p: &Poly<Kx>) -> Vec<Kx> {
    // clear denominators
    let mut l = BigInt::one();
    for c in p.coeffs() {
        if let Kx::Q(r) = c {
            l = l.lcm(r.denom());
        }
    }
    let ints: Vec<BigInt> = p
        .coeffs()
        .iter()
        .map(|c| match c {
            Kx::Q(r) => (r * BigRational::from_integer(l.clone())).to_integer(),
            _ => unreachable!(),
        })
        .collect();
    let mut out = vec![Field::Q.zero()];
    let low = ints.iter().position(|x| !x.is_zero()).unwrap_or(0);
    let a0 = &ints[low];
    let an = ints.last().expect("nonzero");
    for num in divisors(a0) {
        for den in divisors(an) {
            let r = BigRational::new(num.clone(), den.clone());
            out.push(Kx::Q(r.clone()));
            out.push(Kx::Q(-r));
        }
    }
    out
}

/// Parse a residue-field constant such as `3`, `-2/5`.
pub fn parse_kconst(s: &str, k: Field) -> Result<Kx> {
    let s = s.trim();
    let r: BigRational = if let Some((a, b)) = s.split_once('/') {
        let a: BigInt = a.trim().parse().map_err(|_| MvError::Usage(format!("bad constant {s}")))?;
        let b: BigInt = b.trim().parse().map_err(|_| MvError::Usage(format!("bad constant {s}")))?;
        if b.is_zero() {
            return Err(MvError::Usage("zero denominator".into()));
        }
        BigRational::new(a, b)
    } else {
        BigRational::from_integer(
            s.parse().map_err(|_| MvError::Usage(format!("bad constant {s}")))?,
        )
    };
    k.rational(&r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f4_is_a_field() {
        let g = gf(4).unwrap();
        for a in 1..4u16 {
            assert_eq!(g.mul(a, g.inv(a)), 1);
        }
        // characteristic 2
        assert_eq!(g.add(3, 3), 0);
    }

    #[test]
    fn f9_distributive() {
        let g = gf(9).unwrap();
        for a in 0..9u16 {
            for b in 0..9u16 {
                for c in 0..9u16 {
                    assert_eq!(g.mul(a, g.add(b, c)), g.add(g.mul(a, b), g.mul(a, c)));
                }
            }
        }
    }

    #[test]
    fn non_prime_power_rejected() {
        assert!(Field::finite(6).is_err());
        assert!(Field::parse("F7").is_ok());
        assert!(Field::parse("F<9>").is_ok());
    }

    #[test]
    fn rational_roots_and_radical() {
        let q = Field::Q;
        // (u-1)^2 (u+2) (u^2-2)
        let u = Poly::var(q.zero());
        let l1 = u.sub(&Poly::constant(q.int(1)));
        let l2 = u.add(&Poly::constant(q.int(2)));
        let irr = u.mul(&u).sub(&Poly::constant(q.int(2)));
        let p = l1.mul(&l1).mul(&l2).mul(&irr);
        let r = p.roots_in_k();
        assert_eq!(r, vec![(q.int(-2), 1), (q.int(1), 2)]);
        assert_eq!(p.radical(), l1.mul(&l2).mul(&irr));
        assert_eq!(p.irrational_part(), irr);
    }

    #[test]
    fn radical_in_char_p() {
        let k = Field::finite(3).unwrap();
        let u = Poly::var(k.zero());
        // u^3 - 1 = (u-1)^3 over F3
        let p = u.pow(3).sub(&Poly::constant(k.one()));
        assert_eq!(p.radical(), u.sub(&Poly::constant(k.one())));
    }

    #[test]
    fn x2_minus_2_mod_7_and_3() {
        for (q, n) in [(7, 2), (3, 0)] {
            let k = Field::finite(q).unwrap();
            let u = Poly::var(k.zero());
            let p = u.mul(&u).sub(&Poly::constant(k.int(2)));
            assert_eq!(p.count_roots_fq(), n);
        }
    }
}
