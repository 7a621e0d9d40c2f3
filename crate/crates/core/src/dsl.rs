//! Text description language for definable sets, its AST, printer, and the
//! lowering to the cell normal form consumed by the geometric engines.
//!
//! ```text
//! # comment
//! field F3
//! graph(y = x^2, x in B(0,0)) | point(0, 1)
//! ```

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{MvError, Result};
use crate::k::{parse_kconst, Field, Kx, Poly};
use crate::series::{locus_balls, render_kpoly, Ball, KPoly, Ls, DEFAULT_DEPTH_CAP};

pub const VARS: [&str; 3] = ["x", "y", "z"];

/// Polynomial in x, y, z over k[t, 1/t].
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct MPoly {
    pub k: Field,
    pub terms: BTreeMap<[u32; 3], Ls>,
}

impl MPoly {
    pub fn zero(k: Field) -> Self {
        MPoly { k, terms: BTreeMap::new() }
    }
    pub fn constant(c: Ls) -> Self {
        let mut p = MPoly::zero(c.field());
        p.add_term([0; 3], c);
        p
    }
    pub fn var(k: Field, i: usize) -> Self {
        let mut e = [0; 3];
        e[i] = 1;
        let mut p = MPoly::zero(k);
        p.add_term(e, Ls::one(k));
        p
    }
    fn add_term(&mut self, e: [u32; 3], c: Ls) {
        let v = match self.terms.get(&e) {
            Some(x) => x.add(&c),
            None => c,
        };
        if v.is_zero() {
            self.terms.remove(&e);
        } else {
            self.terms.insert(e, v);
        }
    }
    pub fn add(&self, o: &MPoly) -> MPoly {
        let mut p = self.clone();
        for (e, c) in &o.terms {
            p.add_term(*e, c.clone());
        }
        p
    }
    pub fn neg(&self) -> MPoly {
        MPoly { k: self.k, terms: self.terms.iter().map(|(e, c)| (*e, c.neg())).collect() }
    }
    pub fn sub(&self, o: &MPoly) -> MPoly {
        self.add(&o.neg())
    }
    pub fn mul(&self, o: &MPoly) -> MPoly {
        let mut p = MPoly::zero(self.k);
        for (e1, c1) in &self.terms {
            for (e2, c2) in &o.terms {
                p.add_term([e1[0] + e2[0], e1[1] + e2[1], e1[2] + e2[2]], c1.mul(c2));
            }
        }
        p
    }
    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }
    /// Variables that occur.
    pub fn vars(&self) -> Vec<usize> {
        (0..3).filter(|&i| self.terms.keys().any(|e| e[i] > 0)).collect()
    }
    pub fn as_constant(&self) -> Option<Ls> {
        if self.vars().is_empty() {
            Some(self.terms.get(&[0; 3]).cloned().unwrap_or_else(|| Ls::zero(self.k)))
        } else {
            None
        }
    }
    pub fn eval(&self, pt: &[Ls]) -> Ls {
        let mut s = Ls::zero(self.k);
        for (e, c) in &self.terms {
            let mut m = c.clone();
            for (i, &ei) in e.iter().enumerate() {
                if ei > 0 {
                    let xi = pt.get(i).cloned().unwrap_or_else(|| Ls::zero(self.k));
                    m = m.mul(&xi.pow(ei));
                }
            }
            s = s.add(&m);
        }
        s
    }
    /// Univariate polynomial in variable v (other variables must be absent).
    pub fn to_kpoly(&self, v: usize) -> Option<KPoly> {
        if self.vars().iter().any(|&w| w != v) {
            return None;
        }
        let deg = self.terms.keys().map(|e| e[v]).max().unwrap_or(0) as usize;
        let mut cs = vec![Ls::zero(self.k); deg + 1];
        for (e, c) in &self.terms {
            cs[e[v] as usize] = c.clone();
        }
        Some(Poly::new(cs, Ls::zero(self.k)))
    }
    pub fn from_kpoly(p: &KPoly, v: usize, k: Field) -> MPoly {
        let mut out = MPoly::zero(k);
        for (i, c) in p.coeffs().iter().enumerate() {
            let mut e = [0; 3];
            e[v] = i as u32;
            out.add_term(e, c.clone());
        }
        out
    }
    /// Substitute variable v := g (univariate in w), returning a polynomial in the remaining variables.
    pub fn subst(&self, v: usize, g: &MPoly) -> MPoly {
        let mut out = MPoly::zero(self.k);
        for (e, c) in &self.terms {
            let mut e2 = *e;
            let d = e2[v];
            e2[v] = 0;
            let mut m = MPoly::zero(self.k);
            m.add_term(e2, c.clone());
            for _ in 0..d {
                m = m.mul(g);
            }
            out = out.add(&m);
        }
        out
    }
}

impl fmt::Display for MPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut parts = vec![];
        for (e, c) in self.terms.iter().rev() {
            let mono: Vec<String> = (0..3)
                .filter(|&i| e[i] > 0)
                .map(|i| if e[i] == 1 { VARS[i].to_string() } else { format!("{}^{}", VARS[i], e[i]) })
                .collect();
            let cs = format!("({c})");
            parts.push(if mono.is_empty() {
                cs
            } else if c.is_zero() || *c == Ls::one(self.k) {
                mono.join("*")
            } else {
                format!("{cs}*{}", mono.join("*"))
            });
        }
        write!(f, "{}", parts.join(" + "))
    }
}

/// Ball factor of a box: radius None means a single point.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct BallSpec {
    pub center: Ls,
    pub rad: Option<i64>,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum SetAst {
    Point(Vec<Ls>),
    Box(Vec<BallSpec>),
    Graph { f: KPoly, domain: Vec<(Ls, i64)>, tube: Option<i64>, swap: bool },
    Union(Vec<SetAst>),
    And(Vec<SetAst>),
    ValGe(MPoly, i64),
    AcEq(MPoly, Kx),
    InDomain(usize, Vec<(Ls, i64)>),
}

/// Parsed document: residue field plus set expression.
#[derive(Clone, Debug, PartialEq)]
pub struct Doc {
    pub field: Field,
    pub ast: SetAst,
}

// ---------------------------------------------------------------------------
// lexer

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(String),
    Ident(String),
    Sym(char),
    Ge,
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(src: &str, line0: usize) -> Result<Vec<Token>> {
    let mut out = vec![];
    for (li, line) in src.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("");
        let cs: Vec<char> = line.chars().collect();
        let mut i = 0;
        while i < cs.len() {
            let c = cs[i];
            let (ln, col) = (line0 + li + 1, i + 1);
            if c.is_whitespace() {
                i += 1;
            } else if c.is_ascii_digit() {
                let s = i;
                while i < cs.len() && cs[i].is_ascii_digit() {
                    i += 1;
                }
                out.push(Token { tok: Tok::Num(cs[s..i].iter().collect()), line: ln, col });
            } else if c.is_ascii_alphabetic() || c == '_' {
                let s = i;
                while i < cs.len() && (cs[i].is_ascii_alphanumeric() || cs[i] == '_') {
                    i += 1;
                }
                out.push(Token { tok: Tok::Ident(cs[s..i].iter().collect()), line: ln, col });
            } else if c == '>' && cs.get(i + 1) == Some(&'=') {
                out.push(Token { tok: Tok::Ge, line: ln, col });
                i += 2;
            } else if "()+-*/^,=|&<>".contains(c) {
                out.push(Token { tok: Tok::Sym(c), line: ln, col });
                i += 1;
            } else {
                return Err(MvError::Syntax { line: ln, col, msg: format!("unexpected character '{c}'") });
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// parser

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    k: Field,
    end: (usize, usize),
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }
    fn here(&self) -> (usize, usize) {
        self.toks.get(self.pos).map_or(self.end, |t| (t.line, t.col))
    }
    fn err<T>(&self, msg: impl Into<String>) -> Result<T> {
        let (line, col) = self.here();
        Err(MvError::Syntax { line, col, msg: msg.into() })
    }
    fn eat_sym(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Sym(c)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }
    fn expect_sym(&mut self, c: char) -> Result<()> {
        if self.eat_sym(c) {
            Ok(())
        } else {
            self.err(format!("expected '{c}'"))
        }
    }
    fn eat_ident(&mut self, s: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Ident(x)) if x == s) {
            self.pos += 1;
            true
        } else {
            false
        }
    }
    fn expect_ident(&mut self, s: &str) -> Result<()> {
        if self.eat_ident(s) {
            Ok(())
        } else {
            self.err(format!("expected '{s}'"))
        }
    }
    fn int(&mut self) -> Result<i64> {
        let neg = self.eat_sym('-');
        match self.peek().cloned() {
            Some(Tok::Num(n)) => {
                self.pos += 1;
                let v: i64 = n.parse().map_err(|_| MvError::Usage("integer overflow".into()))?;
                Ok(if neg { -v } else { v })
            }
            _ => self.err("expected an integer"),
        }
    }

    fn set(&mut self) -> Result<SetAst> {
        let mut terms = vec![self.and()?];
        while self.eat_sym('|') {
            terms.push(self.and()?);
        }
        Ok(if terms.len() == 1 { terms.pop().expect("one") } else { SetAst::Union(terms) })
    }
    fn and(&mut self) -> Result<SetAst> {
        let mut terms = vec![self.prim()?];
        while self.eat_sym('&') {
            terms.push(self.prim()?);
        }
        Ok(if terms.len() == 1 { terms.pop().expect("one") } else { SetAst::And(terms) })
    }
    fn prim(&mut self) -> Result<SetAst> {
        if self.eat_sym('(') {
            let s = self.set()?;
            self.expect_sym(')')?;
            return Ok(s);
        }
        let id = match self.peek().cloned() {
            Some(Tok::Ident(s)) => s,
            _ => return self.err("expected a set term"),
        };
        match id.as_str() {
            "point" => {
                self.pos += 1;
                self.expect_sym('(')?;
                let mut v = vec![self.const_expr()?];
                while self.eat_sym(',') {
                    v.push(self.const_expr()?);
                }
                self.expect_sym(')')?;
                Ok(SetAst::Point(v))
            }
            "box" => {
                self.pos += 1;
                self.expect_sym('(')?;
                let mut v = vec![self.ball_spec()?];
                while self.eat_sym(',') {
                    v.push(self.ball_spec()?);
                }
                self.expect_sym(')')?;
                Ok(SetAst::Box(v))
            }
            "graph" => {
                self.pos += 1;
                self.expect_sym('(')?;
                self.expect_ident("y")?;
                self.expect_sym('=')?;
                let e = self.expr()?;
                let f = e.to_kpoly(0).map_or_else(|| self.err("graph function must be a polynomial in x"), Ok)?;
                self.expect_sym(',')?;
                self.expect_ident("x")?;
                self.expect_ident("in")?;
                let domain = self.domain()?;
                let mut tube = None;
                let mut swap = false;
                while self.eat_sym(',') {
                    if self.eat_ident("tube") {
                        self.expect_sym('=')?;
                        tube = Some(self.int()?);
                    } else if self.eat_ident("swap") {
                        swap = true;
                    } else {
                        return self.err("expected 'tube = <int>' or 'swap'");
                    }
                }
                self.expect_sym(')')?;
                Ok(SetAst::Graph { f, domain, tube, swap })
            }
            "val" => {
                self.pos += 1;
                self.expect_sym('(')?;
                let e = self.expr()?;
                self.expect_sym(')')?;
                if self.peek() != Some(&Tok::Ge) {
                    return self.err("expected '>='");
                }
                self.pos += 1;
                let c = self.int()?;
                Ok(SetAst::ValGe(e, c))
            }
            "ac" => {
                self.pos += 1;
                self.expect_sym('(')?;
                let e = self.expr()?;
                self.expect_sym(')')?;
                self.expect_sym('=')?;
                let c = self.const_expr()?;
                if c.val().unwrap_or(0) != 0 || c.terms().count() > 1 {
                    return self.err("ac value must be a residue constant");
                }
                Ok(SetAst::AcEq(e, c.coeff(0)))
            }
            v if VARS.contains(&v) => {
                self.pos += 1;
                self.expect_ident("in")?;
                let i = VARS.iter().position(|x| *x == v).expect("var");
                Ok(SetAst::InDomain(i, self.domain()?))
            }
            _ => self.err(format!("unknown term '{id}'")),
        }
    }
    fn ball(&mut self) -> Result<(Ls, Option<i64>)> {
        self.expect_ident("B")?;
        self.expect_sym('(')?;
        let c = self.const_expr()?;
        self.expect_sym(',')?;
        let r = if self.eat_ident("inf") { None } else { Some(self.int()?) };
        self.expect_sym(')')?;
        Ok((c, r))
    }
    fn ball_spec(&mut self) -> Result<BallSpec> {
        let (center, rad) = self.ball()?;
        Ok(BallSpec { center, rad })
    }
    fn domain(&mut self) -> Result<Vec<(Ls, i64)>> {
        let mut v = vec![];
        loop {
            let (c, r) = self.ball()?;
            match r {
                Some(r) => v.push((c, r)),
                None => return self.err("domain balls need a finite radius"),
            }
            if !self.eat_ident("U") {
                return Ok(v);
            }
        }
    }
    fn const_expr(&mut self) -> Result<Ls> {
        let e = self.expr()?;
        match e.as_constant() {
            Some(c) => Ok(c),
            None => self.err("expected a constant"),
        }
    }
    fn expr(&mut self) -> Result<MPoly> {
        let neg = self.eat_sym('-');
        let mut acc = self.term()?;
        if neg {
            acc = acc.neg();
        }
        loop {
            if self.eat_sym('+') {
                acc = acc.add(&self.term()?);
            } else if self.eat_sym('-') {
                acc = acc.sub(&self.term()?);
            } else {
                return Ok(acc);
            }
        }
    }
    fn term(&mut self) -> Result<MPoly> {
        let mut acc = self.factor()?;
        loop {
            if self.eat_sym('*') {
                acc = acc.mul(&self.factor()?);
            } else if self.eat_sym('/') {
                let d = self.factor()?;
                let inv = d.as_constant().and_then(|c| c.inv_mono());
                match inv {
                    Some(i) => acc = acc.mul(&MPoly::constant(i)),
                    None => return self.err("division only by nonzero monomial constants"),
                }
            } else {
                return Ok(acc);
            }
        }
    }
    fn factor(&mut self) -> Result<MPoly> {
        let base = self.atom()?;
        if self.eat_sym('^') {
            let e = self.int()?;
            if e < 0 {
                let inv = base.as_constant().and_then(|c| c.inv_mono());
                return match inv {
                    Some(i) => Ok(MPoly::constant(i.pow((-e) as u32))),
                    None => self.err("negative powers only of monomial constants"),
                };
            }
            let mut acc = MPoly::constant(Ls::one(self.k));
            for _ in 0..e {
                acc = acc.mul(&base);
            }
            return Ok(acc);
        }
        Ok(base)
    }
    fn atom(&mut self) -> Result<MPoly> {
        match self.peek().cloned() {
            Some(Tok::Num(n)) => {
                self.pos += 1;
                let c = parse_kconst(&n, self.k)?;
                Ok(MPoly::constant(Ls::constant(c)))
            }
            Some(Tok::Ident(s)) if s == "t" => {
                self.pos += 1;
                Ok(MPoly::constant(Ls::t_pow(self.k, 1)))
            }
            Some(Tok::Ident(s)) if VARS.contains(&s.as_str()) => {
                self.pos += 1;
                Ok(MPoly::var(self.k, VARS.iter().position(|x| *x == s).expect("var")))
            }
            Some(Tok::Sym('(')) => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect_sym(')')?;
                Ok(e)
            }
            Some(Tok::Sym('-')) => {
                self.pos += 1;
                Ok(self.atom()?.neg())
            }
            _ => self.err("expected an expression"),
        }
    }
}

/// Parse a set expression over a known residue field.
pub fn parse_set(text: &str, k: Field) -> Result<SetAst> {
    let toks = lex(text, 0)?;
    let end = toks.last().map_or((1, 1), |t| (t.line, t.col + 1));
    let mut p = Parser { toks, pos: 0, k, end };
    let s = p.set()?;
    if p.pos != p.toks.len() {
        return p.err("trailing input");
    }
    Ok(s)
}

/// Parse a document with an optional `field Q` / `field F<q>` header line.
/// `default` is used when the header is absent.
pub fn parse(text: &str, default: Option<Field>) -> Result<Doc> {
    let mut field = default;
    let mut body = String::new();
    let mut body_start = None;
    for (i, line) in text.lines().enumerate() {
        let content = line.split('#').next().unwrap_or("").trim();
        if body_start.is_none() {
            if content.is_empty() {
                continue;
            }
            if let Some(rest) = content.strip_prefix("field") {
                if rest.starts_with(|c: char| c.is_whitespace()) {
                    field = Some(Field::parse(rest.trim().trim_start_matches('<').trim_end_matches('>')).map_err(
                        |_| MvError::Syntax { line: i + 1, col: 7, msg: format!("bad field '{}'", rest.trim()) },
                    )?);
                    continue;
                }
            }
            body_start = Some(i);
        }
        body.push_str(line);
        body.push('\n');
    }
    let k = field.ok_or_else(|| MvError::Syntax { line: 1, col: 1, msg: "missing 'field' header".into() })?;
    let toks = lex(&body, body_start.unwrap_or(0))?;
    if toks.is_empty() {
        return Err(MvError::Syntax { line: 1, col: 1, msg: "empty set description".into() });
    }
    let end = toks.last().map_or((1, 1), |t| (t.line, t.col + 1));
    let mut p = Parser { toks, pos: 0, k, end };
    let ast = p.set()?;
    if p.pos != p.toks.len() {
        return p.err("trailing input");
    }
    Ok(Doc { field: k, ast })
}

// ---------------------------------------------------------------------------
// printer

fn print_ball(c: &Ls, r: Option<i64>) -> String {
    match r {
        Some(r) => format!("B({c}, {r})"),
        None => format!("B({c}, inf)"),
    }
}

fn print_domain(d: &[(Ls, i64)]) -> String {
    d.iter().map(|(c, r)| print_ball(c, Some(*r))).collect::<Vec<_>>().join(" U ")
}

impl fmt::Display for SetAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SetAst::Point(v) => {
                write!(f, "point({})", v.iter().map(|c| format!("({c})")).collect::<Vec<_>>().join(", "))
            }
            SetAst::Box(v) => write!(
                f,
                "box({})",
                v.iter().map(|b| print_ball(&b.center, b.rad)).collect::<Vec<_>>().join(", ")
            ),
            SetAst::Graph { f: p, domain, tube, swap } => {
                write!(f, "graph(y = {}, x in {}", render_kpoly(p, "x"), print_domain(domain))?;
                if let Some(t) = tube {
                    write!(f, ", tube = {t}")?;
                }
                if *swap {
                    write!(f, ", swap")?;
                }
                write!(f, ")")
            }
            SetAst::Union(v) => {
                write!(f, "{}", v.iter().map(|s| format!("({s})")).collect::<Vec<_>>().join(" | "))
            }
            SetAst::And(v) => {
                write!(f, "{}", v.iter().map(|s| format!("({s})")).collect::<Vec<_>>().join(" & "))
            }
            SetAst::ValGe(e, c) => write!(f, "val({e}) >= {c}"),
            SetAst::AcEq(e, c) => write!(f, "ac({e}) = ({c})"),
            SetAst::InDomain(i, d) => write!(f, "{} in {}", VARS[*i], print_domain(d)),
        }
    }
}

impl SetAst {
    /// Ambient dimension implied by the variables and constructors used.
    pub fn ambient(&self) -> usize {
        match self {
            SetAst::Point(v) => v.len(),
            SetAst::Box(v) => v.len(),
            SetAst::Graph { .. } => 2,
            SetAst::Union(v) | SetAst::And(v) => v.iter().map(|s| s.ambient()).max().unwrap_or(0),
            SetAst::ValGe(e, _) | SetAst::AcEq(e, _) => e.vars().iter().max().map_or(1, |m| m + 1),
            SetAst::InDomain(i, _) => i + 1,
        }
    }

    /// Exact membership of a point.
    pub fn contains(&self, pt: &[Ls]) -> bool {
        match self {
            SetAst::Point(v) => v.as_slice() == pt,
            SetAst::Box(v) => v.iter().zip(pt).all(|(b, x)| in_ball(x, &b.center, b.rad)),
            SetAst::Graph { f, domain, tube, swap } => {
                let (a, b) = if *swap { (&pt[1], &pt[0]) } else { (&pt[0], &pt[1]) };
                if !domain.iter().any(|(c, r)| in_ball(a, c, Some(*r))) {
                    return false;
                }
                let d = b.sub(&f.eval(a));
                match tube {
                    None => d.is_zero(),
                    Some(t) => d.val().is_none_or(|v| v >= *t),
                }
            }
            SetAst::Union(v) => v.iter().any(|s| s.contains(pt)),
            SetAst::And(v) => v.iter().all(|s| s.contains(pt)),
            SetAst::ValGe(e, c) => e.eval(pt).val().is_none_or(|v| v >= *c),
            SetAst::AcEq(e, c) => e.eval(pt).ac() == *c,
            SetAst::InDomain(i, d) => d.iter().any(|(c, r)| in_ball(&pt[*i], c, Some(*r))),
        }
    }
}

fn in_ball(x: &Ls, c: &Ls, r: Option<i64>) -> bool {
    let d = x.sub(c);
    match r {
        None => d.is_zero(),
        Some(r) => d.val().is_none_or(|v| v >= r),
    }
}

// ---------------------------------------------------------------------------
// cells

/// Graph of a 1-Lipschitz polynomial over one ball, optionally thickened.
/// Unswapped: {(x, y) : x in dom, val(y - f(x)) >= tube}; swapped: coordinates exchanged.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct GraphCell {
    pub f: KPoly,
    pub center: Ls,
    pub rad: i64,
    pub tube: Option<i64>,
    pub swap: bool,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum Cell {
    Point(Vec<Ls>),
    /// Product of balls; radius None is a point factor.
    Box(Vec<BallSpec>),
    Graph(GraphCell),
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct CellSet {
    pub field: Field,
    pub n: usize,
    pub cells: Vec<Cell>,
}

/// Lipschitz margin of f on B(c, rho): min over i >= 1 of val F_i - rho where
/// f(c + t^rho u) = sum F_i u^i. Nonnegative iff f is 1-Lipschitz on the ball.
pub fn lipschitz_margin(f: &KPoly, c: &Ls, rho: i64) -> Option<i64> {
    let k = c.field();
    let fu = f.substitute_affine(c, &Ls::t_pow(k, rho));
    fu.coeffs().iter().skip(1).filter_map(|x| x.val()).map(|v| v - rho).min()
}

impl GraphCell {
    /// (domain coordinate, graph coordinate)
    pub fn axes(&self) -> (usize, usize) {
        if self.swap {
            (1, 0)
        } else {
            (0, 1)
        }
    }
    pub fn contains(&self, pt: &[Ls]) -> bool {
        let (a, b) = self.axes();
        if !in_ball(&pt[a], &self.center, Some(self.rad)) {
            return false;
        }
        let d = pt[b].sub(&self.f.eval(&pt[a]));
        match self.tube {
            None => d.is_zero(),
            Some(t) => d.val().is_none_or(|v| v >= t),
        }
    }
    pub fn is_linear(&self) -> bool {
        self.f.deg().unwrap_or(0) <= 1
    }
}

impl Cell {
    pub fn dim(&self) -> usize {
        match self {
            Cell::Point(_) => 0,
            Cell::Box(v) => v.iter().filter(|b| b.rad.is_some()).count(),
            Cell::Graph(g) => {
                if g.tube.is_some() {
                    2
                } else {
                    1
                }
            }
        }
    }
    pub fn contains(&self, pt: &[Ls]) -> bool {
        match self {
            Cell::Point(p) => p.as_slice() == pt,
            Cell::Box(v) => v.iter().zip(pt).all(|(b, x)| in_ball(x, &b.center, b.rad)),
            Cell::Graph(g) => g.contains(pt),
        }
    }
    /// Smallest ball containing the cell (radius i64::MAX for a point).
    pub fn bounding_ball(&self, n: usize, k: Field) -> Ball {
        match self {
            Cell::Point(p) => Ball::new(p.clone(), i64::MAX),
            Cell::Box(v) => Ball::new(
                v.iter().map(|b| b.center.clone()).collect(),
                v.iter().filter_map(|b| b.rad).min().unwrap_or(i64::MAX),
            ),
            Cell::Graph(g) => {
                let (a, b) = g.axes();
                let mut c = vec![Ls::zero(k); n];
                c[a] = g.center.clone();
                c[b] = g.f.eval(&g.center);
                Ball::new(c, g.tube.map_or(g.rad, |t| t.min(g.rad)))
            }
        }
    }
}

/// Smallest ball containing both.
pub fn join_balls(a: &Ball, b: &Ball) -> Ball {
    let mut r = a.rad.min(b.rad);
    for (x, y) in a.center.iter().zip(&b.center) {
        if let Some(v) = x.sub(y).val() {
            r = r.min(v);
        }
    }
    Ball::new(a.center.clone(), r)
}

impl CellSet {
    /// Image of the set under x -> t^e x.
    pub fn scale_t(&self, e: i64) -> CellSet {
        let k = self.field;
        let te = Ls::t_pow(k, e);
        let sc = |x: &Ls| x.mul(&te);
        let cells = self
            .cells
            .iter()
            .map(|c| match c {
                Cell::Point(p) => Cell::Point(p.iter().map(sc).collect()),
                Cell::Box(v) => Cell::Box(
                    v.iter().map(|b| BallSpec { center: sc(&b.center), rad: b.rad.map(|r| r + e) }).collect(),
                ),
                Cell::Graph(g) => {
                    // t^e f(t^-e x)
                    let coeffs = g.f.coeffs().iter().enumerate().map(|(i, a)| a.shift(e * (1 - i as i64))).collect();
                    Cell::Graph(GraphCell {
                        f: Poly::new(coeffs, Ls::zero(k)),
                        center: sc(&g.center),
                        rad: g.rad + e,
                        tube: g.tube.map(|r| r + e),
                        swap: g.swap,
                    })
                }
            })
            .collect();
        CellSet { field: k, n: self.n, cells }
    }

    pub fn dim(&self) -> usize {
        self.cells.iter().map(|c| c.dim()).max().unwrap_or(0)
    }
    pub fn contains(&self, pt: &[Ls]) -> bool {
        self.cells.iter().any(|c| c.contains(pt))
    }
    pub fn bounding_ball(&self) -> Option<Ball> {
        let mut it = self.cells.iter().map(|c| c.bounding_ball(self.n, self.field));
        let first = it.next()?;
        Some(it.fold(first, |a, b| join_balls(&a, &b)))
    }
    pub fn is_finite(&self) -> bool {
        self.cells.iter().all(|c| c.dim() == 0)
    }
    /// Distinct points of a finite set.
    pub fn points(&self) -> Option<Vec<Vec<Ls>>> {
        let mut out: Vec<Vec<Ls>> = vec![];
        for c in &self.cells {
            let p = match c {
                Cell::Point(p) => p.clone(),
                Cell::Box(v) if v.iter().all(|b| b.rad.is_none()) => v.iter().map(|b| b.center.clone()).collect(),
                _ => return None,
            };
            if !out.contains(&p) {
                out.push(p);
            }
        }
        out.sort();
        Some(out)
    }
}

// ---------------------------------------------------------------------------
// lowering

fn intersect_balls(a: &(Ls, i64), b: &(Ls, i64)) -> Option<(Ls, i64)> {
    let d = a.0.sub(&b.0).val();
    let lo = a.1.min(b.1);
    if d.is_none_or(|v| v >= lo) {
        Some(if a.1 >= b.1 { a.clone() } else { b.clone() })
    } else {
        None
    }
}

fn intersect_domains(a: &[(Ls, i64)], b: &[(Ls, i64)]) -> Vec<(Ls, i64)> {
    let mut out = vec![];
    for x in a {
        for y in b {
            if let Some(z) = intersect_balls(x, y) {
                if !out.contains(&z) {
                    out.push(z);
                }
            }
        }
    }
    out
}

/// Restrict a union of balls by constant valuation conditions on a univariate polynomial.
fn restrict_domain(dom: &[(Ls, i64)], conds: &[(KPoly, i64)]) -> Result<Vec<(Ls, i64)>> {
    if conds.is_empty() {
        return Ok(dom.to_vec());
    }
    let mut out = vec![];
    for (c, r) in dom {
        out.extend(locus_balls(conds, c, *r, DEFAULT_DEPTH_CAP + 64)?);
    }
    Ok(out)
}

fn make_graph(f: &KPoly, c: &Ls, rho: i64, tube: Option<i64>, swap: bool) -> Result<GraphCell> {
    let k = c.field();
    match lipschitz_margin(f, c, rho) {
        None => Ok(GraphCell { f: f.clone(), center: c.clone(), rad: rho, tube, swap }),
        Some(m) if m >= 0 => Ok(GraphCell { f: f.clone(), center: c.clone(), rad: rho, tube, swap }),
        Some(_) if f.deg() == Some(1) && tube.is_none() => {
            // y = a x + b  <=>  x = (y - b)/a with |1/a| < 1
            let a = f.coeff(1);
            let b = f.coeff(0);
            let ainv = a
                .inv_mono()
                .ok_or_else(|| MvError::Unsupported("non-monomial slope in auto-swap".into()))?;
            let g = Poly::new(vec![b.neg().mul(&ainv), ainv], Ls::zero(k));
            let center = f.eval(c);
            let rad = rho + a.val().expect("nonzero");
            Ok(GraphCell { f: g, center, rad, tube: None, swap: !swap })
        }
        Some(_) => Err(MvError::Unsupported(format!(
            "graph of {} is not 1-Lipschitz on B({c}, {rho})",
            render_kpoly(f, "x")
        ))),
    }
}

/// y - f(x) up to a unit constant: returns f.
fn tube_pattern(e: &MPoly) -> Option<KPoly> {
    let k = e.k;
    let ycoef = e.terms.get(&[0, 1, 0])?;
    if e.terms.keys().any(|x| x[2] > 0 || (x[1] > 0 && *x != [0, 1, 0])) {
        return None;
    }
    if ycoef.terms().count() != 1 || ycoef.val() != Some(0) {
        return None;
    }
    let inv = ycoef.inv_mono()?;
    let rest = e.sub(&MPoly { k, terms: [([0, 1, 0], ycoef.clone())].into_iter().collect() });
    let f = rest.to_kpoly(0).or_else(|| rest.as_constant().map(Poly::constant))?;
    Some(f.scale(&inv.neg()))
}

/// Lower a parsed set to cells.
pub fn lower(ast: &SetAst, k: Field) -> Result<CellSet> {
    let n = ast.ambient().max(1);
    let cells = lower_rec(ast, k, n)?;
    Ok(CellSet { field: k, n, cells })
}

fn lower_rec(ast: &SetAst, k: Field, n: usize) -> Result<Vec<Cell>> {
    match ast {
        SetAst::Point(v) => {
            if v.len() != n {
                return Err(MvError::Unsupported("point of the wrong dimension".into()));
            }
            Ok(vec![Cell::Point(v.clone())])
        }
        SetAst::Box(v) => {
            if v.len() != n {
                return Err(MvError::Unsupported("box of the wrong dimension".into()));
            }
            if v.iter().all(|b| b.rad.is_none()) {
                return Ok(vec![Cell::Point(v.iter().map(|b| b.center.clone()).collect())]);
            }
            Ok(vec![Cell::Box(v.clone())])
        }
        SetAst::Graph { f, domain, tube, swap } => {
            if n != 2 {
                return Err(MvError::Unsupported("graphs live in K^2".into()));
            }
            domain.iter().map(|(c, r)| make_graph(f, c, *r, *tube, *swap).map(Cell::Graph)).collect()
        }
        SetAst::Union(v) => {
            let mut out = vec![];
            for s in v {
                out.extend(lower_rec(s, k, n)?);
            }
            Ok(out)
        }
        SetAst::And(v) => lower_and(v, k, n),
        SetAst::ValGe(..) | SetAst::AcEq(..) | SetAst::InDomain(..) => lower_and(std::slice::from_ref(ast), k, n),
    }
}

fn lower_and(conj: &[SetAst], k: Field, n: usize) -> Result<Vec<Cell>> {
    // flatten nested conjunctions, distribute over unions
    let mut flat: Vec<SetAst> = vec![];
    for c in conj {
        match c {
            SetAst::And(v) => flat.extend(v.iter().cloned()),
            other => flat.push(other.clone()),
        }
    }
    if let Some(i) = flat.iter().position(|c| matches!(c, SetAst::Union(_))) {
        let SetAst::Union(alts) = flat[i].clone() else { unreachable!() };
        let mut out = vec![];
        for a in alts {
            let mut v = flat.clone();
            v[i] = a;
            out.extend(lower_and(&v, k, n)?);
        }
        return Ok(out);
    }
    // finite part: filter by membership
    if let Some(i) = flat.iter().position(|c| matches!(c, SetAst::Point(_)))
        .or_else(|| flat.iter().position(|c| matches!(c, SetAst::Box(v) if v.iter().all(|b| b.rad.is_none()))))
    {
        let cells = lower_rec(&flat[i], k, n)?;
        let others: Vec<&SetAst> = flat.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, c)| c).collect();
        return Ok(cells
            .into_iter()
            .filter(|c| match c {
                Cell::Point(p) => others.iter().all(|o| o.contains(p)),
                _ => true,
            })
            .collect());
    }
    let mut graphs = vec![];
    let mut boxes = vec![];
    let mut doms: Vec<Option<Vec<(Ls, i64)>>> = vec![None; n];
    let mut vals: Vec<(MPoly, i64)> = vec![];
    for c in &flat {
        match c {
            SetAst::Graph { .. } => graphs.push(c.clone()),
            SetAst::Box(v) => boxes.push(v.clone()),
            SetAst::InDomain(i, d) => {
                doms[*i] = Some(match &doms[*i] {
                    None => d.clone(),
                    Some(e) => intersect_domains(e, d),
                });
            }
            SetAst::ValGe(e, c) => vals.push((e.clone(), *c)),
            SetAst::AcEq(..) => return Err(MvError::Unsupported("ac conditions outside finite sets".into())),
            _ => unreachable!(),
        }
    }
    for b in &boxes {
        for (i, bs) in b.iter().enumerate() {
            let d = match bs.rad {
                Some(r) => vec![(bs.center.clone(), r)],
                None => return Err(MvError::Unsupported("point factor inside a conjunction".into())),
            };
            doms[i] = Some(match &doms[i] {
                None => d,
                Some(e) => intersect_domains(e, &d),
            });
        }
    }
    if graphs.len() > 1 {
        return Err(MvError::Unsupported("intersection of two graphs".into()));
    }
    if let Some(SetAst::Graph { f, domain, tube, swap }) = graphs.first() {
        // graph coordinates: (a = domain axis, b = value axis)
        let (a, b) = if *swap { (1, 0) } else { (0, 1) };
        let mut dom = domain.clone();
        if let Some(d) = &doms[a] {
            dom = intersect_domains(&dom, d);
        }
        let fy = MPoly::from_kpoly(f, a, k);
        let mut conds: Vec<(KPoly, i64)> = vec![];
        if let Some(d) = &doms[b] {
            if d.len() != 1 {
                return Err(MvError::Unsupported("union domain on the graph coordinate".into()));
            }
            let (c, r) = &d[0];
            let h = fy.sub(&MPoly::constant(c.clone()));
            conds.push((h.to_kpoly(a).expect("univariate"), *r));
        }
        for (e, c) in &vals {
            if tube.is_some() {
                return Err(MvError::Unsupported("valuation conditions on a thickened graph".into()));
            }
            let h = e.subst(b, &fy);
            let hp = match h.to_kpoly(a) {
                Some(p) => p,
                None => return Err(MvError::Unsupported("valuation condition in a third variable".into())),
            };
            conds.push((hp, *c));
        }
        let dom = restrict_domain(&dom, &conds)?;
        return dom.iter().map(|(c, r)| make_graph(f, c, *r, *tube, *swap).map(Cell::Graph)).collect();
    }
    // tube pattern val(y - f(x)) >= c with a domain on x
    if n == 2 {
        if let Some(pos) = vals.iter().position(|(e, _)| tube_pattern(e).is_some() && !e.vars().is_empty()) {
            let (e, tau) = vals[pos].clone();
            let f = tube_pattern(&e).expect("pattern");
            if f.deg().unwrap_or(0) >= 1 || doms[1].is_none() {
                let dom = doms[0].clone().ok_or_else(|| MvError::Unsupported("thickened graph needs a domain on x".into()))?;
                let mut conds = vec![];
                for (j, (e2, c2)) in vals.iter().enumerate() {
                    if j == pos {
                        continue;
                    }
                    match e2.to_kpoly(0) {
                        Some(p) => conds.push((p, *c2)),
                        None => return Err(MvError::Unsupported(format!("valuation condition val({e2}) >= {c2}"))),
                    }
                }
                if doms[1].is_some() {
                    return Err(MvError::Unsupported("thickened graph with a y-domain".into()));
                }
                let dom = restrict_domain(&dom, &conds)?;
                return dom.iter().map(|(c, r)| make_graph(&f, c, *r, Some(tau), false).map(Cell::Graph)).collect();
            }
        }
    }
    // product of univariate loci
    let mut per_var: Vec<Vec<(KPoly, i64)>> = vec![vec![]; n];
    for (e, c) in &vals {
        let vs = e.vars();
        if vs.len() != 1 {
            return Err(MvError::Unsupported(format!("valuation condition val({e}) >= {c}")));
        }
        if vs[0] >= n {
            return Err(MvError::Unsupported("variable beyond the ambient dimension".into()));
        }
        per_var[vs[0]].push((e.to_kpoly(vs[0]).expect("univariate"), *c));
    }
    let mut factors: Vec<Vec<(Ls, i64)>> = vec![];
    for i in 0..n {
        let d = doms[i].clone().ok_or_else(|| {
            MvError::Unsupported(format!("unbounded in {}; give a domain '{} in B(c, r)'", VARS[i], VARS[i]))
        })?;
        factors.push(restrict_domain(&d, &per_var[i])?);
    }
    // cartesian product
    let mut boxes_out: Vec<Vec<BallSpec>> = vec![vec![]];
    for f in &factors {
        let mut next = vec![];
        for pre in &boxes_out {
            for (c, r) in f {
                let mut v = pre.clone();
                v.push(BallSpec { center: c.clone(), rad: Some(*r) });
                next.push(v);
            }
        }
        boxes_out = next;
    }
    Ok(boxes_out.into_iter().map(Cell::Box).collect())
}

/// Parse and lower in one step.
pub fn cellset_from_text(text: &str, default: Option<Field>) -> Result<CellSet> {
    let doc = parse(text, default)?;
    lower(&doc.ast, doc.field)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand_chacha::rand_core::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn q() -> Field {
        Field::Q
    }

    #[test]
    fn parse_examples() {
        let a = parse_set("graph(y = x^2, x in B(0,0))", q()).unwrap();
        assert!(matches!(a, SetAst::Graph { tube: None, swap: false, .. }));
        let u = parse_set("point(0,0) | graph(y = 0, x in B(0,0))", q()).unwrap();
        assert!(matches!(u, SetAst::Union(ref v) if v.len() == 2));
        let n = parse_set("graph(y = x^2, x in B(0,0)) & val(y) >= 3", q()).unwrap();
        assert!(matches!(n, SetAst::And(_)));
    }

    #[test]
    fn syntax_errors_have_positions() {
        match parse("field Q\ngraph(y = x^2, x in B(0,0)", None) {
            Err(MvError::Syntax { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse("graph(y = x)", Some(q())), Err(MvError::Syntax { .. })));
        assert!(matches!(parse("field Z\npoint(0)", None), Err(MvError::Syntax { line: 1, .. })));
    }

    #[test]
    fn header_and_comments() {
        let d = parse("# parabola\nfield F<3>\ngraph(y = x^2, x in B(0,0)) # O_K\n", None).unwrap();
        assert_eq!(d.field, Field::finite(3).unwrap());
    }

    #[test]
    fn lowering() {
        let c = lower(&parse_set("graph(y = x^2, x in B(0,0))", q()).unwrap(), q()).unwrap();
        assert_eq!(c.cells.len(), 1);
        let Cell::Graph(g) = &c.cells[0] else { panic!() };
        assert_eq!(lipschitz_margin(&g.f, &g.center, g.rad), Some(0));
        let c = lower(&parse_set("val(y - x^2) >= 3 & x in B(0,0)", q()).unwrap(), q()).unwrap();
        assert!(matches!(&c.cells[0], Cell::Graph(g) if g.tube == Some(3)));
        assert!(matches!(
            lower(&parse_set("val(x*y) >= 1", q()).unwrap(), q()),
            Err(MvError::Unsupported(_))
        ));
        // explicit-ball locus: val(x^2) >= 3 on O is B(0, 2)
        let c = lower(&parse_set("graph(y = x^2, x in B(0,0)) & val(y) >= 3", q()).unwrap(), q()).unwrap();
        assert!(matches!(&c.cells[..], [Cell::Graph(g)] if g.rad == 2));
        // auto-swap of a steep line
        let c = lower(&parse_set("graph(y = t^-1*x, x in B(0,0))", q()).unwrap(), q()).unwrap();
        assert!(matches!(&c.cells[..], [Cell::Graph(g)] if g.swap && g.rad == -1));
        assert!(matches!(
            lower(&parse_set("graph(y = t^-1*x^2, x in B(0,0))", q()).unwrap(), q()),
            Err(MvError::Unsupported(_))
        ));
    }

    #[test]
    fn dims_and_balls() {
        let c = lower(&parse_set("graph(y = x^2, x in B(0,0)) | point(1, 1)", q()).unwrap(), q()).unwrap();
        assert_eq!(c.dim(), 1);
        let c = lower(&parse_set("graph(y = x^2, x in B(0,0), tube = 2)", q()).unwrap(), q()).unwrap();
        assert_eq!(c.dim(), 2);
        let c = lower(&parse_set("graph(y = 0, x in B(0,0))", q()).unwrap(), q()).unwrap();
        let b = c.bounding_ball().unwrap();
        assert_eq!(b.rad, 0);
        assert!(b.center.iter().all(|x| x.is_zero()));
    }

    fn rand_ls(rng: &mut ChaCha20Rng, k: Field) -> Ls {
        let terms = (0..3).map(|_| ((rng.next_u32() % 5) as i64 - 1, k.int((rng.next_u32() % 3) as i64 - 1)));
        Ls::from_terms(k, terms)
    }

    #[test]
    fn lowering_preserves_membership() {
        let k = q();
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let texts = [
            "graph(y = x^2, x in B(0,0))",
            "val(y - x^2) >= 2 & x in B(0,0)",
            "graph(y = x^2 - x, x in B(0,0)) & val(y) >= 2",
            "box(B(0,1), B(1,0)) | point(0, 0)",
            "x in B(0,0) & y in B(0,1) & val(x^2 - x) >= 1",
            "graph(y = t^-1*x, x in B(0,0))",
        ];
        for text in texts {
            let ast = parse_set(text, k).unwrap();
            let cs = lower(&ast, k).unwrap();
            for i in 0..100 {
                let x = rand_ls(&mut rng, k);
                // bias half the samples onto the set
                let y = if i % 2 == 0 {
                    match &cs.cells[0] {
                        Cell::Graph(g) if !g.swap => g.f.eval(&x).add(&rand_ls(&mut rng, k).shift(3)),
                        _ => rand_ls(&mut rng, k),
                    }
                } else {
                    rand_ls(&mut rng, k)
                };
                let pt = vec![x, y];
                assert_eq!(ast.contains(&pt), cs.contains(&pt), "{text} at {pt:?}");
            }
        }
    }

    #[test]
    fn graph_cells_recheck() {
        // derivative bound on every domain ball
        let cs = lower(&parse_set("graph(y = x^3 - x, x in B(0,0) U B(t, 1))", q()).unwrap(), q()).unwrap();
        for c in &cs.cells {
            let Cell::Graph(g) = c else { panic!() };
            let d = g.f.deriv().substitute_affine(&g.center, &Ls::t_pow(Field::Q, g.rad));
            assert!(d.coeffs().iter().all(|x| x.val().is_none_or(|v| v >= 0)));
        }
    }

    fn arb_small_ls() -> impl Strategy<Value = Ls> {
        proptest::collection::vec((-1i64..3, -2i64..3), 0..3)
            .prop_map(|v| Ls::from_terms(Field::Q, v.into_iter().map(|(e, c)| (e, Field::Q.int(c)))))
    }

    fn arb_ast() -> impl Strategy<Value = SetAst> {
        let point = (arb_small_ls(), arb_small_ls()).prop_map(|(a, b)| SetAst::Point(vec![a, b]));
        let bx = (arb_small_ls(), 0i64..3, arb_small_ls(), proptest::option::of(0i64..3)).prop_map(|(a, r, b, s)| {
            SetAst::Box(vec![BallSpec { center: a, rad: Some(r) }, BallSpec { center: b, rad: s }])
        });
        let graph = (proptest::collection::vec(arb_small_ls(), 1..4), arb_small_ls(), -1i64..2, proptest::option::of(0i64..4), any::<bool>())
            .prop_map(|(cs, c, r, tube, swap)| SetAst::Graph {
                f: Poly::new(cs, Ls::zero(Field::Q)),
                domain: vec![(c, r)],
                tube,
                swap,
            });
        let val = (arb_small_ls(), arb_small_ls(), -2i64..4).prop_map(|(a, b, c)| {
            let e = MPoly::var(Field::Q, 1).sub(&MPoly::var(Field::Q, 0).mul(&MPoly::constant(a))).add(&MPoly::constant(b));
            SetAst::ValGe(e, c)
        });
        let leaf = prop_oneof![point, bx, graph, val];
        leaf.prop_recursive(2, 6, 3, |inner| {
            prop_oneof![
                proptest::collection::vec(inner.clone(), 2..3).prop_map(SetAst::Union),
                proptest::collection::vec(inner, 2..3).prop_map(SetAst::And),
            ]
        })
    }

    proptest! {
        #[test]
        fn print_parse_roundtrip(a in arb_ast()) {
            let text = a.to_string();
            let b = parse_set(&text, Field::Q).unwrap();
            prop_assert_eq!(flatten(a), flatten(b), "{}", text);
        }
    }

    /// Parenthesized nesting of same-kind nodes is flattened by the grammar.
    fn flatten(a: SetAst) -> SetAst {
        match a {
            SetAst::Union(v) => SetAst::Union(v.into_iter().map(flatten).collect()),
            SetAst::And(v) => SetAst::And(v.into_iter().map(flatten).collect()),
            other => other,
        }
    }
}
