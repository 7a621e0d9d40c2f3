//! Riso-triviality certificates on balls, the minimal non-riso-trivial balls
//! and singletons of a set, and the 0-dimensional variations built from them.

use std::fmt;

use serde_json::{json, Value};

use crate::dsl::{Cell, CellSet, GraphCell};
use crate::error::{MvError, Result};
use crate::groth::{ClassAtom, CVal};
use crate::k::{Field, Kx, Poly};
use crate::series::{Ball, KPoly, Ls};

/// Default bound on the descent depth below the starting ball.
pub const DEFAULT_RISO_DEPTH: usize = 64;

/// Extra t-adic digits kept for Hensel-lifted crossing points.
const LIFT_DIGITS: i64 = 24;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RtspResult {
    /// residue vectors spanning the space
    pub basis: Vec<Vec<Kx>>,
    pub certified: bool,
}

impl RtspResult {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }
    pub fn is_trivial_somewhere(&self) -> bool {
        !self.basis.is_empty()
    }
}

/// One entry of the minimal non-riso-trivial family.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Item {
    Ball(Ball),
    /// A rational point; `prec` is Some(p) when known only modulo t^p.
    Point { at: Vec<Ls>, prec: Option<i64> },
    /// Conjugate points over k sharing one etale class, all inside `around`
    /// and in the residue classes cut out by `minpoly` one level below.
    Conjugates { around: Ball, minpoly: Poly<Kx> },
}

impl Item {
    pub fn class(&self) -> Result<CVal> {
        match self {
            Item::Conjugates { minpoly, .. } => Ok(CVal::atom(ClassAtom::etale(minpoly.clone())?)),
            _ => Ok(CVal::one()),
        }
    }
    /// Item contained in the ball b.
    pub fn inside(&self, b: &Ball) -> Result<bool> {
        match self {
            Item::Ball(x) => Ok(x.subset_of(b)),
            Item::Point { at, prec } => {
                if let Some(p) = prec {
                    if b.rad > *p {
                        return Err(MvError::PrecisionLoss);
                    }
                }
                Ok(b.contains(at))
            }
            // irrational points leave every rational ball below `around`
            Item::Conjugates { around, .. } => Ok(b.rad <= around.rad && b.contains(&around.center)),
        }
    }
    pub fn to_json(&self) -> Value {
        match self {
            Item::Ball(b) => json!({
                "kind": "ball",
                "center": b.center.iter().map(|x| x.to_string()).collect::<Vec<_>>(),
                "radius": b.rad,
            }),
            Item::Point { at, prec } => json!({
                "kind": "singleton",
                "point": at.iter().map(|x| x.to_string()).collect::<Vec<_>>(),
                "precision": prec,
            }),
            Item::Conjugates { around, minpoly } => json!({
                "kind": "conjugate-singletons",
                "around": { "center": around.center.iter().map(|x| x.to_string()).collect::<Vec<_>>(), "radius": around.rad },
                "minpoly": minpoly.render("u"),
            }),
        }
    }
}

impl fmt::Display for Item {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let pt = |v: &[Ls]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ");
        match self {
            Item::Ball(b) => write!(f, "ball B(({}), {})", pt(&b.center), b.rad),
            Item::Point { at, prec: None } => write!(f, "singleton ({})", pt(at)),
            Item::Point { at, prec: Some(p) } => write!(f, "singleton ({}) mod t^{p}", pt(at)),
            Item::Conjugates { around, minpoly } => {
                write!(f, "conjugate singletons [{}] in B(({}), {})", minpoly.render("u"), pt(&around.center), around.rad)
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct RisoReport {
    pub items: Vec<Item>,
    pub s0_class: CVal,
}

impl RisoReport {
    pub fn to_json(&self) -> Value {
        json!({
            "items": self.items.iter().map(|i| i.to_json()).collect::<Vec<_>>(),
            "s0_class": self.s0_class.to_json(),
        })
    }
}

// ---------------------------------------------------------------------------
// normalized input

/// Graph of a 1-Lipschitz polynomial over a ball; `swap` means x = f(y).
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Branch {
    pub(crate) swap: bool,
    pub(crate) f: KPoly,
    pub(crate) d: Ls,
    pub(crate) sigma: i64,
}

impl Branch {
    pub(crate) fn axes(&self) -> (usize, usize) {
        if self.swap {
            (1, 0)
        } else {
            (0, 1)
        }
    }
    fn point_at(&self, s: &Ls) -> Vec<Ls> {
        let mut p = vec![Ls::zero(s.field()); 2];
        let (a, b) = self.axes();
        p[a] = s.clone();
        p[b] = self.f.eval(s);
        p
    }
    fn contains(&self, p: &[Ls]) -> bool {
        let (a, b) = self.axes();
        p[a].sub(&self.d).val().is_none_or(|v| v >= self.sigma) && p[b] == self.f.eval(&p[a])
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Data {
    pub(crate) k: Field,
    pub(crate) n: usize,
    pub(crate) points: Vec<Vec<Ls>>,
    pub(crate) branches: Vec<Branch>,
}

pub(crate) fn normalize(c: &CellSet) -> Result<Data> {
    let k = c.field;
    let mut points: Vec<Vec<Ls>> = vec![];
    let mut branches: Vec<Branch> = vec![];
    for cell in &c.cells {
        match cell {
            Cell::Point(p) => points.push(p.clone()),
            Cell::Box(v) if v.iter().all(|b| b.rad.is_none()) => points.push(v.iter().map(|b| b.center.clone()).collect()),
            Cell::Box(v) if c.n == 2 && v.iter().filter(|b| b.rad.is_some()).count() == 1 => {
                let (free, fixed) = if v[0].rad.is_some() { (0, 1) } else { (1, 0) };
                branches.push(Branch {
                    swap: free == 1,
                    f: Poly::constant(v[fixed].center.clone()),
                    d: v[free].center.clone(),
                    sigma: v[free].rad.expect("free"),
                });
            }
            Cell::Graph(g) if g.tube.is_none() => branches.push(branch_of(g)),
            _ => {
                return Err(MvError::Unsupported(
                    "riso descent supports finite sets and planar unions of graphs and points".into(),
                ))
            }
        }
    }
    // merge nested domains of one function
    let mut merged: Vec<Branch> = vec![];
    branches.sort_by_key(|b| b.sigma);
    for b in branches {
        let dup = merged.iter().any(|m| {
            m.swap == b.swap && m.f == b.f && b.d.sub(&m.d).val().is_none_or(|v| v >= m.sigma) && b.sigma >= m.sigma
        });
        if !dup {
            merged.push(b);
        }
    }
    points.sort();
    points.dedup();
    points.retain(|p| !merged.iter().any(|b| b.contains(p)));
    Ok(Data { k, n: c.n, points, branches: merged })
}

/// Swapped lines of unit monomial slope are rewritten as ordinary graphs.
fn branch_of(g: &GraphCell) -> Branch {
    if g.swap && g.is_linear() {
        let a = g.f.coeff(1);
        if a.val() == Some(0) {
            if let Some(ainv) = a.inv_mono() {
                let k = g.center.field();
                let h = Poly::new(vec![g.f.coeff(0).neg().mul(&ainv), ainv], Ls::zero(k));
                return Branch { swap: false, f: h, d: g.f.eval(&g.center), sigma: g.rad };
            }
        }
    }
    Branch { swap: g.swap, f: g.f.clone(), d: g.center.clone(), sigma: g.rad }
}

// ---------------------------------------------------------------------------
// certificates

#[derive(Clone, Debug)]
pub(crate) struct Meet<'a> {
    pub(crate) br: &'a Branch,
    pub(crate) covering: bool,
}

#[derive(Clone, Debug, PartialEq)]
enum Status {
    /// riso-trivial along the given residue direction (None: X misses B)
    Trivial(Option<Vec<Kx>>),
    Nontrivial,
}

fn footprint(b: &Ball, br: &Branch) -> (Ls, i64) {
    let (a, _) = br.axes();
    (b.center[a].clone(), b.rad)
}

pub(crate) fn meets<'a>(b: &Ball, br: &'a Branch) -> Option<Meet<'a>> {
    let (fc, rho) = footprint(b, br);
    let (_, ax) = br.axes();
    if br.d.sub(&fc).val().is_some_and(|v| v < rho.min(br.sigma)) {
        return None;
    }
    let (covering, s) = if br.sigma <= rho { (true, fc) } else { (false, br.d.clone()) };
    let y = br.f.eval(&s);
    if y.sub(&b.center[ax]).val().is_some_and(|v| v < rho) {
        return None;
    }
    Some(Meet { br, covering })
}

/// f' varies by less than 1 on the footprint.
fn slope_stable(br: &Branch, c: &Ls, rho: i64) -> bool {
    let k = c.field();
    let p = br.f.deriv().substitute_affine(c, &Ls::t_pow(k, rho));
    p.coeffs().iter().skip(1).all(|x| x.val().is_none_or(|v| v >= 1))
}

/// Residue direction of the tangent at the footprint center.
fn direction(br: &Branch, c: &Ls) -> Result<Vec<Kx>> {
    let k = c.field();
    let s = br.f.deriv().eval(c).res()?;
    Ok(if br.swap { vec![s, k.one()] } else { vec![k.one(), s] })
}

/// Separation function of two covering branches and the axis it lives on.
fn separation(a: &Branch, b: &Branch) -> Option<(KPoly, usize, usize)> {
    match (a.swap, b.swap) {
        (false, false) => Some((a.f.sub(&b.f), 0, 0)),
        (true, true) => Some((a.f.sub(&b.f), 1, 0)),
        // x - g(f(x)) with a unswapped
        (false, true) => {
            let k = a.d.field();
            let x = Poly::var(Ls::zero(k));
            Some((x.sub(&b.f.compose(&a.f)), 0, 0))
        }
        (true, false) => separation(b, a).map(|(h, ax, _)| (h, ax, 1)),
    }
}

/// Expansion of h on B(c, rho) in u; returns (min valuation, reduced residue polynomial).
fn reduced(h: &KPoly, c: &Ls, rho: i64) -> Option<(i64, Poly<Kx>, KPoly)> {
    let k = c.field();
    let hu = h.substitute_affine(c, &Ls::t_pow(k, rho));
    let mu = hu.coeffs().iter().filter_map(|x| x.val()).min()?;
    let hb = Poly::new(hu.coeffs().iter().map(|x| x.coeff(mu)).collect(), k.zero());
    Some((mu, hb, hu))
}

/// Constant valuation of the separation on the footprint.
fn separation_constant(hu: &KPoly) -> bool {
    let v0 = hu.coeff(0).val();
    let rest = hu.coeffs().iter().skip(1).filter_map(|x| x.val()).min();
    match (v0, rest) {
        (Some(_), None) => true,
        (Some(a), Some(b)) => a < b,
        (None, _) => false,
    }
}

fn classify(data: &Data, b: &Ball) -> Result<Status> {
    let k = data.k;
    if data.points.iter().any(|p| b.contains(p)) {
        return Ok(Status::Nontrivial);
    }
    let ms: Vec<Meet> = data.branches.iter().filter_map(|br| meets(b, br)).collect();
    if ms.is_empty() {
        return Ok(Status::Trivial(None));
    }
    if ms.iter().any(|m| !m.covering) {
        return Ok(Status::Nontrivial);
    }
    let mut dirs = vec![];
    for m in &ms {
        let (c, rho) = footprint(b, m.br);
        if !slope_stable(m.br, &c, rho) {
            return Ok(Status::Nontrivial);
        }
        dirs.push(direction(m.br, &c)?);
    }
    // projective equality of residue directions
    let same = |u: &[Kx], v: &[Kx]| u[0].mul(&v[1]) == u[1].mul(&v[0]);
    for i in 0..ms.len() {
        for j in i + 1..ms.len() {
            if !same(&dirs[i], &dirs[j]) {
                // transversal covering branches cross inside B
                return Ok(Status::Nontrivial);
            }
            let (h, ax, _) = separation(ms[i].br, ms[j].br).expect("pair");
            if ms[i].br.swap != ms[j].br.swap {
                return Err(MvError::Uncertified);
            }
            let Some((_, _, hu)) = reduced(&h, &b.center[ax], b.rad) else {
                return Ok(Status::Nontrivial);
            };
            if !separation_constant(&hu) {
                return Ok(Status::Nontrivial);
            }
        }
    }
    let _ = k;
    Ok(Status::Trivial(Some(dirs.swap_remove(0))))
}

/// Riso-triviality space of X on the ball B.
pub fn rtsp(c: &CellSet, b: &Ball) -> Result<RtspResult> {
    let data = normalize(c)?;
    if b.dim() != data.n {
        return Err(MvError::DomainError("ball of the wrong dimension".into()));
    }
    let k = data.k;
    Ok(match classify(&data, b)? {
        Status::Trivial(None) => RtspResult {
            basis: (0..data.n).map(|i| (0..data.n).map(|j| if i == j { k.one() } else { k.zero() }).collect()).collect(),
            certified: true,
        },
        Status::Trivial(Some(d)) => RtspResult { basis: vec![d], certified: true },
        Status::Nontrivial => RtspResult { basis: vec![], certified: true },
    })
}

// ---------------------------------------------------------------------------
// descent

#[derive(Clone, Debug, PartialEq)]
enum Reason {
    Point,
    Domain,
    /// simple rational root of the separation of branches (i, j)
    Crossing(usize, usize),
    /// multiple rational root of the separation of branches (i, j)
    Tangent(usize, usize),
    Other,
}

struct Descent<'a> {
    data: &'a Data,
    items: Vec<Item>,
    cap: usize,
}

fn child_ball(center: Vec<Ls>, rad: i64) -> Ball {
    Ball::new(center, rad)
}

impl Descent<'_> {
    /// Finite list of children that may fail, with the reason they were listed.
    fn critical(&mut self, b: &Ball) -> Result<Vec<(Ball, Vec<Reason>)>> {
        let data = self.data;
        let k = data.k;
        let r1 = b.rad + 1;
        let mut out: Vec<(Ball, Vec<Reason>)> = vec![];
        let add = |ball: Ball, why: Reason, out: &mut Vec<(Ball, Vec<Reason>)>| {
            match out.iter_mut().find(|(x, _)| x.contains(&ball.center)) {
                Some((_, v)) => v.push(why),
                None => out.push((ball, vec![why])),
            }
        };
        for p in data.points.iter().filter(|p| b.contains(p)) {
            add(child_ball(p.clone(), r1), Reason::Point, &mut out);
        }
        let ms: Vec<(usize, Meet)> =
            data.branches.iter().enumerate().filter_map(|(i, br)| meets(b, br).map(|m| (i, m))).collect();
        for (_, m) in ms.iter().filter(|(_, m)| !m.covering) {
            add(child_ball(m.br.point_at(&m.br.d), r1), Reason::Domain, &mut out);
        }
        let cov: Vec<&(usize, Meet)> = ms.iter().filter(|(_, m)| m.covering).collect();
        for x in 0..cov.len() {
            for y in x + 1..cov.len() {
                let (i, mi) = cov[x];
                let (j, mj) = cov[y];
                let (h, ax, owner) = separation(mi.br, mj.br).expect("pair");
                let c = &b.center[ax];
                let Some((_, hb, hu)) = reduced(&h, c, b.rad) else { continue };
                if separation_constant(&hu) && mi.br.swap == mj.br.swap {
                    continue;
                }
                let owner_br = if owner == 0 { mi.br } else { mj.br };
                for (alpha, mult) in hb.roots_in_k() {
                    let s = c.add(&Ls::mono(alpha, b.rad));
                    let why = if mult == 1 { Reason::Crossing(*i, *j) } else { Reason::Tangent(*i, *j) };
                    add(child_ball(owner_br.point_at(&s), r1), why, &mut out);
                }
                let irr = hb.irrational_part();
                if irr.deg().unwrap_or(0) > 0 {
                    if !irr.is_squarefree() || hb.divrem(&irr.mul(&irr)).is_some_and(|(_, r)| r.is_zero()) {
                        return Err(MvError::Unsupported("multiple irrational crossing".into()));
                    }
                    let _ = k;
                    self.items.push(Item::Conjugates { around: b.clone(), minpoly: irr.monic() });
                    out.push((b.clone(), vec![Reason::Other]));
                    // marker entry: the ball itself, filtered below
                }
            }
        }
        Ok(out)
    }

    fn descend(&mut self, b: &Ball, depth: usize) -> Result<()> {
        if depth > self.cap {
            return Err(MvError::DepthExceeded(self.cap));
        }
        let before = self.items.len();
        let crit = self.critical(b)?;
        let mut found = self.items.len() > before;
        for (child, why) in crit {
            if child == *b {
                continue;
            }
            // lone point
            if why == [Reason::Point] && self.lone_point(&child) {
                let p = self.data.points.iter().find(|p| child.contains(p)).expect("point").clone();
                self.items.push(Item::Point { at: p, prec: None });
                found = true;
                continue;
            }
            if let [Reason::Crossing(i, j)] = why[..] {
                if self.only_pair(&child, i, j) {
                    self.items.push(self.crossing_point(&child, i, j)?);
                    found = true;
                    continue;
                }
            }
            if let [Reason::Tangent(i, j)] = why[..] {
                if self.only_pair(&child, i, j) {
                    if let Some(item) = self.chase(&child, i, j)? {
                        self.items.push(item);
                        found = true;
                        continue;
                    }
                }
            }
            match classify(self.data, &child)? {
                Status::Trivial(_) => {}
                Status::Nontrivial => {
                    found = true;
                    self.descend(&child, depth + 1)?;
                }
            }
        }
        if !found {
            self.items.push(Item::Ball(b.clone()));
        }
        Ok(())
    }

    /// Follows a single chain of tangent-crossing children. A chain that stays
    /// a single child for LIFT_DIGITS levels is reported as a point known to
    /// that precision; otherwise None and the caller descends normally.
    fn chase(&mut self, b: &Ball, i: usize, j: usize) -> Result<Option<Item>> {
        let mut cur = b.clone();
        for _ in 0..LIFT_DIGITS {
            let before = self.items.len();
            let crit = self.critical(&cur)?;
            self.items.truncate(before);
            let next: Vec<&(Ball, Vec<Reason>)> = crit.iter().filter(|(c, _)| *c != cur).collect();
            if crit.len() != 1 || next.len() != 1 || !self.only_pair(&next[0].0, i, j) {
                return Ok(None);
            }
            if matches!(next[0].1[..], [Reason::Crossing(..)]) {
                return Ok(Some(self.crossing_point(&next[0].0, i, j)?));
            }
            cur = next[0].0.clone();
        }
        Ok(Some(Item::Point { at: cur.center.clone(), prec: Some(cur.rad) }))
    }

    fn lone_point(&self, b: &Ball) -> bool {
        self.data.points.iter().filter(|p| b.contains(p)).count() == 1
            && self.data.branches.iter().all(|br| meets(b, br).is_none())
    }

    fn only_pair(&self, b: &Ball, i: usize, j: usize) -> bool {
        if self.data.points.iter().any(|p| b.contains(p)) {
            return false;
        }
        self.data
            .branches
            .iter()
            .enumerate()
            .all(|(x, br)| match meets(b, br) {
                None => true,
                Some(m) => (x == i || x == j) && m.covering,
            })
    }

    /// Hensel lift of the unique crossing of branches i, j inside the child ball.
    fn crossing_point(&self, b: &Ball, i: usize, j: usize) -> Result<Item> {
        let (bi, bj) = (&self.data.branches[i], &self.data.branches[j]);
        let (h, ax, owner) = separation(bi, bj).expect("pair");
        let owner_br = if owner == 0 { bi } else { bj };
        let k = self.data.k;
        let c = &b.center[ax];
        let prec = b.rad + LIFT_DIGITS;
        let mut s = c.clone();
        let dh = h.deriv();
        let mut exact = false;
        for _ in 0..64 {
            let v = h.eval(&s);
            if v.is_zero() {
                exact = true;
                break;
            }
            if v.val().is_some_and(|x| x >= prec + 2 * b.rad.abs() + 2) {
                break;
            }
            let d = dh.eval(&s);
            let dv = d.val().ok_or_else(|| MvError::Unsupported("degenerate crossing".into()))?;
            let inv = d.inv_series(prec + 2 * dv.abs() + 4)?;
            s = s.sub(&v.mul(&inv)).truncate(prec + 2 * dv.abs() + 4);
        }
        let s = if exact { s } else { s.truncate(prec) };
        let _ = k;
        let mut at = owner_br.point_at(&s);
        if !exact {
            at = at.into_iter().map(|x| x.truncate(prec)).collect();
        }
        Ok(Item::Point { at, prec: if exact { None } else { Some(prec) } })
    }
}

/// Minimal non-riso-trivial balls and singletons of X.
pub fn min_nonrisotrivial(c: &CellSet) -> Result<RisoReport> {
    min_nonrisotrivial_with(c, DEFAULT_RISO_DEPTH)
}

pub fn min_nonrisotrivial_with(c: &CellSet, cap: usize) -> Result<RisoReport> {
    let data = normalize(c)?;
    let mut items: Vec<Item> = vec![];
    if data.branches.is_empty() {
        items = data.points.iter().map(|p| Item::Point { at: p.clone(), prec: None }).collect();
    } else {
        if data.n != 2 {
            return Err(MvError::Unsupported("curves outside K^2".into()));
        }
        let bb = c.bounding_ball().expect("nonempty");
        let start = Ball::new(bb.center.clone(), bb.rad - 1);
        let mut d = Descent { data: &data, items: vec![], cap };
        match classify(&data, &start)? {
            Status::Nontrivial => d.descend(&start, 0)?,
            Status::Trivial(_) => {
                return Err(MvError::Uncertified)
            }
        }
        items = d.items;
    }
    items.sort_by_key(|i| i.to_string());
    items.dedup();
    let mut s0 = CVal::zero();
    for it in &items {
        s0 = s0.add(&it.class()?);
    }
    Ok(RisoReport { items, s0_class: s0 })
}

/// V_0(X): the class of the parametrizing set of the minimal family.
pub fn v0(c: &CellSet) -> Result<CVal> {
    Ok(min_nonrisotrivial(c)?.s0_class)
}

/// V_0(X, B): the items contained in B.
pub fn v0_rel(c: &CellSet, b: &Ball) -> Result<CVal> {
    let rep = min_nonrisotrivial(c)?;
    let mut s = CVal::zero();
    for it in &rep.items {
        if it.inside(b)? {
            s = s.add(&it.class()?);
        }
    }
    Ok(s)
}

/// Is X non-riso-trivial on B (certificate-based)?
pub fn nontrivial_on(c: &CellSet, b: &Ball) -> Result<bool> {
    Ok(rtsp(c, b)?.basis.is_empty())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{lower, parse_set};
    use rand_chacha::rand_core::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn set(text: &str, k: Field) -> CellSet {
        lower(&parse_set(text, k).unwrap(), k).unwrap()
    }
    fn q() -> Field {
        Field::Q
    }
    fn zero2() -> Vec<Ls> {
        vec![Ls::zero(q()), Ls::zero(q())]
    }

    #[test]
    fn rtsp_examples() {
        let line = set("graph(y = 0, x in B(0,0))", q());
        let r = rtsp(&line, &Ball::new(zero2(), 0)).unwrap();
        assert_eq!(r.basis, vec![vec![q().one(), q().zero()]]);
        assert!(rtsp(&line, &Ball::new(zero2(), -1)).unwrap().basis.is_empty());
        let par = set("graph(y = x^2, x in B(0,0))", q());
        assert!(rtsp(&par, &Ball::new(zero2(), 0)).unwrap().basis.is_empty());
        // proper subballs are 1-riso-trivial
        for a in 0..5 {
            let c = Ls::int(q(), a);
            let b = Ball::new(vec![c.clone(), c.mul(&c)], 1);
            assert_eq!(rtsp(&par, &b).unwrap().dim(), 1);
        }
        // missing the set gives the full space
        assert_eq!(rtsp(&line, &Ball::new(vec![Ls::zero(q()), Ls::one(q())], 1)).unwrap().dim(), 2);
    }

    #[test]
    fn worked_examples() {
        let rep = min_nonrisotrivial(&set("graph(y = 0, x in B(0,0))", q())).unwrap();
        assert_eq!(rep.items, vec![Item::Ball(Ball::new(zero2(), -1))]);
        assert_eq!(rep.s0_class, CVal::one());
        let rep = min_nonrisotrivial(&set("graph(y = x^2, x in B(0,0))", q())).unwrap();
        assert_eq!(rep.items, vec![Item::Ball(Ball::new(zero2(), 0))]);
        assert_eq!(rep.s0_class, CVal::one());
        let two = set("graph(y = 0, x in B(0,0)) | graph(y = t*x, x in B(0,0))", q());
        let rep = min_nonrisotrivial(&two).unwrap();
        assert_eq!(rep.items, vec![Item::Point { at: zero2(), prec: None }]);
        assert_eq!(rep.s0_class, CVal::one());
        let cubic = set("graph(y = t*x^3 - t*x, x in B(0,0)) | graph(y = 0, x in B(0,0))", q());
        assert_eq!(v0(&cubic).unwrap(), CVal::int(3));
        // not sub-additive
        let x1 = set("graph(y = t*x^3 - t*x, x in B(0,0))", q());
        let x2 = set("graph(y = 0, x in B(0,0))", q());
        assert_eq!(v0(&x1).unwrap().add(&v0(&x2).unwrap()), CVal::int(2));
    }

    #[test]
    fn finite_and_relative() {
        let pts = set("point(0,0) | point(1,0) | point(t, 2)", q());
        assert_eq!(v0(&pts).unwrap(), CVal::int(3));
        let two = set("graph(y = 0, x in B(0,0)) | graph(y = t*x, x in B(0,0))", q());
        assert_eq!(v0_rel(&two, &Ball::new(zero2(), 0)).unwrap(), CVal::one());
        let away = Ball::new(vec![Ls::one(q()), Ls::zero(q())], 1);
        assert_eq!(v0_rel(&two, &away).unwrap(), CVal::zero());
    }

    #[test]
    fn irrational_crossings() {
        // y = 0 and y = t(x^2 - 2) cross at +-sqrt 2
        let x = set("graph(y = 0, x in B(0,0)) | graph(y = t*x^2 - 2*t, x in B(0,0))", q());
        let rep = min_nonrisotrivial(&x).unwrap();
        assert_eq!(rep.items.len(), 1);
        assert_eq!(rep.s0_class, CVal::atom(ClassAtom::etale_str("x^2 - 2", q()).unwrap()));
        // over F_7, 2 = 3^2 so both crossings are rational
        let k7 = Field::finite(7).unwrap();
        let x7 = set("graph(y = 0, x in B(0,0)) | graph(y = t*x^2 - 2*t, x in B(0,0))", k7);
        let rep = min_nonrisotrivial(&x7).unwrap();
        assert_eq!(rep.items.len(), 2);
        assert_eq!(rep.s0_class, CVal::int(2));
    }

    #[test]
    fn crossing_points_are_lifted() {
        // y = 0 and y = t(x^2 - x - t): roots are power series
        let x = set("graph(y = 0, x in B(0,0)) | graph(y = t*x^2 - t*x - t^2, x in B(0,0))", q());
        let rep = min_nonrisotrivial(&x).unwrap();
        assert_eq!(rep.items.len(), 2);
        for it in &rep.items {
            let Item::Point { at, prec: Some(p) } = it else { panic!("{it}") };
            let h = at[0].mul(&at[0]).sub(&at[0]).sub(&Ls::t_pow(q(), 1));
            assert!(h.val().is_none_or(|v| v >= *p - 2));
        }
    }

    #[test]
    fn tangency_is_one_point() {
        let x = set("graph(y = 0, x in B(0,0)) | graph(y = t*x^2 + 2*t*x + t, x in B(0,0))", q());
        let rep = min_nonrisotrivial(&x).unwrap();
        assert_eq!(rep.s0_class, CVal::one());
        let Item::Point { at, .. } = &rep.items[0] else { panic!() };
        assert_eq!(at[0].truncate(4), Ls::int(q(), -1));
    }

    fn fixtures() -> Vec<&'static str> {
        vec![
            "graph(y = 0, x in B(0,0))",
            "graph(y = x^2, x in B(0,0))",
            "graph(y = 0, x in B(0,0)) | graph(y = t*x, x in B(0,0))",
            "graph(y = t*x^3 - t*x, x in B(0,0)) | graph(y = 0, x in B(0,0))",
            "graph(y = x^2, x in B(0,1)) | point(1, 0)",
            "graph(y = x, x in B(0,0)) | graph(y = -x, x in B(0,0))",
            "point(0,0) | point(t, 0) | point(1, 1)",
        ]
    }

    #[test]
    fn characterization_on_random_balls() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        for text in fixtures() {
            let x = set(text, q());
            let rep = min_nonrisotrivial(&x).unwrap();
            for _ in 0..100 {
                let mut coord = || {
                    let terms: Vec<(i64, Kx)> =
                        (0..3).map(|e| (e - 1, q().int((rng.next_u32() % 3) as i64 - 1))).collect();
                    Ls::from_terms(q(), terms)
                };
                let b = Ball::new(vec![coord(), coord()], (rng.next_u32() % 5) as i64 - 1);
                let nt = nontrivial_on(&x, &b).unwrap();
                let has = rep.items.iter().any(|i| i.inside(&b).unwrap());
                assert_eq!(nt, has, "{text} on {b:?}");
            }
        }
    }

    #[test]
    fn minimality_and_disjointness() {
        for text in fixtures() {
            let x = set(text, q());
            let rep = min_nonrisotrivial(&x).unwrap();
            let data = normalize(&x).unwrap();
            for (i, a) in rep.items.iter().enumerate() {
                for b in &rep.items[i + 1..] {
                    if let (Item::Ball(p), Item::Ball(r)) = (a, b) {
                        assert!(!p.subset_of(r) && !r.subset_of(p));
                    }
                }
                if let Item::Ball(b) = a {
                    // every critical child is certified trivial
                    let mut d = Descent { data: &data, items: vec![], cap: 4 };
                    for (child, _) in d.critical(b).unwrap() {
                        if child != *b {
                            assert!(matches!(classify(&data, &child).unwrap(), Status::Trivial(_)));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn item_count_bound() {
        // crossings bounded by the degree of the separation, plus one ball per branch
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        for _ in 0..30 {
            let a = (rng.next_u32() % 5) as i64 - 2;
            let b = (rng.next_u32() % 5) as i64 - 2;
            let text = format!("graph(y = t*x^2 + {a}*t*x, x in B(0,0)) | graph(y = {b}*t, x in B(0,0))");
            let rep = min_nonrisotrivial(&set(&text, q())).unwrap();
            assert!(rep.items.len() <= 2 + 2, "{text}: {:?}", rep.items);
        }
    }

    #[test]
    fn comparison_defect() {
        // X is 1-riso-trivial on O^2: V_0(X, B) = 0 while V_0(X cap B) = 1
        let x = set("graph(y = 0, x in B(0,-1))", q());
        let b = Ball::new(zero2(), 0);
        assert_eq!(v0_rel(&x, &b).unwrap(), CVal::zero());
        let xb = set("graph(y = 0, x in B(0,0))", q());
        assert_eq!(v0(&xb).unwrap(), CVal::one());
    }
}
