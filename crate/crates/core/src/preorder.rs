//! Witness-checked preorder on class values over a point base.
//!
//! A witness is a finite surjection f: Z -> Y with a nonnegative weight phi on
//! Y; it certifies F >= 0 when F = sum_z [z] phi(f(z)) - sum_y [y] phi(y).

use num_rational::BigRational;
use num_traits::Zero;
use serde_json::{json, Value};

use crate::error::{MvError, Result};
use crate::groth::{CVal, ClassAtom};
use crate::k::Field;

#[derive(Clone, Debug, PartialEq)]
pub struct Witness {
    pub field: Field,
    pub y: Vec<ClassAtom>,
    pub z: Vec<ClassAtom>,
    /// pairs (z index, y index)
    pub f: Vec<(usize, usize)>,
    pub phi: Vec<(usize, CVal)>,
}

fn degree(a: &ClassAtom) -> usize {
    match a {
        ClassAtom::PowerOfL(_) => 1,
        ClassAtom::Etale(e) => e.degree(),
    }
}

impl Witness {
    fn image(&self, z: usize) -> Option<usize> {
        self.f.iter().find(|(a, _)| *a == z).map(|(_, b)| *b)
    }

    fn phi_of(&self, y: usize) -> Result<&CVal> {
        self.phi
            .iter()
            .find(|(a, _)| *a == y)
            .map(|(_, v)| v)
            .ok_or_else(|| MvError::DomainError(format!("phi undefined on Y[{y}]")))
    }

    /// Structural checks: f total on Z and surjective onto Y, phi nonnegative.
    pub fn validate(&self) -> Result<()> {
        for z in 0..self.z.len() {
            match self.image(z) {
                Some(y) if y < self.y.len() => {}
                Some(y) => return Err(MvError::DomainError(format!("f(Z[{z}]) = Y[{y}] is out of range"))),
                None => return Err(MvError::DomainError(format!("f undefined on Z[{z}]"))),
            }
        }
        for (y, ay) in self.y.iter().enumerate() {
            // an etale class of degree d needs d geometric points over it
            let cover: usize = (0..self.z.len()).filter(|&z| self.image(z) == Some(y)).map(|z| degree(&self.z[z])).sum();
            if cover == 0 || cover < degree(ay) {
                return Err(MvError::NotSurjective(format!("Y[{y}] = {ay}")));
            }
        }
        for (y, v) in &self.phi {
            if !v.is_nonneg() {
                return Err(MvError::NegativePhi(format!("Y[{y}]")));
            }
        }
        Ok(())
    }

    /// sum_z [z] phi(f(z)) - sum_y [y] phi(y).
    pub fn value(&self) -> Result<CVal> {
        let mut s = CVal::zero();
        for (z, az) in self.z.iter().enumerate() {
            let y = self.image(z).ok_or_else(|| MvError::DomainError(format!("f undefined on Z[{z}]")))?;
            s = s.add(&self.phi_of(y)?.mul_atom(az)?);
        }
        for (y, ay) in self.y.iter().enumerate() {
            s = s.sub(&self.phi_of(y)?.mul_atom(ay)?);
        }
        Ok(s)
    }

    pub fn to_json(&self) -> Value {
        json!({
            "field": self.field.to_string(),
            "Y": self.y.iter().map(|a| a.to_json()).collect::<Vec<_>>(),
            "Z": self.z.iter().map(|a| a.to_json()).collect::<Vec<_>>(),
            "f": self.f.iter().map(|(a, b)| json!([a, b])).collect::<Vec<_>>(),
            "phi": self.phi.iter().map(|(a, v)| json!([a, v.to_json()])).collect::<Vec<_>>(),
        })
    }

    pub fn from_json(v: &Value, default: Field) -> Result<Self> {
        let bad = |m: &str| MvError::Usage(format!("malformed witness: {m}"));
        let field = match v.get("field").and_then(|f| f.as_str()) {
            Some(s) => Field::parse(s)?,
            None => default,
        };
        let atoms = |key: &str| -> Result<Vec<ClassAtom>> {
            v.get(key)
                .and_then(|a| a.as_array())
                .ok_or_else(|| bad(key))?
                .iter()
                .map(|a| ClassAtom::from_json(a, field))
                .collect()
        };
        let pairs = |key: &str| -> Result<Vec<(usize, Value)>> {
            v.get(key)
                .and_then(|a| a.as_array())
                .ok_or_else(|| bad(key))?
                .iter()
                .map(|p| {
                    let p = p.as_array().filter(|p| p.len() == 2).ok_or_else(|| bad(key))?;
                    let i = p[0].as_u64().ok_or_else(|| bad(key))? as usize;
                    Ok((i, p[1].clone()))
                })
                .collect()
        };
        let f = pairs("f")?
            .into_iter()
            .map(|(a, b)| b.as_u64().map(|b| (a, b as usize)).ok_or_else(|| bad("f")))
            .collect::<Result<_>>()?;
        let phi = pairs("phi")?.into_iter().map(|(a, b)| Ok((a, CVal::from_json(&b, field)?))).collect::<Result<_>>()?;
        Ok(Witness { field, y: atoms("Y")?, z: atoms("Z")?, f, phi })
    }
}

/// Does w certify F >= 0?
pub fn check_witness(f: &CVal, w: &Witness) -> Result<bool> {
    w.validate()?;
    Ok(w.value()? == *f)
}

/// Y = {0}, Z = {0, 1}, phi(0) = F: the sum is 2F - F.
pub fn embed_nonneg(f: &CVal, k: Field) -> Result<Witness> {
    if !f.is_nonneg() {
        return Err(MvError::NegativePhi(f.to_string()));
    }
    Ok(Witness {
        field: k,
        y: vec![ClassAtom::point()],
        z: vec![ClassAtom::point(), ClassAtom::point()],
        f: vec![(0, 0), (1, 0)],
        phi: vec![(0, f.clone())],
    })
}

/// Disjoint union of two witnesses.
pub fn combine(a: &Witness, b: &Witness) -> Witness {
    let (ny, nz) = (a.y.len(), a.z.len());
    Witness {
        field: a.field,
        y: a.y.iter().chain(&b.y).cloned().collect(),
        z: a.z.iter().chain(&b.z).cloned().collect(),
        f: a.f.iter().cloned().chain(b.f.iter().map(|(z, y)| (z + nz, y + ny))).collect(),
        phi: a.phi.iter().cloned().chain(b.phi.iter().map(|(y, v)| (y + ny, v.clone()))).collect(),
    }
}

/// Point count of a verified F over F_q; sound only for finite residue fields.
pub fn specialize_witness(f: &CVal, w: &Witness) -> Result<BigRational> {
    if !w.field.is_finite() {
        return Err(MvError::BaseFieldMismatch(format!("witness over {}", w.field)));
    }
    if !check_witness(f, w)? {
        return Err(MvError::DomainError("witness does not verify".into()));
    }
    let n = f.count_points(w.field.q())?;
    if n < BigRational::zero() {
        return Err(MvError::DomainError(format!("verified value counts to {n} < 0")));
    }
    Ok(n)
}

/// Witness for [Z] - 1 >= 0 with Z a finite etale cover of the point.
pub fn etale_cover_witness(cover: ClassAtom, k: Field) -> Witness {
    Witness { field: k, y: vec![ClassAtom::point()], z: vec![cover], f: vec![(0, 0)], phi: vec![(0, CVal::one())] }
}
