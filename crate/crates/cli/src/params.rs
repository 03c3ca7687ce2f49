//! Parsing and validation of JSON parameters given on the command line.

use matkummer::dist::{BetaParams, DistParams, KummerParams, WishartParams};
use matkummer::symcone::{ConePoint, SymMat};
use matkummer::{Error, Result};
use serde_json::{Map, Value};

use crate::DistKind;

fn with_path(e: Error, path: &str) -> Error {
    match e {
        Error::Domain(m) => Error::Domain(format!("{path}: {m}")),
        other => other,
    }
}

pub fn parse_json(text: &str, path: &str) -> Result<Value> {
    serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("{path}: invalid JSON: {e}")))
}

/// A positive definite matrix given as JSON.
pub fn cone_point(v: &Value, path: &str) -> Result<ConePoint> {
    ConePoint::new(SymMat::from_json_value(v, path)?).map_err(|e| with_path(e, path))
}

pub fn cone_point_str(text: &str, path: &str) -> Result<ConePoint> {
    cone_point(&parse_json(text, path)?, path)
}

struct Obj<'a> {
    map: &'a Map<String, Value>,
    path: &'a str,
}

impl<'a> Obj<'a> {
    fn new(v: &'a Value, path: &'a str, allowed: &[&str]) -> Result<Self> {
        let map = v.as_object().ok_or_else(|| Error::InvalidInput(format!("{path}: expected an object")))?;
        if let Some(k) = map.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(Error::InvalidInput(format!("{path}: unknown key '{k}' (expected {})", allowed.join(", "))));
        }
        Ok(Self { map, path })
    }

    fn get(&self, key: &str) -> Result<&'a Value> {
        self.map.get(key).ok_or_else(|| Error::InvalidInput(format!("{}.{key}: missing", self.path)))
    }

    fn real(&self, key: &str) -> Result<f64> {
        self.get(key)?.as_f64().ok_or_else(|| Error::InvalidInput(format!("{}.{key}: must be a number", self.path)))
    }

    fn count(&self, key: &str) -> Result<usize> {
        self.get(key)?
            .as_u64()
            .map(|n| n as usize)
            .ok_or_else(|| Error::InvalidInput(format!("{}.{key}: must be a non-negative integer", self.path)))
    }

    fn cone(&self, key: &str) -> Result<ConePoint> {
        cone_point(self.get(key)?, &format!("{}.{key}", self.path))
    }
}

/// `wishart: {p, sigma}`, `beta: {p, q, r}`, `kummer: {a, b, sigma}`.
pub fn dist_params(kind: DistKind, text: &str) -> Result<DistParams> {
    let path = "params";
    let v = parse_json(text, path)?;
    let ctx = |e: Error| with_path(e, path);
    Ok(match kind {
        DistKind::Wishart => {
            let o = Obj::new(&v, path, &["p", "sigma"])?;
            DistParams::Wishart(WishartParams::new(o.real("p")?, o.cone("sigma")?).map_err(ctx)?)
        }
        DistKind::Beta => {
            let o = Obj::new(&v, path, &["p", "q", "r"])?;
            DistParams::Beta(BetaParams::new(o.real("p")?, o.real("q")?, o.count("r")?).map_err(ctx)?)
        }
        DistKind::Kummer => {
            let o = Obj::new(&v, path, &["a", "b", "sigma"])?;
            DistParams::Kummer(KummerParams::new(o.real("a")?, o.real("b")?, o.cone("sigma")?).map_err(ctx)?)
        }
    })
}
