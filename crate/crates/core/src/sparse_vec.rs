//! Serde adapter writing long, mostly-zero vectors as `{len, nonzero: [[i, v], ...]}`.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Serialize, Deserialize)]
struct Sparse {
    len: usize,
    nonzero: Vec<(usize, f64)>,
}

pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
    Sparse {
        len: v.len(),
        nonzero: v
            .iter()
            .enumerate()
            .filter(|(_, x)| **x != 0.0)
            .map(|(i, x)| (i, *x))
            .collect(),
    }
    .serialize(s)
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
    let sparse = Sparse::deserialize(d)?;
    let mut v = vec![0.0; sparse.len];
    for (i, x) in sparse.nonzero {
        if i >= sparse.len {
            return Err(serde::de::Error::custom(format!(
                "index {i} out of range for length {}",
                sparse.len
            )));
        }
        v[i] = x;
    }
    Ok(v)
}
