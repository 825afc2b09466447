use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{FirstMoment, SampleCount, SecondMoment};
use crate::error::{Error, Result};
use crate::model::io::{collect_bands, doc_to_matrix, matrix_to_doc, parse_header, read_file, write_file, BandDoc};
use crate::model::{Signal, FORMAT_VERSION};

#[derive(Debug, Serialize, Deserialize)]
struct ComponentDoc {
    l1: usize,
    l2: usize,
    l3: usize,
    /// Flattened over (m, s2, s3), last index fastest.
    re: Vec<f64>,
    im: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct MomentsDoc {
    format_version: u32,
    kind: String,
    #[serde(rename = "L")]
    l_max: usize,
    #[serde(rename = "R")]
    shells: usize,
    sigma_used: f64,
    n_used: SampleCount,
    #[serde(default)]
    warnings: Vec<String>,
    first: Vec<BandDoc>,
    second: Vec<ComponentDoc>,
}

pub fn moments_to_json(m1: &FirstMoment, m2: &SecondMoment) -> Result<String> {
    if m1.l_max() != m2.l_max() || m1.shells() != m2.shells() {
        return Err(Error::ShapeMismatch("first and second moments have different shapes".into()));
    }
    let mut warnings = m1.warnings.clone();
    warnings.extend(m2.warnings.iter().filter(|w| !m1.warnings.contains(w)).cloned());
    let doc = MomentsDoc {
        format_version: FORMAT_VERSION,
        kind: "moments".into(),
        l_max: m2.l_max(),
        shells: m2.shells(),
        sigma_used: m2.sigma_used,
        n_used: m2.n_used,
        warnings,
        first: m1.as_signal().bands().iter().enumerate().map(|(l, b)| matrix_to_doc(l, b)).collect(),
        second: m2
            .iter()
            .map(|(&(l1, l2, l3), c)| ComponentDoc {
                l1,
                l2,
                l3,
                re: c.iter().map(|z| z.re).collect(),
                im: c.iter().map(|z| z.im).collect(),
            })
            .collect(),
    };
    Ok(serde_json::to_string_pretty(&doc).expect("plain data serializes"))
}

fn from_json_ctx(ctx: &str, text: &str) -> Result<(FirstMoment, SecondMoment)> {
    parse_header(ctx, text, "moments")?;
    let doc: MomentsDoc = serde_json::from_str(text).map_err(|e| Error::parse(ctx, e.to_string()))?;
    let (l_max, r) = (doc.l_max, doc.shells);
    let bands = collect_bands(ctx, &doc.first, l_max)?
        .into_iter()
        .enumerate()
        .map(|(l, b)| doc_to_matrix(ctx, &format!("first-moment band {l}"), b, 2 * l + 1, r))
        .collect::<Result<Vec<_>>>()?;
    let mut m1 = FirstMoment::new(Signal::new(bands).map_err(|e| Error::parse(ctx, e.to_string()))?, doc.n_used);
    let mut m2 = SecondMoment::zeros(l_max, r, doc.n_used);
    let mut seen = std::collections::BTreeSet::new();
    for c in &doc.second {
        let t = (c.l1, c.l2, c.l3);
        let name = format!("component ({}; {}, {})", c.l1, c.l2, c.l3);
        if m2.component(c.l1, c.l2, c.l3).is_none() {
            return Err(Error::parse(ctx, format!("{name} is not admissible for L = {l_max}")));
        }
        if !seen.insert(t) {
            return Err(Error::parse(ctx, format!("{name} appears twice")));
        }
        let len = (2 * c.l1 + 1) * r * r;
        for (field, v) in [("re", &c.re), ("im", &c.im)] {
            if v.len() != len {
                return Err(Error::parse(ctx, format!("{name} field `{field}` has {} entries, expected {len}", v.len())));
            }
        }
        for (dst, (re, im)) in m2.component_mut(t).iter_mut().zip(c.re.iter().zip(&c.im)) {
            *dst = Complex64::new(*re, *im);
        }
    }
    if let Some(t) = m2.triples().find(|t| !seen.contains(*t)) {
        return Err(Error::parse(ctx, format!("component ({}; {}, {}) is missing", t.0, t.1, t.2)));
    }
    m2.sigma_used = doc.sigma_used;
    m1.warnings = doc.warnings.clone();
    m2.warnings = doc.warnings;
    Ok((m1, m2))
}

pub fn moments_from_json(text: &str) -> Result<(FirstMoment, SecondMoment)> {
    from_json_ctx("moments document", text)
}

pub fn save_moments(path: impl AsRef<Path>, m1: &FirstMoment, m2: &SecondMoment) -> Result<()> {
    write_file(path.as_ref(), &moments_to_json(m1, m2)?)
}

pub fn load_moments(path: impl AsRef<Path>) -> Result<(FirstMoment, SecondMoment)> {
    let p = path.as_ref();
    from_json_ctx(&p.display().to_string(), &read_file(p)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{random_distribution, random_signal};
    use crate::moments::{population_first_moment, population_second_moment};

    fn sample() -> (FirstMoment, SecondMoment) {
        let x = random_signal(3, 2, 1, false).unwrap();
        let rho = random_distribution(3, 1, false);
        (population_first_moment(&rho, &x).unwrap(), population_second_moment(&rho, &x).unwrap())
    }

    #[test]
    fn round_trip_is_bitwise() {
        let (a, mut b) = sample();
        b.n_used = SampleCount::Samples(12);
        b.sigma_used = 0.25;
        let (c, d) = moments_from_json(&moments_to_json(&a, &b).unwrap()).unwrap();
        assert_eq!(a.as_signal(), c.as_signal());
        assert_eq!(b, d);
    }

    #[test]
    fn missing_component_is_named() {
        let (a, b) = sample();
        let mut v: serde_json::Value = serde_json::from_str(&moments_to_json(&a, &b).unwrap()).unwrap();
        v["second"].as_array_mut().unwrap().remove(0);
        let err = moments_from_json(&v.to_string()).unwrap_err().to_string();
        assert!(err.contains("(0; 0, 0) is missing"), "{err}");
    }

    #[test]
    fn wrong_length_is_named() {
        let (a, b) = sample();
        let mut v: serde_json::Value = serde_json::from_str(&moments_to_json(&a, &b).unwrap()).unwrap();
        v["second"][3]["im"].as_array_mut().unwrap().pop();
        let err = moments_from_json(&v.to_string()).unwrap_err().to_string();
        assert!(err.contains("field `im`"), "{err}");
    }
}
