//! Finite atomic probability measures on `[0, θ*]` and empirical PMFs of
//! integer samples.
//!
//! An [`AtomicMeasure`] is the representation used for every mixing
//! distribution in the crate: the truth used to simulate data, the solver
//! iterates, and the fitted estimate. Atoms are kept sorted by location so
//! that CDF-based computations (the Wasserstein-1 distance in particular)
//! are a single linear sweep.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Atoms closer than this are merged by [`canonicalize`].
pub const DEFAULT_MERGE_RADIUS: f64 = 1e-8;
/// Weights below this (after normalization) are dropped by [`canonicalize`].
pub const DEFAULT_PRUNE_EPS: f64 = 1e-12;

const WEIGHT_SUM_TOL: f64 = 1e-12;

/// A point mass `weight · δ_location`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub location: f64,
    pub weight: f64,
}

/// A finite discrete probability measure supported in `[0, θ*]`.
///
/// Invariants enforced at construction:
/// * weights sum to one within `1e-12`,
/// * locations are strictly increasing and lie in `[0, θ*]`,
/// * no weight is below [`DEFAULT_PRUNE_EPS`].
#[derive(Debug, Clone, PartialEq)]
pub struct AtomicMeasure {
    theta_star: f64,
    atoms: Vec<Atom>,
}

impl AtomicMeasure {
    /// Builds a measure from `(location, weight)` pairs, checking every
    /// invariant. Use [`canonicalize`] for unnormalized or unsorted input.
    pub fn new(theta_star: f64, atoms: Vec<(f64, f64)>) -> Result<Self> {
        check_theta_star(theta_star)?;
        if atoms.is_empty() {
            return Err(Error::InvalidMeasure("no atoms".into()));
        }
        let mut sum = 0.0;
        let mut prev = f64::NEG_INFINITY;
        for &(loc, w) in &atoms {
            if !loc.is_finite() || !(0.0..=theta_star).contains(&loc) {
                return Err(Error::InvalidMeasure(format!(
                    "location {loc} outside [0, {theta_star}]"
                )));
            }
            if loc <= prev {
                return Err(Error::InvalidMeasure(
                    "locations must be strictly increasing".into(),
                ));
            }
            if !w.is_finite() || w < DEFAULT_PRUNE_EPS {
                return Err(Error::InvalidMeasure(format!(
                    "weight {w} at location {loc} is below the prune threshold"
                )));
            }
            prev = loc;
            sum += w;
        }
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidMeasure(format!(
                "weights sum to {sum}, expected 1"
            )));
        }
        Ok(Self {
            theta_star,
            atoms: atoms
                .into_iter()
                .map(|(location, weight)| Atom { location, weight })
                .collect(),
        })
    }

    /// The point mass `δ_location`.
    pub fn point_mass(theta_star: f64, location: f64) -> Result<Self> {
        Self::new(theta_star, vec![(location, 1.0)])
    }

    pub fn theta_star(&self) -> f64 {
        self.theta_star
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn locations(&self) -> impl Iterator<Item = f64> + '_ {
        self.atoms.iter().map(|a| a.location)
    }

    pub fn weights(&self) -> impl Iterator<Item = f64> + '_ {
        self.atoms.iter().map(|a| a.weight)
    }

    /// `(location, weight)` pairs in increasing location order.
    pub fn pairs(&self) -> Vec<(f64, f64)> {
        self.atoms.iter().map(|a| (a.location, a.weight)).collect()
    }

    /// Right-continuous CDF `G((-∞, t])`.
    pub fn cdf(&self, t: f64) -> f64 {
        let last = self.atoms.last().map_or(0.0, |a| a.location);
        if t >= last {
            return 1.0;
        }
        self.atoms
            .iter()
            .take_while(|a| a.location <= t)
            .map(|a| a.weight)
            .sum()
    }

    /// Whether this is `δ_0`.
    pub fn is_point_mass_at_zero(&self) -> bool {
        self.atoms.len() == 1 && self.atoms[0].location == 0.0
    }

    /// Re-canonicalizes this measure with the given thresholds.
    pub fn canonicalized(&self, merge_radius: f64, prune_eps: f64) -> Result<Self> {
        canonicalize(
            self.theta_star,
            self.atoms.iter().map(|a| (a.location, a.weight)),
            merge_radius,
            prune_eps,
        )
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&MeasureFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: MeasureFile = serde_json::from_str(text)?;
        file.try_into()
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = self.to_json()?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }
}

/// On-disk form: `{"theta_star": r, "atoms": [[loc, weight], ...]}`.
///
/// Floats go through `serde_json`, which writes the shortest decimal that
/// parses back to the identical `f64`.
#[derive(Debug, Serialize, Deserialize)]
struct MeasureFile {
    theta_star: f64,
    atoms: Vec<[f64; 2]>,
}

impl From<&AtomicMeasure> for MeasureFile {
    fn from(m: &AtomicMeasure) -> Self {
        Self {
            theta_star: m.theta_star,
            atoms: m.atoms.iter().map(|a| [a.location, a.weight]).collect(),
        }
    }
}

impl TryFrom<MeasureFile> for AtomicMeasure {
    type Error = Error;

    fn try_from(file: MeasureFile) -> Result<Self> {
        AtomicMeasure::new(
            file.theta_star,
            file.atoms.into_iter().map(|[l, w]| (l, w)).collect(),
        )
    }
}

fn check_theta_star(theta_star: f64) -> Result<()> {
    if !(theta_star.is_finite() && theta_star > 0.0) {
        return Err(Error::InvalidMeasure(format!(
            "theta_star must be positive and finite, got {theta_star}"
        )));
    }
    Ok(())
}

/// Normalizes, merges and prunes a raw list of weighted atoms.
///
/// Sorted atoms whose gap to their neighbour is at most `merge_radius` form
/// a cluster that collapses to one atom at the weight-weighted mean
/// location. Weights below `prune_eps` are then dropped and the rest
/// renormalized. Weights must be nonnegative with a positive total.
pub fn canonicalize(
    theta_star: f64,
    atoms: impl IntoIterator<Item = (f64, f64)>,
    merge_radius: f64,
    prune_eps: f64,
) -> Result<AtomicMeasure> {
    check_theta_star(theta_star)?;
    if !(merge_radius >= 0.0 && prune_eps >= 0.0) {
        return Err(Error::Config(
            "merge radius and prune threshold must be nonnegative".into(),
        ));
    }
    let mut raw = Vec::new();
    for (loc, w) in atoms {
        if !loc.is_finite() || !w.is_finite() || w < 0.0 {
            return Err(Error::InvalidMeasure(format!("bad atom ({loc}, {w})")));
        }
        // Allow rounding noise at the boundary, nothing more.
        let slack = 1e-12 * theta_star;
        if loc < -slack || loc > theta_star + slack {
            return Err(Error::InvalidMeasure(format!(
                "location {loc} outside [0, {theta_star}]"
            )));
        }
        if w > 0.0 {
            raw.push((loc.clamp(0.0, theta_star), w));
        }
    }
    let total: f64 = raw.iter().map(|a| a.1).sum();
    if raw.is_empty() || total <= 0.0 {
        return Err(Error::DegenerateMeasure);
    }
    raw.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut merged: Vec<(f64, f64)> = Vec::with_capacity(raw.len());
    let mut cluster_mass = 0.0;
    let mut cluster_moment = 0.0;
    let mut cluster_len = 0usize;
    let mut last_loc = f64::NEG_INFINITY;
    for (loc, w) in raw {
        let w = w / total;
        if loc - last_loc > merge_radius && cluster_len > 0 {
            merged.push(close_cluster(
                cluster_moment,
                cluster_mass,
                cluster_len,
                last_loc,
                theta_star,
            ));
            cluster_mass = 0.0;
            cluster_moment = 0.0;
            cluster_len = 0;
        }
        cluster_mass += w;
        cluster_moment += w * loc;
        cluster_len += 1;
        last_loc = loc;
    }
    merged.push(close_cluster(
        cluster_moment,
        cluster_mass,
        cluster_len,
        last_loc,
        theta_star,
    ));

    merged.retain(|a| a.1 >= prune_eps);
    let kept: f64 = merged.iter().map(|a| a.1).sum();
    if merged.is_empty() || kept <= 0.0 {
        return Err(Error::DegenerateMeasure);
    }
    let atoms = merged
        .into_iter()
        .map(|(location, w)| Atom {
            location,
            weight: w / kept,
        })
        .collect();
    Ok(AtomicMeasure { theta_star, atoms })
}

fn close_cluster(moment: f64, mass: f64, len: usize, last: f64, theta_star: f64) -> (f64, f64) {
    // A lone atom keeps its exact location.
    if len == 1 {
        return (last, mass);
    }
    ((moment / mass).clamp(0.0, theta_star), mass)
}

/// Relative frequencies of an integer sample: the distinct observed values
/// `i_1 < … < i_q`, their counts `a_x` and frequencies `α_x = a_x / n`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalPmf {
    values: Vec<u64>,
    counts: Vec<u64>,
    freqs: Vec<f64>,
    n: u64,
}

impl EmpiricalPmf {
    pub fn from_samples(samples: &[u64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyInput);
        }
        let mut tally: BTreeMap<u64, u64> = BTreeMap::new();
        for &s in samples {
            *tally.entry(s).or_default() += 1;
        }
        let (values, counts) = tally.into_iter().unzip();
        Self::from_counts(values, counts)
    }

    /// Builds the PMF from distinct strictly increasing values and their
    /// positive counts.
    pub fn from_counts(values: Vec<u64>, counts: Vec<u64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput);
        }
        if values.len() != counts.len() {
            return Err(Error::Parse(format!(
                "{} values but {} counts",
                values.len(),
                counts.len()
            )));
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Parse("values must be strictly increasing".into()));
        }
        if counts.contains(&0) {
            return Err(Error::Parse("counts must be positive".into()));
        }
        let n: u64 = counts.iter().sum();
        let freqs = counts.iter().map(|&c| c as f64 / n as f64).collect();
        Ok(Self {
            values,
            counts,
            freqs,
            n,
        })
    }

    pub fn values(&self) -> &[u64] {
        &self.values
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }

    /// Total sample size.
    pub fn n(&self) -> u64 {
        self.n
    }

    /// Number of distinct observed values.
    pub fn support_size(&self) -> usize {
        self.values.len()
    }

    /// `(value, frequency)` pairs.
    pub fn iter(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        self.values.iter().copied().zip(self.freqs.iter().copied())
    }

    /// Frequency of `x`, zero if unobserved.
    pub fn freq(&self, x: u64) -> f64 {
        self.values.binary_search(&x).map_or(0.0, |i| self.freqs[i])
    }

    /// `Σ α_x log α_x`, the constant separating the KL objective from the
    /// average log-likelihood.
    pub fn neg_entropy(&self) -> f64 {
        self.freqs.iter().map(|&a| a * a.ln()).sum()
    }

    /// Reads the `value,count` CSV form.
    pub fn read_csv(reader: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.get(0) != Some("value") || headers.get(1) != Some("count") {
            return Err(Error::Parse("expected header `value,count`".into()));
        }
        let mut values = Vec::new();
        let mut counts = Vec::new();
        for record in rdr.records() {
            let record = record?;
            let parse = |i: usize| -> Result<u64> {
                record
                    .get(i)
                    .ok_or_else(|| Error::Parse("short row".into()))?
                    .parse()
                    .map_err(|e| Error::Parse(format!("bad integer: {e}")))
            };
            values.push(parse(0)?);
            counts.push(parse(1)?);
        }
        Self::from_counts(values, counts)
    }

    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["value", "count"])?;
        for (v, c) in self.values.iter().zip(&self.counts) {
            wtr.write_record([v.to_string(), c.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Reads integer samples, one per row. A non-numeric first row is treated
/// as a header.
pub fn read_samples(reader: impl Read) -> Result<Vec<u64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let mut out = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        let Some(field) = record.get(0) else { continue };
        if field.is_empty() {
            continue;
        }
        match field.parse::<u64>() {
            Ok(v) => out.push(v),
            Err(_) if row == 0 => continue,
            Err(e) => {
                return Err(Error::Parse(format!(
                    "row {}: `{field}` is not a nonnegative integer ({e})",
                    row + 1
                )))
            }
        }
    }
    if out.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(out)
}

/// Writes samples one per row under a `value` header.
pub fn write_samples(writer: impl Write, samples: &[u64]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["value"])?;
    for s in samples {
        wtr.write_record([s.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn from_samples_single_value() {
        let e = EmpiricalPmf::from_samples(&[2, 2, 2]).unwrap();
        assert_eq!(e.values(), &[2]);
        assert_eq!(e.freqs(), &[1.0]);
        assert_eq!(e.n(), 3);
    }

    #[test]
    fn from_samples_symmetric() {
        let e = EmpiricalPmf::from_samples(&[0, 1, 0, 1]).unwrap();
        assert_eq!(e.values(), &[0, 1]);
        assert_eq!(e.freqs(), &[0.5, 0.5]);
    }

    #[test]
    fn from_samples_empty_is_error() {
        assert!(matches!(
            EmpiricalPmf::from_samples(&[]),
            Err(Error::EmptyInput)
        ));
    }

    #[test]
    fn cdf_examples() {
        let d1 = AtomicMeasure::point_mass(2.0, 1.0).unwrap();
        assert_eq!(d1.cdf(0.5), 0.0);
        assert_eq!(d1.cdf(1.0), 1.0);
        let m = AtomicMeasure::new(1.0, vec![(0.0, 0.5), (1.0, 0.5)]).unwrap();
        assert_eq!(m.cdf(0.3), 0.5);
        assert_eq!(m.cdf(-0.1), 0.0);
        assert_eq!(m.cdf(1.0), 1.0);
    }

    #[test]
    fn canonicalize_merges_close_atoms() {
        let m = canonicalize(2.0, [(1.0, 0.5), (1.0 + 1e-12, 0.5)], 1e-8, 1e-12).unwrap();
        assert_eq!(m.len(), 1);
        assert!((m.atoms()[0].location - 1.0).abs() < 1e-11);
        assert_eq!(m.atoms()[0].weight, 1.0);
    }

    #[test]
    fn canonicalize_prunes_tiny_weights() {
        let m = canonicalize(1.0, [(0.5, 1.0 - 1e-15), (0.9, 1e-15)], 1e-8, 1e-12).unwrap();
        assert_eq!(m.pairs(), vec![(0.5, 1.0)]);
    }

    #[test]
    fn canonicalize_noop_normalizes() {
        let m = canonicalize(1.0, [(0.4, 3.0), (0.2, 1.0)], 0.0, 0.0).unwrap();
        assert_eq!(m.pairs(), vec![(0.2, 0.25), (0.4, 0.75)]);
    }

    #[test]
    fn canonicalize_all_pruned_is_degenerate() {
        assert!(matches!(
            canonicalize(1.0, [(0.5, 0.0)], 1e-8, 1e-12),
            Err(Error::DegenerateMeasure)
        ));
        // two atoms that both fall below an aggressive threshold
        assert!(matches!(
            canonicalize(1.0, [(0.1, 1.0), (0.9, 1.0)], 0.0, 0.6),
            Err(Error::DegenerateMeasure)
        ));
    }

    #[test]
    fn new_rejects_broken_invariants() {
        assert!(AtomicMeasure::new(1.0, vec![(0.5, 0.6), (0.4, 0.4)]).is_err());
        assert!(AtomicMeasure::new(1.0, vec![(1.5, 1.0)]).is_err());
        assert!(AtomicMeasure::new(1.0, vec![(0.5, 0.9)]).is_err());
        assert!(AtomicMeasure::new(0.0, vec![(0.0, 1.0)]).is_err());
    }

    #[test]
    fn json_round_trip_is_exact() {
        let m = AtomicMeasure::new(
            3.0,
            vec![(0.1 + 0.2, 1.0 / 3.0), (std::f64::consts::E, 2.0 / 3.0)],
        )
        .unwrap();
        let back = AtomicMeasure::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(m, back);
        assert!(m.to_json().unwrap().contains("\"theta_star\""));
    }

    #[test]
    fn pmf_csv_round_trip() {
        let e = EmpiricalPmf::from_samples(&[3, 1, 1, 7]).unwrap();
        let mut buf = Vec::new();
        e.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap(),
            "value,count\n1,2\n3,1\n7,1\n"
        );
        assert_eq!(EmpiricalPmf::read_csv(buf.as_slice()).unwrap(), e);
    }

    #[test]
    fn samples_header_optional() {
        assert_eq!(
            read_samples("value\n1\n2\n".as_bytes()).unwrap(),
            vec![1, 2]
        );
        assert_eq!(read_samples("4\n0\n".as_bytes()).unwrap(), vec![4, 0]);
        assert!(read_samples("1\nx\n".as_bytes()).is_err());
        assert!(read_samples("value\n".as_bytes()).is_err());
    }

    fn raw_atoms() -> impl Strategy<Value = Vec<(f64, f64)>> {
        prop::collection::vec((0.0..=5.0f64, 1e-6..1.0f64), 1..12)
    }

    proptest! {
        #[test]
        fn json_round_trip_is_bitwise(atoms in raw_atoms()) {
            let m = canonicalize(5.0, atoms, 0.0, 0.0).unwrap();
            let back = AtomicMeasure::from_json(&m.to_json().unwrap()).unwrap();
            for (a, b) in m.atoms().iter().zip(back.atoms()) {
                prop_assert_eq!(a.location.to_bits(), b.location.to_bits());
                prop_assert_eq!(a.weight.to_bits(), b.weight.to_bits());
            }
        }

        #[test]
        fn canonicalize_idempotent(atoms in raw_atoms(), radius in 0.0..0.5f64) {
            let once = canonicalize(5.0, atoms, radius, 1e-12).unwrap();
            let twice = once.canonicalized(radius, 1e-12).unwrap();
            prop_assert_eq!(once.len(), twice.len());
            for (a, b) in once.atoms().iter().zip(twice.atoms()) {
                prop_assert!((a.location - b.location).abs() <= 1e-15 * 5.0);
                prop_assert!((a.weight - b.weight).abs() <= 1e-15);
            }
        }

        #[test]
        fn cdf_monotone_and_bounded(atoms in raw_atoms(), ts in prop::collection::vec(-1.0..6.0f64, 2..20)) {
            let m = canonicalize(5.0, atoms, 1e-8, 1e-12).unwrap();
            let mut ts = ts;
            ts.sort_by(f64::total_cmp);
            let vals: Vec<f64> = ts.iter().map(|&t| m.cdf(t)).collect();
            prop_assert!(vals.windows(2).all(|w| w[0] <= w[1]));
            let first = m.atoms()[0].location;
            prop_assert_eq!(m.cdf(first - 1e-9), 0.0);
            prop_assert_eq!(m.cdf(5.0), 1.0);
        }

        #[test]
        fn freqs_are_exact_ratios(samples in prop::collection::vec(0u64..20, 1..200)) {
            let e = EmpiricalPmf::from_samples(&samples).unwrap();
            prop_assert_eq!(e.counts().iter().sum::<u64>(), e.n());
            for (&v, &f) in e.values().iter().zip(e.freqs()) {
                let c = samples.iter().filter(|&&s| s == v).count() as u64;
                prop_assert_eq!(f, c as f64 / samples.len() as f64);
            }
            prop_assert!((e.freqs().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }
}
