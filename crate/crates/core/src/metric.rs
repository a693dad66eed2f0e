//! Metric instances: candidates and voter locations embedded in a finite
//! metric, with the normalized bias and social-cost quantities built on it.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Masses within this distance of summing to one are renormalized.
pub const MASS_TOLERANCE: f64 = 1e-9;
/// Absolute slack for the triangle inequality on unit-scale instances.
pub const TRIANGLE_TOLERANCE: f64 = 1e-12;
/// Bias values closer than this are merged into one atom.
pub const ATOM_MERGE_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Location {
    pub id: String,
    pub mass: f64,
}

/// Candidates and voter locations with a full distance table.
///
/// Points are indexed candidates first (`0..m`), then locations
/// (`m..m + n`). The table is stored dense and row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricInstance {
    candidates: Vec<String>,
    locations: Vec<Location>,
    dist: Vec<f64>,
}

/// One failed invariant of a [`MetricInstance`].
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    TooFewCandidates(usize),
    NoLocations,
    DuplicateId(String),
    NegativeMass { location: String, mass: f64 },
    MassSum(f64),
    NonZeroSelfDistance { point: String, value: f64 },
    NegativeDistance { a: String, b: String, value: f64 },
    Asymmetric { a: String, b: String },
    Triangle { a: String, b: String, c: String, excess: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::TooFewCandidates(m) => write!(f, "need at least 2 candidates, found {m}"),
            Violation::NoLocations => write!(f, "instance has no voter locations"),
            Violation::DuplicateId(id) => write!(f, "identifier {id:?} used more than once"),
            Violation::NegativeMass { location, mass } => {
                write!(f, "location {location:?} has negative mass {mass}")
            }
            Violation::MassSum(s) => write!(f, "masses sum to {s}, expected 1"),
            Violation::NonZeroSelfDistance { point, value } => {
                write!(f, "d({point}, {point}) = {value}, expected 0")
            }
            Violation::NegativeDistance { a, b, value } => write!(f, "d({a}, {b}) = {value} < 0"),
            Violation::Asymmetric { a, b } => write!(f, "d({a}, {b}) != d({b}, {a})"),
            Violation::Triangle { a, b, c, excess } => write!(
                f,
                "triangle inequality fails on ({a}, {b}, {c}): d({a},{c}) exceeds d({a},{b}) + d({b},{c}) by {excess}"
            ),
        }
    }
}

impl MetricInstance {
    /// Builds an instance from a distance function over point indices.
    /// No invariant is checked here; see [`MetricInstance::validate`] and
    /// [`MetricInstance::validated`].
    pub fn from_fn(
        candidates: Vec<String>,
        locations: Vec<Location>,
        mut dist: impl FnMut(usize, usize) -> f64,
    ) -> Self {
        let p = candidates.len() + locations.len();
        let mut table = vec![0.0; p * p];
        for a in 0..p {
            for b in 0..p {
                table[a * p + b] = dist(a, b);
            }
        }
        MetricInstance { candidates, locations, dist: table }
    }

    /// Builds an instance from a dense row-major table.
    pub fn from_table(candidates: Vec<String>, locations: Vec<Location>, dist: Vec<f64>) -> Result<Self> {
        let p = candidates.len() + locations.len();
        if dist.len() != p * p {
            return Err(Error::InvalidInstance(format!(
                "distance table has {} entries, expected {}",
                dist.len(),
                p * p
            )));
        }
        Ok(MetricInstance { candidates, locations, dist })
    }

    pub fn num_candidates(&self) -> usize {
        self.candidates.len()
    }

    pub fn num_locations(&self) -> usize {
        self.locations.len()
    }

    pub fn num_points(&self) -> usize {
        self.candidates.len() + self.locations.len()
    }

    pub fn candidates(&self) -> &[String] {
        &self.candidates
    }

    pub fn locations(&self) -> &[Location] {
        &self.locations
    }

    pub fn masses(&self) -> impl Iterator<Item = f64> + '_ {
        self.locations.iter().map(|l| l.mass)
    }

    /// Distance between two points by point index.
    #[inline]
    pub fn d(&self, a: usize, b: usize) -> f64 {
        self.dist[a * self.num_points() + b]
    }

    /// Distance from location `i` to candidate `c`.
    #[inline]
    pub fn loc_to_cand(&self, i: usize, c: usize) -> f64 {
        self.d(self.candidates.len() + i, c)
    }

    pub fn point_name(&self, p: usize) -> &str {
        let m = self.candidates.len();
        if p < m {
            &self.candidates[p]
        } else {
            &self.locations[p - m].id
        }
    }

    pub fn candidate_index(&self, id: &str) -> Result<usize> {
        self.candidates
            .iter()
            .position(|c| c == id)
            .ok_or_else(|| Error::UnknownCandidate(id.to_string()))
    }

    /// Checks every invariant within `tol` (used for symmetry and the
    /// triangle inequality) and lists what fails.
    pub fn validate(&self, tol: f64) -> Vec<Violation> {
        let mut out = Vec::new();
        let m = self.candidates.len();
        if m < 2 {
            out.push(Violation::TooFewCandidates(m));
        }
        if self.locations.is_empty() {
            out.push(Violation::NoLocations);
        }
        let mut seen = HashMap::new();
        for p in 0..self.num_points() {
            if seen.insert(self.point_name(p), p).is_some() {
                out.push(Violation::DuplicateId(self.point_name(p).to_string()));
            }
        }
        for l in &self.locations {
            if !(l.mass >= 0.0) {
                out.push(Violation::NegativeMass { location: l.id.clone(), mass: l.mass });
            }
        }
        let total: f64 = self.masses().sum();
        if !self.locations.is_empty() && (total - 1.0).abs() > MASS_TOLERANCE {
            out.push(Violation::MassSum(total));
        }
        let p = self.num_points();
        for a in 0..p {
            let self_d = self.d(a, a);
            if self_d != 0.0 {
                out.push(Violation::NonZeroSelfDistance { point: self.point_name(a).into(), value: self_d });
            }
            for b in (a + 1)..p {
                let (ab, ba) = (self.d(a, b), self.d(b, a));
                if !(ab >= 0.0) || !(ba >= 0.0) {
                    out.push(Violation::NegativeDistance {
                        a: self.point_name(a).into(),
                        b: self.point_name(b).into(),
                        value: ab.min(ba),
                    });
                }
                if (ab - ba).abs() > tol {
                    out.push(Violation::Asymmetric { a: self.point_name(a).into(), b: self.point_name(b).into() });
                }
            }
        }
        for x in 0..p {
            for z in (x + 1)..p {
                let xz = self.d(x, z);
                for y in 0..p {
                    if y == x || y == z {
                        continue;
                    }
                    let excess = xz - (self.d(x, y) + self.d(y, z));
                    if excess > tol {
                        out.push(Violation::Triangle {
                            a: self.point_name(x).into(),
                            b: self.point_name(y).into(),
                            c: self.point_name(z).into(),
                            excess,
                        });
                    }
                }
            }
        }
        out
    }

    /// Renormalizes masses that are within [`MASS_TOLERANCE`] of summing to
    /// one and rejects the instance if any invariant fails.
    pub fn validated(mut self) -> Result<Self> {
        let total: f64 = self.masses().sum();
        if (total - 1.0).abs() <= MASS_TOLERANCE && total > 0.0 {
            for l in &mut self.locations {
                l.mass /= total;
            }
        }
        let violations = self.validate(TRIANGLE_TOLERANCE);
        if violations.is_empty() {
            Ok(self)
        } else {
            let msg: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
            Err(Error::InvalidInstance(msg.join("; ")))
        }
    }

    fn check_pair(&self, c1: usize, c2: usize) -> Result<f64> {
        let m = self.candidates.len();
        for c in [c1, c2] {
            if c >= m {
                return Err(Error::UnknownCandidate(format!("#{c}")));
            }
        }
        let d12 = self.d(c1, c2);
        if d12 <= 0.0 {
            return Err(Error::ZeroCandidateDistance(self.candidates[c1].clone(), self.candidates[c2].clone()));
        }
        Ok(d12)
    }

    /// `(d(i, c1) - d(i, c2)) / d(c1, c2)`; negative values favor `c1`.
    pub fn normalized_bias(&self, i: usize, c1: usize, c2: usize) -> Result<f64> {
        let d12 = self.check_pair(c1, c2)?;
        let b = (self.loc_to_cand(i, c1) - self.loc_to_cand(i, c2)) / d12;
        Ok(b.clamp(-1.0, 1.0))
    }

    /// Per-location biases for the ordered pair, in location order.
    pub fn biases(&self, c1: usize, c2: usize) -> Result<Vec<f64>> {
        (0..self.num_locations()).map(|i| self.normalized_bias(i, c1, c2)).collect()
    }

    /// Distribution of the normalized bias under the location masses.
    pub fn bias_distribution(&self, w: usize, x: usize) -> Result<BiasDistribution> {
        let atoms = self
            .biases(w, x)?
            .into_iter()
            .zip(self.masses())
            .collect::<Vec<_>>();
        BiasDistribution::new(atoms)
    }

    pub fn social_cost(&self, c: usize) -> Result<f64> {
        if c >= self.num_candidates() {
            return Err(Error::UnknownCandidate(format!("#{c}")));
        }
        Ok(self
            .locations
            .iter()
            .enumerate()
            .map(|(i, l)| l.mass * self.loc_to_cand(i, c))
            .sum())
    }

    /// Cheapest candidate; ties go to the earliest-declared one.
    pub fn social_optimum(&self) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for c in 0..self.num_candidates() {
            let sc = self.social_cost(c).expect("candidate index in range");
            if sc < best.1 {
                best = (c, sc);
            }
        }
        best
    }

    pub fn distortion_of(&self, c: usize) -> Result<f64> {
        let sc = self.social_cost(c)?;
        let (_, opt) = self.social_optimum();
        if opt <= 0.0 {
            return Err(Error::DegenerateOptimum);
        }
        Ok(sc / opt)
    }

    /// Multiplies every distance by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.dist.iter_mut().for_each(|d| *d *= factor);
        out
    }

    /// Reorders the candidates: new candidate `j` is old candidate `perm[j]`.
    pub fn permute_candidates(&self, perm: &[usize]) -> Self {
        let m = self.num_candidates();
        assert_eq!(perm.len(), m);
        let map = |p: usize| if p < m { perm[p] } else { p };
        MetricInstance::from_fn(
            perm.iter().map(|&c| self.candidates[c].clone()).collect(),
            self.locations.clone(),
            |a, b| self.d(map(a), map(b)),
        )
    }

    pub fn to_json(&self) -> InstanceJson {
        let mut distances = BTreeMap::new();
        let p = self.num_points();
        for a in 0..p {
            for b in (a + 1)..p {
                distances.insert(format!("{}|{}", self.point_name(a), self.point_name(b)), self.d(a, b));
            }
        }
        InstanceJson {
            candidates: self.candidates.clone(),
            locations: self.locations.clone(),
            distances,
        }
    }

    /// Parses the JSON instance format. Unknown ids, missing pairs and
    /// conflicting duplicate entries are rejected; metric invariants are
    /// not checked (see [`MetricInstance::validated`]).
    pub fn from_json(json: &InstanceJson) -> Result<Self> {
        let names: Vec<&str> = json
            .candidates
            .iter()
            .map(String::as_str)
            .chain(json.locations.iter().map(|l| l.id.as_str()))
            .collect();
        let mut index = HashMap::new();
        for (i, n) in names.iter().enumerate() {
            if index.insert(*n, i).is_some() {
                return Err(Error::InvalidInstance(format!("duplicate id {n:?}")));
            }
        }
        let p = names.len();
        let mut table = vec![f64::NAN; p * p];
        for i in 0..p {
            table[i * p + i] = 0.0;
        }
        let mut given = vec![false; p * p];
        for (key, &value) in &json.distances {
            let (a, b) = key
                .split_once('|')
                .ok_or_else(|| Error::InvalidInstance(format!("distance key {key:?} is not of the form a|b")))?;
            let ia = *index.get(a).ok_or_else(|| Error::UnknownPoint(a.to_string()))?;
            let ib = *index.get(b).ok_or_else(|| Error::UnknownPoint(b.to_string()))?;
            if given[ia * p + ib] && table[ia * p + ib] != value {
                return Err(Error::InvalidInstance(format!("conflicting entries for pair {a}|{b}")));
            }
            given[ia * p + ib] = true;
            given[ib * p + ia] = true;
            table[ia * p + ib] = value;
            table[ib * p + ia] = value;
        }
        if let Some(k) = table.iter().position(|v| v.is_nan()) {
            return Err(Error::InvalidInstance(format!(
                "missing distance for pair {}|{}",
                names[k / p],
                names[k % p]
            )));
        }
        MetricInstance::from_table(json.candidates.clone(), json.locations.clone(), table)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_json()).expect("instance serializes")
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let json: InstanceJson = serde_json::from_str(s)?;
        MetricInstance::from_json(&json)
    }
}

/// Serialized form of a [`MetricInstance`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InstanceJson {
    pub candidates: Vec<String>,
    pub locations: Vec<Location>,
    pub distances: BTreeMap<String, f64>,
}

/// A finite distribution over normalized biases in `[-1, 1]`.
///
/// Atoms are kept sorted by value; values within
/// [`ATOM_MERGE_TOLERANCE`] of each other are merged.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasDistribution {
    atoms: Vec<(f64, f64)>,
}

impl BiasDistribution {
    pub fn new(mut atoms: Vec<(f64, f64)>) -> Result<Self> {
        for &(v, p) in &atoms {
            if !(-1.0 - ATOM_MERGE_TOLERANCE..=1.0 + ATOM_MERGE_TOLERANCE).contains(&v) {
                return Err(Error::InvalidInstance(format!("bias value {v} outside [-1, 1]")));
            }
            if !(p >= 0.0) {
                return Err(Error::InvalidInstance(format!("negative probability {p}")));
            }
        }
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::InvalidInstance(format!("probabilities sum to {total}")));
        }
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
        for (v, p) in atoms {
            let v = v.clamp(-1.0, 1.0);
            match merged.last_mut() {
                Some(last) if (v - last.0).abs() <= ATOM_MERGE_TOLERANCE => last.1 += p,
                _ => merged.push((v, p)),
            }
        }
        merged.retain(|a| a.1 > 0.0);
        merged.iter_mut().for_each(|a| a.1 /= total);
        Ok(BiasDistribution { atoms: merged })
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().map(|(v, p)| v * p).sum()
    }

    pub fn variance(&self) -> f64 {
        let mu = self.mean();
        self.atoms.iter().map(|(v, p)| p * (v - mu) * (v - mu)).sum()
    }

    /// The distribution of `-D`.
    pub fn negated(&self) -> Self {
        let mut atoms: Vec<_> = self.atoms.iter().map(|&(v, p)| (-v, p)).collect();
        atoms.reverse();
        BiasDistribution { atoms }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn loc(id: &str, mass: f64) -> Location {
        Location { id: id.into(), mass }
    }

    /// Points on a line; candidates then locations.
    fn line(cands: &[(&str, f64)], locs: &[(&str, f64, f64)]) -> MetricInstance {
        let pos: Vec<f64> = cands.iter().map(|c| c.1).chain(locs.iter().map(|l| l.1)).collect();
        MetricInstance::from_fn(
            cands.iter().map(|c| c.0.to_string()).collect(),
            locs.iter().map(|l| loc(l.0, l.2)).collect(),
            |a, b| (pos[a] - pos[b]).abs(),
        )
    }

    #[test]
    fn equidistant_voter_is_valid_and_unbiased() {
        let inst = line(&[("a", 0.0), ("b", 1.0)], &[("v", 0.5, 1.0)]);
        assert!(inst.validate(TRIANGLE_TOLERANCE).is_empty());
        assert_eq!(inst.normalized_bias(0, 0, 1).unwrap(), 0.0);
    }

    #[test]
    fn triangle_violation_names_the_triple() {
        let names = ["a", "b", "c"];
        let table = [[0.0, 1.0, 3.0], [1.0, 0.0, 1.0], [3.0, 1.0, 0.0]];
        let inst = MetricInstance::from_fn(
            vec!["a".into(), "b".into()],
            vec![loc("c", 1.0)],
            |x, y| table[x][y],
        );
        let v = inst.validate(TRIANGLE_TOLERANCE);
        assert_eq!(v.len(), 1, "{v:?}");
        match &v[0] {
            Violation::Triangle { a, b, c, .. } => {
                assert_eq!([a.as_str(), b.as_str(), c.as_str()], names);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn mass_sum_violation() {
        let inst = line(&[("a", 0.0), ("b", 1.0)], &[("u", 0.2, 0.6), ("v", 0.7, 0.6)]);
        let v = inst.validate(TRIANGLE_TOLERANCE);
        assert_eq!(v, vec![Violation::MassSum(1.2)]);
        assert!(inst.validated().is_err());
    }

    #[test]
    fn masses_close_to_one_are_renormalized() {
        let inst = line(&[("a", 0.0), ("b", 1.0)], &[("u", 0.2, 0.5), ("v", 0.7, 0.5 + 5e-10)]);
        let inst = inst.validated().unwrap();
        let total: f64 = inst.masses().sum();
        assert!((total - 1.0).abs() < 1e-15);
    }

    #[test]
    fn bias_extremes() {
        let inst = line(&[("c1", 0.0), ("c2", 2.0)], &[("at_c1", 0.0, 0.5), ("mid", 1.0, 0.5)]);
        assert_eq!(inst.normalized_bias(0, 0, 1).unwrap(), -1.0);
        assert_eq!(inst.normalized_bias(1, 0, 1).unwrap(), 0.0);
    }

    #[test]
    fn lb1_far_location_bias() {
        // W at 0, X at 1, location at 1/4.
        let inst = line(&[("W", 0.0), ("X", 1.0)], &[("far", 0.25, 0.5), ("atx", 1.0, 0.5)]);
        assert_eq!(inst.normalized_bias(0, 0, 1).unwrap(), -0.5);
        let d = inst.bias_distribution(0, 1).unwrap();
        assert_eq!(d.atoms(), &[(-0.5, 0.5), (1.0, 0.5)]);
        assert_eq!(d.mean(), 0.25);
    }

    #[test]
    fn zero_candidate_distance_is_an_error() {
        let inst = line(&[("a", 0.0), ("b", 0.0)], &[("v", 1.0, 1.0)]);
        assert!(matches!(inst.normalized_bias(0, 0, 1), Err(Error::ZeroCandidateDistance(..))));
    }

    #[test]
    fn single_location_at_w() {
        let inst = line(&[("W", 0.0), ("X", 1.0)], &[("v", 0.0, 1.0)]);
        assert_eq!(inst.bias_distribution(0, 1).unwrap().atoms(), &[(-1.0, 1.0)]);
    }

    #[test]
    fn equal_biases_merge() {
        let inst = line(&[("W", 0.0), ("X", 1.0)], &[("u", 0.65, 0.4), ("v", 0.65, 0.6)]);
        let d = inst.bias_distribution(0, 1).unwrap();
        assert_eq!(d.atoms().len(), 1);
        assert!((d.atoms()[0].0 - 0.3).abs() < 1e-15);
        assert!((d.atoms()[0].1 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn social_cost_examples() {
        let inst = line(&[("c", 0.0), ("o", 5.0)], &[("v", 0.0, 1.0)]);
        assert_eq!(inst.social_cost(0).unwrap(), 0.0);
        let inst = line(&[("c", 0.0), ("o", -2.0)], &[("u", 1.0, 0.5), ("v", 3.0, 0.5)]);
        assert_eq!(inst.social_cost(0).unwrap(), 2.0);
        assert!(matches!(inst.social_cost(7), Err(Error::UnknownCandidate(_))));
    }

    #[test]
    fn social_optimum_ties_go_to_first() {
        let inst = line(&[("a", 0.0), ("b", 2.0), ("c", 1.0)], &[("v", 1.0, 1.0)]);
        assert_eq!(inst.social_optimum(), (2, 0.0));
        let inst = line(&[("a", 0.0), ("b", 2.0)], &[("v", 1.0, 1.0)]);
        assert_eq!(inst.social_optimum(), (0, 1.0));
        // exhaustive min over candidates
        let inst = line(&[("a", 0.0), ("b", 3.0), ("c", 1.5)], &[("u", 0.0, 0.3), ("v", 3.0, 0.7)]);
        let brute = (0..3)
            .map(|c| inst.social_cost(c).unwrap())
            .fold(f64::INFINITY, f64::min);
        assert_eq!(inst.social_optimum().1, brute);
        assert_eq!(inst.social_optimum().0, 1);
    }

    #[test]
    fn distortion_of_optimum_is_one() {
        let inst = line(&[("a", 0.0), ("b", 3.0)], &[("u", 0.0, 0.3), ("v", 3.0, 0.7)]);
        assert_eq!(inst.distortion_of(1).unwrap(), 1.0);
        let degenerate = line(&[("a", 0.0), ("b", 3.0)], &[("u", 0.0, 1.0)]);
        assert!(matches!(degenerate.distortion_of(1), Err(Error::DegenerateOptimum)));
    }

    #[test]
    fn json_round_trip_and_rejections() {
        let inst = line(&[("W", 0.0), ("X", 1.0)], &[("u", 0.25, 0.5), ("v", 1.0, 0.5)]);
        let back = MetricInstance::from_json_str(&inst.to_json_string()).unwrap();
        assert_eq!(back, inst);

        let unknown = r#"{"candidates":["a","b"],"locations":[{"id":"v","mass":1}],
            "distances":{"a|b":1,"a|v":0.5,"b|v":0.5,"a|zz":1}}"#;
        assert!(matches!(MetricInstance::from_json_str(unknown), Err(Error::UnknownPoint(_))));

        let conflict = r#"{"candidates":["a","b"],"locations":[{"id":"v","mass":1}],
            "distances":{"a|b":1,"b|a":2,"a|v":0.5,"b|v":0.5}}"#;
        assert!(matches!(MetricInstance::from_json_str(conflict), Err(Error::InvalidInstance(_))));

        let missing = r#"{"candidates":["a","b"],"locations":[{"id":"v","mass":1}],
            "distances":{"a|b":1,"a|v":0.5}}"#;
        assert!(MetricInstance::from_json_str(missing).is_err());

        let ok = r#"{"candidates":["a","b"],"locations":[{"id":"v","mass":1}],
            "distances":{"a|b":1,"b|a":1,"a|v":0.5,"b|v":0.5,"v|v":0}}"#;
        let inst = MetricInstance::from_json_str(ok).unwrap();
        assert!(inst.validate(TRIANGLE_TOLERANCE).is_empty());
    }

    #[test]
    fn negated_distribution() {
        let d = BiasDistribution::new(vec![(-0.5, 0.25), (1.0, 0.75)]).unwrap();
        assert_eq!(d.negated().atoms(), &[(-1.0, 0.75), (0.5, 0.25)]);
    }
}
